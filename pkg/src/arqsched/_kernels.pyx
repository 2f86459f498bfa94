# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_pykernels`` holds the reference numpy versions."""

import numpy as np

DEF IDLE = 0
DEF TRANSMIT = 1
DEF BROADCAST = 2

DEF P_RELAXED = 0
DEF P_STRINGENT = 1
DEF P_TOPM = 2
DEF P_RANDOM = 3


def rvi_solve(const double[::1] pi, const Py_ssize_t[::1] nxt, Py_ssize_t on1, Py_ssize_t off1,
              double omega, double tol, long max_iter, double[::1] h0):
    cdef Py_ssize_t S = pi.shape[0]
    cdef Py_ssize_t s
    cdef long it = 0
    cdef double act, pas, best, dmax, dmin, diff, span = np.inf, ref
    h_arr = np.array(h0, dtype=np.float64, copy=True)
    hn_arr = np.empty(S, dtype=np.float64)
    cdef double[::1] h = h_arr
    cdef double[::1] hn = hn_arr
    while it < max_iter:
        it += 1
        dmax = -np.inf
        dmin = np.inf
        for s in range(S):
            act = pi[s] + pi[s] * h[on1] + (1.0 - pi[s]) * h[off1]
            pas = omega + h[nxt[s]]
            best = act if act > pas else pas
            hn[s] = best
            diff = best - h[s]
            if diff > dmax:
                dmax = diff
            if diff < dmin:
                dmin = diff
        span = dmax - dmin
        ref = hn[0]
        for s in range(S):
            h[s] = hn[s] - ref
        if span < tol:
            break
    return h_arr, it, span


def simulate_block(int policy, int M,
                   const double[:, :, ::1] act, const double[:, :, ::1] val,
                   const double[:, :, ::1] score, const double[::1] weights,
                   const double[::1] p01, const double[::1] p11, const double[::1] bs,
                   signed char[::1] obs, long long[::1] age, signed char[::1] chan,
                   long long[::1] q,
                   const double[:, ::1] u_chan, const double[:, ::1] u_pol,
                   const long long[:, ::1] arrivals,
                   bint saturated, Py_ssize_t record_from, long long age_cap, Py_ssize_t L,
                   int[::1] n_cand, int[::1] n_sched, signed char[::1] mode,
                   double[::1] wthr, double[::1] bthr, int[::1] rthr, long long[::1] sum_q,
                   double[::1] acc_bthr, long long[::1] acc_real, long long[::1] acc_sched,
                   long long[::1] acc_cand, double[::1] acc_q,
                   signed char[:, ::1] theta_out=None, signed char[:, ::1] sched_out=None,
                   signed char[:, ::1] chan_out=None):
    cdef Py_ssize_t B = u_chan.shape[0]
    cdef Py_ssize_t N = u_chan.shape[1]
    cdef Py_ssize_t t, i, j, col, cnt
    cdef int row, nc, ns, m, rr, c
    cdef double w, b, s, pi_i
    cdef long long sq, qq, served
    cdef bint keep_theta = theta_out is not None
    cdef bint keep_sched = sched_out is not None
    cdef bint keep_chan = chan_out is not None
    th_arr = np.zeros(N, dtype=np.int8)
    a_arr = np.zeros(N, dtype=np.int8)
    pis_arr = np.zeros(N, dtype=np.float64)
    topi_arr = np.zeros(max(M, 1), dtype=np.intp)
    topv_arr = np.zeros(max(M, 1), dtype=np.float64)
    cdef signed char[::1] th = th_arr
    cdef signed char[::1] a = a_arr
    cdef double[::1] pis = pis_arr
    cdef Py_ssize_t[::1] topi = topi_arr
    cdef double[::1] topv = topv_arr

    for t in range(B):
        nc = 0
        for i in range(N):
            col = age[i] if age[i] < L else L
            row = obs[i]
            pis[i] = val[i, row, col]
            if policy == P_RELAXED or policy == P_STRINGENT:
                th[i] = 1 if u_pol[t, i] < act[i, row, col] else 0
                nc += th[i]
            else:
                th[i] = 0

        if policy == P_TOPM or policy == P_RANDOM:
            cnt = 0
            for i in range(N):
                if policy == P_RANDOM:
                    s = 1.0 - u_pol[t, i]
                elif saturated:
                    s = score[i, obs[i], age[i] if age[i] < L else L]
                else:
                    s = <double>q[i] * score[i, obs[i], age[i] if age[i] < L else L]
                if s <= 0.0 or M <= 0:
                    continue
                if cnt == M:
                    if not (s > topv[M - 1]):
                        continue
                    j = M - 1
                else:
                    j = cnt
                    cnt += 1
                while j > 0 and topv[j - 1] < s:
                    topv[j] = topv[j - 1]
                    topi[j] = topi[j - 1]
                    j -= 1
                topv[j] = s
                topi[j] = i
            for j in range(cnt):
                th[topi[j]] = 1
            nc = <int>cnt

        if policy == P_STRINGENT and nc > M:
            m = BROADCAST
            for i in range(N):
                a[i] = 0
            ns = 0
        else:
            m = TRANSMIT if nc > 0 else IDLE
            for i in range(N):
                a[i] = th[i]
            ns = nc

        w = 0.0
        b = 0.0
        rr = 0
        sq = 0
        for i in range(N):
            if chan[i] < 0:
                c = 1 if u_chan[t, i] < bs[i] else 0
            elif chan[i] == 1:
                c = 1 if u_chan[t, i] < p11[i] else 0
            else:
                c = 1 if u_chan[t, i] < p01[i] else 0
            chan[i] = c
            if a[i]:
                pi_i = pis[i]
                w += weights[i] * pi_i
                b += pi_i
                rr += c
            if a[i] or (m == BROADCAST and th[i]):
                obs[i] = c
                age[i] = 1
            else:
                age[i] += 1
                if obs[i] != 2 and age[i] > age_cap:
                    obs[i] = 2
            if not saturated:
                served = 1 if (a[i] and c) else 0
                qq = q[i] - served
                if qq < 0:
                    qq = 0
                q[i] = qq + arrivals[t, i]
                sq += q[i]
            if t >= record_from:
                if a[i]:
                    acc_bthr[i] += pis[i]
                    acc_sched[i] += 1
                    if c:
                        acc_real[i] += 1
                if th[i]:
                    acc_cand[i] += 1
                if not saturated:
                    acc_q[i] += <double>q[i]
            if keep_theta:
                theta_out[t, i] = th[i]
            if keep_sched:
                sched_out[t, i] = a[i]
            if keep_chan:
                chan_out[t, i] = c
        n_cand[t] = nc
        n_sched[t] = ns
        mode[t] = m
        wthr[t] = w
        bthr[t] = b
        rthr[t] = rr
        sum_q[t] = sq
    return 0
