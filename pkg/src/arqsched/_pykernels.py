"""Pure numpy versions of the compiled loops in ``_kernels.pyx``.

Both implementations consume the same pre-drawn uniforms and accumulate
floating sums in the same order, so their outputs are bit-identical.
"""

import numpy as np

IDLE, TRANSMIT, BROADCAST = 0, 1, 2
P_RELAXED, P_STRINGENT, P_TOPM, P_RANDOM = 0, 1, 2, 3


def rvi_solve(pi, nxt, on1, off1, omega, tol, max_iter, h0):
    h = np.array(h0, dtype=np.float64, copy=True)
    span = np.inf
    it = 0
    while it < max_iter:
        it += 1
        act = pi + pi * h[on1] + (1.0 - pi) * h[off1]
        pas = omega + h[nxt]
        hn = np.maximum(act, pas)
        diff = hn - h
        span = diff.max() - diff.min()
        h = hn - hn[0]
        if span < tol:
            break
    return h, it, span


def _seq_sum(x):
    # left-to-right accumulation, matching the compiled loop
    return float(np.cumsum(x)[-1]) if len(x) else 0.0


def simulate_block(policy, M, act, val, score, weights, p01, p11, bs,
                   obs, age, chan, q, u_chan, u_pol, arrivals,
                   saturated, record_from, age_cap, L,
                   n_cand, n_sched, mode, wthr, bthr, rthr, sum_q,
                   acc_bthr, acc_real, acc_sched, acc_cand, acc_q,
                   theta_out=None, sched_out=None, chan_out=None):
    B, N = u_chan.shape
    users = np.arange(N)
    for t in range(B):
        col = np.minimum(age, L)
        row = obs.astype(np.intp)
        pis = val[users, row, col]
        if policy in (P_RELAXED, P_STRINGENT):
            th = (u_pol[t] < act[users, row, col]).astype(np.int8)
        else:
            if policy == P_RANDOM:
                s = 1.0 - u_pol[t]
            elif saturated:
                s = score[users, row, col]
            else:
                s = q.astype(np.float64) * score[users, row, col]
            th = np.zeros(N, dtype=np.int8)
            if M > 0:
                order = np.lexsort((users, -s))
                top = [i for i in order[:M] if s[i] > 0.0]
                th[top] = 1
        nc = int(th.sum())

        if policy == P_STRINGENT and nc > M:
            m = BROADCAST
            a = np.zeros(N, dtype=np.int8)
            ns = 0
        else:
            m = TRANSMIT if nc > 0 else IDLE
            a = th.copy()
            ns = nc

        u = u_chan[t]
        c = np.where(chan < 0, u < bs, np.where(chan == 1, u < p11, u < p01)).astype(np.int8)
        chan[:] = c
        sched = a.astype(bool)
        w = _seq_sum(np.where(sched, weights * pis, 0.0))
        b = _seq_sum(np.where(sched, pis, 0.0))
        rr = int((a & c).sum())

        fb = sched | ((m == BROADCAST) & th.astype(bool))
        obs[fb] = c[fb]
        age[fb] = 1
        nf = ~fb
        age[nf] += 1
        expire = nf & (obs != 2) & (age > age_cap)
        obs[expire] = 2

        if not saturated:
            served = (a & c).astype(np.int64)
            q[:] = np.maximum(q - served, 0) + arrivals[t]
            sq = int(q.sum())
        else:
            sq = 0

        if t >= record_from:
            acc_bthr += np.where(sched, pis, 0.0)
            acc_sched += a
            acc_real += a & c
            acc_cand += th
            if not saturated:
                acc_q += q.astype(np.float64)
        if theta_out is not None:
            theta_out[t] = th
        if sched_out is not None:
            sched_out[t] = a
        if chan_out is not None:
            chan_out[t] = c
        n_cand[t] = nc
        n_sched[t] = ns
        mode[t] = m
        wthr[t] = w
        bthr[t] = b
        rthr[t] = rr
        sum_q[t] = sq
    return 0
