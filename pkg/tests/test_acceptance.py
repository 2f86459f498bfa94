"""Acceptance gate A1-A10; each test records one PASS/FAIL line for the terminal summary."""

import math

import numpy as np
import pytest

from arqsched import bounds
from arqsched.calibration import calibrate
from arqsched.channel import (
    BeliefState, ChannelModel, Obs, belief_closed_form, evolve_belief, homogeneous_channels,
    random_channels,
)
from arqsched.index import STATIONARY, oracle_table
from arqsched.policies import PolicyConfig, PolicyKind, default_k
from arqsched.simulator import (
    AUDIT, Verdict, estimate_ratio, run_experiment, run_replication, stability_probe,
)

pytestmark = pytest.mark.acceptance

def test_a1_index_matches_oracle(report):
    models = random_channels(20, seed=101)
    worst, plateau_worst = 0.0, 0.0
    for m in models:
        for key, closed, orc in oracle_table(m, 20, truncation=200, vi_tol=1e-10):
            err = abs(closed - orc)
            worst = max(worst, err)
            if key == STATIONARY or key[0] is Obs.ON:
                plateau_worst = max(plateau_worst, err)
    ok = worst <= 1e-3
    report("A1", ok, f"max |closed - oracle| = {worst:.2e} (plateau {plateau_worst:.2e}), tol 1e-3")
    assert ok


def test_a2_calibration_exactness(report):
    models = random_channels(50, seed=102)
    K, tau = 10, 10
    cal = calibrate(models, np.ones(50), tau, K)
    exact = abs(cal.total_time - K) <= 1e-9
    cfg = PolicyConfig(PolicyKind.RELAXED_INDEX, M=K, K=K, tau=tau)
    res = run_experiment(models, None, cfg, 2 * 10**5, 20, seed=2, saturated=True)
    active = res.summary["mean_active_count"].mean
    close = abs(active - K) <= 0.02 * K
    report("A2", exact and close, f"total_time - K = {cal.total_time - K:.1e}, "
           f"mean active {active:.4f} vs K = {K}")
    assert exact and close


A4_CONFIGS = [(50, 10, 8), (100, 20, 16), (100, 20, 18)]


@pytest.mark.parametrize("N,M,K", A4_CONFIGS)
def test_a4_ratio_bracket(N, M, K, report):
    models = random_channels(N, seed=104, delta=0.2)
    est = estimate_ratio(models, M, K, horizon=10**5, replications=40, seed=4)
    lo = bounds.mu(M, K, 0.2) - 3 * est.stderr
    hi = 1 + 3 * est.stderr
    ok = lo <= est.ratio <= hi
    report(f"A4[{N},{M},{K}]", ok, f"ratio {est.ratio:.4f} (se {est.stderr:.1e}) "
           f"in [{lo:.4f}, {hi:.4f}]")
    assert ok


def test_a5_ratio_trend(report):
    Ms = [10, 20, 40, 80]
    ests = []
    for M in Ms:
        models = homogeneous_channels(5 * M, 0.2, 0.8)
        K = default_k(M, 0.7)
        ests.append(estimate_ratio(models, M, K, horizon=5 * 10**4, replications=10, seed=5))
    mono = all(b.ci_high >= a.ci_low for a, b in zip(ests, ests[1:]))
    top = ests[-1].ratio >= 0.90
    desc = ", ".join(f"M={M}: {e.ratio:.4f} [{e.ci_low:.4f}, {e.ci_high:.4f}]"
                     for M, e in zip(Ms, ests))
    report("A5", mono and top, f"{desc}; nondecreasing up to CI {mono}, >= 0.90 at M=80 {top}")
    assert mono and top


@pytest.mark.parametrize("M", [10, 20, 40])
@pytest.mark.parametrize("frac", [0.8, 0.9])
def test_a6_chernoff(M, frac, report):
    K = round(frac * M)
    models = homogeneous_channels(5 * M, 0.2, 0.8)
    cfg = PolicyConfig(PolicyKind.RELAXED_INDEX, M=M, K=K)
    warm = 10**4
    rec = run_replication(models, None, cfg, warm + 10**5, warmup=warm, seed=6, saturated=True,
                          keep_series=True)
    emp = float(np.mean(rec.series["n_cand"][warm:] >= M))
    bound = bounds.chernoff_bound(M, K)
    ok = emp <= bound
    report(f"A6[M={M},K={K}]", ok, f"Pr(sum theta >= M) = {emp:.4f} <= {bound:.4f}")
    assert ok


def test_a7_stability_probe(report):
    N, M, T = 20, 5, 500
    models = homogeneous_channels(N, 0.2, 0.8)
    cfg = PolicyConfig(PolicyKind.FRAME, M=M, K=default_k(M, 0.7), tau=10, frame_length=T)
    assert cfg.tau >= bounds.tau0(0.2)
    horizon = 2 * 10**5
    sat = run_experiment(models, None, cfg, horizon, 10, seed=7, saturated=True)
    rho = np.mean([r.per_user_throughput for r in sat.records], axis=0)
    low = stability_probe(models, cfg, 0.8 * rho, horizon, replications=10, seed=71)
    high = stability_probe(models, cfg, 1.3 * rho, horizon, replications=10, seed=72)
    drift = low.last_half_drift()
    mean_drift = float(drift.mean())
    ok = low.verdict is Verdict.STABLE and mean_drift <= 0 and high.verdict is Verdict.UNSTABLE
    report("A7", ok, f"rho_hat {rho.mean():.4f}; 0.8 rho_hat -> {low.verdict.value} with mean "
           f"drift {mean_drift:.3f} (se {drift.std(ddof=1) / math.sqrt(len(drift)):.3f}); "
           f"1.3 rho_hat -> {high.verdict.value}")
    assert ok


def test_a8_micro_oracles(report):
    rng = np.random.default_rng(8)
    worst = 0.0
    for m in random_channels(20, seed=108) + [ChannelModel(0.2, 0.8)]:
        for obs in (Obs.OFF, Obs.ON):
            b = BeliefState.from_key(m, obs, 1)
            it = b.value
            for l in range(1, 61):
                worst = max(worst, abs(belief_closed_form(m, obs, l) - it))
                it = m.evolve(it)
    beliefs_ok = worst <= 1e-12

    m = ChannelModel(0.2, 0.8)
    rec = run_replication([m], None, PolicyConfig(PolicyKind.RELAXED_INDEX, M=1, K=1), 10**5,
                          seed=8, saturated=True)
    thr_ok = abs(rec.mean_throughput - m.stationary) <= 0.01 * m.stationary

    m = ChannelModel(0.3, 0.7)
    n = 10**5
    x = np.empty(n + 1, dtype=np.int8)
    x[0] = rng.random() < m.stationary
    u = rng.random(n)
    for t in range(n):
        x[t + 1] = u[t] < (m.p11 if x[t] else m.p01)
    prev, nxt = x[:-1], x[1:]
    freq_ok = True
    for state, p in ((0, m.p01), (1, m.p11)):
        k = nxt[prev == state]
        se = math.sqrt(p * (1 - p) / len(k))
        freq_ok &= abs(k.mean() - p) <= 3 * se
    ok = beliefs_ok and thr_ok and freq_ok
    report("A8", ok, f"belief max err {worst:.1e}; single-user throughput {rec.mean_throughput:.4f} "
           f"vs b_s {0.5:.4f}; transition frequencies within 3 sigma {bool(freq_ok)}")
    assert ok


def test_a9_finite_horizon_convergence(report):
    # expected T-slot mean from 2000 independent starts vs the 1e5-slot stationary mean
    N, M = 20, 5
    models = random_channels(N, seed=109)
    weights = np.random.default_rng(9).uniform(0.5, 2.0, N)
    cfg = PolicyConfig(PolicyKind.STRINGENT_INDEX, M=M, K=4)
    short = run_experiment(models, None, cfg, 2500, 2000, seed=9, warmup=0, weights=weights,
                           saturated=True, keep_series=True)
    w = np.array([r.series["wthr"] for r in short.records])
    long = run_experiment(models, None, cfg, 10**5, 40, seed=90, warmup=0, weights=weights,
                          saturated=True)
    ref = long.summary["mean_weighted_throughput"].mean
    gaps = [abs(w[:, :T].mean() - ref) / ref for T in (100, 500, 2500)]
    mono = gaps[0] > gaps[1] > gaps[2]
    ok = mono and gaps[2] <= 0.02
    report("A9", ok, "relative gaps at T=100,500,2500: "
           + ", ".join(f"{g:.4%}" for g in gaps) + f" vs 1e5-slot mean {ref:.4f}")
    assert ok


def test_a10_analytic_limits(report):
    m = ChannelModel(0.2, 0.8)
    taus = np.unique(np.logspace(0, 3, 200).astype(int))
    f = np.array([bounds.f_tau(m, int(t)) for t in taus])
    f_ok = bool(np.all(np.diff(f) < 0)) and bounds.f_tau(m, 1000) < 1e-2
    Ms = [10**2, 10**3, 10**4, 10**5]
    mus = [bounds.mu(M, M - math.ceil(M**0.7), 0.2) for M in Ms]
    mu_inc = all(b > a for a, b in zip(mus, mus[1:]))
    mu_top = mus[-1] > 0.99
    x = np.linspace(0, 1, 10**4, endpoint=False)
    ineq_ok = bool(np.all((1 + x) * np.log1p(x) >= x + x**2 / 3 - 1e-15))
    ok = f_ok and mu_inc and mu_top and ineq_ok
    report("A10", ok, f"f(1000) = {bounds.f_tau(m, 1000):.2e}, decreasing {f_ok}; "
           f"mu = {', '.join(f'{v:.4f}' for v in mus)}, increasing {mu_inc}, > 0.99 at 1e5 {mu_top}; "
           f"(1+x)ln(1+x) >= x + x^2/3 {ineq_ok}")
    assert ok


def test_a3_hard_constraint_audit(report):
    # runs last in this file so the stringent/frame runs above are counted
    if AUDIT["decisions"] < 10**7:
        models = random_channels(50, seed=103)
        for kind in (PolicyKind.STRINGENT_INDEX, PolicyKind.FRAME):
            cfg = PolicyConfig(kind, M=10, K=8, frame_length=500)
            run_experiment(models, None, cfg, 10**5, 2, seed=3, saturated=True)
    ok = AUDIT["decisions"] >= 10**7 and AUDIT["violations"] == 0
    report("A3", ok, f"{AUDIT['decisions']:.3g} slot-decisions over {AUDIT['slots']:.3g} slots, "
           f"{AUDIT['violations']} violations")
    assert ok
