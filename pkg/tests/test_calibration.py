import numpy as np
import pytest

from arqsched.calibration import (
    InfeasibleTargetError, TruncatedBeliefSpace, active_fraction, calibrate, solve_rho,
)
from arqsched.channel import ChannelModel, homogeneous_channels, random_channels
from arqsched.policies import PolicyConfig, PolicyKind
from arqsched.simulator import run_replication


def _simulate_truncated(model, space, threshold, rho, n_slots, seed):
    """Active fraction of the threshold rule on the truncated chain, by Monte Carlo."""
    rng = np.random.default_rng(seed)
    w = space.indices(model)
    pi = space.beliefs(model)
    nxt = space.passive_next()
    act = np.where(w > threshold, 1.0, np.where(w == threshold, rho, 0.0))
    u = rng.random((n_slots, 2))
    s, active = 0, 0
    for t in range(n_slots):
        if u[t, 0] < act[s]:
            active += 1
            s = space.on1 if u[t, 1] < pi[s] else space.off1
        else:
            s = nxt[s]
    return active / n_slots


def test_space_layout():
    sp = TruncatedBeliefSpace(3)
    assert sp.size == 7 and sp.on1 == 4
    assert list(sp.passive_next()) == [0, 2, 3, 0, 5, 6, 0]
    with pytest.raises(ValueError):
        TruncatedBeliefSpace(0)


def test_active_fraction_extremes(gilbert):
    sp = TruncatedBeliefSpace(10)
    assert active_fraction(gilbert, sp, 2.0, 1.0) == 0.0
    assert active_fraction(gilbert, sp, -1.0, 0.0) == 1.0
    assert active_fraction(gilbert, sp, 0.5, 1.0, weight=0.0) == 0.0


def test_active_fraction_monte_carlo(gilbert):
    sp = TruncatedBeliefSpace(10)
    exact = active_fraction(gilbert, sp, 0.21, 1.0)
    assert 0.0 < exact < 1.0
    assert abs(_simulate_truncated(gilbert, sp, 0.21, 1.0, 10**6, 3) - exact) <= 1e-3


def test_solve_rho_brackets_and_midpoint(gilbert):
    sp = TruncatedBeliefSpace(10)
    thr = float(sp.indices(gilbert)[3])  # b0_3 sits exactly on the threshold
    f0 = active_fraction(gilbert, sp, thr, 0.0)
    f1 = active_fraction(gilbert, sp, thr, 1.0)
    assert f0 < f1
    assert solve_rho(gilbert, sp, thr, f1) == 1.0
    assert solve_rho(gilbert, sp, thr, f0) == 0.0
    mid = 0.5 * (f0 + f1)
    r = solve_rho(gilbert, sp, thr, mid)
    assert abs(active_fraction(gilbert, sp, thr, r) - mid) <= 1e-10
    with pytest.raises(InfeasibleTargetError, match="bracket"):
        solve_rho(gilbert, sp, thr, f1 + 0.01)


def test_budget_equal_to_n_is_degenerate():
    res = calibrate(homogeneous_channels(4, 0.2, 0.8), np.ones(4), 10, 4)
    assert res.degenerate and res.omega_tau == 0.0 and res.rho_tau == 1.0
    assert np.all(res.tx_time == 1.0)


def test_symmetric_pair_splits_evenly():
    res = calibrate(homogeneous_channels(2, 0.2, 0.8), np.ones(2), 10, 1)
    assert res.tx_time == pytest.approx([0.5, 0.5], abs=1e-9)
    assert abs(res.total_time - 1.0) <= 1e-9
    assert len(res.marginal_entries) == 2


def test_rejects_bad_budget():
    ms = homogeneous_channels(3, 0.2, 0.8)
    for b in (0, -1, 4):
        with pytest.raises(ValueError):
            calibrate(ms, np.ones(3), 10, b)
    with pytest.raises(ValueError):
        calibrate(ms, [1.0, -1.0, 1.0], 10, 1)


def test_zero_weight_users_get_no_time(hetero10):
    w = np.ones(10)
    w[[2, 7]] = 0.0
    res = calibrate(hetero10, w, 10, 3)
    assert res.tx_time[2] == 0.0 and res.tx_time[7] == 0.0
    assert abs(res.total_time - 3) <= 1e-9


@pytest.mark.parametrize("tau,budget", [(3, 2), (10, 3), (20, 5)])
def test_total_time_hits_budget(hetero10, tau, budget):
    w = np.random.default_rng(tau).uniform(0.5, 2.0, 10)
    res = calibrate(hetero10, w, tau, budget)
    assert abs(res.total_time - budget) <= 1e-9
    assert 0.0 <= res.rho_tau <= 1.0


def test_ten_user_monte_carlo(hetero10):
    cfg = PolicyConfig(PolicyKind.RELAXED_INDEX, M=3, K=3, tau=10)
    rec = run_replication(hetero10, None, cfg, 200_000, seed=4, saturated=True)
    assert abs(rec.mean_active_count - 3) <= 0.02 * 3


def test_as_dict_roundtrip(hetero10):
    d = calibrate(hetero10, np.ones(10), 10, 3).as_dict()
    assert set(d) >= {"omega_tau", "rho_tau", "tx_time", "total_time", "marginal_entries"}
