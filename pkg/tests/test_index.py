import numpy as np
import pytest

from arqsched.channel import BeliefState, ChannelModel, Obs, belief_closed_form
from arqsched.index import (
    STATIONARY, OracleConvergenceError, UnclassifiableBeliefError, index_arrays, index_of,
    numeric_index_oracle, oracle_table, weighted_index, whittle_index,
)


def _b(model, obs, age):
    return BeliefState.from_key(model, obs, age)


def test_case1_value(gilbert):
    assert whittle_index(gilbert, _b(gilbert, Obs.OFF, 1)).value == pytest.approx(0.2, abs=1e-12)


def test_plateau_values(gilbert):
    # pi / (1 - p11 + pi) on [b_s, p11]
    assert whittle_index(gilbert, BeliefState.initial(gilbert)).value == pytest.approx(0.5 / 0.7)
    assert whittle_index(gilbert, _b(gilbert, Obs.ON, 1)).value == pytest.approx(0.8)


def test_weighted(gilbert):
    b = BeliefState.initial(gilbert)
    assert weighted_index(gilbert, b, 0.0).value == 0.0
    assert weighted_index(gilbert, b, 1.0).value == whittle_index(gilbert, b).value
    assert weighted_index(gilbert, b, 3.5).value == pytest.approx(3.5 * 0.5 / 0.7)
    with pytest.raises(ValueError):
        weighted_index(gilbert, b, -1.0)


def test_unclassifiable(gilbert):
    with pytest.raises(UnclassifiableBeliefError):
        index_of(gilbert, Obs.ON, 1, 0.95)
    with pytest.raises(UnclassifiableBeliefError):
        index_of(gilbert, Obs.OFF, 1, 0.1)


def test_branch_continuity():
    for m in [ChannelModel(0.2, 0.8), ChannelModel(0.05, 0.6), ChannelModel(0.4, 0.95)]:
        w200 = index_of(m, Obs.OFF, 200, belief_closed_form(m, Obs.OFF, 200))
        ws = index_of(m, Obs.NEVER, 0, m.stationary)
        assert abs(w200 - ws) <= 1e-6


def test_monotone_in_belief(hetero10):
    for m in hetero10:
        w_off, w_on, w_s = index_arrays(m, 60)
        # ulp-level noise once the branches have converged onto b_s
        assert np.all(np.diff(w_off[1:]) >= -1e-12)
        assert np.all(np.diff(w_on[1:]) <= 1e-12)
        assert w_off[1:].max() <= w_s + 1e-12 and w_s <= w_on[1:].min() + 1e-12


def test_arrays_match_scalar(hetero10):
    for m in hetero10:
        w_off, w_on, w_s = index_arrays(m, 40)
        for age in range(1, 41):
            assert w_off[age] == index_of(m, Obs.OFF, age, belief_closed_form(m, Obs.OFF, age))
            assert w_on[age] == index_of(m, Obs.ON, age, belief_closed_form(m, Obs.ON, age))
        assert w_s == index_of(m, Obs.NEVER, 0, m.stationary)


@pytest.mark.parametrize("key,expected", [(STATIONARY, 0.5 / 0.7), ((Obs.OFF, 1), 0.2),
                                          ((Obs.OFF, 2), 0.39286), ((Obs.ON, 1), 0.8),
                                          ((Obs.ON, 3), 0.75248)])
def test_oracle_matches_closed_form(gilbert, key, expected):
    assert numeric_index_oracle(gilbert, key) == pytest.approx(expected, abs=1e-3)


def test_oracle_table_order_and_monotone():
    m = ChannelModel(0.1, 0.7)
    rows = oracle_table(m, 4, truncation=100)
    keys = [k for k, _, _ in rows]
    assert keys[:4] == [(Obs.OFF, l) for l in range(1, 5)]
    assert keys[4] == STATIONARY
    assert keys[5:] == [(Obs.ON, l) for l in range(4, 0, -1)]
    closed = [c for _, c, _ in rows]
    orc = [o for _, _, o in rows]
    assert np.all(np.diff(closed) >= -1e-12)
    assert np.all(np.diff(orc) >= -1e-4)
    assert max(abs(a - b) for a, b in zip(closed, orc)) < 1e-3


def test_oracle_reports_nonconvergence(gilbert):
    with pytest.raises(OracleConvergenceError) as exc:
        numeric_index_oracle(gilbert, STATIONARY, truncation=50, max_iter=3)
    assert exc.value.iterations == 3 and exc.value.residual > 0
