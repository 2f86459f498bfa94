import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arqsched.channel import (
    BeliefState, ChannelError, ChannelModel, ChannelRealization, Obs, belief_arrays,
    belief_closed_form, evolve_belief, homogeneous_channels, random_channels,
    stationary_belief, step_channel, validate_channels,
)


def test_construction_rejects_bad_parameters():
    for p01, p11 in [(0.8, 0.2), (0.0, 0.5), (0.2, 1.0), (0.5, 0.5)]:
        with pytest.raises(ChannelError):
            ChannelModel(p01, p11)


def test_delta_validation():
    validate_channels([ChannelModel(0.2, 0.8)], delta=0.05)
    with pytest.raises(ChannelError):
        validate_channels([ChannelModel(0.04, 0.8)], delta=0.05)
    with pytest.raises(ChannelError):
        validate_channels([ChannelModel(0.3, 0.97)], delta=0.05)


@pytest.mark.parametrize("p01,p11,expected", [(0.2, 0.8, 0.5), (0.1, 0.9, 0.5), (0.3, 0.6, 0.3 / 0.7)])
def test_stationary(p01, p11, expected):
    assert stationary_belief(ChannelModel(p01, p11)) == pytest.approx(expected, abs=1e-15)


def test_evolve_examples(gilbert):
    half = BeliefState(Obs.NEVER, 0, 0.5)
    assert evolve_belief(gilbert, half).value == pytest.approx(0.5)
    off1 = BeliefState(Obs.OFF, 1, 0.2)
    assert evolve_belief(gilbert, off1).value == pytest.approx(0.32)
    assert evolve_belief(gilbert, off1, Obs.ON).value == 0.8
    assert evolve_belief(gilbert, off1, Obs.OFF).value == 0.2
    with pytest.raises(ValueError):
        evolve_belief(gilbert, off1, Obs.NEVER)


def test_closed_form_examples(gilbert):
    assert belief_closed_form(gilbert, Obs.OFF, 1) == pytest.approx(0.2, abs=1e-15)
    assert belief_closed_form(gilbert, Obs.OFF, 10) == pytest.approx(0.4969766912, abs=1e-9)
    assert belief_closed_form(gilbert, Obs.OFF, 400) == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(p01=st.floats(0.01, 0.49), gap=st.floats(0.01, 0.49))
def test_closed_form_matches_iteration(p01, gap):
    m = ChannelModel(p01, min(p01 + gap, 0.99))
    for obs, start in [(Obs.OFF, m.p01), (Obs.ON, m.p11)]:
        x = start
        for age in range(1, 61):
            assert abs(belief_closed_form(m, obs, age) - x) <= 1e-12
            x = m.evolve(x)


def test_belief_arrays_prefix_is_bit_identical(gilbert):
    off_a, on_a = belief_arrays(gilbert, 10)
    off_b, on_b = belief_arrays(gilbert, 500)
    assert np.array_equal(off_a, off_b[:11]) and np.array_equal(on_a, on_b[:11])
    assert off_a[0] == gilbert.stationary


def test_age_cap_collapses_to_never(gilbert):
    b = BeliefState.from_key(gilbert, Obs.OFF, 5, age_cap=4)
    assert b.last_obs is Obs.NEVER and b.value == gilbert.stationary
    b = evolve_belief(gilbert, BeliefState.from_key(gilbert, Obs.ON, 4), age_cap=4)
    assert b.last_obs is Obs.NEVER


@pytest.mark.parametrize("prev,p", [(1, 0.8), (0, 0.2)])
def test_step_channel_frequency(gilbert, prev, p):
    rng = np.random.default_rng(7)
    n = 100_000
    hits = sum(step_channel(gilbert, ChannelRealization(prev, rng)).state for _ in range(n))
    assert abs(hits / n - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_step_channel_deterministic(gilbert):
    def path(seed):
        r = ChannelRealization.stationary(gilbert, np.random.default_rng(seed))
        out = []
        for _ in range(200):
            r = step_channel(gilbert, r)
            out.append(r.state)
        return out

    assert path(3) == path(3)


def test_generators():
    ms = random_channels(30, seed=2, delta=0.2)
    validate_channels(ms, 0.2)
    assert [m.user_id for m in ms] == list(range(30))
    assert random_channels(30, seed=2, delta=0.2) == ms
    hs = homogeneous_channels(4, 0.2, 0.8)
    assert len({(m.p01, m.p11) for m in hs}) == 1
