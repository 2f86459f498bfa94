"""Whittle index of the ON/OFF belief bandit and a numeric oracle for it.

Below the stationary belief (states reached after an OFF observation) the
closed form is

    W(b0_l) = ((x - Q(x))(l + 1) + Q(x)) / (1 - p11 + (x - Q(x)) l + Q(x)),  x = b0_l

and on [b_s, p11] it is W(x) = x / (1 - p11 + x). The second branch agrees
with the first one in the limit l -> inf and with the subsidy-search oracle
below on every ON-branch state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import kernels
from .channel import BeliefState, ChannelModel, Obs, belief_arrays

STATIONARY = "STATIONARY"
_TOL = 1e-12


class UnclassifiableBeliefError(ValueError):
    """A belief value fits neither index branch; the belief bookkeeping is broken."""


class OracleConvergenceError(RuntimeError):
    def __init__(self, omega: float, iterations: int, residual: float):
        super().__init__(
            f"relative value iteration did not converge at omega={omega:.6g} "
            f"after {iterations} iterations (span residual {residual:.3g})"
        )
        self.omega = omega
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class IndexValue:
    value: float
    user_id: int
    belief_key: Union[tuple, str]
    weight: float = 1.0


def index_of(model: ChannelModel, last_obs: Obs, age: int, value: float) -> float:
    """Unweighted index of the belief ``value`` reached via (last_obs, age)."""
    p01, p11 = model.p01, model.p11
    bs = model.stationary
    if Obs(last_obs) is Obs.OFF and value < bs:
        if value < p01 - _TOL:
            raise UnclassifiableBeliefError(f"user {model.user_id}: belief {value} below p01={p01}")
        q = model.evolve(value)
        gap = value - q
        return (gap * (age + 1) + q) / (1.0 - p11 + gap * age + q)
    if bs - _TOL <= value <= p11 + _TOL:
        return plateau_index(model, value)
    raise UnclassifiableBeliefError(
        f"user {model.user_id}: belief {value} with key ({Obs(last_obs).name}, {age}) "
        f"is outside [b_s={bs}, p11={p11}]"
    )


def plateau_index(model: ChannelModel, value: float) -> float:
    return value / (1.0 - model.p11 + value)


def whittle_index(model: ChannelModel, belief: BeliefState) -> IndexValue:
    key = STATIONARY if belief.last_obs is Obs.NEVER else belief.key
    w = index_of(model, belief.last_obs, belief.age, belief.value)
    return IndexValue(w, model.user_id, key)


def weighted_index(model: ChannelModel, belief: BeliefState, weight: float) -> IndexValue:
    if weight < 0:
        raise ValueError(f"weight must be nonnegative, got {weight}")
    iv = whittle_index(model, belief)
    return IndexValue(weight * iv.value, iv.user_id, iv.belief_key, weight)


def index_arrays(model: ChannelModel, length: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Index along the OFF and ON branches for ages 0..length, plus W(b_s).

    Entry 0 of both branches holds W(b_s). Uses the same arithmetic as
    :func:`index_of` so values compare exactly.
    """
    off_b, on_b = belief_arrays(model, length)
    bs = model.stationary
    w_s = plateau_index(model, bs)
    ages = np.arange(length + 1, dtype=float)
    q = off_b * model.p11 + (1.0 - off_b) * model.p01
    gap = off_b - q
    case1 = (gap * (ages + 1) + q) / (1.0 - model.p11 + gap * ages + q)
    w_off = np.where(off_b < bs, case1, off_b / (1.0 - model.p11 + off_b))
    w_on = on_b / (1.0 - model.p11 + on_b)
    w_off[0] = w_on[0] = w_s
    return w_off, w_on, w_s


class _BeliefMDP:
    """Single-user belief chain truncated at ``truncation`` slots of passivity.

    State 0 is b_s, states 1..n are b0_l, states n+1..2n are b1_l. A passive
    step ages the belief; age n+1 falls back to b_s.
    """

    def __init__(self, model: ChannelModel, truncation: int):
        n = truncation
        off_b, on_b = belief_arrays(model, n)
        self.n = n
        self.pi = np.concatenate(([model.stationary], off_b[1:], on_b[1:]))
        nxt = np.empty(2 * n + 1, dtype=np.intp)
        nxt[0] = 0
        nxt[1:n] = np.arange(2, n + 1)
        nxt[n] = 0
        nxt[n + 1:2 * n] = np.arange(n + 2, 2 * n + 1)
        nxt[2 * n] = 0
        self.nxt = nxt
        self.on1 = n + 1
        self.off1 = 1

    def state_of(self, belief_key) -> int:
        if belief_key == STATIONARY or belief_key is None:
            return 0
        obs, age = belief_key
        obs = Obs(obs)
        if obs is Obs.NEVER:
            return 0
        if not 1 <= age <= self.n:
            raise ValueError(f"age {age} outside truncation 1..{self.n}")
        return age if obs is Obs.OFF else self.n + age


def _advantage(mdp: _BeliefMDP, omega: float, vi_tol: float, max_iter: int,
               h0: np.ndarray) -> np.ndarray:
    h, it, span = kernels.rvi_solve(mdp.pi, mdp.nxt, mdp.on1, mdp.off1,
                                     float(omega), vi_tol, max_iter, h0)
    if not span < vi_tol:
        raise OracleConvergenceError(omega, it, span)
    h0[:] = h
    act = mdp.pi + mdp.pi * h[mdp.on1] + (1.0 - mdp.pi) * h[mdp.off1]
    return act - (omega + h[mdp.nxt])


def numeric_index_oracle(model: ChannelModel, belief_key, truncation: int = 200,
                         tolerance: float = 1e-5, vi_tol: float = 1e-10,
                         max_iter: int = 10**6, bisect_iter: int = 30,
                         _mdp: Optional[_BeliefMDP] = None) -> float:
    """Subsidy at which passivity becomes optimal in ``belief_key``.

    Solves the omega-subsidised average-reward problem by relative value
    iteration and bisects omega on [0, 1]. At most ``bisect_iter`` halvings
    are done; bisection stops earlier once the bracket is narrower than
    ``tolerance``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    mdp = _mdp or _BeliefMDP(model, truncation)
    s = mdp.state_of(belief_key)
    lo, hi = 0.0, 1.0
    h0 = np.zeros_like(mdp.pi)
    for _ in range(bisect_iter):
        if hi - lo <= tolerance:
            break
        mid = 0.5 * (lo + hi)
        if _advantage(mdp, mid, vi_tol, max_iter, h0)[s] > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def oracle_table(model: ChannelModel, max_age: int, truncation: int = 200,
                 tolerance: float = 1e-5, vi_tol: float = 1e-10,
                 max_iter: int = 10**6, bisect_iter: int = 30) -> list[tuple]:
    """(belief_key, closed_form, oracle) rows for b0_l, b_s, b1_l with l <= max_age.

    Rows come in increasing index order: OFF ages ascending, then b_s, then ON
    ages descending.
    """
    mdp = _BeliefMDP(model, truncation)
    keys = ([(Obs.OFF, l) for l in range(1, max_age + 1)] + [STATIONARY]
            + [(Obs.ON, l) for l in range(max_age, 0, -1)])
    rows = []
    for key in keys:
        if key == STATIONARY:
            b = BeliefState.initial(model)
        else:
            b = BeliefState.from_key(model, *key)
        closed = whittle_index(model, b).value
        orc = numeric_index_oracle(model, key, truncation, tolerance, vi_tol,
                                   max_iter, bisect_iter, _mdp=mdp)
        rows.append((key, closed, orc))
    return rows
