"""Threshold/randomisation calibration on the truncated belief space.

Each user's belief is restricted to 2*tau + 1 states: b_s plus tau ages after
an OFF and tau ages after an ON observation. Ages beyond tau fold back to b_s.
The calibration sweeps all (user, state) weighted index values in increasing
order, switching states to passive until the expected number of active users
would drop below the budget; the entry where that happens becomes the
randomised marginal state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelModel, Obs, belief_arrays
from .index import index_arrays

log = logging.getLogger(__name__)

RHO_TOL = 1e-10


class InfeasibleTargetError(ValueError):
    pass


@dataclass(frozen=True)
class TruncatedBeliefSpace:
    """Index layout: 0 is b_s, 1..tau are b0_l, tau+1..2tau are b1_l."""

    tau: int

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")

    @property
    def size(self) -> int:
        return 2 * self.tau + 1

    @property
    def off1(self) -> int:
        return 1

    @property
    def on1(self) -> int:
        return self.tau + 1

    def keys(self) -> list[tuple[Obs, int]]:
        t = self.tau
        return ([(Obs.NEVER, 0)] + [(Obs.OFF, l) for l in range(1, t + 1)]
                + [(Obs.ON, l) for l in range(1, t + 1)])

    def key_codes(self) -> np.ndarray:
        """Tie-break rank of each state: b_s -> 0, b0_l -> 2l, b1_l -> 2l + 1."""
        l = np.arange(1, self.tau + 1)
        return np.concatenate(([0], 2 * l, 2 * l + 1))

    def passive_next(self) -> np.ndarray:
        t = self.tau
        nxt = np.empty(self.size, dtype=np.intp)
        nxt[0] = 0
        nxt[1:t] = np.arange(2, t + 1)
        nxt[t] = 0
        nxt[t + 1:2 * t] = np.arange(t + 2, 2 * t + 1)
        nxt[2 * t] = 0
        return nxt

    def beliefs(self, model: ChannelModel) -> np.ndarray:
        off, on = belief_arrays(model, self.tau)
        return np.concatenate(([model.stationary], off[1:], on[1:]))

    def indices(self, model: ChannelModel) -> np.ndarray:
        w_off, w_on, w_s = index_arrays(model, self.tau)
        return np.concatenate(([w_s], w_off[1:], w_on[1:]))


def _stationary_fractions(pi: np.ndarray, nxt: np.ndarray, on1: int, off1: int,
                          acts: np.ndarray) -> np.ndarray:
    """Long-run active fraction for each activation vector in ``acts`` (K, S).

    The chain starts in b_s. If b_s is passive the user never leaves it and
    the fraction is 0; if every state is active it is 1. Otherwise the chain
    has a single recurrent class and its stationary law is found by a linear
    solve with the normalisation replacing the last balance equation.
    """
    acts = np.atleast_2d(np.asarray(acts, dtype=float))
    K, S = acts.shape
    out = np.empty(K)
    never = acts[:, 0] <= 0.0
    always = np.all(acts >= 1.0, axis=1)
    out[never] = 0.0
    out[always & ~never] = 1.0
    todo = np.flatnonzero(~never & ~always)
    if todo.size:
        a = acts[todo]
        rows = np.arange(S)
        P = np.zeros((todo.size, S, S))
        P[:, rows, nxt] += 1.0 - a
        P[:, rows, on1] += a * pi
        P[:, rows, off1] += a * (1.0 - pi)
        A = np.swapaxes(P, 1, 2) - np.eye(S)
        A[:, -1, :] = 1.0
        rhs = np.zeros((todo.size, S, 1))
        rhs[:, -1, 0] = 1.0
        x = np.linalg.solve(A, rhs)[..., 0]
        out[todo] = np.einsum("ks,ks->k", x, a)
    return np.clip(out, 0.0, 1.0)


def _threshold_acts(w: np.ndarray, threshold: float, rho: float) -> np.ndarray:
    return np.where(w > threshold, 1.0, np.where(w == threshold, rho, 0.0))


def active_fraction(model: ChannelModel, space: TruncatedBeliefSpace, threshold: float,
                    rho: float, weight: float = 1.0) -> float:
    """Fraction of slots one user is active under a weighted-index threshold rule.

    States whose weighted index exceeds ``threshold`` are active, states equal
    to it are active with probability ``rho``, the rest are passive.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if weight < 0:
        raise ValueError("weight must be nonnegative")
    acts = _threshold_acts(weight * space.indices(model), threshold, rho)
    return float(_stationary_fractions(space.beliefs(model), space.passive_next(),
                                       space.on1, space.off1, acts[None, :])[0])


def _bisect_rho(frac, target: float, tol: float = RHO_TOL) -> tuple[float, float]:
    """Find rho with frac(rho) == target; ``frac`` is nondecreasing on [0, 1]."""
    f0, f1 = frac(0.0), frac(1.0)
    slack = 1e-12
    if not (f0 - slack <= target <= f1 + slack):
        raise InfeasibleTargetError(
            f"target fraction {target:.12g} outside attainable bracket [{f0:.12g}, {f1:.12g}]")
    if abs(f1 - target) <= tol:
        return 1.0, f1
    if abs(f0 - target) <= tol:
        return 0.0, f0
    lo, hi = 0.0, 1.0
    rho, f = 0.5, f0
    for _ in range(100):
        rho = 0.5 * (lo + hi)
        f = frac(rho)
        if abs(f - target) <= tol:
            break
        if f < target:
            lo = rho
        else:
            hi = rho
    return rho, f


def solve_rho(model: ChannelModel, space: TruncatedBeliefSpace, threshold: float,
              target_fraction: float, weight: float = 1.0) -> float:
    """Randomisation at ``threshold`` that makes the active fraction hit the target."""
    w = weight * space.indices(model)
    pi, nxt = space.beliefs(model), space.passive_next()

    def frac(r):
        return float(_stationary_fractions(pi, nxt, space.on1, space.off1,
                                           _threshold_acts(w, threshold, r)[None, :])[0])

    return _bisect_rho(frac, target_fraction)[0]


@dataclass(frozen=True)
class CalibrationResult:
    """Output of :func:`calibrate`.

    Every (user, state) whose weighted index equals ``omega_tau`` is active with
    probability ``rho_tau``; ``marginal_entries`` lists those inside the
    truncated space. ``marginal_user``/``marginal_state`` name the first one.
    """

    omega_tau: float
    rho_tau: float
    marginal_user: int
    marginal_state: int
    tx_time: np.ndarray
    total_time: float
    tau: int
    budget: float
    weights: np.ndarray
    models: tuple = field(repr=False)
    degenerate: bool = False
    marginal_entries: tuple = ()

    @property
    def marginal_key(self) -> Optional[tuple[Obs, int]]:
        if self.marginal_user < 0:
            return None
        return TruncatedBeliefSpace(self.tau).keys()[self.marginal_state]

    def as_dict(self) -> dict:
        key = self.marginal_key
        return {
            "omega_tau": self.omega_tau,
            "rho_tau": self.rho_tau,
            "marginal_user": self.marginal_user,
            "marginal_key": None if key is None else [key[0].name, key[1]],
            "marginal_entries": [list(e) for e in self.marginal_entries],
            "tx_time": self.tx_time.tolist(),
            "total_time": self.total_time,
            "tau": self.tau,
            "budget": self.budget,
            "degenerate": self.degenerate,
        }


def calibrate(models: Sequence[ChannelModel], weights, tau: int, budget: float) -> CalibrationResult:
    """Compute (omega_tau, rho_tau) so the expected number of active users equals ``budget``.

    Entries with equal weighted index are switched to passive together, which
    keeps identical users symmetric and makes the result independent of the
    order of ties.
    """
    models = tuple(models)
    n = len(models)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"need {n} weights, got shape {w.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    if budget > n:
        raise ValueError(f"budget {budget} exceeds number of users {n}")
    space = TruncatedBeliefSpace(tau)
    S = space.size
    nxt = space.passive_next()
    codes = space.key_codes()
    live = np.flatnonzero(w > 0)

    tx = np.zeros(n)
    tx[live] = 1.0
    if live.size <= budget:
        if live.size < budget:
            log.info("only %d users carry positive weight; budget %s cannot bind", live.size, budget)
        return CalibrationResult(0.0, 1.0, -1, -1, tx, float(tx.sum()), tau, float(budget),
                                 w.copy(), models, degenerate=True)

    vals = np.empty((live.size, S))
    beliefs = np.empty((live.size, S))
    for j, u in enumerate(live):
        vals[j] = w[u] * space.indices(models[u])
        beliefs[j] = space.beliefs(models[u])
    users = np.repeat(live, S)
    states = np.tile(np.arange(S), live.size)
    flat_vals = vals.ravel()
    order = np.lexsort((codes[states], users, flat_vals))
    row_of = {int(u): j for j, u in enumerate(live)}

    # per-user fractions with the lowest k of its own states passive, k = 0..S
    own_order = {}
    prefix = {}
    for j, u in enumerate(live):
        own = np.lexsort((codes, vals[j]))
        own_order[int(u)] = own
        acts = np.ones((S + 1, S))
        for k in range(1, S + 1):
            acts[k:, own[k - 1]] = 0.0
        prefix[int(u)] = _stationary_fractions(beliefs[j], nxt, space.on1, space.off1, acts)

    passed = {int(u): 0 for u in live}
    total = float(live.size)
    pos = 0
    while pos < order.size:
        value = flat_vals[order[pos]]
        end = pos
        while end < order.size and flat_vals[order[end]] == value:
            end += 1
        group = [(int(users[e]), int(states[e])) for e in order[pos:end]]
        touched = sorted({u for u, _ in group})
        count = {u: sum(1 for g, _ in group if g == u) for u in touched}
        new = {u: float(prefix[u][passed[u] + count[u]]) for u in touched}
        rest = total - sum(tx[u] for u in touched)
        if rest + sum(new.values()) < budget:
            bases = {}
            for u in touched:
                base = np.ones(S)
                base[own_order[u][:passed[u]]] = 0.0
                bases[u] = base

            def group_total(r):
                acc = rest
                for u in touched:
                    a = bases[u].copy()
                    a[[s for g, s in group if g == u]] = r
                    acc += float(_stationary_fractions(beliefs[row_of[u]], nxt, space.on1,
                                                       space.off1, a[None, :])[0])
                return acc

            rho, _ = _bisect_rho(group_total, float(budget))
            for u in touched:
                a = bases[u].copy()
                a[[s for g, s in group if g == u]] = rho
                tx[u] = float(_stationary_fractions(beliefs[row_of[u]], nxt, space.on1,
                                                    space.off1, a[None, :])[0])
            u0, s0 = group[0]
            return CalibrationResult(float(value), rho, u0, s0, tx, float(tx.sum()), tau,
                                     float(budget), w.copy(), models, marginal_entries=tuple(group))
        for u in touched:
            tx[u] = new[u]
            passed[u] += count[u]
        total = rest + sum(new.values())
        pos = end
    raise AssertionError("sweep exhausted without meeting the budget")
