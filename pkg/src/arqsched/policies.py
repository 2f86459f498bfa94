"""Per-slot scheduling rules.

Index policies are compiled into lookup tables indexed by
(user, last observation, age) holding the probability of becoming a candidate.
The simulator kernels and the per-slot functions below read the same tables,
so both make the same decision for the same uniforms.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional, Sequence

import numpy as np

from .bounds import default_g
from .calibration import CalibrationResult, calibrate
from .channel import DEFAULT_AGE_CAP, BeliefState, ChannelModel, Obs, belief_arrays, evolve_belief
from .index import index_arrays, index_of

log = logging.getLogger(__name__)

TABLE_AGE_LIMIT = 20000


class PolicyKind(str, Enum):
    RELAXED_INDEX = "relaxed"
    STRINGENT_INDEX = "stringent"
    FRAME = "frame"
    MYOPIC_MAXWEIGHT = "myopic"
    QUEUE_INDEX_HEURISTIC = "queue_index"
    RANDOM = "random"


class Mode(IntEnum):
    IDLE = 0
    TRANSMIT = 1
    BROADCAST = 2


@functools.lru_cache(maxsize=None)
def default_k(M: int, g_exponent: float = 0.7) -> int:
    """K = M - ceil(M**g_exponent), floored at ceil(M/2) + 1 (never above M)."""
    k = M - default_g(M, g_exponent)
    floor = min(M, math.ceil(M / 2) + 1)
    if k < floor:
        log.warning("K = %d for M = %d is below ceil(M/2)+1; using K = %d", k, M, floor)
        k = floor
    return k


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind
    M: int
    tau: int = 10
    K: Optional[int] = None
    frame_length: int = 500
    g_exponent: float = 0.7

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if self.K is not None and self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.kind in (PolicyKind.STRINGENT_INDEX, PolicyKind.FRAME) and self.budget > self.M:
            raise ValueError(f"{self.kind.value} policy needs K <= M, got K={self.budget}, M={self.M}")
        if self.kind is PolicyKind.FRAME and self.frame_length < 1:
            raise ValueError("frame length T must be >= 1")

    @property
    def budget(self) -> int:
        """Calibration budget: K if given, else the default K for M."""
        return self.K if self.K is not None else default_k(self.M, self.g_exponent)


@dataclass(frozen=True)
class SlotDecision:
    candidates: np.ndarray
    mode: Mode
    scheduled: np.ndarray
    feedback_set: frozenset

    @property
    def num_candidates(self) -> int:
        return int(self.candidates.sum())

    @property
    def num_scheduled(self) -> int:
        return int(self.scheduled.sum())


@dataclass(frozen=True)
class DecisionTables:
    """Arrays of shape (N, 3, L + 1) addressed by [user, Obs, min(age, L)].

    ``act`` is the candidate probability, ``belief`` the belief value and
    ``index`` the unweighted index of each belief state.
    """

    act: np.ndarray
    belief: np.ndarray
    index: np.ndarray
    length: int

    def lookup(self, table: np.ndarray, beliefs: Sequence[BeliefState]) -> np.ndarray:
        users = np.arange(len(beliefs))
        rows = np.array([int(b.last_obs) for b in beliefs])
        cols = np.minimum([b.age for b in beliefs], self.length)
        return table[users, rows, cols]


def table_length(models: Sequence[ChannelModel], tau: int, age_cap: int = DEFAULT_AGE_CAP) -> int:
    """Ages past which every belief equals b_s to double precision (at least tau + 1)."""
    need = tau + 1
    for m in models:
        d = m.memory
        need = max(need, int(math.ceil(math.log(1e-18) / math.log(d))) + 2)
    return int(min(need, age_cap, TABLE_AGE_LIMIT))


def belief_tables(models: Sequence[ChannelModel], length: int) -> tuple[np.ndarray, np.ndarray]:
    n = len(models)
    bel = np.empty((n, 3, length + 1))
    idx = np.empty((n, 3, length + 1))
    for i, m in enumerate(models):
        off, on = belief_arrays(m, length)
        w_off, w_on, w_s = index_arrays(m, length)
        bel[i, Obs.OFF], bel[i, Obs.ON], bel[i, Obs.NEVER] = off, on, m.stationary
        idx[i, Obs.OFF], idx[i, Obs.ON], idx[i, Obs.NEVER] = w_off, w_on, w_s
    return bel, idx


def activation_table(index: np.ndarray, calib: CalibrationResult) -> np.ndarray:
    """Candidate probability per state for the threshold (omega_tau, rho_tau).

    A state whose truncated belief key is one of the calibration's marginal
    entries is a candidate with probability rho_tau; beliefs older than tau map
    to the stationary key. Every other state is a candidate iff its weighted
    index exceeds omega_tau. Users with zero weight are never candidates; a
    degenerate calibration activates every positive-weight user.
    """
    w = np.asarray(calib.weights, dtype=float)[:, None, None]
    if calib.degenerate:
        return np.where(w > 0, 1.0, 0.0) * np.ones_like(index)
    act = np.where(w * index > calib.omega_tau, 1.0, 0.0)
    tau = calib.tau
    for user, code in calib.marginal_entries:
        if code == 0:
            act[user, Obs.NEVER, :] = calib.rho_tau
            act[user, Obs.OFF, tau + 1:] = calib.rho_tau
            act[user, Obs.ON, tau + 1:] = calib.rho_tau
        elif code <= tau:
            act[user, Obs.OFF, code] = calib.rho_tau
        else:
            act[user, Obs.ON, code - tau] = calib.rho_tau
    return np.where(w > 0, act, 0.0)


def decision_tables(calib: CalibrationResult, age_cap: int = DEFAULT_AGE_CAP) -> DecisionTables:
    """Lookup tables of the threshold rule defined by ``calib``."""
    L = table_length(calib.models, calib.tau, age_cap)
    bel, idx = belief_tables(calib.models, L)
    return DecisionTables(activation_table(idx, calib), bel, idx, L)


def _table_cache(calib: CalibrationResult, age_cap: int) -> DecisionTables:
    cache = calib.__dict__.setdefault("_tables", {})
    if age_cap not in cache:
        cache[age_cap] = decision_tables(calib, age_cap)
    return cache[age_cap]


def _check_weights(calib: CalibrationResult, weights) -> None:
    if weights is not None and not np.array_equal(np.asarray(weights, dtype=float), calib.weights):
        raise ValueError("weights differ from the ones used for calibration")


def _candidates(calib, beliefs, rng, age_cap):
    tables = _table_cache(calib, age_cap)
    p = tables.lookup(tables.act, beliefs)
    return rng.random(len(beliefs)) < p


def relaxed_decide(calib: CalibrationResult, beliefs: Sequence[BeliefState], weights=None,
                   rng: Optional[np.random.Generator] = None,
                   age_cap: int = DEFAULT_AGE_CAP) -> SlotDecision:
    """Schedule every candidate; no per-slot cap."""
    _check_weights(calib, weights)
    rng = rng if rng is not None else np.random.default_rng()
    theta = _candidates(calib, beliefs, rng, age_cap)
    mode = Mode.TRANSMIT if theta.any() else Mode.IDLE
    return SlotDecision(theta, mode, theta.copy(), frozenset(np.flatnonzero(theta).tolist()))


def stringent_decide(calib: CalibrationResult, beliefs: Sequence[BeliefState], weights=None,
                     M: int = 1, rng: Optional[np.random.Generator] = None,
                     age_cap: int = DEFAULT_AGE_CAP) -> SlotDecision:
    """Schedule the candidates if there are at most M, otherwise broadcast to probe them."""
    _check_weights(calib, weights)
    rng = rng if rng is not None else np.random.default_rng()
    theta = _candidates(calib, beliefs, rng, age_cap)
    fb = frozenset(np.flatnonzero(theta).tolist())
    if theta.sum() > M:
        return SlotDecision(theta, Mode.BROADCAST, np.zeros_like(theta), fb)
    mode = Mode.TRANSMIT if theta.any() else Mode.IDLE
    return SlotDecision(theta, mode, theta.copy(), fb)


@dataclass
class FrameState:
    """Calibration and sampled queue weights of the current frame."""

    slot: int = 0
    weights: Optional[np.ndarray] = None
    calib: Optional[CalibrationResult] = field(default=None, repr=False)


def frame_policy_step(state: FrameState, queues, beliefs: Sequence[BeliefState],
                      models: Sequence[ChannelModel], config: PolicyConfig,
                      rng: Optional[np.random.Generator] = None,
                      age_cap: int = DEFAULT_AGE_CAP) -> tuple[SlotDecision, FrameState]:
    """One slot of the T-frame queue policy.

    At slots that are multiples of T the threshold is recalibrated with the
    current queue lengths as weights; within the frame the stringent rule runs
    with those frozen weights.
    """
    if config.kind is not PolicyKind.FRAME:
        raise ValueError("frame_policy_step needs a FRAME policy config")
    calib, weights = state.calib, state.weights
    if state.slot % config.frame_length == 0 or calib is None:
        weights = np.asarray(queues, dtype=float).copy()
        calib = calibrate(models, weights, config.tau, min(config.budget, len(models)))
    decision = stringent_decide(calib, beliefs, weights, config.M, rng, age_cap)
    return decision, FrameState(state.slot + 1, weights, calib)


def baseline_scores(kind: PolicyKind, queues, beliefs: Sequence[BeliefState],
                    models: Optional[Sequence[ChannelModel]] = None) -> np.ndarray:
    """q*pi for myopic max-weight, q*W for the queue-index heuristic."""
    q = np.asarray(queues, dtype=float)
    if kind is PolicyKind.MYOPIC_MAXWEIGHT:
        return q * np.array([b.value for b in beliefs])
    if kind is PolicyKind.QUEUE_INDEX_HEURISTIC:
        if models is None:
            raise ValueError("the queue-index heuristic needs the channel models")
        w = [index_of(m, b.last_obs, b.age, b.value) for m, b in zip(models, beliefs)]
        return q * np.array(w)
    raise ValueError(f"{kind} has no queue-based score")


def baseline_decide(kind: PolicyKind, queues, beliefs: Sequence[BeliefState], M: int,
                    rng: Optional[np.random.Generator] = None,
                    models: Optional[Sequence[ChannelModel]] = None) -> SlotDecision:
    """Top-M rules: q*pi (myopic max-weight), q*W (queue-index) or M uniform users.

    Only users with a positive score are scheduled; ties go to the lower user id.
    """
    kind = PolicyKind(kind)
    rng = rng if rng is not None else np.random.default_rng()
    n = len(beliefs)
    if M > n:
        raise ValueError(f"M = {M} exceeds the number of users {n}")
    u = rng.random(n)
    score = 1.0 - u if kind is PolicyKind.RANDOM else baseline_scores(kind, queues, beliefs, models)
    order = np.lexsort((np.arange(n), -score))
    top = [int(i) for i in order[:M] if score[i] > 0.0]
    sched = np.zeros(n, dtype=bool)
    sched[top] = True
    mode = Mode.TRANSMIT if sched.any() else Mode.IDLE
    return SlotDecision(sched.copy(), mode, sched, frozenset(top))


def update_beliefs(models: Sequence[ChannelModel], beliefs: Sequence[BeliefState],
                   decision: SlotDecision, channel_states, age_cap: int = DEFAULT_AGE_CAP
                   ) -> list[BeliefState]:
    """Apply one slot of feedback: observed users restart at age 1, the rest age by one."""
    out = []
    for i, (m, b) in enumerate(zip(models, beliefs)):
        if i in decision.feedback_set:
            out.append(evolve_belief(m, b, Obs(int(channel_states[i])), age_cap))
        else:
            out.append(evolve_belief(m, b, None, age_cap))
    return out
