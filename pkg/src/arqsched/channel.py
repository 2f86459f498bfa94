"""Two-state (Gilbert-Elliott) channels and their belief dynamics.

A user's belief is stored as the pair (last observation, age); the numeric
value is recomputed from the closed form so long horizons never accumulate
rounding drift.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

DEFAULT_DELTA = 0.05
DEFAULT_AGE_CAP = 10**6
_SEQ_POWER_LIMIT = 20000


class Obs(IntEnum):
    OFF = 0
    ON = 1
    NEVER = 2


class ChannelError(ValueError):
    """Raised when channel parameters violate the model assumptions."""


@dataclass(frozen=True)
class ChannelModel:
    """ON/OFF Markov channel of one user.

    ``p01`` is Pr(ON now | OFF last slot), ``p11`` is Pr(ON now | ON last slot).
    Only positively correlated channels (p01 < p11) are supported.
    """

    p01: float
    p11: float
    user_id: int = 0

    def __post_init__(self):
        if not (0.0 < self.p01 < self.p11 < 1.0):
            raise ChannelError(
                f"user {self.user_id}: need 0 < p01 < p11 < 1, got p01={self.p01}, p11={self.p11}"
            )

    @property
    def p10(self) -> float:
        return 1.0 - self.p11

    @property
    def memory(self) -> float:
        """p11 - p01, the one-step autocorrelation of the channel."""
        return self.p11 - self.p01

    @property
    def stationary(self) -> float:
        return self.p01 / (1.0 + self.p01 - self.p11)

    def check_delta(self, delta: float) -> None:
        if not (self.p01 > delta and self.p10 > delta):
            raise ChannelError(
                f"user {self.user_id}: p01={self.p01} and 1-p11={self.p10:.6g} must both exceed delta={delta}"
            )

    def evolve(self, x):
        """Belief after one unobserved slot: x*p11 + (1-x)*p01."""
        return x * self.p11 + (1.0 - x) * self.p01


def validate_channels(models: Sequence[ChannelModel], delta: float = DEFAULT_DELTA) -> None:
    if not (0.0 < delta < 0.5):
        raise ChannelError(f"delta must lie in (0, 0.5), got {delta}")
    for m in models:
        m.check_delta(delta)


def stationary_belief(model: ChannelModel) -> float:
    return model.stationary


def belief_closed_form(model: ChannelModel, last_obs: Obs, age: int) -> float:
    """Belief ``l = age`` slots after observing ``last_obs``."""
    if age < 1:
        raise ValueError(f"age must be >= 1, got {age}")
    p01, p11 = model.p01, model.p11
    d = p11 - p01
    denom = 1.0 + p01 - p11
    # same left-to-right product as belief_arrays; d**age can differ in the last bit
    dl = math.prod(itertools.repeat(d, age)) if age <= _SEQ_POWER_LIMIT else d**age
    if Obs(last_obs) is Obs.OFF:
        return (p01 - dl * p01) / denom
    if Obs(last_obs) is Obs.ON:
        return (p01 + (1.0 - p11) * dl) / denom
    raise ValueError("closed form needs an ON or OFF observation")


def belief_arrays(model: ChannelModel, length: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised closed form for ages 0..length (index 0 is unused and set to b_s)."""
    p01, p11 = model.p01, model.p11
    d = p11 - p01
    denom = 1.0 + p01 - p11
    # sequential powers: every prefix is bit-identical whatever ``length`` is
    dl = np.cumprod(np.concatenate(([1.0], np.full(length, d))))
    off = (p01 - dl * p01) / denom
    on = (p01 + (1.0 - p11) * dl) / denom
    off[0] = on[0] = model.stationary
    return off, on


def belief_value(model: ChannelModel, last_obs: Obs, age: int, age_cap: int = DEFAULT_AGE_CAP) -> float:
    if Obs(last_obs) is Obs.NEVER or age > age_cap:
        return model.stationary
    return belief_closed_form(model, last_obs, age)


@dataclass(frozen=True)
class BeliefState:
    """Scheduler's information state for one user.

    ``age`` counts slots since the last observation (since start when NEVER).
    """

    last_obs: Obs
    age: int
    value: float

    @classmethod
    def initial(cls, model: ChannelModel) -> "BeliefState":
        return cls(Obs.NEVER, 0, model.stationary)

    @classmethod
    def from_key(cls, model: ChannelModel, last_obs: Obs, age: int,
                 age_cap: int = DEFAULT_AGE_CAP) -> "BeliefState":
        last_obs = Obs(last_obs)
        if last_obs is not Obs.NEVER and age > age_cap:
            last_obs = Obs.NEVER
        return cls(last_obs, age, belief_value(model, last_obs, age, age_cap))

    @property
    def key(self) -> tuple[Obs, int]:
        return (self.last_obs, self.age)


def evolve_belief(model: ChannelModel, belief: BeliefState,
                  observation: Optional[Obs] = None,
                  age_cap: int = DEFAULT_AGE_CAP) -> BeliefState:
    if observation is not None:
        observation = Obs(observation)
        if observation is Obs.NEVER:
            raise ValueError("an observation must be ON or OFF")
        return BeliefState(observation, 1, model.p11 if observation is Obs.ON else model.p01)
    return BeliefState.from_key(model, belief.last_obs, belief.age + 1, age_cap)


@dataclass
class ChannelRealization:
    """True channel state plus the random stream that drives it."""

    state: int
    rng: np.random.Generator = field(repr=False)

    @classmethod
    def stationary(cls, model: ChannelModel, rng: np.random.Generator) -> "ChannelRealization":
        return cls(int(rng.random() < model.stationary), rng)


def step_channel(model: ChannelModel, realization: ChannelRealization) -> ChannelRealization:
    p_on = model.p11 if realization.state == 1 else model.p01
    return ChannelRealization(int(realization.rng.random() < p_on), realization.rng)


def random_channels(count: int, p01_range=(0.05, 0.45), p11_range=(0.55, 0.95),
                    seed: int = 0, delta: float = DEFAULT_DELTA) -> list[ChannelModel]:
    """Draw ``count`` channels uniformly from the given ranges.

    Draws that would break ``p01 < p11`` or the delta margins are rejected and
    redrawn, so the result always validates.
    """
    rng = np.random.default_rng(seed)
    out: list[ChannelModel] = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 1000 * max(count, 1):
            raise ChannelError("sampling ranges admit (almost) no valid channel for this delta")
        p01 = float(rng.uniform(*p01_range))
        p11 = float(rng.uniform(*p11_range))
        if p01 < p11 and p01 > delta and 1.0 - p11 > delta:
            out.append(ChannelModel(p01, p11, user_id=len(out)))
    return out


def homogeneous_channels(count: int, p01: float, p11: float) -> list[ChannelModel]:
    return [ChannelModel(p01, p11, user_id=i) for i in range(count)]
