"""Closed-form analytic quantities: truncation error f(tau), tau_0, mu(M, K) and the Chernoff tail bound."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelModel, Obs, belief_closed_form


class BoundDomainError(ValueError):
    """Arguments outside the regime where a bound is defined."""


def f_tau(model: ChannelModel, tau: int) -> float:
    """Per-user truncation error (1 + b_{0,tau} - p11) / (b_{0,tau} + (1 - p11) tau)."""
    if tau < 1:
        raise BoundDomainError(f"tau must be >= 1, got {tau}")
    b = belief_closed_form(model, Obs.OFF, tau)
    return (1.0 + b - model.p11) / (b + (1.0 - model.p11) * tau)


def f_total(models: Sequence[ChannelModel], tau: int) -> float:
    return float(sum(f_tau(m, tau) for m in models))


def truncation_gap_bound(models: Sequence[ChannelModel], weights, tau: int) -> float:
    """Upper bound f(tau) * sum(r_i) on the optimal-vs-truncated relaxed reward gap."""
    return f_total(models, tau) * float(np.sum(weights))


def tau0(delta: float, base: float = math.e) -> int:
    """Smallest truncation length covered by the truncation-error guarantee."""
    if not 0.0 < delta < 0.5:
        raise BoundDomainError(f"tau0 needs 0 < delta < 1/2, got {delta}")
    lg = math.log(2.0 * delta, base)
    return math.ceil(4.0 * max(1.0 / -lg, 1.0 / lg**2))


def mu(M: int, K: int, delta: float) -> float:
    """Lower bound on the stringent-to-relaxed throughput ratio."""
    if K <= 1 or K > M:
        raise BoundDomainError(f"mu needs 1 < K <= M, got M={M}, K={K}")
    if delta <= 0:
        raise BoundDomainError(f"delta must be positive, got {delta}")
    gap = M - K
    return (1.0 - math.exp(-gap**2 / (3.0 * K))) * max(0.0, 1.0 - gap / (delta * (K - 1)))


@dataclass(frozen=True)
class ChernoffBound:
    value: float
    t_star: float
    eta: float
    x: float


def chernoff(M: int, K: int) -> ChernoffBound:
    """Tail bound on Pr(sum of independent activations >= M) when their mean is at most K.

    ``eta`` is the moment-generating bound evaluated at t* = ln(M/K); it never
    exceeds ``value``.
    """
    if not (M / 2.0 < K <= M):
        raise BoundDomainError(f"the Chernoff bound needs M/2 < K <= M, got M={M}, K={K}")
    gap = M - K
    x = gap / K
    eta = math.exp(gap - K * (1.0 + x) * math.log1p(x))
    return ChernoffBound(math.exp(-gap**2 / (3.0 * K)), math.log(M / K), eta, x)


def chernoff_bound(M: int, K: int) -> float:
    return chernoff(M, K).value


def default_g(M: int, exponent: float = 0.7) -> int:
    """Headroom ceil(M**exponent) between the per-slot cap M and the budget K."""
    if not 0.5 < exponent < 1.0:
        raise BoundDomainError(f"exponent must lie in (0.5, 1), got {exponent}")
    return math.ceil(M**exponent)


@dataclass(frozen=True)
class BoundReport:
    f_per_user: list
    f_total: float
    tau0: int
    mu: Optional[float]
    l: Optional[float]
    chernoff: Optional[float]
    tau: int
    M: int
    K: int
    delta: float
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def bound_report(models: Sequence[ChannelModel], tau: int, M: int, K: int, delta: float,
                 log_base: float = math.e) -> BoundReport:
    """Evaluate every bound; out-of-regime entries are None with a note."""
    f = [f_tau(m, tau) for m in models]
    notes = []
    try:
        m_val = mu(M, K, delta)
    except BoundDomainError as exc:
        m_val = None
        notes.append(str(exc))
    try:
        c_val = chernoff_bound(M, K)
    except BoundDomainError as exc:
        c_val = None
        notes.append(str(exc))
    return BoundReport(f, float(sum(f)), tau0(delta, log_base), m_val,
                       None if m_val is None else 1.0 - m_val, c_val, tau, M, K, delta, notes)
