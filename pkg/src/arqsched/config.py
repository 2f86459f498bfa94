"""Experiment configuration: TOML or JSON files, validated before any run."""

from __future__ import annotations

import copy
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

from .channel import ChannelError, ChannelModel, homogeneous_channels, random_channels, validate_channels
from .policies import PolicyConfig, PolicyKind
from .simulator import ArrivalKind, ArrivalProcess

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SWEEP_AXES = ("M", "K", "lambda_scale", "T")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ChannelSpec:
    kind: str = "random"
    N: int = 20
    p01: float = 0.2
    p11: float = 0.8
    p01_range: tuple = (0.05, 0.45)
    p11_range: tuple = (0.55, 0.95)
    seed: int = 0
    pairs: Optional[list] = None

    def build(self, delta: float, n: Optional[int] = None) -> list[ChannelModel]:
        n = self.N if n is None else n
        if self.kind == "explicit":
            return [ChannelModel(float(a), float(b), i) for i, (a, b) in enumerate(self.pairs)]
        if self.kind == "homogeneous":
            return homogeneous_channels(n, self.p01, self.p11)
        return random_channels(n, tuple(self.p01_range), tuple(self.p11_range), self.seed, delta)


@dataclass
class ExperimentConfig:
    channels: ChannelSpec = field(default_factory=ChannelSpec)
    M: int = 5
    K: Optional[int] = None
    g_exponent: float = 0.7
    tau: int = 10
    delta: float = 0.05
    weights: Optional[list] = None
    arrival_kind: str = "bernoulli"
    rates: Optional[list] = None
    rate: float = 0.0
    batch_max: int = 1
    policies: list = field(default_factory=lambda: ["stringent"])
    frame_length: int = 500
    horizon: int = 20000
    warmup: Optional[int] = None
    replications: int = 4
    seed: int = 0
    out: str = "results"
    saturated: bool = False
    common_random_numbers: bool = True
    trace: bool = False
    jobs: Optional[int] = None
    log_base: str = "e"
    sweep_axis: Optional[str] = None
    sweep_values: list = field(default_factory=list)
    users_per_M: Optional[int] = None
    verify_max_age: int = 20
    verify_truncation: int = 200
    verify_tolerance: float = 1e-3
    verify_users: Optional[int] = None

    # ---- derived objects

    @property
    def N(self) -> int:
        if self.channels.kind == "explicit":
            return len(self.channels.pairs)
        if self.users_per_M:
            return self.users_per_M * self.M
        return self.channels.N

    def models(self) -> list[ChannelModel]:
        return self.channels.build(self.delta, self.N)

    def weight_vector(self) -> list:
        return list(self.weights) if self.weights is not None else [1.0] * self.N

    def arrivals(self, scale: float = 1.0) -> list[ArrivalProcess]:
        rates = self.rates if self.rates is not None else [self.rate] * self.N
        return [ArrivalProcess(ArrivalKind(self.arrival_kind), scale * float(r), self.batch_max)
                for r in rates]

    def policy(self, kind) -> PolicyConfig:
        return PolicyConfig(PolicyKind(kind), M=self.M, tau=self.tau, K=self.K,
                            frame_length=self.frame_length, g_exponent=self.g_exponent)

    @property
    def budget(self) -> int:
        return self.policy(PolicyKind.RELAXED_INDEX).budget

    def resolved(self) -> dict:
        d = asdict(self)
        d["N"] = self.N
        d["channels"]["p01_range"] = list(self.channels.p01_range)
        d["channels"]["p11_range"] = list(self.channels.p11_range)
        return d

    def header(self) -> list[str]:
        return [f"seed: {self.seed}", "config: " + json.dumps(self.resolved(), sort_keys=True)]

    def with_point(self, axis: str, value) -> "ExperimentConfig":
        """Copy of the config at one sweep point."""
        cfg = copy.deepcopy(self)
        if axis == "M":
            cfg.M = int(value)
            if cfg.K is not None and cfg.K > cfg.M:
                cfg.K = None
        elif axis == "K":
            cfg.K = int(value)
        elif axis == "T":
            cfg.frame_length = int(value)
        elif axis == "lambda_scale":
            base = cfg.rates if cfg.rates is not None else [cfg.rate] * cfg.N
            cfg.rates = [float(value) * r for r in base]
        else:
            raise ConfigError("sweep.axis", f"unknown axis {axis!r}; use one of {SWEEP_AXES}")
        cfg.sweep_axis, cfg.sweep_values = None, []
        return cfg

    # ---- validation

    def validate(self) -> "ExperimentConfig":
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        ch = self.channels
        need(ch.kind in ("random", "homogeneous", "explicit"), "channels.kind",
             f"must be random, homogeneous or explicit, got {ch.kind!r}")
        if ch.kind == "explicit":
            need(isinstance(ch.pairs, list) and len(ch.pairs) > 0, "channels.pairs",
                 "explicit channels need a nonempty list of [p01, p11] pairs")
            need(all(len(p) == 2 for p in ch.pairs), "channels.pairs", "each entry must be [p01, p11]")
            need(self.users_per_M is None, "sweep.users_per_M", "not allowed with explicit channels")
        need(self.N >= 1, "channels.N", "need at least one user")
        need(0 < self.delta < 0.5, "delta", f"must lie in (0, 0.5), got {self.delta}")
        try:
            models = self.models()
            validate_channels(models, self.delta)
        except ChannelError as exc:
            raise ConfigError("channels", str(exc)) from exc
        need(self.tau >= 1, "tau", f"must be >= 1, got {self.tau}")
        need(1 <= self.M <= self.N, "M", f"need 1 <= M <= N = {self.N}, got {self.M}")
        need(0.5 < self.g_exponent < 1.0, "g_exponent", "must lie in (0.5, 1)")
        if self.K is not None:
            need(1 <= self.K <= self.M, "K", f"need 1 <= K <= M = {self.M}, got {self.K}")
        need(self.frame_length >= 1, "frame_length", "must be >= 1")
        need(self.horizon >= 1, "horizon", "must be >= 1")
        if self.warmup is not None:
            need(0 <= self.warmup < self.horizon, "warmup", "need 0 <= warmup < horizon")
        need(self.replications >= 1, "replications", "must be >= 1")
        need(self.jobs is None or self.jobs >= 1, "jobs", "must be >= 1")
        need(self.seed >= 0, "seed", "must be a nonnegative integer")
        need(len(self.policies) >= 1, "policy.kinds", "list at least one policy")
        for k in self.policies:
            need(k in {p.value for p in PolicyKind}, "policy.kinds",
                 f"unknown policy {k!r}; use one of {[p.value for p in PolicyKind]}")
        if self.weights is not None:
            need(len(self.weights) == self.N, "weights", f"need {self.N} entries, got {len(self.weights)}")
            need(all(w >= 0 for w in self.weights), "weights", "must be nonnegative")
        if self.rates is not None:
            need(len(self.rates) == self.N, "arrivals.rates", f"need {self.N} entries, got {len(self.rates)}")
        try:
            self.arrivals()
        except ValueError as exc:
            raise ConfigError("arrivals", str(exc)) from exc
        need(self.log_base in ("e", "2"), "bounds.log_base", "must be 'e' or '2'")
        if self.sweep_axis is not None:
            need(self.sweep_axis in SWEEP_AXES, "sweep.axis", f"must be one of {SWEEP_AXES}")
            need(len(self.sweep_values) >= 1, "sweep.values", "list at least one value")
        need(self.verify_max_age >= 1, "verify.max_age", "must be >= 1")
        return self


_SECTIONS = {
    "policy": {"kinds": "policies", "kind": "policies", "M": "M", "K": "K", "tau": "tau",
               "g_exponent": "g_exponent", "frame_length": "frame_length", "T": "frame_length"},
    "arrivals": {"kind": "arrival_kind", "rate": "rate", "rates": "rates", "batch_max": "batch_max"},
    "sweep": {"axis": "sweep_axis", "values": "sweep_values", "users_per_M": "users_per_M"},
    "verify": {"max_age": "verify_max_age", "truncation": "verify_truncation",
               "tolerance": "verify_tolerance", "users": "verify_users"},
    "bounds": {"log_base": "log_base"},
}


def from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from the nested file layout (see configs/example.toml)."""
    raw = copy.deepcopy(raw)
    kw: dict[str, Any] = {}
    ch = raw.pop("channels", {})
    if not isinstance(ch, dict):
        raise ConfigError("channels", "must be a table")
    known_ch = {f for f in ChannelSpec.__dataclass_fields__}
    for k in ch:
        if k not in known_ch:
            raise ConfigError(f"channels.{k}", "unknown key")
    kw["channels"] = ChannelSpec(**ch)
    for section, mapping in _SECTIONS.items():
        body = raw.pop(section, {})
        for k, v in body.items():
            if k not in mapping:
                raise ConfigError(f"{section}.{k}", "unknown key")
            if mapping[k] == "policies" and isinstance(v, str):
                v = [v]
            kw[mapping[k]] = v
    top = set(ExperimentConfig.__dataclass_fields__) - {"channels"}
    for k, v in raw.items():
        if k not in top:
            raise ConfigError(k, "unknown key")
        kw[k] = v
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("--config", f"file not found: {path}")
    text = path.read_bytes()
    try:
        if path.suffix.lower() == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("--config", f"cannot parse {path}: {exc}") from exc
    return from_dict(raw)


def log_base_value(cfg: ExperimentConfig) -> float:
    return math.e if cfg.log_base == "e" else 2.0
