"""Monte Carlo engine: channels, arrivals, queues, beliefs and a scheduling policy over a horizon.

Slot order: decide -> draw the true channel states -> collect feedback ->
update beliefs -> serve and update queues -> record. The inner loop runs in
``kernels.simulate_block`` over blocks of slots; frame recalibration happens
between blocks.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .calibration import CalibrationResult, calibrate
from .channel import DEFAULT_AGE_CAP, ChannelModel
from .policies import (
    PolicyConfig, PolicyKind, activation_table, belief_tables, table_length,
)
from .rng import ReplicationStreams, StreamKind

log = logging.getLogger(__name__)

BLOCK = 4096

# Running totals of the hard-constraint audit, shared by every stringent/frame run in the process.
AUDIT = {"slots": 0, "decisions": 0, "violations": 0}


class InvariantViolation(RuntimeError):
    """A replication broke a hard invariant; ``trace`` holds the offending slots."""

    def __init__(self, message: str, rep_id: int, trace: list):
        super().__init__(f"replication {rep_id}: {message}")
        self.rep_id = rep_id
        self.trace = trace


class ReplicationError(RuntimeError):
    def __init__(self, rep_id: int, cause: Exception):
        super().__init__(f"replication {rep_id} failed: {cause}")
        self.rep_id = rep_id
        self.cause = cause


class DegenerateDenominatorError(ZeroDivisionError):
    pass


class ArrivalKind(str, Enum):
    BERNOULLI = "bernoulli"
    BATCH_UNIFORM = "batch_uniform"


@dataclass(frozen=True)
class ArrivalProcess:
    """i.i.d. packet arrivals with mean ``rate`` per slot.

    BATCH_UNIFORM: with probability 2*rate/batch_max a batch uniform on
    {0, ..., batch_max} arrives, otherwise nothing.
    """

    kind: ArrivalKind = ArrivalKind.BERNOULLI
    rate: float = 0.0
    batch_max: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ArrivalKind(self.kind))
        if self.rate < 0:
            raise ValueError(f"arrival rate must be nonnegative, got {self.rate}")
        if self.kind is ArrivalKind.BERNOULLI and self.rate > 1:
            raise ValueError(f"Bernoulli rate must be <= 1, got {self.rate}")
        if self.kind is ArrivalKind.BATCH_UNIFORM:
            if self.batch_max < 1:
                raise ValueError("batch_max must be >= 1")
            if 2.0 * self.rate > self.batch_max:
                raise ValueError(f"rate {self.rate} too large for batch_max {self.batch_max}")

    @property
    def mean(self) -> float:
        return self.rate

    @property
    def second_moment(self) -> float:
        if self.kind is ArrivalKind.BERNOULLI:
            return self.rate
        return self.rate * (2 * self.batch_max + 1) / 3.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind is ArrivalKind.BERNOULLI:
            return (rng.random(size) < self.rate).astype(np.int64)
        # two uniforms per slot, drawn row-wise so the stream does not depend on block size
        u = rng.random((size, 2))
        hit = u[:, 0] < 2.0 * self.rate / self.batch_max
        batch = np.minimum(np.floor(u[:, 1] * (self.batch_max + 1)), self.batch_max)
        return np.where(hit, batch, 0).astype(np.int64)


def bernoulli_arrivals(rates) -> list[ArrivalProcess]:
    return [ArrivalProcess(ArrivalKind.BERNOULLI, float(r)) for r in rates]


def default_warmup(horizon: int) -> int:
    return min(max(horizon // 10, 1000), horizon // 2)


@dataclass
class ExperimentRecord:
    rep_id: int
    seed: int
    policy: str
    horizon: int
    warmup: int
    mean_weighted_throughput: float
    mean_throughput: float
    mean_realized_throughput: float
    per_user_throughput: np.ndarray
    per_user_realized: np.ndarray
    mean_active_count: float
    mean_candidate_count: float
    broadcast_fraction: float
    broadcast_slots: int
    queue_time_averages: np.ndarray
    windowed_queue_means: np.ndarray
    frame_slots: np.ndarray
    frame_lyapunov: np.ndarray
    frame_queues: np.ndarray
    calibrations: int = 0
    series: Optional[dict] = field(default=None, repr=False)

    @property
    def frame_drift(self) -> np.ndarray:
        """(L(q[(k+1)T]) - L(q[kT])) / T for consecutive frame boundaries."""
        if len(self.frame_slots) < 2:
            return np.zeros(0)
        return np.diff(self.frame_lyapunov) / np.diff(self.frame_slots)

    def scalars(self) -> dict:
        return {
            "rep_id": self.rep_id, "seed": self.seed, "policy": self.policy,
            "horizon": self.horizon, "warmup": self.warmup,
            "mean_weighted_throughput": self.mean_weighted_throughput,
            "mean_throughput": self.mean_throughput,
            "mean_realized_throughput": self.mean_realized_throughput,
            "mean_active_count": self.mean_active_count,
            "mean_candidate_count": self.mean_candidate_count,
            "broadcast_fraction": self.broadcast_fraction,
            "broadcast_slots": self.broadcast_slots,
            "mean_total_queue": float(self.queue_time_averages.sum()),
            "calibrations": self.calibrations,
        }


class _FrameCalibrator:
    """Threshold tables per frame, cached on the sampled weight vector."""

    def __init__(self, models, tau, budget, idx, cache_size=256):
        self.models, self.tau, self.budget, self.idx = models, tau, budget, idx
        self.cache: dict = {}
        self.cache_size = cache_size
        self.count = 0

    def __call__(self, weights: np.ndarray) -> tuple[np.ndarray, CalibrationResult]:
        key = weights.tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        calib = calibrate(self.models, weights, self.tau, min(self.budget, len(self.models)))
        self.count += 1
        act = activation_table(self.idx, calib)
        if len(self.cache) >= self.cache_size:
            self.cache.pop(next(iter(self.cache)))
        self.cache[key] = (act, calib)
        return act, calib


_KERNEL_POLICY = {
    PolicyKind.RELAXED_INDEX: kernels.P_RELAXED,
    PolicyKind.STRINGENT_INDEX: kernels.P_STRINGENT,
    PolicyKind.FRAME: kernels.P_STRINGENT,
    PolicyKind.MYOPIC_MAXWEIGHT: kernels.P_TOPM,
    PolicyKind.QUEUE_INDEX_HEURISTIC: kernels.P_TOPM,
    PolicyKind.RANDOM: kernels.P_RANDOM,
}


def _audit(rep_id, start, M, n_users, n_sched, mode, rthr, n_cand):
    AUDIT["slots"] += len(n_sched)
    AUDIT["decisions"] += len(n_sched) * n_users
    bad = (n_sched > M) | ((mode == kernels.BROADCAST) & ((n_sched != 0) | (rthr != 0)))
    bad |= (mode == kernels.BROADCAST) & (n_cand <= M)
    if bad.any():
        AUDIT["violations"] += int(bad.sum())
        where = np.flatnonzero(bad)[:10]
        trace = [{"t": int(start + j), "mode": int(mode[j]), "num_candidates": int(n_cand[j]),
                  "num_scheduled": int(n_sched[j]), "realized": int(rthr[j])} for j in where]
        raise InvariantViolation(f"per-slot cap M={M} or broadcast accounting broken", rep_id, trace)


@functools.lru_cache(maxsize=32)
def _static_setup(models: tuple, weights: tuple, tau: int, budget: int, age_cap: int,
                  calibrated: bool):
    """Belief/index tables and the fixed-weight activation table, shared across replications."""
    L = table_length(models, tau, age_cap)
    bel, idx = belief_tables(models, L)
    for a in (bel, idx):
        a.setflags(write=False)
    act = None
    if calibrated:
        act = activation_table(idx, calibrate(models, np.array(weights), tau, budget))
        act.setflags(write=False)
    return L, bel, idx, act


def run_replication(models: Sequence[ChannelModel], arrivals, policy_config: PolicyConfig,
                    horizon: int, warmup: Optional[int] = None, seed: int = 0, rep_id: int = 0,
                    weights=None, saturated: bool = False, age_cap: int = DEFAULT_AGE_CAP,
                    keep_series: bool = False, trace: bool = False, backend=None,
                    block: int = BLOCK, initial_queues=None) -> ExperimentRecord:
    """Simulate one replication and time-average over the post-warmup slots.

    ``weights`` fixes the index weights of the relaxed/stringent policies (ones
    by default). Under FRAME they are the queue lengths sampled at every frame
    boundary (ones in saturated mode). ``trace`` keeps the per-user candidate,
    schedule and channel matrices in ``series``.
    """
    cfg = policy_config
    kern = backend or kernels
    n = len(models)
    if n == 0:
        raise ValueError("need at least one user")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    warmup = default_warmup(horizon) if warmup is None else int(warmup)
    if not 0 <= warmup < horizon:
        raise ValueError(f"need horizon > warmup >= 0, got horizon={horizon}, warmup={warmup}")
    if cfg.kind in (PolicyKind.MYOPIC_MAXWEIGHT, PolicyKind.QUEUE_INDEX_HEURISTIC,
                    PolicyKind.RANDOM) and cfg.M > n:
        raise ValueError(f"M = {cfg.M} exceeds N = {n}")
    if isinstance(arrivals, ArrivalProcess):
        arrivals = [arrivals] * n
    arrivals = list(arrivals) if arrivals is not None else [ArrivalProcess()] * n
    if len(arrivals) != n:
        raise ValueError(f"need {n} arrival processes, got {len(arrivals)}")
    w_fixed = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w_fixed.shape != (n,) or (w_fixed < 0).any():
        raise ValueError("weights must be a nonnegative vector with one entry per user")

    kpol = _KERNEL_POLICY[cfg.kind]
    budget = min(cfg.budget, n)
    frame = cfg.kind is PolicyKind.FRAME
    frame_T = cfg.frame_length if frame else None
    fixed = cfg.kind in (PolicyKind.RELAXED_INDEX, PolicyKind.STRINGENT_INDEX)
    L, bel, idx, act = _static_setup(tuple(models), tuple(w_fixed.tolist()), cfg.tau, budget,
                                     age_cap, fixed)
    zeros = np.zeros_like(bel)

    calibrator = None
    if fixed:
        n_calib = 1
    elif frame:
        calibrator = _FrameCalibrator(models, cfg.tau, budget, idx)
        act, n_calib = zeros, 0
    else:
        act, n_calib = zeros, 0
    if cfg.kind is PolicyKind.QUEUE_INDEX_HEURISTIC:
        score = np.ascontiguousarray(idx)
    elif cfg.kind is PolicyKind.MYOPIC_MAXWEIGHT:
        score = np.ascontiguousarray(bel)
    else:
        score = zeros

    p01 = np.array([m.p01 for m in models])
    p11 = np.array([m.p11 for m in models])
    bs = np.array([m.stationary for m in models])
    obs = np.full(n, 2, dtype=np.int8)
    age = np.zeros(n, dtype=np.int64)
    chan = np.full(n, -1, dtype=np.int8)
    q = np.zeros(n, dtype=np.int64) if initial_queues is None else np.array(initial_queues, dtype=np.int64)
    streams = ReplicationStreams(seed, rep_id, n)
    arr_gens = streams.generators(StreamKind.ARRIVAL)

    n_cand = np.empty(horizon, dtype=np.int32)
    n_sched = np.empty(horizon, dtype=np.int32)
    mode = np.empty(horizon, dtype=np.int8)
    wthr = np.empty(horizon)
    bthr = np.empty(horizon)
    rthr = np.empty(horizon, dtype=np.int32)
    sum_q = np.empty(horizon, dtype=np.int64)
    acc_bthr = np.zeros(n)
    acc_real = np.zeros(n, dtype=np.int64)
    acc_sched = np.zeros(n, dtype=np.int64)
    acc_cand = np.zeros(n, dtype=np.int64)
    acc_q = np.zeros(n)
    mats = None
    if trace:
        mats = {k: np.empty((horizon, n), dtype=np.int8) for k in ("theta", "scheduled", "channel")}
        mats["arrivals"] = np.empty((horizon, n), dtype=np.int64)

    # L(q) is sampled every T slots (frame boundaries); saturated runs have no queues to sample.
    lyap_T = None if (saturated and not frame) else cfg.frame_length
    frame_slots, frame_lyap, frame_q = [], [], []
    hard_cap = cfg.kind in (PolicyKind.STRINGENT_INDEX, PolicyKind.FRAME)
    weights_now = w_fixed
    t = 0
    while t < horizon:
        if lyap_T and t % lyap_T == 0:
            frame_slots.append(t)
            frame_lyap.append(0.5 * float(np.sum(q.astype(np.float64) ** 2)))
            frame_q.append(q.copy())
        if frame and t % frame_T == 0:
            weights_now = np.ones(n) if saturated else q.astype(np.float64)
            act, _ = calibrator(weights_now)
        stop = min(horizon, t + block)
        if lyap_T:
            stop = min(stop, (t // lyap_T + 1) * lyap_T)
        B = stop - t
        u_chan = streams.uniforms(StreamKind.CHANNEL, B)
        u_pol = streams.uniforms(StreamKind.POLICY, B)
        arr = np.empty((B, n), dtype=np.int64)
        for i, g in enumerate(arr_gens):
            arr[:, i] = arrivals[i].sample(g, B)
        if mats is not None:
            mats["arrivals"][t:stop] = arr
        record_from = min(max(warmup - t, 0), B)
        outs = [None, None, None]
        if mats is not None:
            outs = [mats["theta"][t:stop], mats["scheduled"][t:stop], mats["channel"][t:stop]]
        kern.simulate_block(
            kpol, cfg.M, act, bel, score, weights_now, p01, p11, bs, obs, age, chan, q,
            u_chan, u_pol, arr, saturated, record_from, age_cap, L,
            n_cand[t:stop], n_sched[t:stop], mode[t:stop], wthr[t:stop], bthr[t:stop],
            rthr[t:stop], sum_q[t:stop], acc_bthr, acc_real, acc_sched, acc_cand, acc_q,
            *outs)
        if hard_cap:
            _audit(rep_id, t, cfg.M, n, n_sched[t:stop], mode[t:stop], rthr[t:stop], n_cand[t:stop])
        t = stop
    if lyap_T and horizon % lyap_T == 0:
        frame_slots.append(horizon)
        frame_lyap.append(0.5 * float(np.sum(q.astype(np.float64) ** 2)))
        frame_q.append(q.copy())
    if calibrator is not None:
        n_calib = calibrator.count

    post = slice(warmup, horizon)
    H = horizon - warmup
    quarters = np.array_split(sum_q[post].astype(np.float64), 4)
    n_bcast = int(np.count_nonzero(mode[post] == kernels.BROADCAST))
    series = None
    if keep_series or trace:
        series = {"n_cand": n_cand, "n_sched": n_sched, "mode": mode, "wthr": wthr,
                  "bthr": bthr, "rthr": rthr, "sum_q": sum_q}
        if mats is not None:
            series.update(mats)
    return ExperimentRecord(
        rep_id=rep_id, seed=int(seed), policy=cfg.kind.value, horizon=horizon, warmup=warmup,
        mean_weighted_throughput=float(wthr[post].mean()),
        mean_throughput=float(bthr[post].mean()),
        mean_realized_throughput=float(rthr[post].mean()),
        per_user_throughput=acc_bthr / H,
        per_user_realized=acc_real / H,
        mean_active_count=float(n_sched[post].mean()),
        mean_candidate_count=float(n_cand[post].mean()),
        broadcast_fraction=n_bcast / H,
        broadcast_slots=n_bcast,
        queue_time_averages=acc_q / H,
        windowed_queue_means=np.array([x.mean() for x in quarters]),
        frame_slots=np.array(frame_slots),
        frame_lyapunov=np.array(frame_lyap),
        frame_queues=np.array(frame_q, dtype=np.int64).reshape(len(frame_q), n),
        calibrations=n_calib,
        series=series,
    )


# ---------------------------------------------------------------- experiments

@dataclass(frozen=True)
class Summary:
    """Across-replication mean, sample std and 95% t-interval of one statistic."""

    name: str
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.n) if self.n > 1 else 0.0


def summarize(name: str, values) -> Summary:
    x = np.asarray(values, dtype=float)
    m = float(x.mean())
    if len(x) < 2:
        return Summary(name, m, 0.0, m, m, len(x))
    s = float(x.std(ddof=1))
    h = float(stats.t.ppf(0.975, len(x) - 1)) * s / math.sqrt(len(x))
    return Summary(name, m, s, m - h, m + h, len(x))


SUMMARY_FIELDS = ("mean_weighted_throughput", "mean_throughput", "mean_realized_throughput",
                  "mean_active_count", "mean_candidate_count", "broadcast_fraction",
                  "mean_total_queue")


def summarize_records(records: Sequence[ExperimentRecord]) -> dict[str, Summary]:
    rows = [r.scalars() for r in records]
    return {k: summarize(k, [row[k] for row in rows]) for k in SUMMARY_FIELDS}


@dataclass(frozen=True)
class ReplicationTask:
    """Everything a worker process needs to run one replication."""

    models: tuple
    arrivals: tuple
    policy: PolicyConfig
    horizon: int
    warmup: Optional[int]
    seed: int
    rep_id: int
    weights: Optional[tuple]
    saturated: bool
    age_cap: int = DEFAULT_AGE_CAP
    keep_series: bool = False
    trace: bool = False


def _run_task(task: ReplicationTask) -> ExperimentRecord:
    try:
        return run_replication(task.models, task.arrivals, task.policy, task.horizon, task.warmup,
                               task.seed, task.rep_id, task.weights, task.saturated, task.age_cap,
                               task.keep_series, task.trace)
    except Exception as exc:  # keep the replication id attached
        raise ReplicationError(task.rep_id, exc) from exc


def run_tasks(tasks: Sequence[ReplicationTask], jobs: int = 1) -> list[ExperimentRecord]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


@dataclass
class ExperimentResult:
    records: list
    summary: dict

    def write_csv(self, path, header_lines: Sequence[str] = ()) -> None:
        write_summary_csv(path, self.records, header_lines)


def run_experiment(models, arrivals, policy: PolicyConfig, horizon: int, replications: int,
                   seed: int = 0, warmup: Optional[int] = None, weights=None,
                   saturated: bool = False, jobs: int = 1, age_cap: int = DEFAULT_AGE_CAP,
                   keep_series: bool = False, trace: bool = False) -> ExperimentResult:
    """Independent replications ``rep_id = 0..R-1`` of one configuration."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    n = len(models)
    if isinstance(arrivals, ArrivalProcess) or arrivals is None:
        arrivals = [arrivals or ArrivalProcess()] * n
    w = None if weights is None else tuple(float(x) for x in weights)
    tasks = [ReplicationTask(tuple(models), tuple(arrivals), policy, horizon, warmup, seed, r, w,
                             saturated, age_cap, keep_series, trace)
             for r in range(replications)]
    records = run_tasks(tasks, jobs)
    return ExperimentResult(records, summarize_records(records))


def write_summary_csv(path, records: Sequence[ExperimentRecord], header_lines: Sequence[str] = ()):
    """One row per replication, then mean/std/ci_low/ci_high aggregate rows."""
    cols = ["row"] + list(records[0].scalars().keys())
    summ = summarize_records(records)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(cols)
        for r in records:
            wr.writerow(["replication"] + list(r.scalars().values()))
        for stat in ("mean", "std", "ci_low", "ci_high"):
            row = [stat]
            for c in cols[1:]:
                s = summ.get(c)
                row.append(getattr(s, stat) if s is not None else "")
            wr.writerow(row)


def write_trace_csv(path, record: ExperimentRecord, header_lines: Sequence[str] = ()):
    s = record.series
    if s is None or "scheduled" not in s:
        raise ValueError("record was produced without trace=True")
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(["rep_id", "t", "mode", "num_candidates", "num_scheduled", "served_users"])
        names = {kernels.IDLE: "IDLE", kernels.TRANSMIT: "TRANSMIT", kernels.BROADCAST: "BROADCAST"}
        for t in range(record.horizon):
            served = np.flatnonzero(s["scheduled"][t] & s["channel"][t])
            wr.writerow([record.rep_id, t, names[int(s["mode"][t])], int(s["n_cand"][t]),
                         int(s["n_sched"][t]), " ".join(map(str, served))])


def write_frames_csv(path, records: Sequence[ExperimentRecord], header_lines: Sequence[str] = ()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(["rep_id", "frame", "slot", "total_queue", "lyapunov", "drift", "queues"])
        for r in records:
            drift = r.frame_drift
            for k, (slot, lv) in enumerate(zip(r.frame_slots, r.frame_lyapunov)):
                qk = r.frame_queues[k]
                wr.writerow([r.rep_id, k, int(slot), int(qk.sum()), lv,
                             drift[k] if k < len(drift) else "", " ".join(map(str, qk))])


# ---------------------------------------------------------------- throughput ratio

@dataclass(frozen=True)
class RatioEstimate:
    ratio: float
    ci_low: float
    ci_high: float
    stderr: float
    v_str: Summary
    v_rel: Summary
    rep_ratios: np.ndarray

    def as_dict(self) -> dict:
        d = {"ratio": self.ratio, "ci_low": self.ci_low, "ci_high": self.ci_high,
             "stderr": self.stderr, "v_str": self.v_str.mean, "v_rel": self.v_rel.mean,
             "replications": len(self.rep_ratios), "rep_ratios": self.rep_ratios}
        return d


def estimate_ratio(models, M: int, K: Optional[int] = None, tau: int = 10, horizon: int = 10**5,
                   replications: int = 10, seed: int = 0, weights=None, warmup=None,
                   common_random_numbers: bool = True, jobs: int = 1,
                   g_exponent: float = 0.7) -> RatioEstimate:
    """V_str / V_rel in saturated mode, both arms calibrated with budget K.

    With common random numbers both arms share all streams, so the stringent
    candidate process equals the relaxed schedule process slot by slot and the
    replication-level ratio has small variance. The CI is a t-interval over
    replication-level ratios.
    """
    rel = PolicyConfig(PolicyKind.RELAXED_INDEX, M=M, tau=tau, K=K, g_exponent=g_exponent)
    stri = PolicyConfig(PolicyKind.STRINGENT_INDEX, M=M, tau=tau, K=K, g_exponent=g_exponent)
    rel_seed = seed if common_random_numbers else seed + 1
    r_rel = run_experiment(models, None, rel, horizon, replications, rel_seed, warmup, weights,
                           saturated=True, jobs=jobs)
    r_str = run_experiment(models, None, stri, horizon, replications, seed, warmup, weights,
                           saturated=True, jobs=jobs)
    v_rel = np.array([r.mean_weighted_throughput for r in r_rel.records])
    v_str = np.array([r.mean_weighted_throughput for r in r_str.records])
    if (v_rel <= 0).any():
        raise DegenerateDenominatorError("relaxed throughput estimate is not positive")
    ratios = v_str / v_rel
    s = summarize("ratio", ratios)
    return RatioEstimate(s.mean, s.ci_low, s.ci_high, s.stderr,
                         summarize("v_str", v_str), summarize("v_rel", v_rel), ratios)


# ---------------------------------------------------------------- stability

class Verdict(str, Enum):
    STABLE = "STABLE"
    UNSTABLE = "UNSTABLE"
    INCONCLUSIVE = "INCONCLUSIVE"


def stability_verdict(total_queue: np.ndarray, warmup: int = 0, n_blocks: int = 20,
                      growth_ratio: float = 1.1) -> Verdict:
    """Classify a total-queue trajectory.

    STABLE if the post-warmup last-quarter mean is at most ``growth_ratio``
    times the second-quarter mean; UNSTABLE if the least-squares slope over
    block means has a 95% CI entirely above zero; INCONCLUSIVE otherwise.
    """
    x = np.asarray(total_queue, dtype=float)[warmup:]
    if len(x) < 4:
        return Verdict.INCONCLUSIVE
    quarters = np.array_split(x, 4)
    if quarters[3].mean() <= growth_ratio * quarters[1].mean():
        return Verdict.STABLE
    blocks = np.array([b.mean() for b in np.array_split(x, min(n_blocks, len(x)))])
    fit = stats.linregress(np.arange(len(blocks)), blocks)
    tq = stats.t.ppf(0.975, len(blocks) - 2)
    if fit.slope - tq * fit.stderr > 0:
        return Verdict.UNSTABLE
    return Verdict.INCONCLUSIVE


@dataclass
class StabilityResult:
    verdict: Verdict
    records: list
    mean_trajectory: np.ndarray
    warmup: int

    def last_half_drift(self) -> np.ndarray:
        """Per-frame drifts over the second half of the horizon, pooled over replications."""
        out = []
        for r in self.records:
            half = r.horizon // 2
            keep = r.frame_slots[:-1] >= half
            out.append(r.frame_drift[keep[: len(r.frame_drift)]])
        return np.concatenate(out) if out else np.zeros(0)


def stability_probe(models, policy_config: PolicyConfig, rate_vector, horizon: int,
                    replications: int = 1, seed: int = 0, warmup=None, jobs: int = 1,
                    arrival_kind: ArrivalKind = ArrivalKind.BERNOULLI, batch_max: int = 1
                    ) -> StabilityResult:
    """Run the policy under the given arrival rates and classify the replication-averaged Σq trajectory."""
    if policy_config.kind is PolicyKind.FRAME and horizon < 10 * policy_config.frame_length:
        raise ValueError("horizon must be at least 10 frames")
    arrivals = [ArrivalProcess(arrival_kind, float(r), batch_max) for r in rate_vector]
    res = run_experiment(models, arrivals, policy_config, horizon, replications, seed, warmup,
                         jobs=jobs, keep_series=True)
    traj = np.mean([r.series["sum_q"] for r in res.records], axis=0)
    w = res.records[0].warmup
    return StabilityResult(stability_verdict(traj, w), res.records, traj, w)
