"""Command line entry point: ``arqsched <subcommand> --config FILE [--out DIR] ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .bounds import bound_report
from .calibration import calibrate
from .config import ConfigError, ExperimentConfig, load_config, log_base_value
from .index import STATIONARY, oracle_table
from .policies import PolicyKind
from .simulator import (
    InvariantViolation, ReplicationError, estimate_ratio, run_experiment, summarize, summarize_records,
    write_frames_csv, write_summary_csv, write_trace_csv,
)

log = logging.getLogger("arqsched")


def _write_json(path: Path, cfg: ExperimentConfig, payload: dict) -> None:
    doc = {"seed": cfg.seed, "config": cfg.resolved(), **payload}
    path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _csv_writer(path: Path, cfg: ExperimentConfig):
    fh = open(path, "w", newline="")
    for line in cfg.header():
        fh.write(f"# {line}\n")
    return fh, csv.writer(fh)


# ---------------------------------------------------------------- subcommands

def cmd_calibrate(cfg: ExperimentConfig, out: Path) -> int:
    models = cfg.models()
    res = calibrate(models, cfg.weight_vector(), cfg.tau, cfg.budget)
    _write_json(out / "calibration.json", cfg, {"calibration": res.as_dict()})
    marginal = {u for u, _ in res.marginal_entries}
    fh, wr = _csv_writer(out / "calibration.csv", cfg)
    with fh:
        wr.writerow(["user", "p01", "p11", "weight", "tx_time", "marginal"])
        for i, m in enumerate(models):
            wr.writerow([i, m.p01, m.p11, res.weights[i], res.tx_time[i], int(i in marginal)])
    print(f"omega_tau={res.omega_tau:.10g} rho_tau={res.rho_tau:.10g} "
          f"marginal_user={res.marginal_user} total_time={res.total_time:.12g} budget={res.budget}")
    return 0


def _run_policies(cfg: ExperimentConfig, jobs: int, arrivals=None):
    models = cfg.models()
    arrivals = arrivals if arrivals is not None else cfg.arrivals()
    weights = cfg.weights
    results = {}
    for kind in cfg.policies:
        results[kind] = run_experiment(
            models, arrivals, cfg.policy(kind), cfg.horizon, cfg.replications, cfg.seed,
            cfg.warmup, weights, cfg.saturated, jobs, trace=cfg.trace)
    ratio = None
    kinds = set(cfg.policies)
    if {PolicyKind.RELAXED_INDEX.value, PolicyKind.STRINGENT_INDEX.value} <= kinds:
        rel = results[PolicyKind.RELAXED_INDEX.value].records
        stri = results[PolicyKind.STRINGENT_INDEX.value].records
        if cfg.saturated and cfg.common_random_numbers:
            v_str = np.array([r.mean_weighted_throughput for r in stri])
            v_rel = np.array([r.mean_weighted_throughput for r in rel])
            v = v_str / v_rel
            s = summarize("ratio", v)
            ratio = {"ratio": s.mean, "ci_low": s.ci_low, "ci_high": s.ci_high,
                     "stderr": s.stderr, "v_str": float(v_str.mean()),
                     "v_rel": float(v_rel.mean()), "replications": len(v), "rep_ratios": v}
        else:
            est = estimate_ratio(models, cfg.M, cfg.K, cfg.tau, cfg.horizon, cfg.replications,
                                 cfg.seed, weights, cfg.warmup, cfg.common_random_numbers, jobs,
                                 cfg.g_exponent)
            ratio = est.as_dict()
    return results, ratio


def cmd_simulate(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    results, ratio = _run_policies(cfg, jobs)
    for kind, res in results.items():
        suffix = "" if len(results) == 1 else f"_{kind}"
        write_summary_csv(out / f"summary{suffix}.csv", res.records, cfg.header())
        write_frames_csv(out / f"frames{suffix}.csv", res.records, cfg.header())
        if cfg.trace:
            write_trace_csv(out / f"trace{suffix}.csv", res.records[0], cfg.header())
        s = res.summary
        print(f"{kind}: weighted throughput {s['mean_weighted_throughput'].mean:.6g} "
              f"(95% CI {s['mean_weighted_throughput'].ci_low:.6g}..{s['mean_weighted_throughput'].ci_high:.6g}), "
              f"active {s['mean_active_count'].mean:.4g}, broadcast {s['broadcast_fraction'].mean:.4g}")
    if ratio is not None:
        _write_json(out / "ratio.json", cfg, {"ratio": ratio})
        print(f"V_str/V_rel = {ratio['ratio']:.6g}")
    return 0


def cmd_sweep(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    if cfg.sweep_axis is None:
        raise ConfigError("sweep.axis", "the sweep subcommand needs a [sweep] section")
    failures = 0
    fh, wr = _csv_writer(out / "sweep.csv", cfg)
    with fh:
        wr.writerow(["axis", "value", "policy", "statistic", "mean", "std", "ci_low", "ci_high",
                     "n", "status"])
        for value in cfg.sweep_values:
            try:
                point = cfg.with_point(cfg.sweep_axis, value).validate()
                results, ratio = _run_policies(point, jobs)
            except (ConfigError, ReplicationError, InvariantViolation, ValueError) as exc:
                failures += 1
                log.error("sweep point %s=%s failed: %s", cfg.sweep_axis, value, exc)
                wr.writerow([cfg.sweep_axis, value, "", "", "", "", "", "", 0, f"error: {exc}"])
                continue
            for kind, res in results.items():
                for name, s in summarize_records(res.records).items():
                    wr.writerow([cfg.sweep_axis, value, kind, name, s.mean, s.std, s.ci_low,
                                 s.ci_high, s.n, "ok"])
            if ratio is not None:
                r = np.asarray(ratio.get("rep_ratios", [ratio["ratio"]]))
                s = summarize("ratio", r)
                wr.writerow([cfg.sweep_axis, value, "stringent/relaxed", "ratio", s.mean, s.std,
                             s.ci_low, s.ci_high, s.n, "ok"])
            fh.flush()
            print(f"{cfg.sweep_axis}={value}: done")
    return 1 if failures else 0


def cmd_bounds(cfg: ExperimentConfig, out: Path) -> int:
    rep = bound_report(cfg.models(), cfg.tau, cfg.M, cfg.budget, cfg.delta, log_base_value(cfg))
    _write_json(out / "bounds.json", cfg, {"bounds": rep.as_dict()})
    print(json.dumps(rep.as_dict(), indent=2))
    return 0


def cmd_verify_index(cfg: ExperimentConfig, out: Path) -> int:
    """Closed-form index vs. subsidy-bisection oracle; users with zero weight are skipped."""
    models = cfg.models()
    weights = cfg.weight_vector()
    users = [i for i in range(len(models)) if weights[i] > 0]
    if cfg.verify_users is not None:
        users = users[: cfg.verify_users]
    worst = 0.0
    fh, wr = _csv_writer(out / "verify_index.csv", cfg)
    with fh:
        wr.writerow(["user", "p01", "p11", "belief_key", "closed_form", "oracle", "abs_err"])
        for i in users:
            m = models[i]
            for key, closed, orc in oracle_table(m, cfg.verify_max_age, cfg.verify_truncation):
                label = STATIONARY if key == STATIONARY else f"{key[0].name}:{key[1]}"
                err = abs(closed - orc)
                worst = max(worst, err)
                wr.writerow([i, m.p01, m.p11, label, closed, orc, err])
            fh.flush()
    ok = worst <= cfg.verify_tolerance
    print(f"max |closed - oracle| = {worst:.3g} over {len(users)} users "
          f"({'within' if ok else 'exceeds'} tolerance {cfg.verify_tolerance:g})")
    return 0 if ok else 1


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arqsched", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML or JSON experiment file")
    common.add_argument("--out", default=None, help="output directory (default: config 'out')")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--jobs", type=int, default=None,
                        help="worker processes for replications (default: available CPUs)")
    common.add_argument("--trace", action="store_true", help="write per-slot trace CSVs")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("calibrate", "compute (omega_tau, rho_tau)"),
                        ("simulate", "run replications of each configured policy"),
                        ("sweep", "run one experiment per sweep value"),
                        ("bounds", "evaluate the analytic bounds"),
                        ("verify-index", "compare the closed-form index with the numeric oracle")]:
        sub.add_parser(name, parents=[common], help=help_)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.trace:
            cfg.trace = True
        if args.jobs is not None:
            cfg.jobs = args.jobs
        elif cfg.jobs is None:
            cfg.jobs = os.cpu_count() or 1
        if args.out is not None:
            cfg.out = args.out
        cfg.validate()
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        log.info("kernel backend: %s", kernels.BACKEND)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, cfg.jobs)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, cfg.jobs)
        if args.command == "bounds":
            return cmd_bounds(cfg, out)
        return cmd_verify_index(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InvariantViolation, ReplicationError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        trace = getattr(exc, "trace", None) or getattr(getattr(exc, "cause", None), "trace", None)
        if trace:
            print(json.dumps(trace, indent=2), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
