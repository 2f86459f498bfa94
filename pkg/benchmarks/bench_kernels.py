"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--horizon 50000] [--users 50] [--repeat 3]
"""

import argparse
import time

import numpy as np

from arqsched import kernels
from arqsched.channel import random_channels
from arqsched.index import _BeliefMDP
from arqsched.policies import PolicyConfig, PolicyKind
from arqsched.simulator import ArrivalProcess, run_replication


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_simulation(backend, models, kind, horizon, repeat):
    cfg = PolicyConfig(kind, M=max(1, len(models) // 5), frame_length=500)
    arrivals = ArrivalProcess("bernoulli", 0.05)
    saturated = kind is not PolicyKind.FRAME

    def run():
        return run_replication(models, arrivals, cfg, horizon, seed=1, saturated=saturated,
                               backend=backend)

    run()  # fills the per-process calibration cache
    return best_of(run, repeat)


def bench_rvi(backend, model, truncation, repeat):
    mdp = _BeliefMDP(model, truncation)
    h0 = np.zeros(len(mdp.pi))

    def run():
        return backend.rvi_solve(mdp.pi, mdp.nxt, mdp.on1, mdp.off1, 0.5, 1e-10, 10**6, h0)

    return best_of(run, repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=50_000)
    ap.add_argument("--users", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; only the numpy fallback is available")
        return
    models = random_channels(args.users, seed=0)
    slots = args.horizon * args.users
    print(f"{'workload':<28}{'cython s':>10}{'python s':>10}{'speedup':>9}  Mslot-users/s (cython)")
    for kind in (PolicyKind.RELAXED_INDEX, PolicyKind.STRINGENT_INDEX, PolicyKind.FRAME,
                 PolicyKind.MYOPIC_MAXWEIGHT):
        t_cy, rec_cy = bench_simulation(cy, models, kind, args.horizon, args.repeat)
        t_py, rec_py = bench_simulation(py, models, kind, args.horizon, args.repeat)
        assert rec_cy.scalars() == rec_py.scalars(), "backends disagree"
        print(f"{'simulate ' + kind.value:<28}{t_cy:>10.3f}{t_py:>10.3f}{t_py / t_cy:>9.1f}"
              f"  {slots / t_cy / 1e6:.1f}")
    t_cy, _ = bench_rvi(cy, models[0], 200, args.repeat)
    t_py, _ = bench_rvi(py, models[0], 200, args.repeat)
    print(f"{'rvi truncation 200':<28}{t_cy:>10.3f}{t_py:>10.3f}{t_py / t_cy:>9.1f}")


if __name__ == "__main__":
    main()
