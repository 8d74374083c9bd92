"""Compare the compiled and numpy Monte Carlo kernels.

Usage: ``python3 benchmarks/bench_kernels.py [--rounds N] [--repeat K]``

Both backends consume the same counter-based random stream, so the counts
must agree exactly; the script checks that before reporting throughput.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mdiqkd import backend, config, pulsesim


def best_time(scenario, rounds: int, repeat: int, kernels) -> tuple[float, pulsesim.SimSummary]:
    best, summary = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        summary = pulsesim.simulate_batch(scenario, rounds, 1, threads=1, kernels=kernels)
        best = min(best, time.perf_counter() - t0)
    return best, summary


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rounds", type=int, default=2_000_000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    scenario = config.bundled("lab").scenario
    results = {}
    for name in ("python", "cython"):
        try:
            k = backend.get(name)
        except ImportError:
            print(f"{name:7s} unavailable (extension not built)")
            continue
        results[name] = best_time(scenario, args.rounds, args.repeat, k)
        dt = results[name][0]
        print(f"{name:7s} {dt:8.3f} s  {args.rounds / dt:12.4g} rounds/s")
    if len(results) == 2:
        same = np.array_equal(results["python"][1].counts, results["cython"][1].counts)
        print(f"speedup {results['python'][0] / results['cython'][0]:.1f}x; identical counts: {same}")
        return 0 if same else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
