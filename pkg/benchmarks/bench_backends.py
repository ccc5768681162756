"""Benchmark the numpy fallback against the compiled backend.

Times the three hot kernels (cost evaluation, linearization, block solve)
and a full solve, on a noisy city-grid problem of configurable size.

Usage: python benchmarks/bench_backends.py [--epochs 300] [--repeats 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from attfree.backend import available_backends, get_backend
from attfree.evaluation import fuse_data
from attfree.graph import build
from attfree.optimizer import LmConfig
from attfree.simulator import ScenarioConfig, simulate_scenario
from attfree.state import initialize


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        tic = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - tic)
    return best * 1e3


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    scenario = ScenarioConfig(kind="city_grid", duration=float(args.epochs), seed=args.seed)
    truth, imu, gnss = simulate_scenario(scenario)
    graph = build(gnss, imu)
    ga = graph.packed()
    x = graph.layout.flatten(initialize(graph.fixes))
    x = x + np.random.default_rng(1).standard_normal(x.shape) * 0.2

    backends = available_backends()
    print(f"epochs: {graph.layout.n_epochs}, backends: {', '.join(backends)}")
    header = f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends)
    print(header)
    print("-" * len(header))

    rows = {}
    for name in backends:
        kern = get_backend(name)
        rows.setdefault("evaluate_cost", []).append(_time(lambda: kern.evaluate_cost(ga, x), args.repeats))
        rows.setdefault("linearize", []).append(_time(lambda: kern.linearize(ga, x, True), args.repeats))
        _, D, U, g = kern.linearize(ga, x, True)
        rhs = -g.reshape(-1, 8)
        rows.setdefault("solve_block_tridiag", []).append(
            _time(lambda: kern.solve_block_tridiag(D, U, rhs), args.repeats)
        )
        tic = time.perf_counter()
        _, report, _ = fuse_data(imu, gnss, lm=LmConfig(backend=name))
        rows.setdefault("full solve", []).append((time.perf_counter() - tic) * 1e3)

    for kernel, times in rows.items():
        line = f"{kernel:<22}" + "".join(f"{t:>10.2f}ms" for t in times)
        if len(times) == len(backends) and len(times) > 1 and min(times) > 0:
            line += f"   (x{max(times) / min(times):.1f})"
        print(line)


if __name__ == "__main__":
    main()
