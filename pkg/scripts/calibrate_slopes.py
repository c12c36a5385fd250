#!/usr/bin/env python3
"""Measure regret-scaling slopes for the acceptance ladder policies.

Usage: python scripts/calibrate_slopes.py [seeds] [n] [Tmax_pow]
Prints per-policy mean-regret curves and fitted log-log slopes.
"""
import sys
import time

sys.path.insert(0, "src")

from streamexperts.harness import ExperimentConfig, fit_slope, mean_regret_curve

SEEDS = int(sys.argv[1]) if len(sys.argv) > 1 else 6
N = int(sys.argv[2]) if len(sys.argv) > 2 else 16
TMAX = int(sys.argv[3]) if len(sys.argv) > 3 else 17
T_LIST = [2**k for k in range(12, TMAX + 1)]

LADDER = [
    ("exp3", 0),
    ("two_query", 0),
    ("two_query", 2),
    ("single_query", 0),
    ("boost_single_query", 3),
]


def main() -> None:
    print(f"n={N} T={T_LIST} seeds={SEEDS}")
    for policy, depth in LADDER:
        t0 = time.perf_counter()
        cfg = ExperimentConfig(policy=policy, n=N, T_list=T_LIST, seeds=SEEDS, depth=depth)
        curve = mean_regret_curve(cfg)
        fit = fit_slope(curve)
        wall = time.perf_counter() - t0
        pts = " ".join(f"{T}:{r:.0f}" for T, r in curve)
        print(f"{policy} d{depth}: slope={fit.slope:.3f} r2={fit.r2:.3f} [{pts}] ({wall:.0f}s)")


if __name__ == "__main__":
    main()
