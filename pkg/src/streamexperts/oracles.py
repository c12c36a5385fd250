"""Slow, obviously-correct reference computations used as ground truth.

Regret oracles do a full scan over all n arms via per-arm prefix sums; the
interval oracle is a quadratic scan and is capped to desk-scale horizons.
Ties in the best arm are broken by smallest arm index throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .models import Instance
from .protocol import Trace

INTERVAL_ORACLE_CAP = 4096


@dataclass
class RegretReport:
    cumulative_regret: float
    window_regret: dict[int, float]
    interval_regret: Optional[float]
    per_day_regret: np.ndarray


def _prefixes(trace: Trace, instance: Instance) -> tuple[np.ndarray, np.ndarray]:
    """(alg prefix losses, per-arm prefix losses), both with leading 0 row."""
    table = instance.loss_table()
    alg = np.zeros(instance.T + 1)
    np.cumsum(trace.loss, out=alg[1:])
    arm = np.zeros((instance.T + 1, instance.n))
    np.cumsum(table, axis=0, out=arm[1:])
    return alg, arm


def cumulative_regret(trace: Trace, instance: Instance) -> float:
    """Sum_t loss(t, i_t) minus the best single arm's total, scanned exactly."""
    best = instance.arm_totals().min()
    return float(trace.loss.sum() - best)


def sliding_window_regret(
    trace: Trace,
    instance: Instance,
    W: int,
    end_range: Optional[tuple[int, int]] = None,
) -> float:
    """Max over window ends t in [W, T] of the regret on [t-W+1, t].

    end_range=(lo, hi) restricts the maximum to window ends in that inclusive
    1-based range (used to score stationary segments only).
    """
    T = instance.T
    if not (1 <= W <= T):
        raise ValueError(f"W={W} outside [1, {T}]")
    alg, arm = _prefixes(trace, instance)
    lo, hi = (W, T) if end_range is None else end_range
    lo = max(lo, W)
    if lo > hi:
        raise ValueError("empty window-end range")
    ends = np.arange(lo, hi + 1)
    alg_win = alg[ends] - alg[ends - W]
    best_win = (arm[ends] - arm[ends - W]).min(axis=1)
    return float((alg_win - best_win).max())


def interval_regret(
    trace: Trace,
    instance: Instance,
    cap: int = INTERVAL_ORACLE_CAP,
) -> tuple[float, tuple[int, int]]:
    """Max regret over all intervals [t1, t2], with the arg-max interval.

    O(n T^2); refuses horizons beyond `cap` since this is test-only code.
    """
    T = instance.T
    if T > cap:
        raise ValueError(f"interval oracle capped at T={cap}, got {T}")
    alg, arm = _prefixes(trace, instance)
    best_val = -np.inf
    best_iv = (1, 1)
    for t1 in range(1, T + 1):
        alg_seg = alg[t1:] - alg[t1 - 1]
        best_seg = (arm[t1:] - arm[t1 - 1]).min(axis=1)
        reg = alg_seg - best_seg
        k = int(np.argmax(reg))
        if reg[k] > best_val:
            best_val = float(reg[k])
            best_iv = (t1, t1 + k)
    return best_val, best_iv


def per_day_regret(trace: Trace, instance: Instance) -> np.ndarray:
    """loss(t, i_t) - min_i loss(t, i), day by day."""
    table = instance.loss_table()
    return trace.loss - table.min(axis=1)


def regret_report(
    trace: Trace,
    instance: Instance,
    windows: Sequence[int] = (),
    with_interval: bool = False,
) -> RegretReport:
    return RegretReport(
        cumulative_regret=cumulative_regret(trace, instance),
        window_regret={W: sliding_window_regret(trace, instance, W) for W in windows},
        interval_regret=interval_regret(trace, instance)[0] if with_interval else None,
        per_day_regret=per_day_regret(trace, instance),
    )


def benchmark_segments(
    lifespan: tuple[int, int],
    filter_entry_days: Sequence[int],
) -> list[tuple[int, int]]:
    """Cut the lifespan (d1, d2] into segments at filter entry days.

    Entry days are left-closed cut points: a segment starting at an entry day
    includes it.  Returned segments are inclusive 1-based day ranges covering
    (d1, d2] exactly.
    """
    d1, d2 = lifespan
    cuts = sorted({e for e in filter_entry_days if d1 + 1 < e <= d2})
    starts = [d1 + 1] + cuts
    return [
        (s, (starts[k + 1] - 1) if k + 1 < len(starts) else d2)
        for k, s in enumerate(starts)
    ]


def exact_benchmark(
    entry_days: dict[int, int],
    lifespan: tuple[int, int],
    filter_arms: Sequence[int],
    losses: np.ndarray,
    epoch_len: int,
) -> float:
    """Dynamic-benchmark value recomputed from the raw loss table.

    Same segment decomposition as the incremental pool ledger: the filter
    arms' entry days cut the lifespan into segments; each segment contributes
    the minimum TRUE loss over the filter arms alive from its start.  A
    segment with no alive filter arm makes the benchmark infinite.

    entry_days maps arm -> 1-based first day in the pool; lifespan is (d1, d2]
    with both ends multiples of epoch_len (d1 may be 0).
    """
    d1, d2 = lifespan
    if not filter_arms:
        raise ValueError("empty filter set")
    if d1 % epoch_len or d2 % epoch_len or d2 <= d1:
        raise ValueError(f"lifespan {lifespan} misaligned to epoch_len {epoch_len}")
    total = 0.0
    for lo, hi in benchmark_segments(lifespan, [entry_days[a] for a in filter_arms]):
        alive = [a for a in filter_arms if entry_days[a] <= lo]
        if not alive:
            return float("inf")
        total += min(losses[lo - 1 : hi, a].sum() for a in alive)
    return float(total)
