"""Hierarchical expert-pool machinery: segmented estimated-loss ledger, the
Dynamic Benchmark, cover predicates, Merge, Filter, and the epoch cascade.

The pool is split into sub-pools P_1..P_K; sampling adds arms to P_1, and at
epoch tau the cascade merges P_k into P_(k+1) for k up to the 2-adic valuation
of tau.  Each arm carries a ledger of estimated losses segmented at the days
other arms entered the same pool hierarchy; the benchmark composes per-segment
minima over a random filter set, and arms not sufficiently below the benchmark
are evicted.

All thresholds appear in a ConstantsProfile.  The paper_faithful preset keeps
the literal polylog formulas (astronomical at desk scale); the desk preset
scales every exponent down to a single log factor with small coefficients.
"""
from __future__ import annotations

import math
from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .meter import MemoryMeter


class PoolError(RuntimeError):
    pass


# -- constants profiles --------------------------------------------------------

@dataclass(frozen=True)
class ConstantsProfile:
    """All pool/scan thresholds, resolved as functions of (n, T)."""

    name: str
    subpool_cap_coeff: float      # paper: 2 log^9 -> desk: c1 * log
    subpool_cap_power: int
    small_size_coeff: float       # paper: log^5 -> desk: c2 * log
    small_size_power: int
    small_size_n_free: bool       # desk gates on log(T) so pools do not grow with n
    mark_prob_coeff: float        # paper: 1/log^4 -> desk: 1/(c3 * log)
    mark_prob_power: int
    merge_rounds_coeff: float     # Q = 16 log(nT)
    approx_cover_coeff: float     # prefactor of |D|^rho in the approximate cover
    approx_cover_n_factor: bool   # paper keeps the n factor in the slack
    relaxed_cover_coeff: float    # prefactor of sqrt(|D|/gamma_arm)
    twoq_cover_coeff: float       # prefactor of sqrt(|D|)
    pool_cap_coeff: float
    pool_cap_power: int
    pool_cap_floor: int
    scan_coeff: float             # B_C = (scan_coeff/(C+1)) sqrt(T/n) log(nT)
    scan_margin: float            # multiplier on the (C eps / 2) eviction margin
    b0_leaf: float                # multiplier on two-query leaf epoch lengths
    b0_boost_leaf: float          # multiplier on single-query boost leaf epochs
    b0_pair: float                # multiplier on pair epoch-length formulas
    b0_alg4: float                # multiplier on the single-query baseline's epoch
    gamma_scale: float            # multiplier on the T^(-1/3) exploration rates
    leaf_eta_tuned: bool          # tune the within-epoch MWU rate to the
    leaf_eta_coeff: float         # estimator variance (desk) vs literal 1/sqrt(T)

    def leaf_eta(
        self, m: int, B: int, horizon: int, var_per_day: float,
        coeff: Optional[float] = None,
    ) -> float:
        """Within-epoch play softmax rate for a pool of m arms.

        The literal rate is 1/sqrt(horizon); the tuned variant balances the
        per-epoch MWU regret log(m)/eta + eta * var * B for the actual
        second moment of the importance-weighted credits.
        """
        if not self.leaf_eta_tuned:
            return 1.0 / math.sqrt(max(2, horizon))
        m = max(1, m)
        c = self.leaf_eta_coeff if coeff is None else coeff
        return min(
            0.5,
            c * math.sqrt(math.log(m + 1) / (max(1.0, var_per_day) * max(2, B))),
        )

    def _log(self, n: int, T: int) -> float:
        return max(2.0, math.log2(n * T))

    def subpool_cap(self, n: int, T: int) -> float:
        return self.subpool_cap_coeff * self._log(n, T) ** self.subpool_cap_power

    def small_size(self, n: int, T: int) -> float:
        base = math.log2(max(4, T)) if self.small_size_n_free else self._log(n, T)
        return self.small_size_coeff * base**self.small_size_power

    def mark_prob(self, n: int, T: int) -> float:
        return min(1.0, self.mark_prob_coeff / self._log(n, T) ** self.mark_prob_power)

    def merge_rounds(self, n: int, T: int) -> int:
        return max(1, math.ceil(self.merge_rounds_coeff * self._log(n, T)))

    def pool_cap(self, n: int, T: int) -> float:
        return max(
            self.pool_cap_floor,
            self.pool_cap_coeff * self._log(n, T) ** self.pool_cap_power,
        )

    def approximate_cover(self, n: int, T: int, rho: float) -> "ApproximateCover":
        scale = self.approx_cover_coeff * self._log(n, T)
        if self.approx_cover_n_factor:
            scale *= n
        return ApproximateCover(rho=rho, scale=scale)

    def relaxed_cover(self, n: int, T: int, gamma_arm: float) -> "RelaxedCover":
        return RelaxedCover(
            gamma_arm=gamma_arm, scale=self.relaxed_cover_coeff * self._log(n, T)
        )

    def two_query_cover(self, n: int, T: int) -> "TwoQueryCover":
        return TwoQueryCover(scale=self.twoq_cover_coeff * self._log(n, T))

    def scan_block(self, n: int, T: int, C: int) -> float:
        return self.scan_coeff / (C + 1) * math.sqrt(T / n) * self._log(n, T)


PAPER_PROFILE = ConstantsProfile(
    name="paper",
    subpool_cap_coeff=2.0, subpool_cap_power=9,
    small_size_coeff=1.0, small_size_power=5, small_size_n_free=False,
    mark_prob_coeff=1.0, mark_prob_power=4,
    merge_rounds_coeff=16.0,
    approx_cover_coeff=1.0, approx_cover_n_factor=True,
    relaxed_cover_coeff=1.0,
    twoq_cover_coeff=1.0,
    pool_cap_coeff=2.0, pool_cap_power=10, pool_cap_floor=64,
    scan_coeff=100.0, scan_margin=1.0,
    b0_leaf=1.0, b0_boost_leaf=1.0, b0_pair=1.0, b0_alg4=0.15, gamma_scale=1.0,
    leaf_eta_tuned=False, leaf_eta_coeff=1.0,
)

DESK_PROFILE = ConstantsProfile(
    name="desk",
    subpool_cap_coeff=4.0, subpool_cap_power=1,
    small_size_coeff=2.0, small_size_power=1, small_size_n_free=True,
    mark_prob_coeff=1.0, mark_prob_power=1,
    merge_rounds_coeff=16.0,
    approx_cover_coeff=0.15, approx_cover_n_factor=False,
    relaxed_cover_coeff=0.10,
    twoq_cover_coeff=0.40,
    pool_cap_coeff=6.0, pool_cap_power=1, pool_cap_floor=64,
    scan_coeff=2.0, scan_margin=2.5,
    b0_leaf=0.25, b0_boost_leaf=0.1, b0_pair=0.5, b0_alg4=0.15, gamma_scale=2.0,
    leaf_eta_tuned=True, leaf_eta_coeff=3.0,
)

PROFILES = {"paper": PAPER_PROFILE, "desk": DESK_PROFILE}


# -- cover rules ---------------------------------------------------------------

@dataclass(frozen=True)
class ApproximateCover:
    rho: float
    scale: float

    def slack(self, D: int) -> float:
        return self.scale * D**self.rho


@dataclass(frozen=True)
class RelaxedCover:
    gamma_arm: float
    scale: float

    def slack(self, D: int) -> float:
        return self.scale * math.sqrt(D / self.gamma_arm)


@dataclass(frozen=True)
class TwoQueryCover:
    scale: float

    def slack(self, D: int) -> float:
        return self.scale * math.sqrt(D)


CoverRule = Union[ApproximateCover, RelaxedCover, TwoQueryCover]


def is_covered(est_loss: float, benchmark: float, rule: CoverRule, D: int) -> bool:
    """True iff the arm's estimated lifespan loss is not sufficiently below the
    benchmark: est >= benchmark - slack(D)."""
    if benchmark == float("inf"):
        return False
    return est_loss >= benchmark - rule.slack(D)


# -- the pool -------------------------------------------------------------------

class PoolEntry:
    """One tracked arm: entry day plus the segmented estimated-loss ledger.

    seg_starts[k] is the 1-based first day of segment k; segment k accumulates
    estimates for days seg_starts[k] .. seg_starts[k+1]-1.
    """

    __slots__ = ("arm", "entry_day", "seg_starts", "seg_sums", "play_est")

    def __init__(self, arm: int, entry_day: int):
        self.arm = arm
        self.entry_day = entry_day
        self.seg_starts = [entry_day]
        self.seg_sums = [0.0]
        self.play_est = 0.0  # within-epoch play weight, reset each epoch

    def words(self) -> int:
        return 3 + 2 * len(self.seg_starts)

    def total(self) -> float:
        return sum(self.seg_sums)

    def range_sum(self, lo: int, hi: int) -> float:
        """Ledger mass over days [lo, hi]; lo and hi+1 must be segment cuts
        (entry-event days) or lie beyond the last segment."""
        starts = self.seg_starts
        a = bisect_left(starts, lo)
        b = bisect_right(starts, hi)
        return sum(self.seg_sums[a:b])


class PoolState:
    """Sub-pools P_1..P_K with per-arm ledgers, on a shared epoch grid."""

    def __init__(
        self,
        n: int,
        T: int,
        B: int,
        constants: ConstantsProfile,
        cover_rule: CoverRule,
        rng: np.random.Generator,
        meter: Optional[MemoryMeter] = None,
        origin: int = 0,
        T_scale: Optional[int] = None,
    ):
        """origin is the day before the pool's first possible entry; epoch
        alignment is relative to it.  T_scale (default T) sets the horizon the
        polylog thresholds are resolved against - sub-pools of a larger run
        pass the global horizon."""
        if B < 1:
            raise PoolError(f"epoch length must be >= 1, got {B}")
        self.n = n
        self.T = T
        self.B = B
        self.K = max(1, math.ceil(math.log2(max(2, T))))
        self.constants = constants
        self.cover_rule = cover_rule
        self.rng = rng
        self.meter = meter
        self.origin = origin
        self.levels: dict[int, dict[int, PoolEntry]] = {}
        self.arm_level: dict[int, int] = {}
        self.entry_events: list[int] = []
        self.tau = 0  # completed epochs
        self.eviction_log: list[tuple[int, int]] = []
        Ts = T if T_scale is None else T_scale
        self._mark_prob = constants.mark_prob(n, Ts)
        self._small = constants.small_size(n, Ts)
        self._rounds = constants.merge_rounds(n, Ts)
        self._cap = constants.pool_cap(n, Ts)

    # -- membership ------------------------------------------------------------
    def __len__(self) -> int:
        return len(self.arm_level)

    def arms(self) -> list[int]:
        return list(self.arm_level)

    def entry(self, arm: int) -> PoolEntry:
        return self.levels[self.arm_level[arm]][arm]

    def add_arm(self, arm: int, day: int, level: int = 1) -> PoolEntry:
        if arm in self.arm_level:
            raise PoolError(f"arm {arm} already pooled")
        e = PoolEntry(arm, day)
        self.levels.setdefault(level, {})[arm] = e
        self.arm_level[arm] = level
        if not self.entry_events or self.entry_events[-1] != day:
            if self.entry_events and day < self.entry_events[-1]:
                insort(self.entry_events, day)
            else:
                self.entry_events.append(day)
            self._open_segments(day)
        if self.meter:
            self.meter.alloc(e.words())
        return e

    def _open_segments(self, day: int) -> None:
        """A new entry event cuts a fresh segment in every older entry."""
        for level in self.levels.values():
            for e in level.values():
                if e.seg_starts[-1] < day:
                    e.seg_starts.append(day)
                    e.seg_sums.append(0.0)
                    if self.meter:
                        self.meter.alloc(2)

    def sample_new_arms(self, day: int) -> list[int]:
        """Independently add each absent arm to P_1 with probability 1/n.

        Play weights carry over across epochs; a new entrant starts at the
        incumbent minimum play estimate, so it ties with the current leader
        instead of dominating the softmax outright.
        """
        init = min(
            (e.play_est for lv in self.levels.values() for e in lv.values()),
            default=0.0,
        )
        hits = np.flatnonzero(self.rng.random(self.n) < 1.0 / self.n)
        added = [int(a) for a in hits if int(a) not in self.arm_level]
        for a in added:
            self.add_arm(a, day).play_est = init
        if len(self) > self._cap:
            raise PoolError(f"pool size {len(self)} exceeds cap {self._cap}")
        return added

    def remove_arm(self, arm: int, day: int) -> None:
        level = self.arm_level.pop(arm)
        e = self.levels[level].pop(arm)
        self.eviction_log.append((day, arm))
        if self.meter:
            self.meter.free(e.words())

    # -- ledger ------------------------------------------------------------------
    def ledger_update(self, arm: int, amount: float) -> None:
        if arm not in self.arm_level:
            raise PoolError(f"arm {arm} not in pool")
        self.entry(arm).seg_sums[-1] += amount

    def lifespan(self, arm: int, now: int) -> tuple[int, int]:
        """Epoch-aligned (d1, d2] lifespan of the arm up to completed day `now`."""
        return (self.entry(arm).entry_day - 1, now)

    # -- benchmark and cover -------------------------------------------------------
    def dynamic_benchmark(
        self,
        arm: Optional[int],
        lifespan: tuple[int, int],
        filter_arms: Sequence[int],
    ) -> float:
        """Compose per-segment minima of filter-arm estimated losses over the
        lifespan; segments are cut at filter entry days (left-closed).  The
        tested arm is excluded from the minimum; segments with no alive filter
        arm make the benchmark infinite."""
        d1, d2 = lifespan
        cands = [
            (self.entry(j).entry_day, j) for j in filter_arms if j != arm
        ]
        if not cands:
            return float("inf")
        if d2 <= d1 or (d1 - self.origin) % self.B or (d2 - self.origin) % self.B:
            raise PoolError(f"lifespan {lifespan} misaligned to B={self.B}")
        cands.sort()
        cuts = sorted({e for e, _ in cands if d1 + 1 < e <= d2})
        starts = [d1 + 1] + cuts
        total = 0.0
        for k, lo in enumerate(starts):
            hi = (starts[k + 1] - 1) if k + 1 < len(starts) else d2
            best = float("inf")
            for e_day, j in cands:
                if e_day > lo:
                    break
                s = self.entry(j).range_sum(lo, hi)
                if s < best:
                    best = s
            if best == float("inf"):
                return best
            total += best
        return total

    def covered(self, arm: int, now: int, filter_arms: Sequence[int]) -> bool:
        d1, d2 = self.lifespan(arm, now)
        bm = self.dynamic_benchmark(arm, (d1, d2), filter_arms)
        return is_covered(self.entry(arm).total(), bm, self.cover_rule, d2 - d1)

    # -- filter and merge ------------------------------------------------------------
    def filter_pool(self, filter_arms: Sequence[int], pool_arms: Iterable[int], now: int) -> list[int]:
        """Evict every arm of pool_arms covered by the filter; return survivors."""
        survivors = []
        fset = set(filter_arms)
        for a in list(pool_arms):
            if a in fset or not self.covered(a, now, filter_arms):
                survivors.append(a)
            else:
                self.remove_arm(a, now)
        return survivors

    def merge(self, level_hi: int, level_lo: int, now: int) -> None:
        """Merge P_level_lo into P_level_hi, pruning covered arms.

        Runs up to Q rounds: estimate the merged size by Bernoulli marks; stop
        if small, else draw a filter set and evict covered non-filter arms.
        """
        src = self.levels.pop(level_lo, {})
        dst = self.levels.setdefault(level_hi, {})
        for a, e in src.items():
            dst[a] = e
            self.arm_level[a] = level_hi
        merged = dst
        for _ in range(self._rounds):
            members = list(merged)
            marks = self.rng.random(len(members)) < self._mark_prob
            est_size = marks.sum() / self._mark_prob
            if est_size <= self._small:
                return
            fmarks = self.rng.random(len(members)) < self._mark_prob
            filt = [a for a, m in zip(members, fmarks) if m]
            if filt:
                self.filter_pool(filt, members, now)

    def epoch_tick(self, now: int) -> list[tuple[int, int]]:
        """Close an epoch at day `now`; cascade merges P_k -> P_(k+1) for
        k = 1..pw(tau), where pw is the 2-adic valuation of the epoch index."""
        self.tau += 1
        tau = self.tau
        pw = 0
        while tau % 2 == 0 and pw < self.K:
            pw += 1
            tau //= 2
        actions = []
        for k in range(1, pw + 1):
            self.merge(k + 1, k, now)
            actions.append((k, k + 1))
        if len(self) > self._cap:
            raise PoolError(f"pool size {len(self)} exceeds cap {self._cap}")
        return actions

    # -- introspection ------------------------------------------------------------------
    def words(self) -> int:
        return sum(e.words() for lv in self.levels.values() for e in lv.values())

    def ledger_fingerprint(self) -> str:
        lines = []
        for level in sorted(self.levels):
            for arm in sorted(self.levels[level]):
                e = self.levels[level][arm]
                segs = ";".join(f"{s}:{v!r}" for s, v in zip(e.seg_starts, e.seg_sums))
                lines.append(f"L{level} a{arm} e{e.entry_day} [{segs}]")
        lines.append("evictions " + ",".join(f"{d}:{a}" for d, a in self.eviction_log))
        return "\n".join(lines)

    def dump(self) -> str:
        """Structured-text pool state for the CLI debug flag."""
        lines = [f"pool B={self.B} tau={self.tau} arms={len(self)}"]
        for level in sorted(self.levels):
            for arm in sorted(self.levels[level]):
                e = self.levels[level][arm]
                segs = " ".join(f"({s},{v:.3f})" for s, v in zip(e.seg_starts, e.seg_sums))
                lines.append(
                    f"  level={level} arm={arm} entry_day={e.entry_day} "
                    f"entry_epoch={(e.entry_day - 1) // self.B + 1} segments: {segs}"
                )
        return "\n".join(lines)


def pw(tau: int) -> int:
    """2-adic valuation of the epoch index: the cascade depth at epoch tau."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    out = 0
    while tau % 2 == 0:
        out += 1
        tau //= 2
    return out
