"""Loss models and problem instances.

An Instance is an oblivious adversary: ``loss(t, i)`` is a pure function of
``(t, i, seed)`` fixed before any play.  Days are 1-based (t in 1..T), arms are
0-based (i in 0..n-1).  Generators default to binary {0,1} losses; real-valued
mode emits the underlying per-day rate instead (still in [0, 1]).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .rng import MASK64, make_generator, mix_seed, splitmix64

_T_PRIME = 0x9E3779B97F4A7C15
_I_PRIME = 0xC2B2AE3D27D4EB4F

# full loss tables are precomputed up to this many cells; larger instances
# fall back to on-demand hashing
TABLE_CELL_CAP = 1 << 27


class ModelError(ValueError):
    pass


def _check_rate(x: float, what: str) -> None:
    if not (0.0 <= x <= 1.0):
        raise ModelError(f"{what} must lie in [0, 1], got {x}")


def _hash_u01(seed: int, t: int, i: int) -> float:
    key = (seed ^ (t * _T_PRIME + i * _I_PRIME)) & MASK64
    return splitmix64(key) / 2.0**64


def _hash_u01_grid(seed: int, ts: np.ndarray, arms: np.ndarray) -> np.ndarray:
    """Vectorized _hash_u01 over the outer grid ts x arms."""
    with np.errstate(over="ignore"):
        key = np.bitwise_xor(
            np.uint64(seed & MASK64),
            (ts.astype(np.uint64)[:, None] * np.uint64(_T_PRIME))
            + (arms.astype(np.uint64)[None, :] * np.uint64(_I_PRIME)),
        )
        x = (key + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(MASK64)
        x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(MASK64)
        x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(MASK64)
        x = x ^ (x >> np.uint64(31))
    return x.astype(np.float64) / 2.0**64


@dataclass(frozen=True)
class HiddenBest:
    """One arm has mean 0.5 - gap/2, every other arm 0.5 + gap/2."""

    gap: float
    best_index: int = 0

    def validate(self, n: int) -> None:
        _check_rate(self.gap, "gap")
        if not (0 <= self.best_index < n):
            raise ModelError(f"best_index {self.best_index} outside [0, {n})")

    def rate(self, t: int, i: int, n: int) -> float:
        return 0.5 - self.gap / 2 if i == self.best_index else 0.5 + self.gap / 2


@dataclass(frozen=True)
class IID:
    """Independent per-day losses with a fixed mean per arm."""

    means: tuple[float, ...]

    def validate(self, n: int) -> None:
        if len(self.means) != n:
            raise ModelError(f"need {n} means, got {len(self.means)}")
        for m in self.means:
            _check_rate(m, "mean")

    def rate(self, t: int, i: int, n: int) -> float:
        return self.means[i]


@dataclass(frozen=True)
class TwoPhase:
    """Per-arm rates switch from `before` to `after` at switch_day (inclusive)."""

    switch_day: int
    before: tuple[float, ...]
    after: tuple[float, ...]

    def validate(self, n: int) -> None:
        if len(self.before) != n or len(self.after) != n:
            raise ModelError("before/after must list one rate per arm")
        for m in (*self.before, *self.after):
            _check_rate(m, "rate")
        if self.switch_day < 1:
            raise ModelError("switch_day must be >= 1")

    def rate(self, t: int, i: int, n: int) -> float:
        return self.before[i] if t < self.switch_day else self.after[i]


@dataclass(frozen=True)
class HotStreak:
    """Arms cycle through hot streaks: streak_rate for streak_len days out of
    every 4*streak_len, off_rate otherwise; per-arm phase offsets are seeded."""

    streak_len: int
    streak_rate: float
    off_rate: float

    def validate(self, n: int) -> None:
        if self.streak_len < 1:
            raise ModelError("streak_len must be >= 1")
        _check_rate(self.streak_rate, "streak_rate")
        _check_rate(self.off_rate, "off_rate")

    def phase(self, i: int, seed: int) -> int:
        return splitmix64((seed ^ 0x5EED) + 31 * i) % (4 * self.streak_len)

    def rate(self, t: int, i: int, n: int, seed: int = 0) -> float:
        pos = (t - 1 + self.phase(i, seed)) % (4 * self.streak_len)
        return self.streak_rate if pos < self.streak_len else self.off_rate


@dataclass(frozen=True)
class RandomOrderBest:
    """The best expert incurs exactly floor(gamma * sqrt(nT)) unit losses,
    spread over [T] by a uniform seeded permutation; all other arms follow a
    HotStreak distractor pattern."""

    gamma: float
    best_index: Optional[int] = None
    distractor_streak_len: Optional[int] = None
    distractor_streak_rate: float = 0.05
    distractor_off_rate: float = 0.95

    def validate(self, n: int) -> None:
        if self.gamma < 0:
            raise ModelError("gamma must be nonnegative")
        _check_rate(self.distractor_streak_rate, "distractor_streak_rate")
        _check_rate(self.distractor_off_rate, "distractor_off_rate")


@dataclass(frozen=True)
class Explicit:
    """A dense T x n loss table for tiny oracle instances."""

    table: tuple[tuple[float, ...], ...]

    def validate(self, n: int) -> None:
        if not self.table:
            raise ModelError("empty table")
        for row in self.table:
            if len(row) != n:
                raise ModelError("ragged table row")
            for x in row:
                _check_rate(x, "loss entry")


LossModel = Union[HiddenBest, IID, TwoPhase, HotStreak, RandomOrderBest, Explicit]


@dataclass
class Instance:
    """An oblivious adversarial problem: n arms, T days, a fixed loss oracle."""

    n: int
    T: int
    model: LossModel
    seed: int
    binary: bool = True
    _table: Optional[np.ndarray] = field(default=None, repr=False)
    _romb: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.n < 1 or self.T < 1:
            raise ModelError("n and T must be positive")
        self.model.validate(self.n)
        if self.T < self.n:
            warnings.warn(
                f"T={self.T} < n={self.n}: outside the T >= n regime the regret "
                "guarantees are stated for",
                stacklevel=2,
            )
        if isinstance(self.model, TwoPhase) and self.model.switch_day > self.T:
            raise ModelError("switch_day beyond horizon")
        if isinstance(self.model, Explicit):
            if len(self.model.table) != self.T:
                raise ModelError(f"table has {len(self.model.table)} rows, T={self.T}")
        if isinstance(self.model, RandomOrderBest):
            self._build_random_order()

    # -- random-order construction ------------------------------------------
    def _build_random_order(self) -> None:
        m = self.model
        rng = make_generator(self.seed, "random_order_best")
        best = m.best_index if m.best_index is not None else int(rng.integers(self.n))
        if not (0 <= best < self.n):
            raise ModelError("best_index outside [0, n)")
        ones = min(self.T, math.floor(m.gamma * math.sqrt(self.n * self.T)))
        days = np.zeros(self.T, dtype=bool)
        days[rng.permutation(self.T)[:ones]] = True
        streak = m.distractor_streak_len
        if streak is None:
            streak = max(4, int(math.sqrt(self.T / self.n) * math.log2(self.n * self.T) / 2))
        hot = HotStreak(streak, m.distractor_streak_rate, m.distractor_off_rate)
        self._romb = (best, days, hot)

    @property
    def best_index(self) -> Optional[int]:
        """Realized best-arm index for models that designate one."""
        if self._romb is not None:
            return self._romb[0]
        if isinstance(self.model, HiddenBest):
            return self.model.best_index
        return None

    # -- point access ---------------------------------------------------------
    def loss(self, t: int, i: int) -> float:
        """Loss of arm i on day t (1-based t); pure in (t, i, seed)."""
        if self._table is not None:
            return float(self._table[t - 1, i])
        return self._loss_uncached(t, i)

    def _loss_uncached(self, t: int, i: int) -> float:
        m = self.model
        if isinstance(m, Explicit):
            return float(m.table[t - 1][i])
        if self._romb is not None:
            best, days, hot = self._romb
            if i == best:
                return 1.0 if days[t - 1] else 0.0
            rate = hot.rate(t, i, self.n, self.seed)
        elif isinstance(m, HotStreak):
            rate = m.rate(t, i, self.n, self.seed)
        else:
            rate = m.rate(t, i, self.n)
        if not self.binary:
            return rate
        return 1.0 if _hash_u01(self.seed, t, i) < rate else 0.0

    # -- bulk access ------------------------------------------------------------
    def loss_table(self) -> np.ndarray:
        """The full (T, n) loss table; built once, cached."""
        if self._table is None:
            if self.T * self.n > TABLE_CELL_CAP:
                raise ModelError(
                    f"loss table with {self.T * self.n} cells exceeds cap {TABLE_CELL_CAP}"
                )
            self._table = self._build_table()
        return self._table

    def _build_table(self) -> np.ndarray:
        ts = np.arange(1, self.T + 1, dtype=np.uint64)
        arms = np.arange(self.n, dtype=np.uint64)
        m = self.model
        if isinstance(m, Explicit):
            return np.asarray(m.table, dtype=np.float64)
        rates = np.empty((self.T, self.n), dtype=np.float64)
        if isinstance(m, HiddenBest):
            rates[:] = 0.5 + m.gap / 2
            rates[:, m.best_index] = 0.5 - m.gap / 2
        elif isinstance(m, IID):
            rates[:] = np.asarray(m.means)[None, :]
        elif isinstance(m, TwoPhase):
            rates[: m.switch_day - 1, :] = np.asarray(m.before)[None, :]
            rates[m.switch_day - 1 :, :] = np.asarray(m.after)[None, :]
        elif isinstance(m, HotStreak) or self._romb is not None:
            hot = m if isinstance(m, HotStreak) else self._romb[2]
            cyc = 4 * hot.streak_len
            for i in range(self.n):
                pos = (ts.astype(np.int64) - 1 + hot.phase(i, self.seed)) % cyc
                rates[:, i] = np.where(pos < hot.streak_len, hot.streak_rate, hot.off_rate)
        else:  # pragma: no cover - exhaustiveness guard
            raise ModelError(f"unknown model {m!r}")
        if self.binary:
            u = _hash_u01_grid(self.seed, ts, arms)
            out = (u < rates).astype(np.float64)
        else:
            out = rates
        if self._romb is not None:
            best, days, _ = self._romb
            out[:, best] = days.astype(np.float64)
        return out

    def arm_totals(self) -> np.ndarray:
        return self.loss_table().sum(axis=0)


def build_instance(
    model: LossModel,
    n: int,
    T: int,
    seed: int,
    binary: bool = True,
) -> Instance:
    """Validate parameters and construct a replay-identical Instance."""
    return Instance(n=n, T=T, model=model, seed=seed, binary=binary)
