"""The uniform algorithm state machine: observe day -> act -> receive feedback.

A policy is bound once to (instance, streams, meter) and then stepped through
days 1..T.  Each day it must play exactly one arm (incurring that arm's loss)
and may observe up to ``query_budget`` arm losses in total, the played arm
included.  The engine enforces the budget and records a Trace.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .meter import MemoryMeter
from .models import Instance
from .rng import RandomStreams


class ProtocolViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class PlayRecord:
    """One day of interaction."""

    t: int
    played_arm: int
    free_query_arm: Optional[int]
    incurred_loss: float
    observed: tuple[tuple[int, float], ...]


class DayContext:
    """Per-day interaction surface handed to the policy.

    play(arm) incurs and returns the arm's loss; query(arm) returns a loss
    without incurring it.  Both count against the query budget.
    """

    __slots__ = ("instance", "budget", "t", "_played", "_loss", "_free", "_nobs", "_full_info")

    def __init__(self, instance: Instance, budget: int):
        self.instance = instance
        self.budget = budget
        self.t = 0
        self._full_info = budget >= instance.n

    def _reset(self, t: int) -> None:
        self.t = t
        self._played = -1
        self._loss = 0.0
        self._free = -1
        self._nobs = 0

    def play(self, arm: int) -> float:
        if self._played >= 0:
            raise ProtocolViolation(f"day {self.t}: played twice")
        self._nobs += 1
        if self._nobs > self.budget:
            raise ProtocolViolation(f"day {self.t}: query budget {self.budget} exceeded")
        self._played = arm
        self._loss = self.instance.loss(self.t, arm)
        return self._loss

    def query(self, arm: int) -> float:
        self._nobs += 1
        if self._nobs > self.budget:
            raise ProtocolViolation(f"day {self.t}: query budget {self.budget} exceeded")
        if self._free < 0:
            self._free = arm
        return self.instance.loss(self.t, arm)

    def query_all(self) -> np.ndarray:
        """Full-information feedback: the whole day-t loss vector."""
        if not self._full_info:
            raise ProtocolViolation(f"day {self.t}: budget {self.budget} < n")
        self._nobs = self.budget
        if self.instance._table is not None:
            return self.instance._table[self.t - 1]
        return np.array([self.instance.loss(self.t, i) for i in range(self.instance.n)])


class AlgorithmPolicy:
    """Base class; subclasses implement bind() and step_day()."""

    name = "policy"
    query_budget = 1

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        raise NotImplementedError

    def step_day(self, ctx: DayContext) -> None:
        raise NotImplementedError

    # optional hooks -------------------------------------------------------
    def mixture(self) -> Optional[dict[int, float]]:
        """Read-only current distribution over arms, if the policy exposes one."""
        return None

    def ledger_fingerprint(self) -> Optional[str]:
        """Canonical text of estimated-loss ledgers and eviction times."""
        return None

    def live_scalars(self) -> Optional[int]:
        """Independent recount of persistent scalars, for meter audits."""
        return None


class Trace:
    """Full record of one run: per-day columns plus the memory-meter series."""

    def __init__(self, instance: Instance, policy_name: str, budget: int):
        T = instance.T
        self.instance = instance
        self.policy_name = policy_name
        self.query_budget = budget
        self.played = np.empty(T, dtype=np.int32)
        self.free_arm = np.full(T, -1, dtype=np.int32)
        self.loss = np.empty(T, dtype=np.float64)
        self.n_observed = np.empty(T, dtype=np.int16)
        self.memory = np.zeros(T, dtype=np.int64)
        self.peak_memory_words = 0

    @property
    def T(self) -> int:
        return self.instance.T

    def record(self, t: int) -> PlayRecord:
        """Materialize day t (1-based) as a PlayRecord."""
        i = t - 1
        played = int(self.played[i])
        free = int(self.free_arm[i])
        obs = [(played, float(self.loss[i]))]
        if self.query_budget >= self.instance.n:
            obs = [(a, self.instance.loss(t, a)) for a in range(self.instance.n)]
        elif free >= 0:
            obs.append((free, self.instance.loss(t, free)))
        return PlayRecord(
            t=t,
            played_arm=played,
            free_query_arm=None if free < 0 else free,
            incurred_loss=float(self.loss[i]),
            observed=tuple(obs),
        )

    def records(self) -> Iterator[PlayRecord]:
        for t in range(1, self.T + 1):
            yield self.record(t)

    def total_loss(self) -> float:
        return float(self.loss.sum())


def step(policy: AlgorithmPolicy, ctx: DayContext, trace: Trace, t: int) -> None:
    """Advance the policy by exactly one day and record the outcome."""
    ctx._reset(t)
    policy.step_day(ctx)
    if ctx._played < 0:
        raise ProtocolViolation(f"day {t}: policy did not play")
    i = t - 1
    trace.played[i] = ctx._played
    trace.free_arm[i] = ctx._free
    trace.loss[i] = ctx._loss
    trace.n_observed[i] = ctx._nobs


def run_policy(
    policy: AlgorithmPolicy,
    instance: Instance,
    streams: RandomStreams,
    meter: Optional[MemoryMeter] = None,
    audit_memory: bool = False,
) -> Trace:
    """Run the policy over the full horizon and return its Trace.

    audit_memory cross-checks the meter against the policy's own recount each
    day (a shadow recount; slow, for debug runs and tests).
    """
    meter = meter if meter is not None else MemoryMeter()
    policy.bind(instance, streams, meter)
    trace = Trace(instance, policy.name, policy.query_budget)
    ctx = DayContext(instance, policy.query_budget)
    mem = trace.memory
    for t in range(1, instance.T + 1):
        step(policy, ctx, trace, t)
        mem[t - 1] = meter.current
        if audit_memory:
            counted = policy.live_scalars()
            if counted is not None and counted != meter.current:
                raise RuntimeError(
                    f"meter drift on day {t}: meter={meter.current} recount={counted}"
                )
    trace.peak_memory_words = meter.peak
    return trace
