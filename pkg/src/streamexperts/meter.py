"""Word-count memory metering.

One "word" is one persistent tracked scalar or index (a weight, a loss
accumulator, a counter, an arm id).  Algorithms register every persistent
scalar they hold and release it when dropped; transient per-day temporaries are
not counted.  The meter tracks the live count and its running peak.
"""
from __future__ import annotations


class MeterError(RuntimeError):
    pass


class MemoryMeter:
    __slots__ = ("current", "peak")

    def __init__(self) -> None:
        self.current = 0
        self.peak = 0

    def alloc(self, words: int) -> None:
        if words < 0:
            raise MeterError(f"negative alloc: {words}")
        self.current += words
        if self.current > self.peak:
            self.peak = self.current

    def free(self, words: int) -> None:
        if words < 0:
            raise MeterError(f"negative free: {words}")
        self.current -= words
        if self.current < 0:
            raise MeterError("released more words than were registered")

    def reset(self) -> None:
        self.current = 0
        self.peak = 0
