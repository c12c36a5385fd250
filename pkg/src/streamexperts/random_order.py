"""Single-query scan for the random-order best expert.

Cycles through the experts at an increasing target error level C.  While
playing expert i it accumulates the run's loss; once the run is at least
B_C = (coeff/(C+1)) sqrt(T/n) log(nT) days long, every day instantiates the
eviction test at eps = sqrt(B_C / |D_i|):

    (T/|D_i|) * sum_{t in D_i} loss(t, i) - C sqrt(nT) > margin * (C eps / 2) sqrt(nT)

evicting the expert and advancing the scan when it fires.  After expert n-1
the level C increments and the cycle restarts.  Only one expert's statistics
are ever tracked: eight persistent scalars in total.
"""
from __future__ import annotations

import math
from typing import Optional

from .meter import MemoryMeter
from .models import Instance
from .pool import DESK_PROFILE, ConstantsProfile
from .protocol import AlgorithmPolicy, DayContext
from .rng import RandomStreams

SCAN_WORDS = 8  # C, expert, run length, run loss, B_C, sqrt(nT), C cap, margin


class RandomOrderScanPolicy(AlgorithmPolicy):
    """Near-optimal bandit play when the best expert's losses are in random order."""

    name = "random_order_scan"
    query_budget = 1

    def __init__(
        self,
        profile: Optional[ConstantsProfile] = None,
        record_events: bool = False,
    ):
        self.profile = profile if profile is not None else DESK_PROFILE
        self.record_events = record_events

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        n, T = instance.n, instance.T
        self.instance = instance
        self.meter = meter
        self.C = 1
        self.expert = 0
        self.run_len = 0
        self.run_loss = 0.0
        self.sqrt_nT = math.sqrt(n * T)
        self.C_cap = math.ceil(math.sqrt(T / n)) + 1
        self.margin = self.profile.scan_margin
        self.block = math.ceil(self.profile.scan_block(n, T, self.C))
        self.events: list[tuple[int, int, int]] = []  # (day, new C, new expert)
        meter.alloc(SCAN_WORDS)

    def step_day(self, ctx: DayContext) -> None:
        loss = ctx.play(self.expert)
        self.run_len += 1
        self.run_loss += loss
        m = self.run_len
        if m < self.block:
            return
        # eviction test at eps = sqrt(B_C / |D_i|), valid for every |D_i| >= B_C
        eps = math.sqrt(self.block / m)
        scaled = self.instance.T / m * self.run_loss
        threshold = self.C * self.sqrt_nT * (1.0 + self.margin * eps / 2.0)
        if scaled > threshold:
            self.expert += 1
            if self.expert == self.instance.n:
                self.expert = 0
                if self.C < self.C_cap:
                    self.C += 1
                    self.block = math.ceil(
                        self.profile.scan_block(self.instance.n, self.instance.T, self.C)
                    )
            self.run_len = 0
            self.run_loss = 0.0
            if self.record_events:
                self.events.append((ctx.t, self.C, self.expert))

    def live_scalars(self) -> int:
        return SCAN_WORDS


def random_order_policy(
    n: int, T: int, profile: Optional[ConstantsProfile] = None
) -> RandomOrderScanPolicy:
    return RandomOrderScanPolicy(profile=profile)
