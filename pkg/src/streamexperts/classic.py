"""Reference online-learning algorithms: EXP3, learning-as-exploration EXP3,
two-query EXP3, Hedge, and SQUINT.

All weight handling is done on cumulative estimated losses with max-subtraction
before exponentiation, since importance-weighted updates reach magnitude n/gamma
and would underflow naive multiplicative weights.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .meter import MemoryMeter
from .models import Instance
from .protocol import AlgorithmPolicy, DayContext
from .rng import RandomStreams


def softmax_cumulative(scores: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    """Cumulative sum of exp(scores - max(scores)); sample via searchsorted."""
    w = np.exp(scores - scores.max())
    return np.cumsum(w, out=out)


def sample_from_cumulative(cum: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


class Exp3Policy(AlgorithmPolicy):
    """EXP3: mixture of softmax weights and uniform exploration, one query.

    P_t(i) = (1-gamma) * softmax_i + gamma/n; the played arm's loss is
    importance-weighted by 1/P_t(i_t) and credited to that arm only.
    """

    name = "exp3"
    query_budget = 1

    def __init__(self, gamma: float):
        if not (0.0 < gamma <= 1.0):
            raise ValueError(f"gamma must be in (0, 1], got {gamma}")
        self.gamma = gamma

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        self.n = instance.n
        self.rng = streams.arm_sampling
        self.meter = meter
        self.scores = np.zeros(self.n)  # -gamma * cumulative estimated loss
        meter.alloc(self.n + 2)

    def step_day(self, ctx: DayContext) -> None:
        n, g, rng = self.n, self.gamma, self.rng
        w = np.exp(self.scores - self.scores.max())
        total = w.sum()
        cum = np.cumsum(w)
        if rng.random() < g:
            arm = int(rng.integers(n))
        else:
            arm = int(np.searchsorted(cum, rng.random() * total, side="right"))
        loss = ctx.play(arm)
        if loss:
            p = (1.0 - g) * (w[arm] / total) + g / n
            self.scores[arm] -= g * (loss / p)

    def mixture(self) -> dict[int, float]:
        w = np.exp(self.scores - self.scores.max())
        p = (1.0 - self.gamma) * w / w.sum() + self.gamma / self.n
        return {i: float(p[i]) for i in range(self.n)}

    def live_scalars(self) -> int:
        return self.n + 2


class Exp3ExplorePolicy(AlgorithmPolicy):
    """Learning-as-exploration EXP3: updates happen only on exploration days.

    With probability gamma the day explores (uniform arm, credit n*loss/gamma
    to that arm); otherwise the day samples softmax(-gamma * Lhat) and makes no
    update.
    """

    name = "exp3_explore"
    query_budget = 1

    def __init__(self, gamma: float):
        if not (0.0 < gamma <= 0.5):
            raise ValueError(f"gamma must be in (0, 1/2], got {gamma}")
        self.gamma = gamma

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        self.n = instance.n
        self.rng = streams.arm_sampling
        self.meter = meter
        self.est = np.zeros(self.n)
        self._cum: Optional[np.ndarray] = None
        meter.alloc(self.n + 2)

    def step_day(self, ctx: DayContext) -> None:
        rng = self.rng
        if rng.random() < self.gamma:
            arm = int(rng.integers(self.n))
            loss = ctx.play(arm)
            if loss:
                self.est[arm] += self.n * loss / self.gamma
                self._cum = None
        else:
            if self._cum is None:
                self._cum = softmax_cumulative(-self.gamma * self.est)
            ctx.play(sample_from_cumulative(self._cum, rng))

    def live_scalars(self) -> int:
        return self.n + 2


class Exp3TwoQueryPolicy(AlgorithmPolicy):
    """Two-query EXP3: play from softmax(-eta * Lhat) with no update from the
    played loss; a lossless uniform query credits n*loss to the queried arm."""

    name = "exp3_two_query"
    query_budget = 2

    def __init__(self, eta: float):
        if eta <= 0:
            raise ValueError(f"eta must be positive, got {eta}")
        self.eta = eta

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        self.n = instance.n
        self.play_rng = streams.exploitation_sampling
        self.query_rng = streams.exploration_query
        self.meter = meter
        self.est = np.zeros(self.n)
        self._cum: Optional[np.ndarray] = None
        meter.alloc(self.n + 2)

    def step_day(self, ctx: DayContext) -> None:
        if self._cum is None:
            self._cum = softmax_cumulative(-self.eta * self.est)
        ctx.play(sample_from_cumulative(self._cum, self.play_rng))
        probe = int(self.query_rng.integers(self.n))
        loss = ctx.query(probe)
        if loss:
            self.est[probe] += self.n * loss
            self._cum = None

    def ledger_fingerprint(self) -> str:
        return ",".join(repr(x) for x in self.est)

    def live_scalars(self) -> int:
        return self.n + 2


class HedgePolicy(AlgorithmPolicy):
    """Full-information Hedge over its expert set with a fixed learning rate."""

    name = "hedge"

    def __init__(self, eta: float):
        if eta <= 0:
            raise ValueError(f"eta must be positive, got {eta}")
        self.eta = eta

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        self.n = instance.n
        self.query_budget = instance.n
        self.rng = streams.exploitation_sampling
        self.meter = meter
        self.cum_loss = np.zeros(self.n)
        meter.alloc(self.n + 1)

    def step_day(self, ctx: DayContext) -> None:
        cum = softmax_cumulative(-self.eta * self.cum_loss)
        ctx.play(sample_from_cumulative(cum, self.rng))
        losses = ctx.query_all()
        if np.any(losses < 0):
            raise ValueError("Hedge requires nonnegative losses")
        self.cum_loss += losses

    def distribution(self) -> np.ndarray:
        w = np.exp(-self.eta * (self.cum_loss - self.cum_loss.min()))
        return w / w.sum()

    def live_scalars(self) -> int:
        return self.n + 1


DEFAULT_SQUINT_GRID = 64
SQUINT_ETA_MIN = 2.0**-20
SQUINT_ETA_MAX = 0.5


def squint_prior(grid_size: int = DEFAULT_SQUINT_GRID) -> tuple[np.ndarray, np.ndarray]:
    """Geometric learning-rate grid on [2^-20, 1/2] with weights ~ 1/(eta log^2 eta)."""
    etas = np.geomspace(SQUINT_ETA_MIN, SQUINT_ETA_MAX, grid_size)
    w = 1.0 / (etas * np.log(etas) ** 2)
    return etas, w / w.sum()


class SquintPolicy(AlgorithmPolicy):
    """SQUINT: second-order experts algorithm with a discretized prior.

    Tracks per-arm running sums of v and v^2, where v_t(i) is the gap between
    the algorithm's expected loss and arm i's loss; plays
    p_t(i) proportional to E_eta[eta * exp(eta * R_i - eta^2 * V_i)].
    """

    name = "squint"

    def __init__(self, grid_size: int = DEFAULT_SQUINT_GRID):
        self.etas, self.prior = squint_prior(grid_size)

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        self.n = instance.n
        self.query_budget = instance.n
        self.rng = streams.exploitation_sampling
        self.meter = meter
        self.sum_v = np.zeros(self.n)
        self.sum_v2 = np.zeros(self.n)
        self._log_prior = np.log(self.prior * self.etas)
        meter.alloc(2 * self.n + 2 * len(self.etas))

    def distribution(self) -> np.ndarray:
        # log E_eta[eta exp(eta R - eta^2 V)] per arm, via logsumexp over the grid
        z = (
            self._log_prior[None, :]
            + self.etas[None, :] * self.sum_v[:, None]
            - (self.etas**2)[None, :] * self.sum_v2[:, None]
        )
        zmax = z.max(axis=1)
        logp = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
        w = np.exp(logp - logp.max())
        return w / w.sum()

    def step_day(self, ctx: DayContext) -> None:
        p = self.distribution()
        arm = int(np.searchsorted(np.cumsum(p), self.rng.random(), side="right"))
        ctx.play(min(arm, self.n - 1))
        losses = ctx.query_all()
        v = float(p @ losses) - losses
        self.sum_v += v
        self.sum_v2 += v * v

    def live_scalars(self) -> int:
        return 2 * self.n + 2 * len(self.etas)


# -- spec-facing constructors -------------------------------------------------

def exp3_policy(n: int, T: int, gamma: Optional[float] = None) -> Exp3Policy:
    if gamma is None:
        gamma = min(0.5, math.sqrt(n * math.log(n + 1) / T))
    return Exp3Policy(gamma)


def exp3_explore_policy(n: int, T: int, gamma: Optional[float] = None) -> Exp3ExplorePolicy:
    if gamma is None:
        gamma = min(0.5, (n / T) ** (1.0 / 3.0))
    return Exp3ExplorePolicy(gamma)


def exp3_two_query_policy(n: int, T: int, eta: Optional[float] = None) -> Exp3TwoQueryPolicy:
    if eta is None:
        eta = math.sqrt(math.log(n + 1) / T) / n
    return Exp3TwoQueryPolicy(eta)


def hedge_policy(m: int, T: int, eta: Optional[float] = None) -> HedgePolicy:
    if eta is None:
        eta = math.sqrt(math.log(m + 1) / T)
    return HedgePolicy(eta)


def squint_policy(m: int, grid_size: int = DEFAULT_SQUINT_GRID) -> SquintPolicy:
    return SquintPolicy(grid_size)
