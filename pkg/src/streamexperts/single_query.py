"""Single-query bandit algorithms: the pool baseline and recursive boosting.

The baseline runs EXP3 over the pool inside each epoch (mixing softmax weights
with uniform exploration at rate gamma = (n/B)^(1/3)), credits the played
arm's importance-weighted loss to both the within-epoch weights and the
lifespan ledger, and prunes with the approximate cover at rho = 2/3.

The boosting variant replaces the per-day EXP3 draw with two exploration
coins: with probability gamma_arm it plays a uniform arm of the union pool
(credit |P|/gamma_arm * loss), with probability gamma_meta it follows a
uniformly descended meta subtree (credit 2/gamma_meta * loss at the top pair,
doubling per level), and otherwise it exploits the softmax chain without
updating anything.  Eviction uses the relaxed cover, whose slack scales as
sqrt(|D|/gamma_arm).
"""
from __future__ import annotations

import math
from bisect import bisect_right
from typing import Optional

import numpy as np

from .meter import MemoryMeter
from .models import Instance
from .pool import DESK_PROFILE, ConstantsProfile, PoolState
from .protocol import AlgorithmPolicy, DayContext
from .rng import RandomStreams
from .two_query import (
    MIN_HORIZON,
    PAIR_ETA_COEFF_STARVED,
    PAIR_MIN_EPOCH,
    LeafBaseline,
    PairNode,
    StackHost,
)

MAX_BOOST_DEPTH = 6
PAIR_MIN_PROBES = 8.0  # a restarted level needs this many probes per arm to learn


def clamp_gamma(g: float) -> float:
    return min(0.5, max(1e-4, g))


class SingleQueryBaselinePolicy(AlgorithmPolicy):
    """The single-query pool baseline: per-epoch EXP3 over the sampled pool."""

    query_budget = 1

    def __init__(
        self,
        B: Optional[int] = None,
        gamma: Optional[float] = None,
        profile: Optional[ConstantsProfile] = None,
    ):
        self.B_param = B
        self.gamma_param = gamma
        self.profile = profile if profile is not None else DESK_PROFILE
        self.name = "single_query_baseline"

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        n, T = instance.n, instance.T
        self.instance = instance
        self.meter = meter
        self.rng = streams.arm_sampling
        self.B = (
            self.B_param
            if self.B_param
            else max(2, round(self.profile.b0_alg4 * T**0.75))
        )
        self.gamma = (
            self.gamma_param
            if self.gamma_param is not None
            else clamp_gamma((n / self.B) ** (1.0 / 3.0))
        )
        self.eta = self.gamma  # replaced by the tuned rate at each epoch start
        cover = self.profile.approximate_cover(n, T, rho=2.0 / 3.0)
        self.pool = PoolState(
            n, T, self.B, self.profile, cover, streams.pool_filtration, meter
        )
        self.day = 0
        self._arms: list[int] = []
        self._cum = None
        meter.alloc(4)  # day counter, epoch length, gamma, learning rate

    def _invalidate(self) -> None:
        self._cum = None

    def _rebuild(self) -> None:
        pool = self.pool
        eta = self.eta
        arms = list(pool.arm_level)
        self._arms = arms
        if arms:
            entry = pool.entry
            scores = [-eta * entry(a).play_est for a in arms]
            hi = max(scores)
            total = 0.0
            cum = []
            for s in scores:
                total += math.exp(s - hi)
                cum.append(total)
            self._cum = cum

    def step_day(self, ctx: DayContext) -> None:
        t = ctx.t
        if self.day % self.B == 0:
            self.pool.sample_new_arms(t)
            m = len(self.pool.arm_level)
            if self.profile.leaf_eta_tuned:
                # update rate tuned to the fake-loss second moment ~ m/gamma;
                # the exploration mixing rate stays gamma
                self.eta = self.profile.leaf_eta(
                    m, self.B, self.instance.T, max(1, m) / self.gamma
                )
            self._invalidate()
        if self._cum is None:
            self._rebuild()
        arms = self._arms
        if not arms:
            ctx.play(int(self.rng.integers(self.instance.n)))  # no ledger write
        else:
            m = len(arms)
            g = self.gamma
            cum = self._cum
            total = cum[-1]
            if self.rng.random() < g:
                k = int(self.rng.integers(m))
            else:
                k = min(bisect_right(cum, self.rng.random() * total), m - 1)
            arm = arms[k]
            loss = ctx.play(arm)
            if loss:
                w = cum[k] - (cum[k - 1] if k else 0.0)
                p = (1.0 - g) * (w / total) + g / m
                fake = loss / p
                entry = self.pool.entry(arm)
                entry.seg_sums[-1] += fake
                entry.play_est += fake
                self._invalidate()
        self.day += 1
        if self.day % self.B == 0:
            self.pool.epoch_tick(t)
            self._invalidate()

    def ledger_fingerprint(self) -> str:
        return self.pool.ledger_fingerprint()

    def dump_pool_state(self) -> str:
        return self.pool.dump()

    def live_scalars(self) -> int:
        return 4 + self.pool.words()


def boost_fraction_exponent(k: int) -> float:
    """Epoch-length exponent F(k) = 7(3*7^k - 3^k) / (3*7^(k+1) - 3^(k+1))."""
    return 7.0 * (3.0 * 7.0**k - 3.0**k) / (3.0 * 7.0 ** (k + 1) - 3.0 ** (k + 1))


def boost_regret_exponent(k: int) -> float:
    """Regret exponent G(k) = 2*7^(k+1) / (3*7^(k+1) - 3^(k+1))."""
    return 2.0 * 7.0 ** (k + 1) / (3.0 * 7.0 ** (k + 1) - 3.0 ** (k + 1))


def boost_epoch_len_raw(n: int, horizon: int, depth: int) -> float:
    """B_k = n^(-1/G(k-1)) * H^F(k); the depth-0 leaf uses B_0 = H^(7/9)."""
    if depth == 0:
        return horizon ** boost_fraction_exponent(0)
    return n ** (-1.0 / boost_regret_exponent(depth - 1)) * horizon ** boost_fraction_exponent(depth)


def boost_epoch_len(n: int, horizon: int, depth: int, b0_coeff: float = 1.0) -> int:
    return max(2, round(b0_coeff * boost_epoch_len_raw(n, horizon, depth)))


class BoostStack:
    """Depth-k single-query boosting tree; leaves and pairs are shared with the
    two-query stack, but all exploration is driven from the top level."""

    def __init__(
        self,
        n: int,
        horizon: int,
        depth: int,
        gamma_arm: float,
        gamma_meta: float,
        profile: ConstantsProfile,
        pool_rng: np.random.Generator,
        meter: Optional[MemoryMeter],
        origin_day: int = 0,
        T_global: Optional[int] = None,
    ):
        self.n = n
        self.horizon = horizon
        self.gamma_arm = gamma_arm
        self.gamma_meta = gamma_meta
        self.profile = profile
        self.pool_rng = pool_rng
        self.meter = meter
        self.host = StackHost()
        self.T_global = T_global if T_global is not None else horizon
        self.root = self._build(depth, horizon, origin_day)
        self._union: list[int] = []
        self._residency: dict[int, list[LeafBaseline]] = {}

    def _build(self, depth: int, horizon: int, origin_day: int):
        if horizon >= MIN_HORIZON:
            # a pair is only useful if its restarted child sees enough arm
            # probes (gamma_arm * B / n per arm) to separate its pool
            b_floor = max(PAIR_MIN_EPOCH, PAIR_MIN_PROBES * self.n / self.gamma_arm)
            for d in range(depth, 0, -1):
                B = boost_epoch_len(self.n, horizon, d, self.profile.b0_pair)
                if B >= b_floor and B < horizon:
                    child_a = self._build(d - 1, horizon, origin_day)

                    def make_restarted(Bv: int, now: int, dd=d - 1):
                        return self._build(dd, Bv, now - 1)

                    return PairNode(
                        self.n, horizon, B, self.gamma_meta,
                        child_a, make_restarted, self.host, self.meter,
                        constants=self.profile, pair_var=2.0 / self.gamma_meta,
                        eta_coeff=PAIR_ETA_COEFF_STARVED,
                    )
        B0 = boost_epoch_len(self.n, horizon, 0, self.profile.b0_boost_leaf)
        cover = self.profile.relaxed_cover(self.n, self.T_global, self.gamma_arm)
        return LeafBaseline(
            self.n, horizon, B0, self.gamma_arm, cover,
            self.profile, self.host, self.pool_rng, self.meter, origin_day,
            T_scale=self.T_global, var_scale=0.5 / self.gamma_arm,
        )

    def begin_day(self, now: int) -> None:
        self.root.begin_day(now)

    def end_day(self, now: int) -> None:
        self.root.end_day(now)

    def _refresh_union(self) -> None:
        residency: dict[int, list[LeafBaseline]] = {}
        for leaf in self.root.leaves():
            for arm in leaf.pool.arm_level:
                residency.setdefault(arm, []).append(leaf)
        self._residency = residency
        self._union = list(residency)
        self.host.dirty = False

    def union_pool(self) -> list[int]:
        if self.host.dirty:
            self._refresh_union()
        return self._union

    def credit_arm(self, arm: int, amount: float) -> None:
        if self.host.dirty:
            self._refresh_union()
        for leaf in self._residency.get(arm, ()):
            leaf.credit(arm, amount)

    def select_exploit(self, rng: np.random.Generator) -> int:
        return self.root.select(rng)

    def descend_meta(self, rng: np.random.Generator) -> tuple[list, int]:
        """Uniform pair descent; weight starts at 2/gamma_meta, doubling per level."""
        path = []
        node = self.root
        weight = 2.0 / self.gamma_meta
        while isinstance(node, PairNode):
            j = int(rng.random() < 0.5)
            path.append((node, j, weight))
            node = node.child_a if j == 0 else node.child_b
            weight *= 2.0
        return path, node.select(rng)

    def words(self) -> int:
        return self.root.words()

    def ledger_fingerprint(self) -> str:
        out: list[str] = []
        self.root.fingerprint(out)
        return "\n".join(out)


class BoostSingleQueryPolicy(AlgorithmPolicy):
    """Single-query recursive boosting: one query per day, depth-k meta tree."""

    query_budget = 1

    def __init__(
        self,
        depth: int,
        gamma_arm: Optional[float] = None,
        gamma_meta: Optional[float] = None,
        profile: Optional[ConstantsProfile] = None,
    ):
        if depth > MAX_BOOST_DEPTH:
            raise ValueError(f"depth {depth} exceeds max {MAX_BOOST_DEPTH}")
        self.depth = depth
        self.gamma_arm_param = gamma_arm
        self.gamma_meta_param = gamma_meta
        self.profile = profile if profile is not None else DESK_PROFILE
        self.name = f"boost_single_query_d{depth}"

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        n, T = instance.n, instance.T
        if self.depth > 0 and boost_epoch_len_raw(n, T, self.depth) < 2.0:
            raise ValueError(f"depth {self.depth} infeasible at T={T}: top epoch < 2")
        self.instance = instance
        self.meter = meter
        g = clamp_gamma(self.profile.gamma_scale * T ** (-1.0 / 3.0))
        self.gamma_arm = self.gamma_arm_param if self.gamma_arm_param is not None else g
        self.gamma_meta = self.gamma_meta_param if self.gamma_meta_param is not None else g
        self.explore_rng = streams.exploration_query
        self.exploit_rng = streams.exploitation_sampling
        self.stack = BoostStack(
            n, T, self.depth, self.gamma_arm, self.gamma_meta,
            self.profile, streams.pool_filtration, meter,
        )

    def step_day(self, ctx: DayContext) -> None:
        t = ctx.t
        stack = self.stack
        stack.begin_day(t)
        u = self.explore_rng.random()
        if u < self.gamma_arm:
            union = stack.union_pool()
            if union:
                arm = union[int(self.explore_rng.integers(len(union)))]
                loss = ctx.play(arm)
                if loss:
                    stack.credit_arm(arm, len(union) / self.gamma_arm * loss)
            else:
                ctx.play(int(self.explore_rng.integers(self.instance.n)))
        elif u < self.gamma_arm + self.gamma_meta:
            path, arm = stack.descend_meta(self.explore_rng)
            loss = ctx.play(arm)
            if loss:
                for node, j, weight in path:
                    node.est[j] += weight * loss
        else:
            ctx.play(stack.select_exploit(self.exploit_rng))
        stack.end_day(t)

    def ledger_fingerprint(self) -> str:
        return self.stack.ledger_fingerprint()

    def live_scalars(self) -> int:
        return self.stack.words()


# -- spec-facing constructors ---------------------------------------------------

def baseline_single_query(
    n: int,
    T: int,
    B: Optional[int] = None,
    gamma: Optional[float] = None,
    profile: Optional[ConstantsProfile] = None,
) -> SingleQueryBaselinePolicy:
    return SingleQueryBaselinePolicy(B=B, gamma=gamma, profile=profile)


def boost_single_query(
    n: int,
    T: int,
    depth: int,
    profile: Optional[ConstantsProfile] = None,
) -> BoostSingleQueryPolicy:
    return BoostSingleQueryPolicy(depth=depth, profile=profile)
