"""Two-query streaming stack: the pool baseline and its recursive boosting.

The stack is a binary tree.  Leaves run the pool baseline: per epoch, sample
arms into the pool at rate 1/n, play softmax(-eta * within-epoch estimates),
and merge/evict at epoch ends.  A pair node holds a persistent child at its own
horizon and a child restarted every epoch of length B, choosing between them by
softmax over per-epoch estimated meta-losses.

Plays never update anything; all estimates are written by the free query.  On
each day a fair coin either probes a uniform arm of the union pool (credit
2|P| * loss to every resident ledger) or descends the meta tree uniformly,
observing the arm the reached subtree would play and crediting each pair on the
path (4 * loss at the top pair, doubling per level).
"""
from __future__ import annotations

import math
from bisect import bisect_right
from typing import Callable, Optional

import numpy as np

from .meter import MemoryMeter
from .models import Instance
from .pool import DESK_PROFILE, ConstantsProfile, CoverRule, PoolState
from .protocol import AlgorithmPolicy, DayContext
from .rng import RandomStreams

MIN_EPOCH = 4        # leaf epoch lengths are clamped to at least this
PAIR_MIN_EPOCH = 64  # a pair whose epoch is shorter degrades to lower depth
MIN_HORIZON = 16     # horizons below this are run as a bare leaf
PAIR_ETA_COEFF_RICH = 3.0    # pairs fed every free query commit quickly
PAIR_ETA_COEFF_STARVED = 1.0  # exploration-starved pairs use the stable rate


class StackHost:
    """Shared dirty flag: set whenever any pool's membership changes."""

    __slots__ = ("dirty",)

    def __init__(self) -> None:
        self.dirty = True


class LeafBaseline:
    """Pool baseline over one horizon: Baseline_0 of the two-query stack."""

    __slots__ = (
        "n", "horizon", "B", "eta", "host", "pool", "meter", "constants",
        "var_scale", "local_day", "_arms", "_cum", "_probs",
    )

    def __init__(
        self,
        n: int,
        horizon: int,
        B: int,
        eta: float,
        cover: CoverRule,
        constants: ConstantsProfile,
        host: StackHost,
        pool_rng: np.random.Generator,
        meter: Optional[MemoryMeter],
        origin_day: int,
        T_scale: Optional[int] = None,
        var_scale: float = 1.0,
    ):
        self.n = n
        self.horizon = horizon
        self.B = max(1, B)
        self.eta = eta
        self.host = host
        self.meter = meter
        self.constants = constants
        self.var_scale = var_scale  # per-day second moment of credits, per arm count
        self.pool = PoolState(
            n, horizon, self.B, constants, cover, pool_rng, meter,
            origin=origin_day, T_scale=T_scale,
        )
        self.local_day = 0
        self._arms: list[int] = []
        self._cum = None
        self._probs: Optional[dict[int, float]] = None
        if meter:
            meter.alloc(3)  # local day counter, epoch length, learning rate

    def begin_day(self, now: int) -> None:
        if self.local_day % self.B == 0 and self.local_day < self.horizon:
            self.pool.sample_new_arms(now)
            m = len(self.pool.arm_level)
            if self.constants.leaf_eta_tuned:
                self.eta = self.constants.leaf_eta(
                    m, self.B, self.horizon, self.var_scale * (1 + 2 * m)
                )
            self._invalidate()
            self.host.dirty = True

    def end_day(self, now: int) -> None:
        self.local_day += 1
        if self.local_day % self.B == 0 and self.local_day <= self.horizon:
            self.pool.epoch_tick(now)
            self._invalidate()
            self.host.dirty = True

    def _invalidate(self) -> None:
        self._cum = None
        self._probs = None

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
        else:
            self._cum = []

    def select(self, rng: np.random.Generator) -> int:
        if self._cum is None:
            self._rebuild()
        cum = self._cum
        if not cum:
            return int(rng.integers(self.n))  # empty-pool fallback
        k = bisect_right(cum, rng.random() * cum[-1])
        return self._arms[min(k, len(cum) - 1)]

    def probs(self) -> dict[int, float]:
        if self._cum is None:
            self._rebuild()
        if self._probs is None:
            cum = self._cum
            if cum:
                total = cum[-1]
                prev = 0.0
                probs = {}
                for a, c in zip(self._arms, cum):
                    probs[a] = (c - prev) / total
                    prev = c
                self._probs = probs
            else:
                self._probs = {}
        return self._probs

    def prob_of(self, arm: int) -> float:
        p = self.probs()
        if not p:
            return 1.0 / self.n  # fallback mass is uniform
        return p.get(arm, 0.0)

    def credit(self, arm: int, amount: float) -> None:
        entry = self.pool.entry(arm)
        entry.seg_sums[-1] += amount
        entry.play_est += amount
        self._invalidate()

    def leaves(self) -> list["LeafBaseline"]:
        return [self]

    def children(self) -> list:
        return []

    def words(self) -> int:
        return 3 + self.pool.words()

    def release(self) -> None:
        if self.meter:
            self.meter.free(self.words())

    def fingerprint(self, out: list[str]) -> None:
        out.append(f"leaf h={self.horizon} B={self.B}")
        out.append(self.pool.ledger_fingerprint())


class PairNode:
    """Baseline_k: persistent child A1 at the node's horizon, plus child A2
    restarted on each epoch of length B, mixed by softmax over per-epoch
    estimated meta-losses."""

    __slots__ = (
        "n", "horizon", "B", "eta", "host", "meter", "constants", "pair_var",
        "eta_coeff", "child_a", "child_b", "est", "local_day", "_make_restarted",
    )

    def __init__(
        self,
        n: int,
        horizon: int,
        B: int,
        eta: float,
        child_a,
        make_restarted: Callable[[int, int], object],
        host: StackHost,
        meter: Optional[MemoryMeter],
        constants: Optional[ConstantsProfile] = None,
        pair_var: float = 4.0,
        eta_coeff: float = PAIR_ETA_COEFF_RICH,
    ):
        self.n = n
        self.horizon = horizon
        self.B = max(1, B)
        self.eta = eta
        self.host = host
        self.meter = meter
        self.constants = constants
        self.pair_var = pair_var  # per-day second moment of the meta credits
        self.eta_coeff = eta_coeff
        self.child_a = child_a
        self.child_b = None
        self.est = [0.0, 0.0]
        self.local_day = 0
        self._make_restarted = make_restarted
        if meter:
            meter.alloc(5)  # two meta estimates, day counter, B, eta

    def begin_day(self, now: int) -> None:
        if self.local_day % self.B == 0 and self.local_day < self.horizon:
            self.est[0] = 0.0
            self.est[1] = 0.0
            if self.constants is not None and self.constants.leaf_eta_tuned:
                self.eta = self.constants.leaf_eta(
                    2, self.B, self.horizon, self.pair_var, coeff=self.eta_coeff
                )
            if self.child_b is not None:
                self.child_b.release()
            self.child_b = self._make_restarted(self.B, now)
            self.host.dirty = True
        self.child_a.begin_day(now)
        self.child_b.begin_day(now)

    def end_day(self, now: int) -> None:
        self.child_a.end_day(now)
        self.child_b.end_day(now)
        self.local_day += 1

    def pair_probs(self) -> tuple[float, float]:
        s0 = -self.eta * self.est[0]
        s1 = -self.eta * self.est[1]
        m = s0 if s0 > s1 else s1
        w0 = math.exp(s0 - m)
        w1 = math.exp(s1 - m)
        z = w0 + w1
        return w0 / z, w1 / z

    def select(self, rng: np.random.Generator) -> int:
        q0, _ = self.pair_probs()
        child = self.child_a if rng.random() < q0 else self.child_b
        return child.select(rng)

    def prob_of(self, arm: int) -> float:
        q0, q1 = self.pair_probs()
        return q0 * self.child_a.prob_of(arm) + q1 * self.child_b.prob_of(arm)

    def leaves(self) -> list[LeafBaseline]:
        return self.child_a.leaves() + self.child_b.leaves()

    def children(self) -> list:
        return [self.child_a, self.child_b]

    def words(self) -> int:
        return 5 + self.child_a.words() + self.child_b.words()

    def release(self) -> None:
        self.child_a.release()
        if self.child_b is not None:
            self.child_b.release()
        if self.meter:
            self.meter.free(5)

    def fingerprint(self, out: list[str]) -> None:
        out.append(f"pair h={self.horizon} B={self.B} est={self.est[0]!r},{self.est[1]!r}")
        self.child_a.fingerprint(out)
        self.child_b.fingerprint(out)


def two_query_epoch_len_raw(n: int, horizon: int, depth: int) -> float:
    """Alg-8 epoch schedule: B = n^((2-2^(k+2))/(2^(k+2)-1)) * T^(1-1/(2^(k+2)-1));
    the depth-0 baseline uses B = T^(2/3)."""
    if depth == 0:
        return horizon ** (2.0 / 3.0)
    d = 2 ** (depth + 2) - 1
    return n ** ((2.0 - 2 ** (depth + 2)) / d) * horizon ** (1.0 - 1.0 / d)


def two_query_epoch_len(n: int, horizon: int, depth: int, b0_coeff: float = 1.0) -> int:
    return max(2, round(b0_coeff * two_query_epoch_len_raw(n, horizon, depth)))


class BaselineStack:
    """A depth-k two-query stack bound to one (instance, streams, meter)."""

    def __init__(
        self,
        n: int,
        horizon: int,
        depth: int,
        profile: ConstantsProfile,
        pool_rng: np.random.Generator,
        meter: Optional[MemoryMeter],
        origin_day: int = 0,
        T_global: Optional[int] = None,
        var_scale: float = 1.0,
        leaf_b0: Optional[float] = None,
    ):
        self.n = n
        self.horizon = horizon
        self.profile = profile
        self.pool_rng = pool_rng
        self.meter = meter
        self.host = StackHost()
        self.T_global = T_global if T_global is not None else horizon
        self.var_scale = var_scale
        self.leaf_b0 = leaf_b0 if leaf_b0 is not None else profile.b0_leaf
        self.root = self._build(depth, horizon, origin_day)
        self._union: list[int] = []
        self._residency: dict[int, list[LeafBaseline]] = {}

    def _build(self, depth: int, horizon: int, origin_day: int):
        if horizon >= MIN_HORIZON:
            # use the deepest feasible level at this horizon, at most `depth`
            for d in range(depth, 0, -1):
                B = round(two_query_epoch_len(self.n, horizon, d) * self.profile.b0_pair)
                if B >= PAIR_MIN_EPOCH and B < horizon:
                    child_a = self._build(d - 1, horizon, origin_day)

                    def make_restarted(Bv: int, now: int, dd=d - 1):
                        return self._build(dd, Bv, now - 1)

                    return PairNode(
                        self.n, horizon, B, 1.0 / math.sqrt(B),
                        child_a, make_restarted, self.host, self.meter,
                        constants=self.profile, pair_var=4.0 * self.var_scale,
                    )
        B0 = two_query_epoch_len(self.n, horizon, 0, self.leaf_b0)
        cover = self.profile.two_query_cover(self.n, self.T_global)
        leaf = LeafBaseline(
            self.n, horizon, B0, 1.0 / math.sqrt(horizon), cover,
            self.profile, self.host, self.pool_rng, self.meter, origin_day,
            T_scale=self.T_global, var_scale=self.var_scale,
        )
        return leaf

    # -- day plumbing ---------------------------------------------------------
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
        """Credit every ledger (and play weight) tracking this arm."""
        if self.host.dirty:
            self._refresh_union()
        for leaf in self._residency.get(arm, ()):
            leaf.credit(arm, amount)

    def flat_children(self) -> list[tuple[PairNode, int]]:
        """All (pair, child index) slots in the tree; the meta-credit targets."""
        out: list[tuple[PairNode, int]] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, PairNode):
                out.append((node, 0))
                out.append((node, 1))
                stack.append(node.child_a)
                stack.append(node.child_b)
        return out

    # -- selection --------------------------------------------------------------
    def select_exploit(self, rng: np.random.Generator) -> int:
        return self.root.select(rng)

    def prob_of(self, arm: int) -> float:
        return self.root.prob_of(arm)

    def mixture(self) -> dict[int, float]:
        out = {}
        for arm in range(self.n):
            p = self.root.prob_of(arm)
            if p > 0:
                out[arm] = p
        return out

    def descend_meta(self, rng: np.random.Generator) -> tuple[list[tuple[PairNode, int, float]], int]:
        """Uniform descent through the pair tree for a meta-exploration day.

        Returns the credit path [(node, child index, weight)] and the arm the
        reached subtree selects; weight starts at 4 and doubles per level.
        """
        path: list[tuple[PairNode, int, float]] = []
        node = self.root
        weight = 4.0
        while isinstance(node, PairNode):
            j = int(rng.random() < 0.5)
            path.append((node, j, weight))
            node = node.child_a if j == 0 else node.child_b
            weight *= 2.0
        return path, node.select(rng)

    def words(self) -> int:
        return self.root.words()

    def release(self) -> None:
        self.root.release()

    def ledger_fingerprint(self) -> str:
        out: list[str] = []
        self.root.fingerprint(out)
        return "\n".join(out)


class TwoQueryPolicy(AlgorithmPolicy):
    """Standalone driver for the two-query stack (Baseline_k, two queries/day)."""

    query_budget = 2

    def __init__(self, depth: int = 0, profile: Optional[ConstantsProfile] = None):
        self.depth = depth
        self.profile = profile if profile is not None else DESK_PROFILE
        self.name = f"two_query_d{depth}"

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        if self.depth > 0:
            raw = two_query_epoch_len_raw(instance.n, instance.T, self.depth)
            if raw < 2.0:
                raise ValueError(
                    f"depth {self.depth} infeasible at T={instance.T}: epoch {raw:.2f} < 2"
                )
        self.instance = instance
        self.meter = meter
        self.explore_rng = streams.exploration_query
        self.exploit_rng = streams.exploitation_sampling
        self.stack = BaselineStack(
            instance.n, instance.T, self.depth, self.profile,
            streams.pool_filtration, meter,
        )

    def step_day(self, ctx: DayContext) -> None:
        t = ctx.t
        stack = self.stack
        stack.begin_day(t)
        # free query first: its credits feed today's play distribution
        if self.explore_rng.random() < 0.5:
            union = stack.union_pool()
            if union:
                j = union[int(self.explore_rng.integers(len(union)))]
                loss = ctx.query(j)
                if loss:
                    stack.credit_arm(j, 2.0 * len(union) * loss)
        else:
            path, arm = stack.descend_meta(self.explore_rng)
            if path:
                loss = ctx.query(arm)
                if loss:
                    for node, j, weight in path:
                        node.est[j] += weight * loss
        ctx.play(stack.select_exploit(self.exploit_rng))
        stack.end_day(t)

    def mixture(self) -> dict[int, float]:
        return self.stack.mixture()

    def ledger_fingerprint(self) -> str:
        return self.stack.ledger_fingerprint()

    def live_scalars(self) -> int:
        return self.stack.words()


def baseline0_two_query(
    n: int, T: int, profile: Optional[ConstantsProfile] = None
) -> TwoQueryPolicy:
    return TwoQueryPolicy(depth=0, profile=profile)


def baseline_k_two_query(
    n: int, T: int, depth: int, profile: Optional[ConstantsProfile] = None
) -> TwoQueryPolicy:
    return TwoQueryPolicy(depth=depth, profile=profile)
