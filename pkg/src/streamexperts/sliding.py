"""Interval-regret / sliding-window meta-algorithm with two queries per day.

Geometric-scale interval algorithms ALG_kappa (two-query stacks with horizon
2^kappa, restarted on their own 2^kappa grid) are combined by an outer
multiplicative weighting.  Exploitation plays one arm from the weight-mixture
of the sub-algorithms' distributions; the free query explores one uniformly
chosen sub-algorithm, either probing a uniform arm of its pool or observing the
arm one of its baseline nodes would play, and the importance-weighted loss
drives both the sub-algorithm's internal updates and the outer weights.

Outer weights follow w <- (1 + eta_k * r) * w with eta_k = 1/sqrt(n 2^k),
initialized and periodically reset to eta_k on the 2^k grid.  Weights are kept
in log domain; the per-step increment eta_k * r is clipped to [-1/2, 1/2] so
the multiplier stays positive (the importance-weighted r can reach polylog
magnitudes that the asymptotic constants of the analysis absorb but a literal
update cannot).
"""
from __future__ import annotations

import math
from typing import Optional

from .meter import MemoryMeter
from .models import Instance
from .pool import DESK_PROFILE, ConstantsProfile
from .protocol import AlgorithmPolicy, DayContext
from .rng import RandomStreams
from .two_query import BaselineStack

R_CLIP_NEG = -0.5  # keeps every multiplier 1 + eta_k * r strictly positive
R_CLIP_POS = 2.0   # tames single-event weight explosions without losing order
LOG_CLIP = 3.0     # additive log-weight step bound for the desk update
OUTER_ETA_SCALE = 8.0  # desk multiplier on eta_k: the literal rate cannot beat
                       # the importance-weighted noise within one window


class IntervalEnsemblePolicy(AlgorithmPolicy):
    """Two-query sliding-window policy over N_meta geometric interval scales."""

    query_budget = 2

    def __init__(
        self,
        depth: int = 0,
        profile: Optional[ConstantsProfile] = None,
        kappa_min: Optional[int] = None,
    ):
        self.depth = depth
        self.profile = profile if profile is not None else DESK_PROFILE
        self.kappa_min = kappa_min
        self.name = f"sliding_d{depth}"

    def bind(self, instance: Instance, streams: RandomStreams, meter: MemoryMeter) -> None:
        n, T = instance.n, instance.T
        self.instance = instance
        self.meter = meter
        self.explore_rng = streams.exploration_query
        self.exploit_rng = streams.exploitation_sampling
        self.pool_rng = streams.pool_filtration
        self.n_meta = max(1, math.ceil(math.log2(n * T)))
        # scales too short to fill a pool and separate it under bandit signals
        # (horizon below ~n^3) only inject noise into the outer weighting;
        # desk runs start at the first learnable scale
        kmin = (
            self.kappa_min
            if self.kappa_min is not None
            else max(5, math.ceil(3 * math.log2(n)) + 1)
        )
        kmin = max(1, min(kmin, self.n_meta - 2))
        self.kappas = list(range(kmin, self.n_meta + 1))
        scale = OUTER_ETA_SCALE if self.profile.leaf_eta_tuned else 1.0
        self.eta = {k: min(0.25, scale / math.sqrt(n * 2.0**k)) for k in self.kappas}
        self.logw = {k: math.log(self.eta[k]) for k in self.kappas}
        self.stacks: dict[int, BaselineStack] = {}
        for k in self.kappas:
            self.stacks[k] = self._fresh_stack(k, origin_day=0)
        meter.alloc(3 * len(self.kappas) + 2)  # per scale: weight, eta, counter
        self._r_bound_violations = 0

    def _fresh_stack(self, kappa: int, origin_day: int) -> BaselineStack:
        horizon = 2**kappa
        return BaselineStack(
            self.instance.n, horizon, self.depth, self.profile,
            self.pool_rng, self.meter, origin_day=origin_day,
            T_global=self.instance.T, var_scale=float(len(self.kappas)),
            leaf_b0=0.25 * self.profile.b0_leaf,  # restarted scales must warm fast
        )

    def _outer_probs(self) -> tuple[list[int], list[float]]:
        ks = self.kappas
        logw = self.logw
        hi = max(logw[k] for k in ks)
        w = [math.exp(logw[k] - hi) for k in ks]
        total = sum(w)
        return ks, [x / total for x in w]

    def exploitation_step(self, ctx: DayContext) -> tuple[int, dict[int, float]]:
        """Play one arm from the mixture sum_k q(k) v_k; the day's only loss."""
        ks, q = self._outer_probs()
        u = self.exploit_rng.random()
        acc = 0.0
        idx = len(ks) - 1
        for i, qq in enumerate(q):
            acc += qq
            if u < acc:
                idx = i
                break
        arm = self.stacks[ks[idx]].select_exploit(self.exploit_rng)
        ctx.play(arm)
        return arm, dict(zip(ks, q))

    def exploration_step(self, ctx: DayContext):
        """Free-query choice: returns (queried arm, its probability, loss, and a
        deferred credit action); the credit is applied by the caller after the
        day-t distributions have been read."""
        rng = self.explore_rng
        kappa = self.kappas[int(rng.integers(len(self.kappas)))]
        stack = self.stacks[kappa]
        nm = len(self.kappas)
        union = stack.union_pool()
        if rng.random() < 0.5 and union:
            j = union[int(rng.integers(len(union)))]
            p = 1.0 / (2.0 * nm * len(union))
            loss = ctx.query(j)
            credit = (lambda: stack.credit_arm(j, loss / p)) if loss else None
            return j, p, loss, credit
        # meta branch (also the fall-through when the pool is empty)
        slots = stack.flat_children()
        K = max(1, len(slots))
        if slots:
            node, idx = slots[int(rng.integers(len(slots)))]
            child = node.child_a if idx == 0 else node.child_b
            j = child.select(rng)
        else:
            node, idx = None, 0
            j = stack.select_exploit(rng)
        p = 1.0 / (2.0 * nm * K)
        loss = ctx.query(j)
        credit = None
        if loss and node is not None:
            credit = lambda: node.est.__setitem__(idx, node.est[idx] + loss / p)
        return j, p, loss, credit

    def step_day(self, ctx: DayContext) -> None:
        t = ctx.t
        for k in self.kappas:
            period = 2**k
            if (t - 1) % period == 0 and t > 1:
                self.stacks[k].release()
                self.stacks[k] = self._fresh_stack(k, origin_day=t - 1)
            self.stacks[k].begin_day(t)

        _, q = self.exploitation_step(ctx)
        j_t, p_t, loss, credit = self.exploration_step(ctx)

        if loss:
            # v-values are the day-t distributions: read before the credit lands
            v = {k: self.stacks[k].prob_of(j_t) for k in self.kappas}
            if credit is not None:
                credit()
            est = loss / p_t
            # relative reward of each scale against the ensemble's own play
            # probability of the queried arm
            pi = sum(q[k] * v[k] for k in self.kappas)
            if self.profile.leaf_eta_tuned:
                # desk form: apply eta_k * r additively in log space; the
                # multiplicative (1 + eta r) update has to clip so hard for
                # positivity that it degenerates into sign-voting here
                for k in self.kappas:
                    inc = self.eta[k] * est * (pi - v[k])
                    if inc > LOG_CLIP or inc < -LOG_CLIP:
                        self._r_bound_violations += 1
                        inc = LOG_CLIP if inc > 0 else -LOG_CLIP
                    self.logw[k] += inc
            else:
                # literal form: w <- (1 + eta_k * r) w
                for k in self.kappas:
                    r = est * (pi - v[k])
                    inc = self.eta[k] * r
                    if inc > R_CLIP_POS or inc < R_CLIP_NEG:
                        self._r_bound_violations += 1
                        inc = R_CLIP_POS if inc > 0 else R_CLIP_NEG
                    self.logw[k] += math.log1p(inc)

            # renormalize so the weight field sums to one: unchecked drift
            # would make long-lived scales unreachable by the eta_k resets
            hi = max(self.logw[k] for k in self.kappas)
            z = hi + math.log(sum(math.exp(self.logw[k] - hi) for k in self.kappas))
            for k in self.kappas:
                self.logw[k] -= z

        for k in self.kappas:
            if (t + 1) % (2**k) == 0:
                self.logw[k] = math.log(self.eta[k])
            self.stacks[k].end_day(t)

    def mixture(self) -> dict[int, float]:
        ks, q = self._outer_probs()
        out: dict[int, float] = {}
        for k, qq in zip(ks, q):
            for arm, p in self.stacks[k].mixture().items():
                out[arm] = out.get(arm, 0.0) + qq * p
        return out

    def ledger_fingerprint(self) -> str:
        parts = []
        for k in self.kappas:
            parts.append(f"== scale {k}")
            parts.append(self.stacks[k].ledger_fingerprint())
        return "\n".join(parts)

    def live_scalars(self) -> int:
        return 3 * len(self.kappas) + 2 + sum(s.words() for s in self.stacks.values())


def sliding_policy(
    n: int,
    T: int,
    depth: int = 0,
    profile: Optional[ConstantsProfile] = None,
) -> IntervalEnsemblePolicy:
    return IntervalEnsemblePolicy(depth=depth, profile=profile)
