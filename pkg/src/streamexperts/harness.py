"""Experiment runner: config parsing, trial farming, metric extraction, CSV
emission, log-log slope fits, and the CLI.

Every run is driven by an ExperimentConfig; all randomness flows from its base
seed.  One CSV row is written per (T, seed, W) cell in deterministic sorted
order, followed by per-T mean/std summary rows.  Columns are fixed:

    kind,policy,n,T,W,seed,cumulative_regret,window_regret,interval_regret,
    peak_memory_words,wall_ms,error

wall_ms is only filled when timing is enabled (it would break byte-identical
reruns otherwise).
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import classic, models, oracles, random_order, single_query, sliding, two_query
from .meter import MemoryMeter
from .models import Instance
from .pool import PROFILES, ConstantsProfile
from .protocol import Trace, run_policy
from .rng import RandomStreams, mix_seed

CSV_COLUMNS = (
    "kind", "policy", "n", "T", "W", "seed",
    "cumulative_regret", "window_regret", "interval_regret",
    "peak_memory_words", "wall_ms", "error",
)

POLICY_NAMES = (
    "exp3", "exp3_explore", "exp3_two_query", "hedge", "squint",
    "single_query", "boost_single_query", "two_query", "sliding", "random_order",
)

MODEL_NAMES = ("hidden_best", "iid", "two_phase", "hot_streak", "random_order_best")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    policy: str
    n: int
    T_list: list[int]
    model: str = "hidden_best"
    seeds: int = 1
    seed_list: Optional[list[int]] = None
    W_list: list[int] = field(default_factory=list)
    with_interval: bool = False
    profile: str = "desk"
    base_seed: int = 20250801
    depth: int = 0
    gamma: Optional[float] = None
    eta: Optional[float] = None
    gap: float = 0.5
    romb_gamma: float = 1.0
    out: Optional[str] = None
    timing: bool = False
    dump_pool: bool = False

    def validate(self) -> None:
        if self.policy not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {self.policy!r}; known: {POLICY_NAMES}")
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {self.model!r}; known: {MODEL_NAMES}")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.n < 1 or not self.T_list or min(self.T_list) < 1:
            raise ConfigError("n and every T must be positive")
        if self.seed_list is None and self.seeds < 0:
            raise ConfigError("seeds must be >= 0")
        for W in self.W_list:
            if not (1 <= W <= min(self.T_list)):
                raise ConfigError(f"window {W} outside [1, min T]")

    def seed_indices(self) -> list[int]:
        return list(self.seed_list) if self.seed_list is not None else list(range(self.seeds))


def build_model(cfg: ExperimentConfig, T: int) -> models.LossModel:
    if cfg.model == "hidden_best":
        return models.HiddenBest(gap=cfg.gap, best_index=0)
    if cfg.model == "iid":
        means = tuple(0.25 + 0.5 * k / max(1, cfg.n - 1) for k in range(cfg.n))
        return models.IID(means=means)
    if cfg.model == "two_phase":
        hi, lo = 0.5 + cfg.gap / 2, 0.5 - cfg.gap / 2
        before = tuple(lo if k == 0 else hi for k in range(cfg.n))
        after = tuple(lo if k == 1 else hi for k in range(cfg.n))
        return models.TwoPhase(switch_day=T // 2 + 1, before=before, after=after)
    if cfg.model == "hot_streak":
        streak = max(4, int(math.sqrt(T / cfg.n)))
        return models.HotStreak(streak_len=streak, streak_rate=0.05, off_rate=0.9)
    if cfg.model == "random_order_best":
        return models.RandomOrderBest(gamma=cfg.romb_gamma)
    raise ConfigError(f"unknown model {cfg.model!r}")


def build_policy(
    name: str,
    n: int,
    T: int,
    profile: ConstantsProfile,
    depth: int = 0,
    gamma: Optional[float] = None,
    eta: Optional[float] = None,
):
    if name == "exp3":
        return classic.exp3_policy(n, T, gamma)
    if name == "exp3_explore":
        return classic.exp3_explore_policy(n, T, gamma)
    if name == "exp3_two_query":
        return classic.exp3_two_query_policy(n, T, eta)
    if name == "hedge":
        return classic.hedge_policy(n, T, eta)
    if name == "squint":
        return classic.squint_policy(n)
    if name == "single_query":
        return single_query.baseline_single_query(n, T, gamma=gamma, profile=profile)
    if name == "boost_single_query":
        return single_query.boost_single_query(n, T, depth, profile=profile)
    if name == "two_query":
        return two_query.baseline_k_two_query(n, T, depth, profile=profile)
    if name == "sliding":
        return sliding.sliding_policy(n, T, depth, profile=profile)
    if name == "random_order":
        return random_order.random_order_policy(n, T, profile=profile)
    raise ConfigError(f"unknown policy {name!r}")


def cell_instance(cfg: ExperimentConfig, T: int, seed_idx: int) -> Instance:
    seed = mix_seed(cfg.base_seed, f"inst:{cfg.n}:{T}:{seed_idx}")
    return models.build_instance(build_model(cfg, T), cfg.n, T, seed)


def cell_streams(cfg: ExperimentConfig, T: int, seed_idx: int) -> RandomStreams:
    return RandomStreams.from_seed(mix_seed(cfg.base_seed, f"run:{cfg.n}:{T}:{seed_idx}"))


def run_cell(cfg: ExperimentConfig, T: int, seed_idx: int) -> list[dict]:
    """Run one (T, seed) cell; one output row per requested window (or one)."""
    prof = PROFILES[cfg.profile]
    t0 = time.perf_counter()
    base = {
        "kind": "cell", "policy": cfg.policy, "n": cfg.n, "T": T,
        "seed": seed_idx, "error": "",
    }
    try:
        instance = cell_instance(cfg, T, seed_idx)
        policy = build_policy(
            cfg.policy, cfg.n, T, prof, depth=cfg.depth, gamma=cfg.gamma, eta=cfg.eta
        )
        trace = run_policy(policy, instance, cell_streams(cfg, T, seed_idx))
        cum = oracles.cumulative_regret(trace, instance)
        interval = (
            oracles.interval_regret(trace, instance)[0] if cfg.with_interval else ""
        )
        wall = f"{(time.perf_counter() - t0) * 1000:.1f}" if cfg.timing else ""
        if cfg.dump_pool and hasattr(policy, "dump_pool_state"):
            print(policy.dump_pool_state(), file=sys.stderr)
        rows = []
        for W in cfg.W_list or [""]:
            rows.append(
                base | {
                    "W": W,
                    "cumulative_regret": cum,
                    "window_regret": (
                        oracles.sliding_window_regret(trace, instance, W) if W else ""
                    ),
                    "interval_regret": interval,
                    "peak_memory_words": trace.peak_memory_words,
                    "wall_ms": wall,
                }
            )
        return rows
    except Exception as exc:  # noqa: BLE001 - cell errors land in the error column
        return [
            base | {
                "W": W, "cumulative_regret": "", "window_regret": "",
                "interval_regret": "", "peak_memory_words": "", "wall_ms": "",
                "error": f"{type(exc).__name__}: {exc}",
            }
            for W in (cfg.W_list or [""])
        ]


def _summary_rows(cfg: ExperimentConfig, rows: list[dict]) -> list[dict]:
    out = []
    for T in cfg.T_list:
        for W in cfg.W_list or [""]:
            vals = [
                float(r["cumulative_regret"])
                for r in rows
                if r["T"] == T and r["W"] == W and r["cumulative_regret"] != ""
            ]
            if not vals:
                continue
            for kind, v in (("mean", np.mean(vals)), ("std", np.std(vals))):
                out.append({
                    "kind": kind, "policy": cfg.policy, "n": cfg.n, "T": T, "W": W,
                    "seed": "", "cumulative_regret": float(v), "window_regret": "",
                    "interval_regret": "", "peak_memory_words": "", "wall_ms": "",
                    "error": "",
                })
    return out


def run_experiment(cfg: ExperimentConfig) -> list[dict]:
    """All cell rows in deterministic (T, seed, W) order, plus summary rows."""
    cfg.validate()
    rows: list[dict] = []
    for T in sorted(cfg.T_list):
        for seed_idx in cfg.seed_indices():
            rows.extend(run_cell(cfg, T, seed_idx))
    rows.sort(key=lambda r: (r["T"], r["seed"], r["W"] if r["W"] != "" else -1))
    return rows + _summary_rows(cfg, rows)


def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join(str(r.get(c, "")) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


@dataclass
class SlopeFit:
    points: list[tuple[float, float]]  # (log2 T, log2 mean regret)
    slope: float
    intercept: float
    r2: float


def fit_slope(pairs: Sequence[tuple[float, float]]) -> SlopeFit:
    """OLS on (log2 T, log2 max(regret, 1)); needs at least 3 horizon points."""
    if len(pairs) < 3:
        raise ValueError(f"need >= 3 points for a slope, got {len(pairs)}")
    pts = [(math.log2(T), math.log2(max(1.0, reg))) for T, reg in pairs]
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(points=pts, slope=float(slope), intercept=float(intercept), r2=r2)


def mean_regret_curve(cfg: ExperimentConfig) -> list[tuple[int, float]]:
    """(T, mean cumulative regret) per horizon, from a fresh experiment run."""
    rows = run_experiment(cfg)
    out = []
    for T in sorted(cfg.T_list):
        vals = [
            float(r["cumulative_regret"])
            for r in rows
            if r["kind"] == "cell" and r["T"] == T and r["cumulative_regret"] != ""
        ]
        if vals:
            out.append((T, float(np.mean(vals))))
    return out


# -- CLI -------------------------------------------------------------------------

def _parse_config_file(path: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line (want key=value): {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    raw: dict[str, str] = {}
    if args.config:
        raw = _parse_config_file(args.config)

    def pick(flag, key, cast, default):
        if flag is not None:
            return flag
        if key in raw:
            return cast(raw[key])
        return default

    cfg = ExperimentConfig(
        policy=pick(args.policy, "policy", str, "exp3"),
        n=pick(args.n, "n", int, 8),
        T_list=pick(args.T, "T", _int_list, [4096]),
        model=pick(args.model, "model", str, "hidden_best"),
        seeds=pick(args.seeds, "seeds", int, 1),
        seed_list=pick(args.seed_list, "seed_list", _int_list, None),
        W_list=pick(args.W, "W", _int_list, []),
        profile=pick(args.profile, "profile", str, "desk"),
        base_seed=pick(args.base_seed, "base_seed", int, 20250801),
        depth=pick(args.depth, "depth", int, 0),
        gamma=pick(args.gamma, "gamma", float, None),
        eta=pick(args.eta, "eta", float, None),
        gap=pick(args.gap, "gap", float, 0.5),
        romb_gamma=pick(args.romb_gamma, "romb_gamma", float, 1.0),
        out=pick(args.out, "out", str, None),
        timing=bool(args.timing or raw.get("timing") == "1"),
        dump_pool=bool(args.dump_pool or raw.get("dump_pool") == "1"),
        with_interval=bool(args.interval or raw.get("interval") == "1"),
    )
    cfg.validate()
    return cfg


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="streamexperts",
        description="Memory-bounded online-learning benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run one experiment grid and emit CSV")
    runp.add_argument("--config", help="key=value config file; flags override")
    runp.add_argument("--policy", choices=POLICY_NAMES)
    runp.add_argument("--n", type=int)
    runp.add_argument("--T", type=_int_list, help="horizon list, e.g. '4096,8192'")
    runp.add_argument("--W", type=_int_list, help="sliding-window sizes")
    runp.add_argument("--seeds", type=int, help="number of seeds (0..k-1)")
    runp.add_argument("--seed-list", dest="seed_list", type=_int_list)
    runp.add_argument("--model", choices=MODEL_NAMES)
    runp.add_argument("--profile", choices=sorted(PROFILES))
    runp.add_argument("--out", help="CSV output path (default stdout)")
    runp.add_argument("--depth", type=int)
    runp.add_argument("--gamma", type=float)
    runp.add_argument("--eta", type=float)
    runp.add_argument("--gap", type=float)
    runp.add_argument("--romb-gamma", dest="romb_gamma", type=float)
    runp.add_argument("--base-seed", dest="base_seed", type=int)
    runp.add_argument("--interval", action="store_true", help="compute interval regret")
    runp.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    runp.add_argument("--dump-pool", dest="dump_pool", action="store_true",
                      help="dump pool state to stderr after each cell")
    runp.add_argument("--slope", action="store_true",
                      help="print the fitted log-log regret slope to stderr")

    accp = sub.add_parser("acceptance", help="run the acceptance suite")
    accp.add_argument("--out", help="write the machine-readable report here")
    accp.add_argument("--quick", action="store_true",
                      help="reduced seed counts (smoke test; not the gate)")
    accp.add_argument("--only", type=str, default=None,
                      help="comma-separated criterion numbers to run")

    args = parser.parse_args(argv)

    if args.command == "acceptance":
        from .acceptance import run_acceptance

        only = [int(x) for x in args.only.split(",")] if args.only else None
        report = run_acceptance(quick=args.quick, only=only, out_path=args.out)
        return 0 if report.all_passed else 1

    try:
        cfg = config_from_args(args)
    except (ConfigError, models.ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    rows = run_experiment(cfg)
    text = rows_to_csv(rows)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.slope and len(cfg.T_list) >= 3:
        curve = [
            (T, v) for T, v in (
                (r["T"], r["cumulative_regret"])
                for r in rows
                if r["kind"] == "mean" and r["W"] == (cfg.W_list or [""])[0]
            )
        ]
        fit = fit_slope(curve)
        print(f"slope={fit.slope:.3f} r2={fit.r2:.3f}", file=sys.stderr)
    if any(r["error"] for r in rows):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
