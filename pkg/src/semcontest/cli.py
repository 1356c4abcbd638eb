"""Command-line experiment runner.

Every subcommand writes comma-separated files whose first line is a ``#``
metadata comment (config hash and seed) followed by a header row.
"""
from __future__ import annotations

import argparse
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import env as envmod
from .config import config_hash, load_config
from .contest import (AwardProbe, RewardScheme, best_response_from_table,
                      equilibrium_from_tables)
from .drl import Agent, evaluate, train
from .errors import ConfigError, InfeasibleError, SemContestError
from .nn import load_checkpoint, save_checkpoint
from .quality import REWARD, SIMILARITY, SemanticTask, SemanticType, combined_quality

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_RUNTIME = 4

SWEEP_GAIN = 1e-4
SWEEP_POOL = 100.0
SCHEMES = {
    "winner_takes_all": (1.0, 0.0, 0.0, 0.0),
    "last_place_only": (0.0, 0.0, 0.0, 1.0),
    "even": (0.25, 0.25, 0.25, 0.25),
    "decreasing": (0.4, 0.3, 0.2, 0.1),
}
GAINS = (1e-3, 1e-4, 1e-5, 1e-6)
POOLS = (5.0, 10.0, 20.0, 50.0, 100.0)
Z_LEVELS = range(1, 21)
METHODS = ("agent", "baseline_average", "baseline_random", "oracle")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class CsvOut:
    def __init__(self, header: list, meta: str):
        self.buf = io.StringIO()
        self.buf.write(f"# {meta}\n")
        self.buf.write(",".join(header) + "\n")

    def row(self, *values) -> None:
        self.buf.write(",".join(_fmt(v) for v in values) + "\n")

    def write(self, path: Path) -> None:
        path.write_text(self.buf.getvalue(), encoding="utf-8")


def _scheme_for(fractions, n: int, pool: float):
    """Valid scheme for descending fractions, otherwise a sweep-only probe."""
    if len(fractions) != n:
        raise ConfigError(f"award schemes have {len(fractions)} positions; n_tasks is {n}")
    if all(a >= b for a, b in zip(fractions, fractions[1:])):
        return RewardScheme.from_fractions(fractions, pool)
    return AwardProbe.from_fractions(fractions, pool)


def _sweep_tables(cfg: envmod.EnvConfig, gain: float, task_types=None) -> list:
    cfg = cfg if task_types is None else cfg.replace(task_types=tuple(task_types))
    return envmod.Tables(cfg, np.full(cfg.n_tasks, gain)).rows


def quality_sweep(cfg, args, meta, out: Path) -> list:
    weights = cfg.weights()
    csv = CsvOut(["type", "z", "q_reward", "q_sim", "q"], meta)
    series = {}
    for st in SemanticType:
        curve = next((t.curve for t in cfg.tasks() if t.semantic_type == st), None)
        if curve is None:
            curve = SemanticTask(st).curve
            if not cfg.depth_bump:
                curve = curve.without_bump()
        for z in Z_LEVELS:
            qr, qs = curve.value(REWARD, float(z)), curve.value(SIMILARITY, float(z))
            q = combined_quality(weights, qr, qs)
            csv.row(st.value, z, qr, qs, q)
            series.setdefault(st.value, []).append(q)
    path = out / "quality_sweep.csv"
    csv.write(path)
    if args.plot:
        _plot(out / "quality_sweep.svg", list(Z_LEVELS), series, "compression level Z",
              "combined quality")
    return [path]


def reward_sweep(cfg, args, meta, out: Path) -> list:
    tables = _sweep_tables(cfg, SWEEP_GAIN)
    prior = cfg.prior()
    csv = CsvOut(["scheme", "task", "type", "best_response_mw", "projected_mw", "quality"],
                 meta)
    series = {}
    for name, fractions in SCHEMES.items():
        scheme = _scheme_for(fractions, cfg.n_tasks, SWEEP_POOL)
        raw = [best_response_from_table(q, pts, scheme, prior, cfg.mode) for q, pts in tables]
        proj = equilibrium_from_tables(tables, scheme, prior, cfg.power_step, cfg.mode,
                                       cfg.power_total)
        for i, ((q, pts), p, pp) in enumerate(zip(tables, raw, proj)):
            quality = float(np.interp(p, pts, q))
            csv.row(name, i, cfg.task_types[i], p, pp, quality)
        series[name] = raw
    path = out / "reward_sweep.csv"
    csv.write(path)
    if args.plot:
        _plot(out / "reward_sweep.svg", list(range(cfg.n_tasks)), series, "task",
              "best-response power (mW)")
    return [path]


def gain_sweep(cfg, args, meta, out: Path) -> list:
    canny = ("canny",) * cfg.n_tasks
    prior = cfg.prior()
    csv = CsvOut(["gain", "scheme", "task", "best_response_mw", "projected_mw"], meta)
    for gain in GAINS:
        tables = _sweep_tables(cfg, gain, canny)
        for name, fractions in SCHEMES.items():
            scheme = _scheme_for(fractions, cfg.n_tasks, SWEEP_POOL)
            proj = equilibrium_from_tables(tables, scheme, prior, cfg.power_step, cfg.mode,
                                           cfg.power_total)
            for i, (q, pts) in enumerate(tables):
                p = best_response_from_table(q, pts, scheme, prior, cfg.mode)
                csv.row(gain, name, i, p, proj[i])
    path = out / "gain_sweep.csv"
    csv.write(path)
    return [path]


def pool_sweep(cfg, args, meta, out: Path) -> list:
    tables = _sweep_tables(cfg, SWEEP_GAIN)
    prior = cfg.prior()
    csv = CsvOut(["pool", "task", "type", "best_response_mw", "quality"], meta)
    series = {t: [] for t in cfg.task_types}
    for pool in POOLS:
        scheme = _scheme_for(SCHEMES["decreasing"], cfg.n_tasks, pool)
        for i, (q, pts) in enumerate(tables):
            p = best_response_from_table(q, pts, scheme, prior, cfg.mode)
            csv.row(pool, i, cfg.task_types[i], p, float(np.interp(p, pts, q)))
            series[cfg.task_types[i]].append(p)
    path = out / "pool_sweep.csv"
    csv.write(path)
    if args.plot:
        _plot(out / "pool_sweep.svg", list(POOLS), series, "award pool", "power (mW)")
    return [path]


def _coarse_grids(cfg: envmod.EnvConfig, contract_levels, fraction_levels) -> list:
    return [list(contract_levels)] * 4 + [list(fraction_levels)] * cfg.n_tasks


def _parse_levels(text: str) -> list:
    try:
        levels = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad level list {text!r}") from exc
    if not levels or any(not 0 <= v <= 1 for v in levels):
        raise ConfigError(f"levels must be values in [0, 1], got {text!r}")
    return levels


def train_cmd(cfg, args, meta, out: Path, agent_cfg) -> list:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = sorted(set(methods) - set(METHODS))
    if bad or not methods:
        raise ConfigError(f"unknown method(s) {bad}; choose from {METHODS}")
    agent_cfg = agent_cfg.replace(seed=args.seed)
    environment = envmod.Env(cfg, seed=args.seed)
    agent = Agent(cfg.state_dim, cfg.action_dim, agent_cfg)
    curve = train(agent, environment)
    curve_csv = CsvOut(["episode", "mean_reward", "std"], meta)
    for e, m, s in zip(curve.episodes, curve.mean_reward, curve.std_reward):
        curve_csv.row(e, m, s)
    curve_csv.write(out / "learning_curve.csv")
    save_checkpoint(agent.actor, out / "actor.ckpt")
    save_checkpoint(agent.critic, out / "critic.ckpt")

    k = max(1, round(0.2 * len(curve))) if len(curve) else 0
    snaps = curve.snapshots[-k:] if k else []
    summary = CsvOut(["method", "mean_reward", "std", "episodes"], meta)
    if snaps:
        grids = _coarse_grids(cfg, _parse_levels(args.contract_levels),
                              _parse_levels(args.fraction_levels))
        rng = np.random.default_rng(args.seed)
        for method in methods:
            if method == "agent":
                vals = [r for ep in curve.step_rewards[-k:] for r in ep]
            elif method == "baseline_average":
                vals = [envmod.baseline_average(cfg, s).reward for s in snaps]
            elif method == "baseline_random":
                vals = [envmod.baseline_random(cfg, s, rng).reward for s in snaps]
            else:
                vals = [envmod.oracle_best(cfg, s, grids, args.max_candidates).reward
                        for s in snaps]
            summary.row(method, float(np.mean(vals)), float(np.std(vals)), k)
    summary.write(out / "summary.csv")
    if args.plot and len(curve):
        _plot(out / "learning_curve.svg", curve.episodes, {"agent": curve.mean_reward},
              "episode", "mean per-step reward")
    return [out / "learning_curve.csv", out / "summary.csv"]


def oracle_cmd(cfg, args, meta, out: Path) -> list:
    state = envmod.reset(cfg, args.seed)
    grids = _coarse_grids(cfg, _parse_levels(args.contract_levels),
                          _parse_levels(args.fraction_levels))
    best = envmod.oracle_best(cfg, state, grids, args.max_candidates)
    avg = envmod.baseline_average(cfg, state)
    rnd = envmod.baseline_random(cfg, state, args.seed)
    csv = CsvOut(["method", "reward", "action", "powers"], meta)
    for name, outcome, action in (("oracle", best.outcome, best.action),
                                  ("baseline_average", avg, None),
                                  ("baseline_random", rnd, None)):
        act = "" if action is None else " ".join(_fmt(a) for a in action)
        csv.row(name, outcome.reward, act, " ".join(_fmt(p) for p in outcome.powers))
    path = out / "oracle.csv"
    csv.write(path)
    return [path]


def eval_cmd(cfg, args, meta, out: Path, agent_cfg) -> list:
    if args.checkpoint is None:
        raise ConfigError("eval needs --checkpoint <dir> holding actor.ckpt and critic.ckpt")
    ckpt = Path(args.checkpoint)
    agent = Agent(cfg.state_dim, cfg.action_dim, agent_cfg.replace(seed=args.seed))
    try:
        actor = load_checkpoint(ckpt / "actor.ckpt")
        critic = load_checkpoint(ckpt / "critic.ckpt")
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint: {exc}") from exc
    if actor.sizes != agent.actor.sizes or critic.sizes != agent.critic.sizes:
        raise ConfigError("checkpoint network sizes do not match the configured env/agent")
    agent.actor, agent.critic = actor, critic
    mean, std = evaluate(agent, envmod.Env(cfg, seed=args.seed), args.episodes, args.seed)
    csv = CsvOut(["method", "mean_reward", "std", "episodes"], meta)
    csv.row("agent", mean, std, args.episodes)
    path = out / "eval.csv"
    csv.write(path)
    return [path]


def _plot(path: Path, x, series: dict, xlabel: str, ylabel: str) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib is not installed; skipping %s", path.name)
        return
    plt.rcParams["svg.hashsalt"] = "semcontest"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        ax.plot(x, ys, marker="o", label=str(label))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


COMMANDS = {
    "quality-sweep": quality_sweep,
    "reward-sweep": reward_sweep,
    "gain-sweep": gain_sweep,
    "pool-sweep": pool_sweep,
    "oracle": oracle_cmd,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semcontest",
                                     description="Contest-based power allocation experiments")
    parser.add_argument("command", choices=sorted([*COMMANDS, "train", "eval"]))
    parser.add_argument("--config", help="TOML file with [env] and [agent] tables")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--plot", action="store_true", help="also write SVG plots")
    parser.add_argument("--checkpoint", help="directory with actor.ckpt and critic.ckpt (eval)")
    parser.add_argument("--episodes", type=int, default=10, help="evaluation episodes (eval)")
    parser.add_argument("--methods", default=",".join(METHODS),
                        help="comma-separated summary rows (train)")
    parser.add_argument("--contract-levels", default="0.5,1.0",
                        help="oracle grid values for contract parameters")
    parser.add_argument("--fraction-levels", default="0.9,1.0",
                        help="oracle grid values for award fractions")
    parser.add_argument("--max-candidates", type=int, default=200_000)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        env_cfg, agent_cfg = load_config(args.config)
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        meta = f"config_hash={config_hash(env_cfg, agent_cfg)} seed={args.seed}"
        if args.command == "train":
            paths = train_cmd(env_cfg, args, meta, out, agent_cfg)
        elif args.command == "eval":
            paths = eval_cmd(env_cfg, args, meta, out, agent_cfg)
        else:
            paths = COMMANDS[args.command](env_cfg, args, meta, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SemContestError, FloatingPointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
