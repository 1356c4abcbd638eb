"""Sequential decision environment over the contract-inspired contest.

An action posts the contract parameters and the award split; the environment
resolves the circular pool / award / power / quality dependency by fixed-point
iteration and rewards total image quality less constraint penalties.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from . import channel
from .contest import (CapabilityPrior, PowerGrid, RewardScheme, capability,
                      equilibrium_from_tables, MODES, TIE_RTOL)
from .contract import (Contract, FixedPoint, edge_payment, generation_utility,
                       participation_margins, resolve_fixed_point)
from .errors import ParameterError
from .quality import (DEFAULT_DATA_SIZE_BITS, QualityWeights, SemanticTask, SemanticType,
                      load_measured_curve, task_quality)

CONTRACT_KEYS = ("u_g", "b", "b_f", "u_e")


@dataclass(frozen=True)
class EnvConfig:
    n_tasks: int = 4
    task_types: tuple = ("depth", "segmentation", "canny", "pose")
    data_size_bits: float = DEFAULT_DATA_SIZE_BITS
    bandwidth_hz: float = channel.BANDWIDTH_HZ
    noise_mw: float = channel.NOISE_MW
    outage_threshold: float = channel.OUTAGE_THRESHOLD
    outage_operating: float = channel.OUTAGE_OPERATING
    snr_threshold: float | None = None
    power_min: float = 5.0
    power_max: float = 100.0
    power_step: float = 5.0
    power_total: float = 100.0
    fps: float = 30.0
    a_max: float = 1.22
    beta: float = 0.5
    depth_bump: bool = True
    measured_curves: tuple = ()
    u_g_range: tuple = (0.0, 50.0)
    b_range: tuple = (0.0, 10.0)
    b_f_range: tuple = (0.0, 20.0)
    u_e_range: tuple = (0.0, 25.0)
    utility_threshold: float = 0.0
    gain_min: float = 1e-6
    gain_max: float = 1e-3
    fixed_gain: float | None = None
    fp_tol: float = 1e-6
    fp_max_iter: int = 10
    penalty_ir: float = 1.0
    penalty_participation: float = 0.25
    horizon: int = 16
    mode: str = "literal"

    def __post_init__(self):
        for name in ("u_g_range", "b_range", "b_f_range", "u_e_range", "task_types",
                     "measured_curves"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "measured_curves",
                           tuple(tuple(pair) for pair in self.measured_curves))
        if self.n_tasks < 1:
            raise ParameterError("n_tasks must be >= 1")
        if len(self.task_types) != self.n_tasks:
            raise ParameterError(
                f"task_types lists {len(self.task_types)} types for n_tasks={self.n_tasks}")
        for t in self.task_types:
            SemanticType(t)
        positive = ("data_size_bits", "bandwidth_hz", "noise_mw", "power_min", "power_max",
                    "power_step", "power_total", "fps", "a_max", "gain_min", "gain_max",
                    "fp_tol", "horizon")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not (0 < self.gain_min <= self.gain_max <= 1):
            raise ParameterError("gain range must satisfy 0 < gain_min <= gain_max <= 1")
        if self.fixed_gain is not None and not 0 < self.fixed_gain <= 1:
            raise ParameterError("fixed_gain must lie in (0, 1]")
        for name in ("outage_threshold", "outage_operating"):
            if not 0 < getattr(self, name) < 1:
                raise ParameterError(f"{name} must lie in (0, 1)")
        for name in ("u_g_range", "b_range", "b_f_range", "u_e_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ParameterError(f"{name} must satisfy 0 <= low <= high")
        if self.power_max < self.power_min:
            raise ParameterError("power_max must be >= power_min")
        if self.power_total < self.n_tasks * self.power_min:
            raise ParameterError("power_total cannot cover every task at power_min")
        if self.fp_max_iter < 1:
            raise ParameterError("fp_max_iter must be >= 1")
        if self.penalty_ir < 0 or self.penalty_participation < 0:
            raise ParameterError("penalties must be non-negative")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        QualityWeights(self.beta)

    @property
    def gamma_th(self) -> float:
        if self.snr_threshold is not None:
            return self.snr_threshold
        return channel.calibrated_snr_threshold(self.noise_mw, self.outage_threshold,
                                                self.power_min)

    @property
    def action_dim(self) -> int:
        return len(CONTRACT_KEYS) + self.n_tasks

    @property
    def state_dim(self) -> int:
        return 5 * self.n_tasks

    def grid(self) -> PowerGrid:
        return PowerGrid(self.power_min, self.power_max, self.power_step)

    def prior(self) -> CapabilityPrior:
        return CapabilityPrior(self.a_max)

    def weights(self) -> QualityWeights:
        return QualityWeights(self.beta)

    def tasks(self) -> list:
        measured = {SemanticType(t): load_measured_curve(p) for t, p in self.measured_curves}
        out = []
        for t in self.task_types:
            st = SemanticType(t)
            curve = measured.get(st)
            task = SemanticTask(st, self.data_size_bits, self.fps, curve)
            if curve is None and not self.depth_bump:
                task = SemanticTask(st, self.data_size_bits, self.fps, task.curve.without_bump())
            out.append(task)
        return out

    def link(self, gain, power=0.0) -> channel.LinkModel:
        return channel.LinkModel(self.bandwidth_hz, self.noise_mw, self.gamma_th, gain, power)

    def contract_ranges(self) -> list:
        return [self.u_g_range, self.b_range, self.b_f_range, self.u_e_range]

    def replace(self, **changes) -> "EnvConfig":
        kwargs = {f.name: getattr(self, f.name) for f in fields(self)}
        kwargs.update(changes)
        return EnvConfig(**kwargs)


@dataclass(frozen=True)
class EnvState:
    powers: np.ndarray
    qualities: np.ndarray
    bandwidths: np.ndarray
    thresholds: np.ndarray
    gains: np.ndarray


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    state: EnvState
    i_edge: float
    scheme: RewardScheme
    contract: Contract
    raw_powers: np.ndarray
    powers: np.ndarray
    qualities: np.ndarray
    u_gen: float
    ir_shortfall: float
    participation_violations: int
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)


class Tables:
    """Quality of every task on its outage-feasible power grid at fixed gains."""

    def __init__(self, config: EnvConfig, gains):
        self.config = config
        self.gains = np.asarray(gains, dtype=float)
        self.tasks = config.tasks()
        grid = config.grid()
        weights = config.weights()
        self.rows = []
        for task, g in zip(self.tasks, self.gains):
            link = config.link(g)
            pts = grid.feasible_points(link, config.outage_threshold)
            self.rows.append((task_quality(task, link.with_power(pts), weights), pts))
        self.floors = np.array([pts[0] for _, pts in self.rows])

    def quality(self, powers) -> np.ndarray:
        out = []
        weights = self.config.weights()
        for (q, pts), task, g, p in zip(self.rows, self.tasks, self.gains, powers):
            hit = np.flatnonzero(np.isclose(pts, p, rtol=0, atol=1e-9))
            if hit.size:
                out.append(q[hit[0]])
            else:
                out.append(task_quality(task, self.config.link(g, p), weights))
        return np.array(out)


def _gains_for(config: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    if config.fixed_gain is not None:
        return np.full(config.n_tasks, float(config.fixed_gain))
    lo, hi = math.log10(config.gain_min), math.log10(config.gain_max)
    return 10.0 ** rng.uniform(lo, hi, size=config.n_tasks)


def state_from_gains(config: EnvConfig, gains, powers=None, tables: Tables | None = None):
    tables = tables or Tables(config, gains)
    if powers is None:
        powers = tables.floors.copy()
    powers = np.asarray(powers, dtype=float)
    return EnvState(powers=powers, qualities=tables.quality(powers),
                    bandwidths=np.full(config.n_tasks, config.bandwidth_hz),
                    thresholds=np.full(config.n_tasks, config.outage_threshold),
                    gains=np.asarray(gains, dtype=float))


def reset(config: EnvConfig, seed=None) -> EnvState:
    """Fresh state: log-uniform gains, powers at the grid floor."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return state_from_gains(config, _gains_for(config, rng))


def map_action(config: EnvConfig, action) -> tuple:
    """Affine map of ``[0, 1]`` action components to a contract and award fractions."""
    action = np.asarray(action, dtype=float)
    if action.shape != (config.action_dim,):
        raise ParameterError(f"action must have shape ({config.action_dim},)")
    if not np.all(np.isfinite(action)):
        raise ParameterError("action contains non-finite values")
    if np.any(action < 0) or np.any(action > 1):
        raise ParameterError("action components must lie in [0, 1]")
    u_g, b, b_f, u_e = (lo + x * (hi - lo)
                        for x, (lo, hi) in zip(action[:4], config.contract_ranges()))
    contract = Contract(base_payment=b_f, edge_unit_fee=u_e, gen_unit_fee=u_g,
                        subscription_fees=(b,), utility_threshold=config.utility_threshold)
    return contract, award_fractions(action[4:])


def award_fractions(raw) -> np.ndarray:
    f = np.sort(np.asarray(raw, dtype=float))[::-1]
    total = f.sum()
    if total < 1e-9:
        return np.full(f.size, 1.0 / f.size)
    return f / total


def rank_order(powers) -> np.ndarray:
    """Contestant indices by descending power, ties by index."""
    return np.argsort(-np.asarray(powers, dtype=float), kind="stable")


def _score(config: EnvConfig, contract: Contract, scheme: RewardScheme, pool: float,
           powers, qualities):
    u_gen = generation_utility(contract, qualities, pool)
    shortfall = max(0.0, config.utility_threshold - u_gen)
    order = rank_order(powers)
    a = capability(qualities, config.prior())
    margins = participation_margins(scheme, np.asarray(powers)[order], np.atleast_1d(a)[order])
    violations = int(np.sum(margins <= 0))
    reward = (float(np.sum(qualities)) - config.penalty_ir * shortfall
              - config.penalty_participation * violations)
    return reward, u_gen, shortfall, violations


def step(config: EnvConfig, state: EnvState, action, tables: Tables | None = None) -> StepOutcome:
    tables = tables or Tables(config, state.gains)
    contract, fractions = map_action(config, action)
    prior = config.prior()
    p_total = config.power_total
    raw_box = {}

    def allocate(pool):
        scheme = RewardScheme(tuple(fractions * pool))
        raw = equilibrium_from_tables(tables.rows, scheme, prior, config.power_step,
                                      config.mode, None)
        projected = equilibrium_from_tables(tables.rows, scheme, prior, config.power_step,
                                            config.mode, p_total) if raw.sum() > p_total else raw
        raw_box["raw"] = raw
        return scheme, projected, tables.quality(projected)

    fp: FixedPoint = resolve_fixed_point(state.qualities, lambda q: edge_payment(contract, q),
                                         allocate, config.fp_tol, config.fp_max_iter)
    reward, u_gen, shortfall, violations = _score(config, contract, fp.scheme, fp.pool,
                                                  fp.powers, fp.qualities)
    next_state = EnvState(powers=fp.powers, qualities=fp.qualities,
                          bandwidths=state.bandwidths, thresholds=state.thresholds,
                          gains=state.gains)
    return StepOutcome(reward=reward, state=next_state, i_edge=fp.pool, scheme=fp.scheme,
                       contract=contract, raw_powers=raw_box["raw"], powers=fp.powers,
                       qualities=fp.qualities, u_gen=u_gen, ir_shortfall=shortfall,
                       participation_violations=violations, iterations=fp.iterations,
                       converged=fp.converged,
                       diagnostics={"fractions": fractions, "history": fp.history})


def baseline_average(config: EnvConfig, state: EnvState, tables: Tables | None = None):
    """Equal split of the power budget with mid-range contract and equal awards."""
    tables = tables or Tables(config, state.gains)
    n = config.n_tasks
    mid = np.concatenate([np.full(4, 0.5), np.zeros(n)])
    contract, fractions = map_action(config, mid)
    per_task = min(config.power_total / n, config.power_max)
    powers = np.maximum(np.full(n, per_task), tables.floors)
    qualities = tables.quality(powers)
    pool = edge_payment(contract, qualities)
    scheme = RewardScheme(tuple(fractions * pool))
    reward, u_gen, shortfall, violations = _score(config, contract, scheme, pool, powers,
                                                  qualities)
    next_state = EnvState(powers, qualities, state.bandwidths, state.thresholds, state.gains)
    return StepOutcome(reward=reward, state=next_state, i_edge=pool, scheme=scheme,
                       contract=contract, raw_powers=powers, powers=powers,
                       qualities=qualities, u_gen=u_gen, ir_shortfall=shortfall,
                       participation_violations=violations, iterations=0, converged=True)


def random_action(config: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=config.action_dim)


def baseline_random(config: EnvConfig, state: EnvState, seed=None,
                    tables: Tables | None = None) -> StepOutcome:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return step(config, state, random_action(config, rng), tables)


@dataclass(frozen=True)
class OracleResult:
    action: np.ndarray
    reward: float
    outcome: StepOutcome
    candidates: int


def oracle_best(config: EnvConfig, state: EnvState, action_grids: Sequence[Sequence[float]],
                max_candidates: int = 200_000) -> OracleResult:
    """Exhaustive search over the Cartesian action grid.

    Grids are sorted ascending and scanned in lexicographic order; the first
    candidate reaching the best reward wins.
    """
    if len(action_grids) != config.action_dim:
        raise ParameterError(f"need {config.action_dim} action grids, got {len(action_grids)}")
    grids = [sorted(float(v) for v in g) for g in action_grids]
    count = math.prod(len(g) for g in grids)
    if count == 0:
        raise ParameterError("every action grid needs at least one value")
    if count > max_candidates:
        raise ParameterError(
            f"oracle refused: {count} candidates exceed the cap of {max_candidates}")
    tables = Tables(config, state.gains)
    best = None
    for cand in itertools.product(*grids):
        out = step(config, state, np.array(cand), tables)
        if best is None or out.reward > best[1] + TIE_RTOL * max(1.0, abs(best[1])):
            best = (np.array(cand), out.reward, out)
    return OracleResult(best[0], best[1], best[2], count)


def encode_state(config: EnvConfig, state: EnvState) -> np.ndarray:
    """State features scaled to ``[0, 1]``."""
    lo, hi = math.log10(config.gain_min), math.log10(config.gain_max)
    span = hi - lo if hi > lo else 1.0
    log_gain = np.clip((np.log10(state.gains) - lo) / span, 0.0, 1.0)
    return np.concatenate([
        np.clip(state.powers / config.power_max, 0.0, 1.0),
        np.clip(state.qualities, 0.0, 1.0),
        log_gain,
        np.clip(state.bandwidths / config.bandwidth_hz, 0.0, 1.0),
        np.clip(state.thresholds, 0.0, 1.0),
    ])


class Env:
    """Episodic wrapper: gains drawn at reset, stationary within an episode."""

    def __init__(self, config: EnvConfig, seed=None):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.state = None
        self.tables = None
        self.t = 0

    def reset(self) -> EnvState:
        gains = _gains_for(self.config, self.rng)
        self.tables = Tables(self.config, gains)
        self.state = state_from_gains(self.config, gains, tables=self.tables)
        self.t = 0
        return self.state

    def step(self, action) -> tuple:
        if self.state is None:
            raise ParameterError("call reset() before step()")
        out = step(self.config, self.state, action, self.tables)
        self.state = out.state
        self.t += 1
        return out, self.t >= self.config.horizon

    def encode(self, state: EnvState | None = None) -> np.ndarray:
        return encode_state(self.config, self.state if state is None else state)
