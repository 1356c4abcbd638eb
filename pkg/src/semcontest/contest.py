"""Rank-order contest over transmit power.

Each semantic transfer task picks a power on a discrete grid. Its capability is
the reciprocal of the quality it achieves, the population prior on capability is
uniform on ``[0, a_max]``, and the expected award follows from the binomial
probability of finishing in each position.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import channel
from .errors import InfeasibleError, ParameterError
from .quality import QualityWeights, SemanticTask, task_quality

log = logging.getLogger(__name__)

LITERAL = "literal"
UTILITY = "utility"
MODES = (LITERAL, UTILITY)

CAPABILITY_FLOOR = 1e-6
# Relative slack under which two objective values count as tied.
TIE_RTOL = 1e-12
SUM_RTOL = 1e-9


@dataclass(frozen=True)
class CapabilityPrior:
    a_max: float = 1.22

    def __post_init__(self):
        if not self.a_max > 0:
            raise ParameterError("a_max must be positive")


@dataclass(frozen=True)
class RewardScheme:
    awards: tuple

    def __post_init__(self):
        awards = tuple(float(r) for r in self.awards)
        object.__setattr__(self, "awards", awards)
        if not awards:
            raise ParameterError("a reward scheme needs at least one award")
        if any(not math.isfinite(r) or r < 0 for r in awards):
            raise ParameterError("awards must be finite and non-negative")
        if any(a < b for a, b in zip(awards, awards[1:])):
            raise ParameterError(f"awards must be non-increasing, got {awards}")

    @classmethod
    def from_fractions(cls, fractions: Sequence[float], pool: float) -> "RewardScheme":
        scheme = cls(tuple(f * pool for f in fractions))
        scheme.check_pool(pool)
        return scheme

    @property
    def pool(self) -> float:
        return math.fsum(self.awards)

    @property
    def size(self) -> int:
        return len(self.awards)

    def check_pool(self, pool: float) -> None:
        if abs(self.pool - pool) > SUM_RTOL * max(1.0, abs(pool)):
            raise ParameterError(f"awards sum to {self.pool}, expected pool {pool}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.awards, dtype=float)


@dataclass(frozen=True)
class AwardProbe:
    """Non-negative award vector in any order.

    Only for direction sweeps (e.g. paying the last place alone); it is not a
    valid contest scheme and is rejected wherever a :class:`RewardScheme` is
    required.
    """

    awards: tuple

    def __post_init__(self):
        awards = tuple(float(r) for r in self.awards)
        object.__setattr__(self, "awards", awards)
        if not awards or any(not math.isfinite(r) or r < 0 for r in awards):
            raise ParameterError("probe awards must be a non-empty non-negative vector")

    @classmethod
    def from_fractions(cls, fractions: Sequence[float], pool: float) -> "AwardProbe":
        return cls(tuple(f * pool for f in fractions))

    @property
    def pool(self) -> float:
        return math.fsum(self.awards)

    @property
    def size(self) -> int:
        return len(self.awards)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.awards, dtype=float)


@dataclass(frozen=True)
class PowerGrid:
    min_mw: float = 5.0
    max_mw: float = 100.0
    step_mw: float = 5.0

    def __post_init__(self):
        if self.step_mw <= 0 or self.min_mw <= 0 or self.max_mw < self.min_mw:
            raise ParameterError("power grid needs 0 < min <= max and step > 0")

    def points(self) -> np.ndarray:
        n = int(math.floor((self.max_mw - self.min_mw) / self.step_mw + 1e-9)) + 1
        return self.min_mw + self.step_mw * np.arange(n)

    def feasible_points(self, link: channel.LinkModel, theta: float) -> np.ndarray:
        """Grid points whose outage probability does not exceed ``theta``."""
        pts = self.points()
        pmin = channel.min_power_for_outage(link, theta)
        keep = pts >= pmin * (1.0 - 1e-12)
        if not keep.any():
            raise InfeasibleError(
                f"no grid point reaches the outage target {theta} (needs {pmin:.6g} mW)")
        return pts[keep]


@dataclass(frozen=True)
class Contestant:
    id: int
    task: SemanticTask
    link: channel.LinkModel

    @property
    def semantic_type(self):
        return self.task.semantic_type

    @property
    def data_size_bits(self):
        return self.task.data_size_bits

    @property
    def curve(self):
        return self.task.curve

    def quality_at(self, powers, weights: QualityWeights):
        return task_quality(self.task, self.link.with_power(powers), weights)


def capability(q, prior: CapabilityPrior, floor: float = CAPABILITY_FLOOR):
    """``1 / Q`` clamped to ``[floor, a_max]``; zero quality maps to ``a_max``."""
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        a = np.where(q > 0, 1.0 / np.where(q > 0, q, 1.0), prior.a_max)
    if np.any(q <= 0):
        log.debug("zero quality clamped to a_max=%g", prior.a_max)
    a = np.clip(a, floor, prior.a_max)
    return float(a) if a.ndim == 0 else a


def cost(a, power):
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ParameterError("capability must be positive")
    c = np.asarray(power, dtype=float) / a
    return float(c) if c.ndim == 0 else c


def exceed_probability(a, prior: CapabilityPrior):
    """Probability that another contestant's capability is larger than ``a``."""
    a = np.asarray(a, dtype=float)
    inside = (a >= 0) & (a <= prior.a_max)
    p = np.where(inside, (prior.a_max - a) / prior.a_max, 0.0)
    return float(p) if p.ndim == 0 else p


@lru_cache(maxsize=None)
def _binomials(n: int) -> np.ndarray:
    return np.array([math.comb(n - 1, i) for i in range(n)], dtype=float)


def binomial_weights(n: int, p) -> np.ndarray:
    """Probability of finishing in each of ``n`` positions; last axis indexes position.

    Position ``i`` (1-based) carries ``C(n-1, i-1) p^(n-i) (1-p)^(i-1)``.
    """
    if n < 1:
        raise ParameterError("need at least one contestant")
    p = np.asarray(p, dtype=float)[..., None]
    i = np.arange(n)
    return _binomials(n) * p ** (n - 1 - i) * (1.0 - p) ** i


def expected_award(scheme: RewardScheme, p):
    m = binomial_weights(scheme.size, p) @ scheme.as_array()
    return float(m) if m.ndim == 0 else m


def _first_argmax(values: np.ndarray) -> int:
    best = values.max()
    slack = TIE_RTOL * max(1.0, abs(best))
    return int(np.flatnonzero(values >= best - slack)[0])


def effort_objective(q_row, powers, scheme: RewardScheme, prior: CapabilityPrior, mode: str):
    """Objective a contestant maximizes over its own power grid."""
    if mode not in MODES:
        raise ParameterError(f"unknown best-response mode {mode!r}")
    a = capability(q_row, prior)
    m = expected_award(scheme, exceed_probability(a, prior))
    if mode == UTILITY:
        m = m - np.asarray(powers) / a
    return np.atleast_1d(m)


def best_response_from_table(q_row, powers, scheme, prior, mode=LITERAL) -> float:
    """Smallest power among the maximizers, given quality already tabulated on ``powers``."""
    powers = np.asarray(powers, dtype=float)
    if powers.size == 0:
        raise InfeasibleError("empty feasible power grid")
    obj = effort_objective(q_row, powers, scheme, prior, mode)
    return float(powers[_first_argmax(obj)])


def best_response(contestant: Contestant, scheme: RewardScheme, prior: CapabilityPrior,
                  grid: PowerGrid, mode: str = LITERAL, *,
                  weights: QualityWeights = QualityWeights(),
                  theta: float = channel.OUTAGE_THRESHOLD) -> float:
    powers = grid.feasible_points(contestant.link, theta)
    q_row = contestant.quality_at(powers, weights)
    return best_response_from_table(q_row, powers, scheme, prior, mode)


def project_budget(powers, step: float, floors, p_total: float) -> np.ndarray:
    """Lower the largest power one grid step at a time until the budget holds.

    Ties go to the lowest contestant index. Raises if every power sits at its
    floor and the budget still fails.
    """
    powers = np.array(powers, dtype=float)
    floors = np.broadcast_to(np.asarray(floors, dtype=float), powers.shape)
    slack = 1e-9 * max(1.0, p_total)
    while powers.sum() > p_total + slack:
        movable = powers - step >= floors - 1e-12
        if not movable.any():
            raise InfeasibleError(
                f"power floors sum to {powers.sum():.6g} mW, above the budget {p_total} mW")
        candidates = np.where(movable, powers, -np.inf)
        i = int(np.argmax(candidates))
        powers[i] -= step
    return powers


def equilibrium_powers(contestants: Sequence[Contestant], scheme: RewardScheme,
                       prior: CapabilityPrior, grid: PowerGrid, mode: str = LITERAL, *,
                       weights: QualityWeights = QualityWeights(),
                       theta: float = channel.OUTAGE_THRESHOLD,
                       p_total: float | None = None) -> np.ndarray:
    """Independent best responses, then budget projection when ``p_total`` is given.

    A contestant's expected award depends only on its own effort and the
    population prior, so no fixed-point iteration over opponents is needed.
    """
    if scheme.size != len(contestants):
        raise ParameterError("scheme size must equal the number of contestants")
    tables = [(c.quality_at(pts, weights), pts)
              for c in contestants for pts in [grid.feasible_points(c.link, theta)]]
    return equilibrium_from_tables(tables, scheme, prior, grid.step_mw, mode, p_total)


def equilibrium_from_tables(tables, scheme, prior, step, mode=LITERAL, p_total=None):
    raw = np.array([best_response_from_table(q, pts, scheme, prior, mode) for q, pts in tables])
    if p_total is None:
        return raw
    floors = np.array([pts[0] for _, pts in tables])
    return project_budget(raw, step, floors, p_total)


def enumerate_fractions(n: int, step: float) -> list:
    """Non-increasing fraction vectors of length ``n`` on the ``step`` lattice summing to 1."""
    units = round(1.0 / step)
    if units < 1 or abs(units * step - 1.0) > 1e-9:
        raise ParameterError(f"simplex step {step} must divide 1")

    out = []

    def rec(prefix, remaining, cap):
        if len(prefix) == n - 1:
            if remaining <= cap:
                out.append(prefix + [remaining])
            return
        for k in range(min(cap, remaining), -1, -1):
            # remaining slots can hold at most k each
            if k * (n - len(prefix)) < remaining:
                break
            rec(prefix + [k], remaining - k, k)

    if n == 1:
        return [(1.0,)]
    rec([], units, units)
    return [tuple(k / units for k in parts) for parts in out]


@dataclass(frozen=True)
class SchemeResult:
    scheme: RewardScheme
    powers: np.ndarray
    qualities: np.ndarray
    objective: float


def scheme_search(pool: float, contestants: Sequence[Contestant], prior: CapabilityPrior,
                  grid: PowerGrid, simplex_step: float = 0.05, *, mode: str = LITERAL,
                  weights: QualityWeights = QualityWeights(),
                  theta: float = channel.OUTAGE_THRESHOLD,
                  p_total: float | None = None, detailed: bool = False):
    """Award split maximizing total contestant utility at equilibrium.

    Since the awards always sum to ``pool`` the objective reduces to total cost;
    ties keep the lexicographically largest award vector.
    """
    if pool < 0:
        raise ParameterError("pool must be non-negative")
    tables = [(c.quality_at(pts, weights), pts)
              for c in contestants for pts in [grid.feasible_points(c.link, theta)]]
    return scheme_search_tables(pool, tables, prior, grid.step_mw, simplex_step,
                                mode=mode, p_total=p_total, detailed=detailed)


def scheme_search_tables(pool, tables, prior, step, simplex_step=0.05, *, mode=LITERAL,
                         p_total=None, detailed=False):
    n = len(tables)
    best = None
    # enumerate_fractions yields candidates in descending lexicographic order,
    # so the first one reaching the best objective wins ties.
    for fractions in enumerate_fractions(n, simplex_step):
        scheme = RewardScheme(tuple(f * pool for f in fractions))
        try:
            powers = equilibrium_from_tables(tables, scheme, prior, step, mode, p_total)
        except InfeasibleError:
            continue
        qualities = np.array([np.interp(p, pts, q) for (q, pts), p in zip(tables, powers)])
        a = capability(qualities, prior)
        objective = float(np.sum(scheme.as_array()) - np.sum(powers / a))
        if best is None or objective > best.objective + TIE_RTOL * max(1.0, abs(best.objective)):
            best = SchemeResult(scheme, powers, qualities, objective)
    if best is None:
        raise InfeasibleError("no award scheme satisfies the budget and outage constraints")
    return best if detailed else best.scheme
