"""Payment plan between generation server and edge server."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import channel
from .contest import (LITERAL, CapabilityPrior, Contestant, PowerGrid, RewardScheme,
                      TIE_RTOL, scheme_search_tables)
from .errors import InfeasibleError, ParameterError
from .quality import QualityWeights


@dataclass(frozen=True)
class Contract:
    base_payment: float = 0.0
    edge_unit_fee: float = 0.0
    gen_unit_fee: float = 0.0
    subscription_fees: tuple = ()
    utility_threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "subscription_fees",
                           tuple(float(b) for b in self.subscription_fees))
        fees = (self.base_payment, self.edge_unit_fee, self.gen_unit_fee) + self.subscription_fees
        if any(f < 0 or not math.isfinite(f) for f in fees):
            raise ParameterError("contract fees must be finite and non-negative")

    def fees_for(self, n: int) -> np.ndarray:
        """Subscription fee vector; an empty tuple means no fees, one entry is shared."""
        b = self.subscription_fees
        if len(b) == 0:
            return np.zeros(n)
        if len(b) == 1:
            return np.full(n, b[0])
        if len(b) != n:
            raise ParameterError(f"{len(b)} subscription fees for {n} users")
        return np.asarray(b)


def edge_payment(contract: Contract, qualities) -> float:
    return contract.base_payment + contract.edge_unit_fee * math.fsum(np.asarray(qualities, float))


def generation_revenue(contract: Contract, qualities) -> float:
    q = np.asarray(qualities, dtype=float)
    return math.fsum(contract.fees_for(q.size) + contract.gen_unit_fee * q)


def generation_utility(contract: Contract, qualities, i_edge: float | None = None) -> float:
    if i_edge is None:
        i_edge = edge_payment(contract, qualities)
    return generation_revenue(contract, qualities) - i_edge


def ir_satisfied(u_gen: float, utility_threshold: float) -> bool:
    return u_gen >= utility_threshold


def participation_margins(scheme: RewardScheme, powers, capabilities) -> np.ndarray:
    """``r_i - P_i / a_i`` position by position."""
    r = scheme.as_array()
    powers = np.asarray(powers, dtype=float)
    capabilities = np.asarray(capabilities, dtype=float)
    if not (r.size == powers.size == capabilities.size):
        raise ParameterError("scheme, powers and capabilities must have equal length")
    return r - powers / capabilities


def participation_satisfied(scheme: RewardScheme, powers, capabilities) -> bool:
    return bool(np.all(participation_margins(scheme, powers, capabilities) > 0))


@dataclass
class FixedPoint:
    pool: float
    scheme: RewardScheme
    powers: np.ndarray
    qualities: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def resolve_fixed_point(initial_qualities, pool_of: Callable, allocate: Callable,
                        tol: float = 1e-6, max_iter: int = 10) -> FixedPoint:
    """Iterate quality -> pool -> (scheme, powers, quality) until total quality settles.

    ``allocate(pool)`` returns ``(scheme, powers, qualities)``. The last iterate is
    returned with ``converged=False`` when the cap is hit.
    """
    if max_iter < 1:
        raise ParameterError("max_iter must be >= 1")
    q = np.asarray(initial_qualities, dtype=float)
    history = []
    for it in range(1, max_iter + 1):
        pool = pool_of(q)
        scheme, powers, q_new = allocate(pool)
        delta = abs(float(np.sum(q_new)) - float(np.sum(q)))
        history.append(float(np.sum(q_new)))
        q = np.asarray(q_new, dtype=float)
        if delta < tol:
            return FixedPoint(pool, scheme, powers, q, it, True, history)
    return FixedPoint(pool, scheme, powers, q, max_iter, False, history)


@dataclass
class PaymentResult:
    contract: Contract
    u_gen: float
    fixed_point: FixedPoint


def payment_search(base_payments: Sequence[float], edge_unit_fees: Sequence[float],
                   contestants: Sequence[Contestant], prior: CapabilityPrior,
                   template: Contract, grid: PowerGrid, *, simplex_step: float = 0.05,
                   mode: str = LITERAL, weights: QualityWeights = QualityWeights(),
                   theta: float = channel.OUTAGE_THRESHOLD, p_total: float | None = None,
                   tol: float = 1e-6, max_iter: int = 10, detailed: bool = False):
    """Grid search over ``(b_f, u_e)`` maximizing generation utility subject to IR.

    Qualities are those the contest pipeline settles on for the induced pool.
    Ties keep the first pair in ``(b_f, u_e)`` lexicographic order.
    """
    tables = [(c.quality_at(pts, weights), pts)
              for c in contestants for pts in [grid.feasible_points(c.link, theta)]]
    q_start = np.array([q[0] for q, _ in tables])

    def allocate(pool):
        res = scheme_search_tables(pool, tables, prior, grid.step_mw, simplex_step,
                                   mode=mode, p_total=p_total, detailed=True)
        return res.scheme, res.powers, res.qualities

    best = None
    for b_f, u_e in itertools.product(sorted(base_payments), sorted(edge_unit_fees)):
        contract = replace(template, base_payment=float(b_f), edge_unit_fee=float(u_e))
        fp = resolve_fixed_point(q_start, lambda q: edge_payment(contract, q), allocate,
                                 tol=tol, max_iter=max_iter)
        u_gen = generation_utility(contract, fp.qualities, fp.pool)
        if not ir_satisfied(u_gen, contract.utility_threshold):
            continue
        if best is None or u_gen > best.u_gen + TIE_RTOL * max(1.0, abs(best.u_gen)):
            best = PaymentResult(contract, u_gen, fp)
    if best is None:
        raise InfeasibleError("no (b_f, u_e) pair satisfies individual rationality")
    return best if detailed else best.contract
