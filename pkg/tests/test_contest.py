import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semcontest.contest import (LITERAL, UTILITY, AwardProbe, CapabilityPrior, PowerGrid,
                                RewardScheme, best_response, binomial_weights, capability, cost,
                                enumerate_fractions, equilibrium_powers, exceed_probability,
                                expected_award, project_budget, scheme_search)
from semcontest.errors import InfeasibleError, ParameterError

from helpers import contestants, grid_points
from oracles import Instance, best_power

PRIOR = CapabilityPrior()
GRID = PowerGrid()
TYPES = ["depth", "segmentation", "canny", "pose"]


@pytest.mark.parametrize("q,a", [(1.0, 1.0), (0.5, 2.0)])
def test_capability_reciprocal(q, a):
    assert capability(q, CapabilityPrior(10.0)) == pytest.approx(a)


def test_capability_clamps():
    assert capability(0.05, CapabilityPrior(10.0)) == 10.0
    assert capability(0.0, CapabilityPrior(10.0)) == 10.0


def test_cost_values():
    assert cost(2.0, 0.0) == 0.0
    assert cost(2.0, 10.0) == 5.0
    with pytest.raises(ParameterError):
        cost(0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0.1, 10), p=st.floats(0.1, 100))
def test_cost_sign_conditions(a, p):
    h = 1e-4
    dp = (cost(a, p + h) - cost(a, p - h)) / (2 * h)
    da = (cost(a + h, p) - cost(a - h, p)) / (2 * h)
    dap = (cost(a + h, p + h) - cost(a + h, p - h) - cost(a - h, p + h) + cost(a - h, p - h)) / (4 * h * h)
    assert dp > 0 and da < 0 and dap < 0


@pytest.mark.parametrize("a,p", [(0.0, 1.0), (10.0, 0.0), (2.5, 0.75), (11.0, 0.0)])
def test_exceed_probability(a, p):
    assert exceed_probability(a, CapabilityPrior(10.0)) == pytest.approx(p)


def test_expected_award_examples():
    assert expected_award(RewardScheme((1.0, 0.0)), 0.5) == pytest.approx(0.5)
    assert expected_award(RewardScheme((40, 30, 20, 10)), 0.0) == pytest.approx(10.0)
    assert expected_award(RewardScheme((40, 30, 20, 10)), 1.0) == pytest.approx(40.0)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 8), p=st.floats(0, 1), pool=st.floats(0, 1e3))
def test_equal_awards_neutral(n, p, pool):
    w = binomial_weights(n, p)
    assert abs(w.sum() - 1) < 1e-9
    assert expected_award(RewardScheme((pool / n,) * n), p) == pytest.approx(pool / n, rel=1e-9,
                                                                            abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(r1=st.lists(st.floats(0, 100), min_size=4, max_size=4),
       r2=st.lists(st.floats(0, 100), min_size=4, max_size=4),
       alpha=st.floats(0, 1), p=st.floats(0, 1))
def test_expected_award_linear(r1, r2, alpha, p):
    s1, s2 = sorted(r1, reverse=True), sorted(r2, reverse=True)
    mix = RewardScheme(tuple(alpha * a + (1 - alpha) * b for a, b in zip(s1, s2)))
    lhs = expected_award(mix, p)
    rhs = alpha * expected_award(RewardScheme(s1), p) + (1 - alpha) * expected_award(RewardScheme(s2), p)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_scheme_validation():
    with pytest.raises(ParameterError):
        RewardScheme((1.0, 2.0))
    with pytest.raises(ParameterError):
        RewardScheme((1.0, -1.0))
    with pytest.raises(ParameterError):
        RewardScheme(())
    s = RewardScheme.from_fractions((0.4, 0.3, 0.2, 0.1), 100.0)
    assert s.pool == pytest.approx(100.0)
    assert AwardProbe((0.0, 100.0)).pool == 100.0


def test_fractions_enumeration():
    fr = enumerate_fractions(2, 0.25)
    assert fr == [(1.0, 0.0), (0.75, 0.25), (0.5, 0.5)]
    assert all(abs(sum(f) - 1) < 1e-12 for f in enumerate_fractions(4, 0.05))
    assert enumerate_fractions(1, 0.5) == [(1.0,)]
    with pytest.raises(ParameterError):
        enumerate_fractions(2, 0.3)


def test_equal_awards_minimum_power():
    c = contestants(["canny"], [1e-4])[0]
    p = best_response(c, RewardScheme((25.0,) * 4), PRIOR, GRID)
    assert p == 5.0


@pytest.mark.parametrize("kind", TYPES)
def test_winner_takes_all_maximum_power(kind):
    c = contestants([kind], [1e-4])[0]
    assert best_response(c, RewardScheme((100.0, 0, 0, 0)), PRIOR, GRID) == 100.0


@pytest.mark.parametrize("kind", TYPES)
def test_last_place_only_minimum_power(kind):
    c = contestants([kind], [1e-4])[0]
    assert best_response(c, AwardProbe((0, 0, 0, 100.0)), PRIOR, GRID) == 5.0


def test_utility_mode_prefers_cheaper_power():
    c = contestants(["canny"], [1e-4])[0]
    assert best_response(c, RewardScheme((100.0, 0, 0, 0)), PRIOR, GRID, UTILITY) == 5.0


def test_infeasible_grid():
    c = contestants(["canny"], [1e-4])[0]
    with pytest.raises(InfeasibleError):
        best_response(c, RewardScheme((1.0,)), PRIOR, PowerGrid(1.0, 4.0, 1.0))


def test_equilibrium_matches_per_task_scan():
    gains = [1e-4, 3e-5, 2e-4, 1e-5]
    cs = contestants(TYPES, gains)
    scheme = RewardScheme((40.0, 30.0, 20.0, 10.0))
    got = equilibrium_powers(cs, scheme, PRIOR, GRID)
    inst = Instance(TYPES, gains, grid_points(GRID), PRIOR.a_max, None)
    expected = [best_power(row, inst.powers, [40, 30, 20, 10], PRIOR.a_max) for row in inst.q]
    assert list(got) == expected


def test_identical_contestants_identical_powers():
    cs = contestants(["pose"] * 3, [5e-5] * 3)
    got = equilibrium_powers(cs, RewardScheme((60.0, 30.0, 10.0)), PRIOR, GRID)
    assert len(set(got)) == 1


def test_single_contestant_degenerate():
    cs = contestants(["depth"], [1e-4])
    assert list(equilibrium_powers(cs, RewardScheme((0.0,)), PRIOR, GRID)) == [5.0]


def test_scaling_keeps_argmax():
    cs = contestants(TYPES, [1e-4, 3e-5, 2e-4, 1e-5])
    base = equilibrium_powers(cs, RewardScheme((40.0, 30.0, 20.0, 10.0)), PRIOR, GRID)
    scaled = equilibrium_powers(cs, RewardScheme((4.0, 3.0, 2.0, 1.0)), PRIOR, GRID)
    assert np.array_equal(base, scaled)


def test_projection_lowers_largest_first():
    out = project_budget([100.0, 100.0, 5.0, 5.0], 5.0, 5.0, 100.0)
    assert list(out) == [45.0, 45.0, 5.0, 5.0]
    out = project_budget([50.0, 45.0], 5.0, 5.0, 90.0)
    assert list(out) == [45.0, 45.0]
    out = project_budget([30.0, 30.0], 5.0, 5.0, 55.0)
    assert list(out) == [25.0, 30.0]
    with pytest.raises(InfeasibleError):
        project_budget([10.0, 10.0], 5.0, 10.0, 15.0)


def test_equilibrium_respects_budget():
    cs = contestants(TYPES, [1e-4] * 4)
    got = equilibrium_powers(cs, RewardScheme((100.0, 0, 0, 0)), PRIOR, GRID, p_total=100.0)
    assert got.sum() <= 100.0 and list(got) == [25.0] * 4


def test_scheme_search_zero_pool():
    cs = contestants(["canny", "pose"], [1e-4, 1e-4])
    res = scheme_search(0.0, cs, PRIOR, GRID, 0.25, detailed=True)
    assert res.scheme.awards == (0.0, 0.0)
    assert list(res.powers) == [5.0, 5.0]


def test_scheme_search_single_contestant():
    cs = contestants(["canny"], [1e-4])
    assert scheme_search(7.0, cs, PRIOR, GRID, 0.25).awards == (7.0,)


@pytest.mark.parametrize("gains", [[1e-4, 1e-4], [3e-4, 2e-5], [1e-6, 1e-3]])
def test_scheme_search_matches_enumeration(gains):
    grid = PowerGrid(5.0, 100.0, 47.5)
    kinds = ["depth", "canny"]
    cs = contestants(kinds, gains)
    res = scheme_search(60.0, cs, PRIOR, grid, 0.25, p_total=100.0, detailed=True)
    inst = Instance(kinds, gains, grid_points(grid), PRIOR.a_max, 100.0)
    obj, r, powers, qs = inst.scheme_search(60.0, 0.25)
    assert list(res.scheme.awards) == pytest.approx(r, abs=1e-12)
    assert list(res.powers) == powers
    assert res.objective == pytest.approx(obj, abs=1e-9)
