import math

import mpmath as mp
import numpy as np
import pytest

from semcontest import diffusion as dm
from semcontest.errors import ParameterError

CONST = dm.make_schedule(2, 0.1, 0.1, dm.CONSTANT)


def test_constant_products():
    assert list(CONST.alpha_bar) == pytest.approx([0.9, 0.81], abs=1e-15)


def test_single_step():
    s = dm.make_schedule(1, 0.3, 0.3)
    assert s.alpha_bar[0] == pytest.approx(0.7)


def test_linear_endpoints_inclusive():
    s = dm.make_schedule(50, 1e-4, 0.02)
    assert s.betas[0] == 1e-4 and s.betas[-1] == pytest.approx(0.02, rel=1e-15)
    mp.mp.dps = 40
    prod = mp.mpf(1)
    for k in range(50):
        prod *= 1 - (mp.mpf("1e-4") + k * (mp.mpf("0.02") - mp.mpf("1e-4")) / 49)
    assert s.alpha_bar[-1] == pytest.approx(float(prod), rel=1e-12)


def test_default_endpoints_scale_with_steps():
    s = dm.make_schedule(50)
    assert s.betas[0] == pytest.approx(0.002) and s.betas[-1] == pytest.approx(0.4)
    assert dm.make_schedule(1000).betas[-1] == pytest.approx(0.02)


def test_schedule_invariants():
    s = dm.make_schedule(20)
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert np.all((s.alpha_bar > 0) & (s.alpha_bar < 1))
    assert np.allclose(s.alphas, 1 - s.betas, atol=1e-12, rtol=0)


@pytest.mark.parametrize("args", [(0, 0.1, 0.2), (5, 0.0, 0.2), (5, 0.3, 0.2), (5, 0.1, 1.0)])
def test_schedule_rejects(args):
    with pytest.raises(ParameterError):
        dm.make_schedule(*args)
    with pytest.raises(ParameterError):
        dm.make_schedule(5, 0.1, 0.2, "cosine")


def test_forward_sample_examples():
    y0 = np.array([0.3, -0.2])
    assert np.allclose(dm.forward_sample(CONST, y0, 2, np.zeros(2)), 0.9 * y0)
    assert np.allclose(dm.forward_sample(CONST, np.zeros(2), 2, np.ones(2)), math.sqrt(0.19))
    out = dm.forward_sample(CONST, [1.0], 2, [1.0])
    assert out[0] == pytest.approx(0.9 + math.sqrt(0.19), rel=1e-14)
    with pytest.raises(ParameterError):
        dm.forward_sample(CONST, [1.0], 2, [1.0, 2.0])
    with pytest.raises(ParameterError):
        dm.forward_sample(CONST, [1.0], 3, [1.0])


def test_forward_stats_example():
    mean, var = dm.forward_stats(CONST, np.array([2.0]), 2)
    assert mean[0] == pytest.approx(1.8) and var == pytest.approx(0.19)


def test_forward_stats_monte_carlo():
    rng = np.random.default_rng(11)
    s = dm.make_schedule(20)
    for _ in range(5):
        y0, t = rng.uniform(-1, 1, size=3), int(rng.integers(1, 21))
        draws = dm.forward_sample(s, np.broadcast_to(y0, (10_000, 3)), t,
                                  rng.standard_normal((10_000, 3)))
        mean, var = dm.forward_stats(s, y0, t)
        se = math.sqrt(var / 10_000)
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 3 * se)
        se_var = var * math.sqrt(2 / 9_999)
        assert np.all(np.abs(draws.var(axis=0, ddof=1) - var) < 3 * se_var)


def test_reverse_step_examples():
    y = np.array([0.4, -1.0])
    assert np.allclose(dm.reverse_step(CONST, y, 2, np.zeros(2)), y / math.sqrt(0.9))
    out = dm.reverse_step(CONST, [1.0], 2, [1.0], [0.0])
    assert out[0] == pytest.approx(1 / math.sqrt(0.9) - 0.1 / math.sqrt(0.9 * 0.19), rel=1e-14)
    with pytest.raises(ParameterError):
        dm.reverse_step(CONST, [1.0], 1, [0.0], [0.5])


def zero_predictor(y, t, cond):
    return np.zeros_like(y)


def test_sample_single_step_zero_predictor():
    s = dm.make_schedule(1, 0.2, 0.2)
    y1 = np.random.default_rng(3).standard_normal(2)
    out = dm.sample(s, zero_predictor, None, 2, np.random.default_rng(3), clip=None)
    assert np.allclose(out, y1 / math.sqrt(0.8))


def test_sample_seeded_and_clipped():
    s = dm.make_schedule(5)
    a = dm.sample(s, zero_predictor, None, 4, np.random.default_rng(1))
    b = dm.sample(s, zero_predictor, None, 4, np.random.default_rng(1))
    assert np.array_equal(a, b) and np.all((a >= 0) & (a <= 1))


def test_sample_rejects_bad_predictor():
    with pytest.raises(ParameterError):
        dm.sample(CONST, lambda y, t, c: np.zeros(3), None, 2, np.random.default_rng(0))


@pytest.mark.parametrize("steps", [1, 5, 20])
def test_exact_noise_oracle_recovers_point_mass(steps):
    s = dm.make_schedule(steps)
    target = np.array([0.25, 0.6])

    def oracle(y, t, cond):
        ab = s.alpha_bar[t - 1]
        return (y - math.sqrt(ab) * target) / math.sqrt(1 - ab)

    rng = np.random.default_rng(0)
    outs = np.array([dm.sample(s, oracle, None, 2, rng, clip=None) for _ in range(50)])
    assert np.allclose(outs, target, atol=1e-9)


def test_denoise_loss():
    s = dm.make_schedule(10)
    y0 = np.array([0.1, 0.9, 0.5])
    rng = np.random.default_rng(2)
    losses = [dm.denoise_loss(s, zero_predictor, y0, None, rng) for _ in range(4000)]
    assert np.mean(losses) == pytest.approx(3.0, abs=0.15)

    def exact(y, t, cond):
        ab = s.alpha_bar[t - 1]
        return (y - math.sqrt(ab) * y0) / math.sqrt(1 - ab)

    assert dm.denoise_loss(s, exact, y0, None, rng) == pytest.approx(0.0, abs=1e-20)
    assert (dm.denoise_loss(s, zero_predictor, y0, None, np.random.default_rng(9))
            == dm.denoise_loss(s, zero_predictor, y0, None, np.random.default_rng(9)))
