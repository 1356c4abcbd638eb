"""Denoising diffusion over action vectors.

Steps are indexed ``t = 1..T``; arrays on :class:`DiffusionSchedule` are
0-based, so ``alpha_bar[t - 1]`` belongs to step ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError

LINEAR = "linear"
CONSTANT = "constant"
KINDS = (LINEAR, CONSTANT)

# Reference endpoints for a 1000-step chain; shorter chains scale them by 1000 / T
# so the final marginal still reaches (nearly) unit variance.
REFERENCE_STEPS = 1000
REFERENCE_BETA_MIN = 1e-4
REFERENCE_BETA_MAX = 0.02

NoisePredictor = Callable[[np.ndarray, int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float).copy()
        if betas.ndim != 1 or betas.size < 1:
            raise ParameterError("betas must be a non-empty vector")
        if np.any(~np.isfinite(betas)) or np.any(betas <= 0) or np.any(betas >= 1):
            raise ParameterError("every beta must lie in (0, 1)")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        alphas = 1.0 - betas
        alpha_bar = np.cumprod(alphas)
        alphas.setflags(write=False)
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def steps(self) -> int:
        return int(self.betas.size)

    def check_step(self, t: int) -> int:
        if int(t) != t or not 1 <= t <= self.steps:
            raise ParameterError(f"step t must be an integer in [1, {self.steps}], got {t}")
        return int(t)


def default_endpoints(steps: int) -> tuple:
    scale = REFERENCE_STEPS / steps
    return (min(REFERENCE_BETA_MIN * scale, 0.999), min(REFERENCE_BETA_MAX * scale, 0.999))


def make_schedule(steps: int, beta_min: float | None = None, beta_max: float | None = None,
                  kind: str = LINEAR) -> DiffusionSchedule:
    """Noise schedule of ``steps`` betas.

    Without explicit endpoints the linear schedule uses the 1000-step reference
    range ``1e-4 .. 0.02`` rescaled by ``1000 / steps``.
    """
    if int(steps) != steps or steps < 1:
        raise ParameterError("steps must be a positive integer")
    steps = int(steps)
    if beta_min is None or beta_max is None:
        lo, hi = default_endpoints(steps)
        beta_min = lo if beta_min is None else beta_min
        beta_max = hi if beta_max is None else beta_max
    if not 0 < beta_min <= beta_max < 1:
        raise ParameterError("need 0 < beta_min <= beta_max < 1")
    if kind == LINEAR:
        betas = np.linspace(beta_min, beta_max, steps)
    elif kind == CONSTANT:
        betas = np.full(steps, float(beta_min))
    else:
        raise ParameterError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")
    return DiffusionSchedule(betas)


def _check_same_shape(a, b, what: str):
    if np.shape(a) != np.shape(b):
        raise ParameterError(f"{what}: shape {np.shape(a)} does not match {np.shape(b)}")


def forward_sample(sched: DiffusionSchedule, y0, t: int, eps) -> np.ndarray:
    t = sched.check_step(t)
    y0 = np.asarray(y0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    _check_same_shape(y0, eps, "noise")
    ab = sched.alpha_bar[t - 1]
    return math.sqrt(ab) * y0 + math.sqrt(1.0 - ab) * eps


def forward_stats(sched: DiffusionSchedule, y0, t: int) -> tuple:
    """Mean vector and isotropic variance of ``y_t`` given ``y0``."""
    t = sched.check_step(t)
    ab = sched.alpha_bar[t - 1]
    return math.sqrt(ab) * np.asarray(y0, dtype=float), 1.0 - ab


def reverse_coefficients(sched: DiffusionSchedule, t: int) -> tuple:
    """``(1/sqrt(alpha_t), beta_t / sqrt(alpha_t (1 - alpha_bar_t)), sqrt(beta_t))``."""
    t = sched.check_step(t)
    a, b, ab = sched.alphas[t - 1], sched.betas[t - 1], sched.alpha_bar[t - 1]
    return 1.0 / math.sqrt(a), b / math.sqrt(a * (1.0 - ab)), math.sqrt(b)


def reverse_step(sched: DiffusionSchedule, y_t, t: int, eps_hat, z=None) -> np.ndarray:
    t = sched.check_step(t)
    y_t = np.asarray(y_t, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    _check_same_shape(y_t, eps_hat, "predicted noise")
    if z is None:
        z = np.zeros_like(y_t)
    z = np.asarray(z, dtype=float)
    _check_same_shape(y_t, z, "injected noise")
    if t == 1 and np.any(z != 0):
        raise ParameterError("the final reverse step (t=1) takes no injected noise")
    c_in, c_eps, c_z = reverse_coefficients(sched, t)
    return c_in * y_t - c_eps * eps_hat + c_z * z


def sample(sched: DiffusionSchedule, predictor: NoisePredictor, condition, dim: int,
           rng: np.random.Generator, clip: tuple | None = (0.0, 1.0)) -> np.ndarray:
    """Reverse-denoise a standard-normal draw into a ``dim`` vector.

    The draws are ``y_T`` first, then one ``z`` per step ``t = T..2``. The
    result is clipped to ``clip`` unless it is ``None``.
    """
    y = rng.standard_normal(dim)
    for t in range(sched.steps, 0, -1):
        z = rng.standard_normal(dim) if t > 1 else np.zeros(dim)
        eps_hat = np.asarray(predictor(y, t, condition), dtype=float)
        if eps_hat.shape != (dim,):
            raise ParameterError(f"predictor returned shape {eps_hat.shape}, expected ({dim},)")
        y = reverse_step(sched, y, t, eps_hat, z)
    if clip is not None:
        y = np.clip(y, clip[0], clip[1])
    return y


def denoise_loss(sched: DiffusionSchedule, predictor: NoisePredictor, y0, condition,
                 rng: np.random.Generator) -> float:
    """Squared error between injected and predicted noise at a uniformly drawn step."""
    y0 = np.asarray(y0, dtype=float)
    t = int(rng.integers(1, sched.steps + 1))
    eps = rng.standard_normal(y0.shape)
    pred = np.asarray(predictor(forward_sample(sched, y0, t, eps), t, condition), dtype=float)
    _check_same_shape(pred, eps, "predicted noise")
    return float(np.sum((eps - pred) ** 2))
