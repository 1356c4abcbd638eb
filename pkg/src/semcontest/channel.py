"""Rayleigh-faded link: Shannon rate, outage probability and compression level.

All functions accept scalar or numpy-array fields on :class:`LinkModel`, so a
whole power grid can be evaluated in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleError, OutageLimitError, ParameterError

# Table II of the reference deployment.
BANDWIDTH_HZ = 5e6
NOISE_MW = 9e-6
OUTAGE_THRESHOLD = 0.05
OUTAGE_OPERATING = 0.003
MIN_POWER_MW = 5.0


@dataclass(frozen=True)
class LinkModel:
    bandwidth_hz: float
    noise_mw: float
    snr_threshold: float
    gain: float
    power_mw: float

    def __post_init__(self):
        for name in ("bandwidth_hz", "noise_mw", "snr_threshold", "gain"):
            if not np.all(np.asarray(getattr(self, name)) > 0):
                raise ParameterError(f"{name} must be > 0")
        if not np.all(np.asarray(self.power_mw) >= 0):
            raise ParameterError("power_mw must be >= 0")

    def with_power(self, power_mw) -> "LinkModel":
        return replace(self, power_mw=power_mw)

    def with_gain(self, gain) -> "LinkModel":
        return replace(self, gain=gain)

    @property
    def snr(self):
        return self.power_mw * self.gain / self.noise_mw


def calibrated_snr_threshold(noise_mw: float = NOISE_MW, theta: float = OUTAGE_THRESHOLD,
                             min_power_mw: float = MIN_POWER_MW) -> float:
    """SNR threshold making ``min_power_mw`` exactly the outage-feasible floor for ``theta``."""
    if not 0.0 < theta < 1.0:
        raise ParameterError("theta must lie in (0, 1)")
    return -min_power_mw * math.log1p(-theta) / noise_mw


def data_rate(link: LinkModel):
    """Achievable rate in bits/s, ``B log2(1 + P|g|^2 / sigma^2)``."""
    return link.bandwidth_hz * np.log2(1.0 + link.snr)


def outage_probability(link: LinkModel):
    """Probability that the instantaneous SNR falls below the threshold.

    Uses the unit-mean exponential gain model, so the sampled ``gain`` does not
    enter. Zero power raises :class:`OutageLimitError` carrying the limit 1.
    """
    power = np.asarray(link.power_mw, dtype=float)
    if np.any(power == 0):
        raise OutageLimitError("outage probability at zero power is the limit 1", value=1.0)
    out = -np.expm1(-link.snr_threshold * link.noise_mw / power)
    return float(out) if out.ndim == 0 else out


def min_power_for_outage(link: LinkModel, theta: float) -> float:
    """Smallest power whose outage probability does not exceed ``theta``."""
    if not 0.0 < theta < 1.0:
        raise ParameterError(f"theta must lie in (0, 1), got {theta}")
    return -link.snr_threshold * link.noise_mw / math.log1p(-theta)


def effective_rate(link: LinkModel):
    """Rate discounted by the probability of a successful transmission."""
    return data_rate(link) * (1.0 - outage_probability(link))


def compression_level(task_size_bits: float, fps: float, link: LinkModel):
    """Per-dimension downscale factor needed to sustain ``fps`` frames of ``task_size_bits``."""
    if task_size_bits <= 0 or fps <= 0:
        raise ParameterError("task size and frame rate must be positive")
    try:
        rate = effective_rate(link)
    except OutageLimitError as exc:
        raise InfeasibleError("link has zero power, effective rate is zero") from exc
    rate = np.asarray(rate, dtype=float)
    if np.any(rate <= 0):
        raise InfeasibleError("zero effective rate; compression level undefined")
    z = np.sqrt(task_size_bits * fps / rate)
    return float(z) if z.ndim == 0 else z
