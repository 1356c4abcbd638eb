"""Surrogate generated-image quality as a function of semantic compression.

The parametric curves stand in for measured ImageReward / SSIM responses. A
measured table can replace them through :func:`load_measured_curve`.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channel
from .errors import IngestionError, ParameterError

REWARD = "reward"
SIMILARITY = "similarity"
CHANNELS = (REWARD, SIMILARITY)

# 512 x 512 frame at 12 bits per pixel (8-bit 4:2:0).
DEFAULT_DATA_SIZE_BITS = 512 * 512 * 12
DEFAULT_FPS = 30.0


class SemanticType(str, enum.Enum):
    DEPTH = "depth"
    SEGMENTATION = "segmentation"
    CANNY = "canny"
    POSE = "pose"


@dataclass(frozen=True)
class QualityCurve:
    """Exponential decay in Z with an optional Gaussian bump.

    ``q(Z) = clip(q0 * exp(-k (Z - 1)) + h * exp(-((Z - c) / w)^2), 0, 1)``,
    with separate ``(q0, k)`` for the reward and similarity channels.
    """

    reward_q0: float
    reward_k: float
    sim_q0: float
    sim_k: float
    bump_enabled: bool = False
    bump_center: float = 7.0
    bump_width: float = 2.0
    bump_height: float = 0.0

    def __post_init__(self):
        for q0 in (self.reward_q0, self.sim_q0):
            if not 0.0 < q0 <= 1.0:
                raise ParameterError(f"base quality must lie in (0, 1], got {q0}")
        if self.reward_k < 0 or self.sim_k < 0:
            raise ParameterError("decay rates must be non-negative")
        if self.bump_enabled:
            if self.bump_center <= 1 or self.bump_width <= 0 or self.bump_height < 0:
                raise ParameterError("bump needs center > 1, width > 0, height >= 0")

    @classmethod
    def shared(cls, q0: float, k: float, **bump) -> "QualityCurve":
        return cls(q0, k, q0, k, **bump)

    def without_bump(self) -> "QualityCurve":
        return QualityCurve(self.reward_q0, self.reward_k, self.sim_q0, self.sim_k)

    def value(self, channel_name: str, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < 1):
            raise ParameterError("compression level must be >= 1")
        if channel_name == REWARD:
            q0, k = self.reward_q0, self.reward_k
        elif channel_name == SIMILARITY:
            q0, k = self.sim_q0, self.sim_k
        else:
            raise ParameterError(f"unknown quality channel {channel_name!r}")
        q = q0 * np.exp(-k * (z - 1.0))
        if self.bump_enabled:
            q = q + self.bump_height * np.exp(-(((z - self.bump_center) / self.bump_width) ** 2))
        q = np.clip(q, 0.0, 1.0)
        return float(q) if q.ndim == 0 else q


# Bump height is raised from 0.06 so the depth curve actually turns upward
# between Z = 5 and Z = 7 (0.06 is swamped by the decay term).
DEFAULT_CURVES = {
    SemanticType.DEPTH: QualityCurve.shared(
        0.92, 0.15, bump_enabled=True, bump_center=7.0, bump_width=2.0, bump_height=0.3),
    SemanticType.SEGMENTATION: QualityCurve.shared(0.88, 0.10),
    SemanticType.CANNY: QualityCurve.shared(0.90, 0.12),
    SemanticType.POSE: QualityCurve.shared(0.85, 0.08),
}


def default_curve(semantic_type: SemanticType | str) -> QualityCurve:
    return DEFAULT_CURVES[SemanticType(semantic_type)]


def curve_value(curve, channel_name: str, z):
    return curve.value(channel_name, z)


@dataclass(frozen=True)
class MeasuredCurve:
    """Piecewise-linear interpolant over a measured ``(z, q_reward, q_sim)`` table."""

    z: np.ndarray
    q_reward: np.ndarray
    q_sim: np.ndarray

    def value(self, channel_name: str, z):
        z = np.asarray(z, dtype=float)
        if channel_name == REWARD:
            table = self.q_reward
        elif channel_name == SIMILARITY:
            table = self.q_sim
        else:
            raise ParameterError(f"unknown quality channel {channel_name!r}")
        # np.interp holds the endpoint values outside the knot range
        q = np.interp(z, self.z, table)
        return float(q) if q.ndim == 0 else q


def load_measured_curve(path) -> MeasuredCurve:
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["z", "q_reward", "q_sim"]:
            raise IngestionError("header must be 'z,q_reward,q_sim'", row=1)
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) != 3:
                raise IngestionError(f"expected 3 fields, got {len(raw)}", row=lineno)
            try:
                z, qr, qs = (float(cell) for cell in raw)
            except ValueError as exc:
                raise IngestionError(f"non-numeric field ({exc})", row=lineno) from None
            if not all(np.isfinite([z, qr, qs])):
                raise IngestionError("non-finite value", row=lineno)
            if not (0.0 <= qr <= 1.0 and 0.0 <= qs <= 1.0):
                raise IngestionError("quality values must lie in [0, 1]", row=lineno)
            if rows and z <= rows[-1][1]:
                raise IngestionError("z must be strictly increasing", row=lineno)
            rows.append((lineno, z, qr, qs))
    if len(rows) < 2:
        raise IngestionError("need at least two data rows to interpolate")
    data = np.array([r[1:] for r in rows], dtype=float)
    return MeasuredCurve(data[:, 0], data[:, 1], data[:, 2])


@dataclass(frozen=True)
class QualityWeights:
    beta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError("beta must lie in [0, 1]")


def combined_quality(weights: QualityWeights, q_reward, q_sim):
    return weights.beta * q_reward + (1.0 - weights.beta) * q_sim


@dataclass(frozen=True)
class SemanticTask:
    semantic_type: SemanticType
    data_size_bits: float = DEFAULT_DATA_SIZE_BITS
    fps: float = DEFAULT_FPS
    curve: QualityCurve | MeasuredCurve | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "semantic_type", SemanticType(self.semantic_type))
        if self.data_size_bits <= 0 or self.fps <= 0:
            raise ParameterError("data size and frame rate must be positive")
        if self.curve is None:
            object.__setattr__(self, "curve", default_curve(self.semantic_type))


def task_quality(task: SemanticTask, link: channel.LinkModel, weights: QualityWeights):
    """Combined quality of ``task`` transmitted over ``link``.

    Compression below 1 is clamped to 1: spare rate cannot improve on the
    uncompressed semantics.
    """
    z = np.maximum(1.0, channel.compression_level(task.data_size_bits, task.fps, link))
    q = combined_quality(weights, task.curve.value(REWARD, z), task.curve.value(SIMILARITY, z))
    return float(q) if np.ndim(q) == 0 else q
