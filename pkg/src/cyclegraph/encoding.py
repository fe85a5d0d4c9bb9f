"""Periodic time code plus wind direction, the conditioning input of the UNet.

Harmonic ``n`` contributes ``(cos φn, sin φn)`` with ``φn = 2πn·Δt/T``.  Every
harmonic is an integer multiple of the base frequency, so any function of the
code is exactly T-periodic in Δt.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

WIND_TOL = 1e-6


@dataclass(frozen=True)
class EncodingConfig:
    period: int = 30
    harmonics: int = 5

    def __post_init__(self):
        if int(self.period) != self.period or self.period < 2:
            raise ValidationError(f"period must be an integer >= 2, got {self.period}")
        if int(self.harmonics) != self.harmonics or self.harmonics < 1:
            raise ValidationError(f"harmonics must be an integer >= 1, got {self.harmonics}")

    @property
    def code_dim(self) -> int:
        return 2 * self.harmonics + 2


@dataclass(frozen=True)
class WindSpec:
    x: float
    y: float

    def __post_init__(self):
        norm = float(np.hypot(self.x, self.y))
        if not np.isfinite(norm) or abs(norm - 1.0) > WIND_TOL:
            raise ValidationError(f"wind must be a unit vector, got ({self.x}, {self.y}) with norm {norm}")

    @classmethod
    def from_vector(cls, x: float, y: float) -> "WindSpec":
        """Normalize an arbitrary nonzero direction."""
        norm = float(np.hypot(x, y))
        if not np.isfinite(norm) or norm == 0.0:
            raise ValidationError("wind direction must be nonzero and finite")
        return cls(x / norm, y / norm)

    @classmethod
    def from_angle(cls, theta: float) -> "WindSpec":
        return cls(float(np.cos(theta)), float(np.sin(theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


def encode_time(dt, cfg: EncodingConfig) -> np.ndarray:
    """Interleaved ``[cos φ1, sin φ1, ..., cos φn, sin φn]`` in float64.

    ``dt`` may be a scalar or an array; a trailing axis of length
    ``2·harmonics`` is appended.
    """
    dt = np.asarray(dt, dtype=np.float64)
    n = np.arange(1, cfg.harmonics + 1, dtype=np.float64)
    # reduce Δt mod T first so Δt and Δt + kT hit bit-identical phases
    phase = 2.0 * np.pi * n * (np.mod(dt, cfg.period) / cfg.period)[..., None]
    out = np.empty(dt.shape + (2 * cfg.harmonics,))
    out[..., 0::2] = np.cos(phase)
    out[..., 1::2] = np.sin(phase)
    return out


def build_code(dt, cfg: EncodingConfig, wind: WindSpec) -> np.ndarray:
    if not isinstance(wind, WindSpec):
        wind = WindSpec(*np.asarray(wind, dtype=np.float64))
    return np.concatenate([encode_time(dt, cfg), wind.as_array()])


def build_codes(dts, cfg: EncodingConfig, winds) -> np.ndarray:
    """Batched codes, shape ``(N, code_dim)``; ``winds`` is ``(N, 2)`` of unit vectors."""
    winds = np.asarray(winds, dtype=np.float64).reshape(-1, 2)
    norms = np.hypot(winds[:, 0], winds[:, 1])
    if np.any(np.abs(norms - 1.0) > WIND_TOL):
        raise ValidationError("every wind must be a unit vector")
    times = encode_time(np.asarray(dts, dtype=np.float64).reshape(-1), cfg)
    if times.shape[0] != winds.shape[0]:
        raise ValidationError(f"{times.shape[0]} time offsets but {winds.shape[0]} winds")
    return np.concatenate([times, winds], axis=1)
