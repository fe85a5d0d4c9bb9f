"""Global loop detection by exhaustive seam-cost search."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

VELOCITY_WEIGHT = 0.5


@dataclass(frozen=True)
class LoopSpec:
    start: int
    period: int
    cost: float


def seam_costs(frames, p_min: int, p_max: int) -> np.ndarray:
    """Cost grid ``C[p - p_min, s]``; ``inf`` marks invalid (s, p).

    ``C(s,p) = mean((F_s − F_{s+p})²) + 0.5·mean((F_{s+1} − F_{s+p+1})²)``.
    """
    f = np.asarray(frames, dtype=np.float64)
    n = f.shape[0]
    flat = f.reshape(n, -1)
    grid = np.full((p_max - p_min + 1, n), np.inf)
    for p in range(p_min, p_max + 1):
        if p + 1 >= n:
            break
        d = flat[p:] - flat[:-p]
        sq = np.mean(d * d, axis=1)  # sq[s] pairs frame s with s + p
        grid[p - p_min, : n - p - 1] = sq[:-1] + VELOCITY_WEIGHT * sq[1:]
    return grid


def find_loop(frames, p_min: int = 2, p_max: int | None = None) -> LoopSpec:
    """Minimum seam cost loop; ties go to the smallest period, then the earliest start."""
    n = len(frames)
    if p_min < 2:
        raise ValidationError(f"p_min must be >= 2, got {p_min}")
    # the velocity term needs frame s + p + 1
    if n < p_min + 2:
        raise ValidationError(f"sequence of {n} frames too short for p_min={p_min} (need {p_min + 2})")
    p_max = n - 2 if p_max is None else min(p_max, n - 2)
    if p_max < p_min:
        raise ValidationError(f"empty period range [{p_min}, {p_max}]")
    grid = seam_costs(frames, p_min, p_max)
    # argmin over the row-major (p, s) grid returns the first minimum: smallest p, then smallest s
    flat_idx = int(np.argmin(grid))
    pi, s = divmod(flat_idx, grid.shape[1])
    return LoopSpec(start=int(s), period=p_min + pi, cost=float(grid[pi, s]))


def extract_loop(frames, spec: LoopSpec, crossfade: int = 0) -> np.ndarray:
    """Frames ``s … s+p−1``; the last ``crossfade`` frames blend linearly toward
    their periodic counterparts just before ``s`` so the wrap into frame ``s``
    is smooth.  Blend weight for tail frame ``i`` is ``(i + 1)/(K + 1)``.
    """
    f = np.asarray(frames)
    s, p, k = spec.start, spec.period, int(crossfade)
    if k < 0 or (k > 0 and 2 * k >= p):
        raise ValidationError(f"crossfade {k} must satisfy 0 <= K < p/2 (p={p})")
    if s + p > len(f):
        raise ValidationError(f"loop [{s}, {s + p}) exceeds {len(f)} frames")
    out = f[s:s + p].copy()
    if k == 0:
        return out
    if s < k:
        raise ValidationError(f"crossfade {k} needs {k} frames before loop start {s}")
    out = out.astype(np.float64)
    for i in range(k):
        alpha = (i + 1) / (k + 1)
        out[p - k + i] = (1.0 - alpha) * f[s + p - k + i] + alpha * f[s - k + i]
    return out
