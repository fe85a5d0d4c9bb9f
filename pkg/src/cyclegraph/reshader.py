"""Normal-guided reshading of a still image.

The image is split into a per-pixel shading scalar ``S`` and reflectance
``R``; a directional-plus-ambient light ``S ≈ max(0, −n·l) + δ`` is fitted to
the input normals; each animated normal map is shaded with that light,
multiplied back onto ``R`` and composited into the original through the mask.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormals, ShapeError, ValidationError

EPS_SHADING = 1e-3
DISTINCT_ANGLE = 1e-3  # radians; normals closer than this count as one direction


@dataclass(frozen=True)
class LightModel:
    l: tuple  # direction × intensity
    delta: float
    residual_rms: float = 0.0
    residual_max: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        if self.delta < 0 or not np.isfinite(self.delta):
            raise ValidationError(f"ambient term must be finite and >= 0, got {self.delta}")
        if not np.all(np.isfinite(self.l)):
            raise ValidationError(f"light vector must be finite, got {self.l}")

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.l, dtype=np.float64)

    @property
    def intensity(self) -> float:
        return float(np.linalg.norm(self.vector))


# -- decomposition -------------------------------------------------------------------------


def decompose(image: np.ndarray, mask: np.ndarray | None = None, eps: float = EPS_SHADING):
    """Brightness split of an ``(H,W,3)`` image in [0, 1] into ``(R, S)``.

    ``S`` is the per-pixel channel maximum clamped to ``eps`` and ``R = I/S``,
    so ``R`` stays inside [0, 1] and ``S·R`` reproduces ``I``.  ``mask`` is
    accepted for interface symmetry; the split is pointwise.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an (H,W,3) image, got {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValidationError("image values must lie in [0, 1]")
    s = np.maximum(img.max(axis=2), eps)
    r = np.clip(img / s[..., None], 0.0, 1.0)
    return r, s


def recompose(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(s)[..., None] * r, 0.0, 1.0)


# -- shading model -------------------------------------------------------------------------


def _as_hw3(normals: np.ndarray) -> np.ndarray:
    n = np.asarray(normals, dtype=np.float64)
    if n.ndim == 3 and n.shape[0] == 3 and n.shape[2] != 3:
        n = n.transpose(1, 2, 0)
    if n.shape[-1] != 3:
        raise ShapeError(f"normal map must have 3 components, got {n.shape}")
    return n


def shade(normals: np.ndarray, light: LightModel) -> np.ndarray:
    """``max(0, −n·l) + δ`` per pixel; normals as ``(3,H,W)`` or ``(H,W,3)``."""
    n = _as_hw3(normals)
    return np.maximum(0.0, -(n @ light.vector)) + light.delta


def hemisphere_directions(count: int = 64) -> np.ndarray:
    """Unit light directions with non-positive z, ordered from frontal (0,0,−1) outward."""
    i = np.arange(count, dtype=np.float64)
    z = -(1.0 - i / count)  # z from -1 toward 0, equal-area spacing
    r = np.sqrt(1.0 - z * z)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    theta = golden * i
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def _fit_amplitude(g: np.ndarray, s: np.ndarray):
    """Least squares ``s ≈ a·g + δ`` with ``a, δ >= 0``; returns ``(a, δ, sse)``."""
    n = len(s)
    sg, ss, sgg, sgs = g.sum(), s.sum(), g @ g, g @ s
    det = n * sgg - sg * sg
    best = None
    if det > 1e-12 * max(1.0, n * sgg):
        a = (n * sgs - sg * ss) / det
        d = (ss - a * sg) / n
        if a >= 0 and d >= 0:
            best = (a, d)
    if best is None:
        cands = []
        if sgg > 0:
            cands.append((max(sgs / sgg, 0.0), 0.0))
        cands.append((0.0, max(ss / n, 0.0)))
        best = min(cands, key=lambda ad: np.sum((ad[0] * g + ad[1] - s) ** 2))
    a, d = best
    return a, d, float(np.sum((a * g + d - s) ** 2))


def _sse(n: np.ndarray, s: np.ndarray, l: np.ndarray, d: float) -> float:
    r = np.maximum(0.0, -(n @ l)) + d - s
    return float(r @ r)


def has_two_directions(n: np.ndarray) -> bool:
    """True if some normal differs from the first by more than ``DISTINCT_ANGLE``."""
    return bool(np.any(n @ n[0] < np.cos(DISTINCT_ANGLE)))


def fit_light(normals: np.ndarray, shading: np.ndarray, mask: np.ndarray | None = None,
              directions: int = 64, iterations: int = 50, tol: float = 1e-14,
              trace: list | None = None) -> LightModel:
    """Fit ``(l, δ)`` minimizing ``Σ (max(0, −n·l) + δ − S)²`` over the mask.

    A grid over hemisphere directions with closed-form ``(intensity, δ)``
    gives the start; Gauss–Newton with step halving and ``δ >= 0`` refines it.
    Equal-cost grid candidates resolve to the more frontal direction.  If the
    mask holds fewer than two distinct normal directions the ambient-only
    light ``(0, mean S)`` is returned with ``degenerate=True``.
    """
    n = _as_hw3(normals)
    s = np.asarray(shading, dtype=np.float64)
    if s.shape != n.shape[:2]:
        raise ShapeError(f"shading {s.shape} does not match normals {n.shape[:2]}")
    m = np.ones(s.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != s.shape:
        raise ShapeError(f"mask {m.shape} does not match shading {s.shape}")
    nv = n[m]
    sv = s[m]
    if len(sv) == 0:
        raise ValidationError("mask is empty")

    try:
        if not has_two_directions(nv):
            raise DegenerateNormals("fewer than two distinct normal directions inside the mask")
    except DegenerateNormals as exc:
        warnings.warn(f"{exc}; falling back to ambient-only light", RuntimeWarning, stacklevel=2)
        d = float(max(sv.mean(), 0.0))
        res = sv - d
        return LightModel((0.0, 0.0, 0.0), d, float(np.sqrt(np.mean(res * res))),
                          float(np.abs(res).max()), degenerate=True)

    best_l, best_d, best_sse = np.zeros(3), float(max(sv.mean(), 0.0)), np.inf
    for u in hemisphere_directions(directions):
        g = np.maximum(0.0, -(nv @ u))
        a, d, sse = _fit_amplitude(g, sv)
        if not np.isfinite(best_sse) or sse < best_sse - 1e-9 * (1.0 + best_sse):
            best_l, best_d, best_sse = a * u, d, sse

    l, d, cur = best_l.copy(), best_d, best_sse
    if trace is not None:
        trace.append(cur)
    for _ in range(iterations):
        if cur <= tol:
            break
        lit = (-(nv @ l)) > 0
        r = np.maximum(0.0, -(nv @ l)) + d - sv
        jac = np.zeros((len(sv), 4))
        jac[lit, :3] = -nv[lit]
        jac[:, 3] = 1.0
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        t = 1.0
        improved = False
        while t > 1e-6:
            l_new = l + t * step[:3]
            d_new = max(d + t * step[3], 0.0)
            new = _sse(nv, sv, l_new, d_new)
            if new < cur:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        gain = cur - new
        l, d, cur = l_new, d_new, new
        if trace is not None:
            trace.append(cur)
        if gain <= 1e-12 * (1.0 + cur):
            break

    res = np.maximum(0.0, -(nv @ l)) + d - sv
    return LightModel(tuple(float(v) for v in l), float(d), float(np.sqrt(np.mean(res * res))),
                      float(np.abs(res).max()))


# -- compositing and animation -------------------------------------------------------------


def composite(base: np.ndarray, overlay: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``overlay`` inside the mask, ``base`` (untouched) outside."""
    base = np.asarray(base)
    overlay = np.asarray(overlay)
    if base.shape != overlay.shape:
        raise ShapeError(f"composite: {base.shape} vs {overlay.shape}")
    m = np.asarray(mask, dtype=bool)
    return np.where(m[..., None] if base.ndim == m.ndim + 1 else m, overlay, base)


def reshade_frame(image: np.ndarray, reflectance: np.ndarray, normals: np.ndarray, light: LightModel,
                  mask: np.ndarray) -> np.ndarray:
    """One float frame in [0, 1]: ``composite(I, clip(shade(N)·R), mask)``."""
    return composite(np.asarray(image, dtype=np.float64), recompose(reflectance, shade(normals, light)), mask)


@dataclass
class FrameSequence:
    frames: np.ndarray  # (T, H, W, 3) uint8
    period: int
    light: LightModel
    normals: np.ndarray | None = None  # (T, 3, H, W)
    wind: tuple | None = None


def reshade_sequence(image: np.ndarray, input_normals: np.ndarray, normal_seq, mask: np.ndarray,
                     light: LightModel | None = None):
    """Reshade an image for every normal map in ``normal_seq``.

    ``image`` is float ``(H,W,3)`` in [0, 1] or uint8.  Returns ``(frames,
    light)`` with uint8 frames; pixels outside the mask are copied bit for bit
    from the 8-bit input.
    """
    src = np.asarray(image)
    img8 = src if src.dtype == np.uint8 else np.round(np.clip(src, 0, 1) * 255).astype(np.uint8)
    img = img8.astype(np.float64) / 255.0 if src.dtype == np.uint8 else np.asarray(src, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if img.shape[:2] != m.shape or _as_hw3(input_normals).shape[:2] != m.shape:
        raise ShapeError("image, normals and mask must share height and width")
    r, s = decompose(img, m)
    if light is None:
        light = fit_light(input_normals, s, m)
    frames = []
    for nt in normal_seq:
        out = np.round(np.clip(recompose(r, shade(nt, light)), 0, 1) * 255).astype(np.uint8)
        frames.append(composite(img8, out, m))
    return np.stack(frames), light


def animate(image: np.ndarray, normals: np.ndarray, mask: np.ndarray, wind, params, period: int | None = None,
            batch: int = 8) -> FrameSequence:
    """Still image -> looping frame sequence through the trained network.

    Frame t uses ``N_t = f(N_input, t, w)``; the code is periodic in t so
    frame ``T`` would reproduce frame 0.
    """
    from .cyclenet import predict_sequence
    from .encoding import WindSpec

    if not isinstance(wind, WindSpec):
        wind = WindSpec.from_vector(*wind)
    n0 = np.asarray(normals, dtype=np.float32)
    if n0.shape[0] != 3:
        n0 = n0.transpose(2, 0, 1).copy()
    seq = predict_sequence(params, n0, wind, period=period, batch=batch)
    frames, light = reshade_sequence(image, n0, seq, mask)
    return FrameSequence(frames=frames, period=len(frames), light=light, normals=seq, wind=(wind.x, wind.y))
