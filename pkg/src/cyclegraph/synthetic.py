"""Synthetic scenes with known ground truth, shared by tests and scripts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .reshader import LightModel, shade


def cap_directions(rng: np.random.Generator, count: int, axis, max_angle_deg: float) -> np.ndarray:
    """``count`` unit vectors uniform on the spherical cap around ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    cos_max = np.cos(np.deg2rad(max_angle_deg))
    z = rng.uniform(cos_max, 1.0, size=count)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=count)
    r = np.sqrt(1.0 - z * z)
    local = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    # rotate +z onto axis (Householder reflection; fine for a symmetric cap)
    e = np.array([0.0, 0.0, 1.0])
    v = e - axis
    if np.linalg.norm(v) < 1e-12:
        return local
    v /= np.linalg.norm(v)
    return local - 2.0 * np.outer(local @ v, v)


@dataclass
class LightProblem:
    normals: np.ndarray  # (3, H, W)
    light: LightModel
    shading: np.ndarray  # (H, W), noiseless


def random_light_problem(rng: np.random.Generator, size: int = 64, normal_cap: float = 70.0,
                         light_cap: float = 60.0) -> LightProblem:
    """Random camera-facing normals and a random frontal-hemisphere light."""
    n = cap_directions(rng, size * size, (0, 0, 1), normal_cap).T.reshape(3, size, size)
    u = cap_directions(rng, 1, (0, 0, -1), light_cap)[0]
    light = LightModel(tuple(u * rng.uniform(0.5, 1.2)), float(rng.uniform(0.0, 0.3)))
    return LightProblem(n, light, shade(n, light))


def lambertian_scene(rng: np.random.Generator, size: int = 32):
    """``(image, normals, mask, light)`` where ``image = shade(N)·R`` exactly.

    Reflectance has channel maximum 1 so the brightness split recovers the
    shading layer, and the light keeps shading inside [0, 1].
    """
    n = cap_directions(rng, size * size, (0, 0, 1), 60.0).T.reshape(3, size, size)
    u = cap_directions(rng, 1, (0, 0, -1), 40.0)[0]
    delta = float(rng.uniform(0.05, 0.2))
    light = LightModel(tuple(u * rng.uniform(0.5, 1.0 - delta)), delta)
    refl = rng.uniform(0.2, 1.0, size=(size, size, 3))
    refl /= refl.max(axis=2, keepdims=True)
    image = shade(n, light)[..., None] * refl
    yy, xx = np.mgrid[0:size, 0:size]
    mask = (yy - size / 2) ** 2 + (xx - size / 2) ** 2 <= (0.35 * size) ** 2
    return image, n.astype(np.float32), mask, light


def periodic_sequence(rng: np.random.Generator, period: int, length: int, shape=(4, 4)) -> np.ndarray:
    """``length`` frames repeating ``period`` distinct random frames exactly."""
    base = rng.random((period, *shape))
    return base[np.arange(length) % period]
