"""Procedural, exactly periodic wrinkle animations in normal-map space.

Each sequence is a sum of travelling sine waves over a height field,

    h(p, t) = Σ_j a_j · sin(2π(k_j·p − m_j·t/T) + ψ_j),

with wave vectors within ±30° of the wind and integer temporal frequencies
``m_j``, so ``h(·, t + T) = h(·, t)`` exactly.  Normals follow from the
analytic gradient, ``n ∝ (−∂h/∂x, −∂h/∂y, 1)``.  Outside the garment mask the
normal is flat; inside, the slope is tapered to zero over a 3-pixel band at
the mask boundary.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io
from .encoding import WindSpec
from .errors import FormatError, ValidationError

TAPER_BAND = 3.0
MAX_ANGLE = np.deg2rad(30.0)
FLAT = np.array([0.0, 0.0, 1.0])


@dataclass
class WaveParams:
    amplitude: np.ndarray  # (J,)
    k: np.ndarray  # (J, 2) cycles/pixel, (x, y)
    m: np.ndarray  # (J,) int, cycles per loop
    phase: np.ndarray  # (J,)

    def __post_init__(self):
        self.amplitude = np.asarray(self.amplitude, dtype=np.float64).reshape(-1)
        self.k = np.asarray(self.k, dtype=np.float64).reshape(-1, 2)
        m = np.asarray(self.m).reshape(-1)
        if not np.all(m == np.round(m)):
            raise ValidationError("temporal frequencies must be integers for exact periodicity")
        self.m = m.astype(np.int64)
        self.phase = np.asarray(self.phase, dtype=np.float64).reshape(-1)
        n = len(self.amplitude)
        if not (len(self.k) == len(self.m) == len(self.phase) == n):
            raise ValidationError("wave parameter arrays must have equal length")

    def energy_direction(self) -> np.ndarray:
        """Slope-energy-weighted mean unit direction of the wave vectors."""
        norms = np.linalg.norm(self.k, axis=1)
        weight = (self.amplitude * norms) ** 2
        d = (weight[:, None] * self.k / norms[:, None]).sum(axis=0)
        return d / np.linalg.norm(d)


@dataclass
class SequenceSample:
    frames: np.ndarray  # (T, 3, H, W) float32
    wind: WindSpec
    mask: np.ndarray  # (H, W) bool
    seed: int
    waves: WaveParams | None = None

    @property
    def period(self) -> int:
        return self.frames.shape[0]


def sample_mask(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Random ellipse or rounded rectangle covering a sizeable part of the frame."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy = rng.uniform(0.4, 0.6) * (height - 1)
    cx = rng.uniform(0.4, 0.6) * (width - 1)
    ry = rng.uniform(0.3, 0.45) * height
    rx = rng.uniform(0.3, 0.45) * width
    if rng.random() < 0.5:
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    else:
        r = rng.uniform(0.2, 0.5) * min(rx, ry)
        dy = np.maximum(np.abs(yy - cy) - (ry - r), 0.0)
        dx = np.maximum(np.abs(xx - cx) - (rx - r), 0.0)
        mask = dx**2 + dy**2 <= r**2
    return mask


def sample_waves(rng: np.random.Generator, wind: WindSpec) -> WaveParams:
    j = int(rng.integers(3, 7))
    base = np.arctan2(wind.y, wind.x)
    angle = base + rng.uniform(-MAX_ANGLE, MAX_ANGLE, size=j)
    wavelength = rng.uniform(8.0, 32.0, size=j)
    k = np.stack([np.cos(angle), np.sin(angle)], axis=1) / wavelength[:, None]
    return WaveParams(
        amplitude=rng.uniform(0.05, 0.3, size=j),
        k=k,
        m=rng.integers(1, 3, size=j),
        phase=rng.uniform(0.0, 2.0 * np.pi, size=j),
    )


def taper(mask: np.ndarray) -> np.ndarray:
    """0 on the outermost mask ring rising linearly to 1 three pixels in.

    The image border is not treated as a mask boundary.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        return np.ones(mask.shape)
    pad = int(TAPER_BAND) + 1
    padded = np.pad(mask, pad, mode="edge")
    dist = ndimage.distance_transform_edt(padded)[pad:-pad, pad:-pad]
    return np.clip((dist - 1.0) / TAPER_BAND, 0.0, 1.0) * mask


def height_slopes(waves: WaveParams, height: int, width: int, t, period: int):
    """Analytic ``(∂h/∂x, ∂h/∂y)`` at every pixel for time(s) ``t``; shape ``(..., H, W)``."""
    t = np.asarray(t, dtype=np.float64)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    gx = np.zeros(t.shape + (height, width))
    gy = np.zeros_like(gx)
    tt = t[..., None, None]
    for a, (kx, ky), m, psi in zip(waves.amplitude, waves.k, waves.m, waves.phase):
        # reduce m·t mod T so t and t + kT give bit-identical phases
        arg = 2.0 * np.pi * (kx * xx + ky * yy - np.mod(m * tt, period) / period) + psi
        c = a * 2.0 * np.pi * np.cos(arg)
        gx += c * kx
        gy += c * ky
    return gx, gy


def normals_at(waves: WaveParams, mask: np.ndarray, t, period: int) -> np.ndarray:
    """Normal maps at time(s) ``t``: ``(3,H,W)`` for scalar t, ``(len(t),3,H,W)`` otherwise."""
    h, w = mask.shape
    gx, gy = height_slopes(waves, h, w, t, period)
    s = taper(mask)
    n = np.stack([-gx * s, -gy * s, np.ones_like(gx)], axis=-3)
    n /= np.sqrt(np.sum(n * n, axis=-3, keepdims=True))
    return n


def generate_sequence(seed: int, height: int, width: int, period: int, wind: WindSpec | None = None,
                      mask: np.ndarray | None = None, waves: WaveParams | None = None) -> SequenceSample:
    """One looping normal sequence of ``period`` frames.

    Anything not supplied (wind, mask, waves) is drawn from ``seed``.
    """
    if period < 2:
        raise ValidationError(f"period must be >= 2, got {period}")
    rng = np.random.default_rng(seed)
    if wind is None:
        wind = WindSpec.from_angle(rng.uniform(0.0, 2.0 * np.pi))
    if mask is None:
        mask = sample_mask(rng, height, width)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (height, width):
        raise ValidationError(f"mask shape {mask.shape} != ({height}, {width})")
    if not mask.any():
        raise ValidationError("mask is empty")
    if waves is None:
        waves = sample_waves(rng, wind)
    frames = normals_at(waves, mask, np.arange(period), period).astype(np.float32)
    return SequenceSample(frames=frames, wind=wind, mask=mask, seed=int(seed), waves=waves)


# -- datasets ------------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSpec:
    n_sequences: int = 64
    height: int = 32
    width: int = 32
    period: int = 30
    seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.n_sequences < 1:
            raise ValidationError("n_sequences must be >= 1")
        if self.height < 1 or self.width < 1:
            raise ValidationError("height and width must be positive")
        if self.period < 2:
            raise ValidationError("period must be >= 2")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValidationError("test_fraction must lie in [0, 1)")

    @property
    def n_test(self) -> int:
        return int(round(self.test_fraction * self.n_sequences))


@dataclass
class Dataset:
    """In-memory sequences with their split labels."""

    sequences: list[SequenceSample]
    splits: list[str]
    period: int
    root: Path | None = None

    def __len__(self) -> int:
        return len(self.sequences)

    def split(self, name: str) -> "Dataset":
        keep = [i for i, s in enumerate(self.splits) if s == name]
        return Dataset([self.sequences[i] for i in keep], [name] * len(keep), self.period, self.root)

    @property
    def frames(self) -> np.ndarray:
        return np.stack([s.frames for s in self.sequences])

    @property
    def masks(self) -> np.ndarray:
        return np.stack([s.mask for s in self.sequences])

    @property
    def winds(self) -> np.ndarray:
        return np.stack([s.wind.as_array() for s in self.sequences])


def sequence_seeds(spec: DatasetSpec) -> list[int]:
    ss = np.random.SeedSequence(spec.seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(spec.n_sequences)]


def build_dataset(spec: DatasetSpec) -> Dataset:
    """Generate every sequence in memory (no quantization)."""
    seeds = sequence_seeds(spec)
    n_train = spec.n_sequences - spec.n_test
    seqs = [generate_sequence(s, spec.height, spec.width, spec.period) for s in seeds]
    splits = ["train" if i < n_train else "test" for i in range(spec.n_sequences)]
    return Dataset(seqs, splits, spec.period)


def _write_sequence(root: Path, index: int, seq: SequenceSample) -> None:
    d = root / f"seq_{index:04d}"
    d.mkdir(parents=True, exist_ok=True)
    io.save_mask(d / "mask.png", seq.mask)
    for t, n in enumerate(seq.frames):
        io.save_normals(d / f"normal_{t:04d}.png", n)


def generate_dataset(spec: DatasetSpec, out_dir) -> dict:
    """Write ``manifest.json`` plus one PNG directory per sequence; returns the manifest."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    ds = build_dataset(spec)
    entries = []
    for i, (seq, split) in enumerate(zip(ds.sequences, ds.splits)):
        entries.append({
            "index": i,
            "path": f"seq_{i:04d}",
            "seed": seq.seed,
            "wind": [seq.wind.x, seq.wind.y],
            "T": spec.period,
            "split": split,
        })
    with ThreadPoolExecutor(max_workers=io.worker_count()) as pool:
        list(pool.map(lambda a: _write_sequence(root, *a), enumerate(ds.sequences)))
    manifest = {"version": 1, "spec": asdict(spec), "sequences": entries}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_dataset(root) -> Dataset:
    root = Path(root)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
        entries = manifest["sequences"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{root / 'manifest.json'}: {exc}") from exc
    seqs, splits, periods = [], [], set()
    for e in entries:
        d = root / e["path"]
        period = int(e["T"])
        periods.add(period)
        frames = np.stack([io.load_normals(d / f"normal_{t:04d}.png") for t in range(period)])
        seqs.append(SequenceSample(
            frames=frames,
            wind=WindSpec.from_vector(*e["wind"]),
            mask=io.load_mask(d / "mask.png"),
            seed=int(e["seed"]),
        ))
        splits.append(e["split"])
    if len(periods) != 1:
        raise FormatError(f"{root}: sequences disagree on the loop period: {sorted(periods)}")
    return Dataset(seqs, splits, periods.pop(), root)
