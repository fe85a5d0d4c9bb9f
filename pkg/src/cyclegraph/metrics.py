"""Pixel and structural image similarity: MAE, MSE, RMSE, PSNR and SSIM."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ShapeError, ValidationError

PSNR_CAP = 99.0


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    if mse <= 0.0:
        return PSNR_CAP
    return float(10.0 * np.log10(peak * peak / mse))


def pixel_metrics(a, b, peak: float = 1.0) -> tuple[float, float, float, float]:
    """``(mae, mse, rmse, psnr)`` averaged over every pixel and channel.

    PSNR of identical images is reported as the 99 dB sentinel.
    """
    if peak <= 0:
        raise ValidationError(f"peak must be positive, got {peak}")
    a, b = _pair(a, b)
    d = a - b
    mae = float(np.mean(np.abs(d)))
    mse = float(np.mean(d * d))
    rmse = float(np.sqrt(mse))
    return mae, mse, rmse, psnr_from_mse(mse, peak)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable Gaussian, cropped to positions where the full window fits
    r = len(g) // 2
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim_map(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03,
             peak: float = 1.0) -> np.ndarray:
    """Local SSIM over valid window positions of two single-channel images."""
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise ShapeError(f"ssim_map expects 2-D images, got {a.shape}")
    if min(a.shape) < window:
        raise ValidationError(f"images must be at least {window}x{window}, got {a.shape}")
    g = gaussian_window(window, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03,
         peak: float = 1.0, channel_axis: int | None = None) -> float:
    """Mean SSIM with Gaussian-weighted moments.

    Multichannel input is scored per channel and averaged; pass
    ``channel_axis`` for anything that is not ``(H, W)``.
    """
    a, b = _pair(a, b)
    if channel_axis is None:
        if a.ndim != 2:
            raise ShapeError(f"pass channel_axis for {a.ndim}-D images")
        return float(np.mean(ssim_map(a, b, window, sigma, k1, k2, peak)))
    a = np.moveaxis(a, channel_axis, 0)
    b = np.moveaxis(b, channel_axis, 0)
    vals = [np.mean(ssim_map(x, y, window, sigma, k1, k2, peak)) for x, y in zip(a, b)]
    return float(np.mean(vals))


@dataclass
class MetricReport:
    mae: list[float] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)
    rmse: list[float] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    NAMES = ("mae", "mse", "rmse", "psnr", "ssim")

    def add(self, a, b, peak: float = 1.0, channel_axis: int | None = None) -> None:
        mae, mse, rmse, psnr = pixel_metrics(a, b, peak)
        self.mae.append(mae)
        self.mse.append(mse)
        self.rmse.append(rmse)
        self.psnr.append(psnr)
        self.ssim.append(ssim(a, b, peak=peak, channel_axis=channel_axis))

    def __len__(self) -> int:
        return len(self.mae)

    def aggregate(self) -> dict[str, float]:
        return {k: float(np.mean(getattr(self, k))) if len(self) else float("nan") for k in self.NAMES}

    def to_dict(self) -> dict:
        return {"per_frame": {k: list(getattr(self, k)) for k in self.NAMES}, "mean": self.aggregate()}

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("frame",) + self.NAMES)
            for i in range(len(self)):
                w.writerow([i] + [repr(getattr(self, k)[i]) for k in self.NAMES])
        return path
