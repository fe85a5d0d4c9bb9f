"""Image IO, the 8-bit normal-map codec and animated GIF export.

Normal maps live in memory as float32 ``(3, H, W)`` arrays; on disk they are
RGB PNGs with ``c = round(255·(n + 1)/2)`` per component.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import GifImagePlugin, Image

from .errors import ValidationError


def worker_count() -> int:
    """Upper bound on worker threads, from ``CYCLEGRAPH_THREADS`` (default: CPU count)."""
    env = os.environ.get("CYCLEGRAPH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"CYCLEGRAPH_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


# -- normal codec --------------------------------------------------------------------------


def encode_normals(n: np.ndarray) -> np.ndarray:
    """``(3,H,W)`` unit normals -> ``(H,W,3)`` uint8."""
    c = np.round(255.0 * (np.asarray(n, dtype=np.float64) + 1.0) / 2.0)
    return np.clip(c, 0, 255).astype(np.uint8).transpose(1, 2, 0).copy()


def decode_normals_raw(c: np.ndarray) -> np.ndarray:
    """Linear part of the decoder, no renormalization; exact inverse of the rounding grid."""
    return (2.0 * np.asarray(c, dtype=np.float64) / 255.0 - 1.0).transpose(2, 0, 1)


def decode_normals(c: np.ndarray) -> np.ndarray:
    """``(H,W,3)`` uint8 -> ``(3,H,W)`` float32 unit normals."""
    v = decode_normals_raw(c)
    v /= np.sqrt(np.sum(v * v, axis=0, keepdims=True))
    return v.astype(np.float32)


# -- PNG -----------------------------------------------------------------------------------


def write_png(path, arr: np.ndarray) -> Path:
    path = Path(path)
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ValidationError(f"write_png expects uint8, got {arr.dtype}")
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")
    return path


def read_png(path, mode: str | None = None) -> np.ndarray:
    with Image.open(path) as im:
        if mode is not None and im.mode != mode:
            im = im.convert(mode)
        return np.asarray(im).copy()


def save_normals(path, n: np.ndarray) -> Path:
    return write_png(path, encode_normals(n))


def load_normals(path) -> np.ndarray:
    return decode_normals(read_png(path, "RGB"))


def save_mask(path, mask: np.ndarray) -> Path:
    return write_png(path, np.where(mask, 255, 0).astype(np.uint8))


def load_mask(path) -> np.ndarray:
    return read_png(path, "L") > 127


def load_image(path) -> np.ndarray:
    """8-bit RGB PNG as float64 ``(H,W,3)`` in [0, 1]."""
    return read_png(path, "RGB").astype(np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def list_frames(directory) -> list[Path]:
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise FileNotFoundError(f"no PNG frames in {directory}")
    return paths


def read_frame_dir(directory) -> np.ndarray:
    """PNG frames sorted lexicographically, stacked to ``(T,H,W,C)`` float64 in [0, 1]."""
    frames = [read_png(p, "RGB").astype(np.float64) / 255.0 for p in list_frames(directory)]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ValidationError(f"frames in {directory} have differing sizes: {sorted(shapes)}")
    return np.stack(frames)


# -- GIF -----------------------------------------------------------------------------------


def gif_delay_cs(fps: float) -> int:
    if fps <= 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    return int(round(100.0 / fps))


def export_gif(frames: Sequence[np.ndarray], path, fps: float = 30.0) -> Path:
    """GIF89a with one median-cut 256-colour palette shared by all frames.

    Frames are ``(H,W,3)`` uint8.  Every frame is written with its own
    graphic control block so identical consecutive frames are not merged.
    """
    if len(frames) == 0:
        raise ValidationError("export_gif needs at least one frame")
    frames = [np.asarray(f, dtype=np.uint8) for f in frames]
    h, w = frames[0].shape[:2]
    if any(f.shape != frames[0].shape for f in frames):
        raise ValidationError("all GIF frames must share one shape")
    delay_ms = gif_delay_cs(fps) * 10

    stacked = Image.fromarray(np.concatenate(frames, axis=0))
    palette_img = stacked.quantize(256, method=Image.Quantize.MEDIANCUT, dither=Image.Dither.NONE)
    indexed = [Image.fromarray(f).quantize(palette=palette_img, dither=Image.Dither.NONE) for f in frames]

    info = {"loop": 0, "duration": delay_ms, "optimize": False}
    header, _ = GifImagePlugin.getheader(indexed[0], info=info)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        for chunk in header:
            fh.write(chunk)
        for im in indexed:
            for chunk in GifImagePlugin.getdata(im, duration=delay_ms):
                fh.write(chunk)
        fh.write(b";")
    return path


def read_gif_frames(path) -> list[np.ndarray]:
    out = []
    with Image.open(path) as im:
        for i in range(getattr(im, "n_frames", 1)):
            im.seek(i)
            out.append(np.asarray(im.convert("RGB")).copy())
    return out
