"""Central finite-difference checks against the autodiff engine.

The finite-difference side always runs in float64; the analytic side runs in
whatever precision the parameters are in.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .cyclenet import ModelConfig, init_params
from .tensor import Tensor
from .windfield import generate_sequence


def central_difference(f: Callable[[], float], arr: np.ndarray, index, h: float) -> float:
    old = arr[index]
    arr[index] = old + h
    up = f()
    arr[index] = old - h
    down = f()
    arr[index] = old
    return (up - down) / (2.0 * h)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def check_gradients(loss_fn: Callable[[dict], Tensor], arrays: dict[str, np.ndarray], dtype=np.float32,
                    h: float = 1e-6, samples: int | None = 8, seed: int = 0) -> dict[str, float]:
    """Relative error per tensor between analytic and finite-difference gradients.

    ``loss_fn`` maps ``{name: Tensor}`` to a scalar Tensor.  ``samples``
    coordinates per tensor are probed (all when ``None``).
    """
    rng = np.random.default_rng(seed)
    tensors = {k: Tensor(v.astype(dtype), requires_grad=True) for k, v in arrays.items()}
    loss_fn(tensors).backward()
    analytic = {k: t.grad if t.grad is not None else np.zeros_like(t.data) for k, t in tensors.items()}

    shadow = {k: Tensor(v.astype(np.float64), requires_grad=False) for k, v in arrays.items()}

    def f():
        return loss_fn(shadow).data.item()

    errors = {}
    for name, t in shadow.items():
        size = t.data.size
        idx = np.arange(size) if samples is None or samples >= size else rng.choice(size, samples, replace=False)
        flat_idx = [np.unravel_index(i, t.shape) for i in idx]
        fd = np.array([central_difference(f, t.data, i, h) for i in flat_idx])
        an = np.array([analytic[name][i] for i in flat_idx])
        errors[name] = relative_error(an, fd)
    return errors


def tiny_problem(seed: int = 0, size: int = 8, batch: int = 2):
    """Tiny model config, initial weights and one fixed batch of windfield pairs."""
    cfg = ModelConfig.tiny()
    params = init_params(cfg, seed)
    seq = generate_sequence(seed, size, size, cfg.period)
    rng = np.random.default_rng(seed)
    t = rng.integers(0, cfg.period, size=batch)
    dt = rng.integers(-cfg.period // 2, cfg.period // 2, size=batch, endpoint=True)
    from .encoding import build_codes

    x = seq.frames[t]
    y = seq.frames[np.mod(t + dt, cfg.period)]
    codes = build_codes(dt, cfg.encoding, np.repeat(seq.wind.as_array()[None], batch, 0))
    masks = np.repeat(seq.mask[None], batch, 0)
    return cfg, params, (x, codes, y, masks)


def pipeline_gradient_check(dtype=np.float32, seed: int = 0, h: float = 1e-6, samples: int | None = 6) -> dict:
    """Full loss (forward, L1 + unit-norm penalty) on the tiny model vs finite differences."""
    from .cyclenet import ModelParameters, forward_raw
    from .trainer import loss

    cfg, params, (x, codes, y, masks) = tiny_problem(seed)

    def loss_fn(tensors):
        p = ModelParameters(cfg, tensors)
        dt = next(iter(tensors.values())).dtype
        pred = forward_raw(p, Tensor(x, dtype=dt), Tensor(codes, dtype=dt))
        return loss(pred, y, masks)

    errors = check_gradients(loss_fn, params.arrays(), dtype=dtype, h=h, samples=samples, seed=seed)
    return {"max_relative_error": max(errors.values()), "per_tensor": errors,
            "dtype": np.dtype(dtype).name, "parameters": params.count()}
