"""Dense NCHW tensors with a small reverse-mode autodiff engine.

Only the operations the UNet needs are provided: elementwise arithmetic with
numpy-style broadcasting, reductions, 2-D convolution, nearest/average
resampling, leaky ReLU, linear maps and channel concatenation.

Data is float32.  Passing float64 arrays (see :func:`as_float64`) gives a
shadow mode used only for finite-difference gradient checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, NumericsError, ShapeError

_FLOATS = (np.float32, np.float64)


def _as_array(data, dtype=None) -> np.ndarray:
    if dtype is not None:
        return np.asarray(data, dtype=dtype, order="C")
    arr = np.asarray(data)
    if arr.dtype.type not in _FLOATS:
        arr = arr.astype(np.float32)
    return np.asarray(arr, order="C")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out axes that were broadcast in the forward pass
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- bookkeeping -----------------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, seed=None) -> None:
        """Populate ``.grad`` on every tensor that feeds this one."""
        if seed is None:
            if self.data.size != 1:
                raise ContractError(
                    f"backward() on a non-scalar root of shape {self.shape} needs a seed gradient"
                )
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=self.data.dtype)
            if seed.shape != self.shape:
                raise ShapeError(f"seed shape {seed.shape} != root shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -------------------------------------------------------------------

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._lift(other)
        out = _node(self.data + other.data, (self, other))

        def _bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        out = _node(self.data * other.data, (self, other))

        def _bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        out = _node(self.data / other.data, (self, other))

        def _bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * self.data / other.data**2, other.shape))

        out._backward = _bw
        return out

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise ContractError("only scalar exponents are supported")
        out = _node(self.data**exponent, (self,))
        out._backward = lambda g: self._accumulate(g * exponent * self.data ** (exponent - 1))
        return out

    def abs(self):
        out = _node(np.abs(self.data), (self,))
        out._backward = lambda g: self._accumulate(g * np.sign(self.data))
        return out

    def sqrt(self):
        val = np.sqrt(self.data)
        out = _node(val, (self,))
        out._backward = lambda g: self._accumulate(g * 0.5 / val)
        return out

    def sum(self, axis=None, keepdims: bool = False):
        out = _node(np.sum(self.data, axis=axis, keepdims=keepdims), (self,))

        def _bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))

        out._backward = _bw
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,))
        out._backward = lambda g: self._accumulate(g.reshape(self.shape))
        return out


def _node(data: np.ndarray, parents: Sequence[Tensor]) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
    return out


def as_float64(t: Tensor) -> Tensor:
    return Tensor(t.data.astype(np.float64), requires_grad=t.requires_grad, name=t.name)


# -- layer ops ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerSpec:
    """Static description of one layer; the model builds its parameter table from these."""

    kind: str  # conv | downsample | upsample | nonlinearity | linear | concat
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 1
    stride: int = 1

    def __post_init__(self):
        if self.kind not in ("conv", "downsample", "upsample", "nonlinearity", "linear", "concat"):
            raise ContractError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv", "downsample") and (self.kernel % 2 == 0 or self.kernel < 1):
            raise ContractError(f"conv kernels must be odd and square, got {self.kernel}")

    @property
    def padding(self) -> int:
        return (self.kernel - 1) // 2

    def param_shapes(self) -> dict[str, tuple]:
        if self.kind in ("conv", "downsample"):
            return {
                "w": (self.out_channels, self.in_channels, self.kernel, self.kernel),
                "b": (self.out_channels,),
            }
        if self.kind == "linear":
            return {"w": (self.out_channels, self.in_channels)}
        return {}


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # (N, C, Ho, Wo, k, k) -> (N, C, k, k, Ho, Wo) -> (N, C*k*k, Ho*Wo)
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, ho * wo)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int | None = None) -> Tensor:
    """Cross-correlation of ``x[N,Cin,H,W]`` with ``kernel[Cout,Cin,k,k]``."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, cin, h, w = x.shape
    cout, kcin, k, k2 = kernel.shape
    if kcin != cin:
        raise ShapeError(f"input has {cin} channels but kernel expects {kcin}")
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"kernel must be odd and square, got {k}x{k2}")
    if padding is None:
        padding = (k - 1) // 2
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {h}x{w} too small for kernel {k} with padding {padding}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, k, stride, ho, wo)
    kmat = kernel.data.reshape(cout, cin * k * k)
    out_data = np.matmul(kmat, cols).reshape(n, cout, ho, wo)
    if bias is not None:
        out_data += bias.data.reshape(1, cout, 1, 1)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out = _node(out_data, parents)

    def _bw(g):
        gm = g.reshape(n, cout, ho * wo)
        if kernel.requires_grad:
            gk = np.einsum("nop,nqp->oq", gm, cols, optimize=True)
            kernel._accumulate(gk.reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.matmul(kmat.T, gm).reshape(n, cin, k, k, ho, wo)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, i, j]
            if padding:
                gxp = gxp[:, :, padding:padding + h, padding:padding + w]
            x._accumulate(gxp)

    out._backward = _bw
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    out = _node(np.where(pos, x.data, x.data * slope), (x,))
    out._backward = lambda g: x._accumulate(np.where(pos, g, g * slope))
    return out


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    out = _node(x.data.repeat(factor, axis=2).repeat(factor, axis=3), (x,))

    def _bw(g):
        n, c, h, w = x.shape
        x._accumulate(g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)))

    out._backward = _bw
    return out


def downsample_average(x: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError(f"spatial size {h}x{w} not divisible by {factor}")
    out = _node(x.data.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5)), (x,))

    def _bw(g):
        up = g.repeat(factor, axis=2).repeat(factor, axis=3) / (factor * factor)
        x._accumulate(up)

    out._backward = _bw
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x[N,Din] @ weight[Dout,Din].T (+ bias)``."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _node(data, parents)

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        if weight.requires_grad:
            weight._accumulate(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    out._backward = _bw
    return out


def concat(tensors: Iterable[Tensor], axis: int = 1) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tensors)
    bounds = np.cumsum([0] + sizes)

    def _bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                t._accumulate(np.take(g, np.arange(lo, hi), axis=axis))

    out._backward = _bw
    return out


# -- optimizer ---------------------------------------------------------------------------


@dataclass
class AdamState:
    step: int = 0
    m: dict = None
    v: dict = None

    def __post_init__(self):
        self.m = {} if self.m is None else self.m
        self.v = {} if self.v is None else self.v


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update, in place on ``params``; returns ``(params, state)``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient in parameter {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return params, state
