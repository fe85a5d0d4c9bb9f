"""Wind-conditioned cyclic UNet mapping ``(N_t, Δt, w) -> N_{t+Δt}``.

The encoder extracts one feature map per scale.  Each map goes through a 1x1
conv, receives ``W_i · code`` as a per-channel bias, goes through another 1x1
conv, and is then handed to the decoder as the skip connection for that scale.
Time enters only through the periodic code, so the output is exactly periodic
in Δt whatever the weights are.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encoding import EncodingConfig, WindSpec, build_code, build_codes
from .errors import FormatError, ShapeError, ValidationError
from .tensor import LayerSpec, Tensor, concat, conv2d, leaky_relu, linear, upsample_nearest

MAGIC = b"CGNW"
FORMAT_VERSION = 1
FULL_CHANNELS = (64, 128, 256, 512, 1024)


@dataclass(frozen=True)
class ModelConfig:
    scales: int = 5
    base_channels: int = 64
    divisor: int = 8
    in_channels: int = 3
    out_channels: int = 3
    period: int = 30
    harmonics: int = 5
    slope: float = 0.2

    def __post_init__(self):
        if self.scales < 1:
            raise ValidationError("scales must be >= 1")
        if self.divisor < 1 or self.base_channels % self.divisor:
            raise ValidationError(
                f"divisor must be >= 1 and divide base_channels ({self.base_channels}), got {self.divisor}"
            )
        EncodingConfig(self.period, self.harmonics)

    @property
    def channels(self) -> list[int]:
        base = self.base_channels // self.divisor
        return [base * 2**i for i in range(self.scales)]

    @property
    def code_dim(self) -> int:
        return 2 * self.harmonics + 2

    @property
    def encoding(self) -> EncodingConfig:
        return EncodingConfig(self.period, self.harmonics)

    @property
    def size_multiple(self) -> int:
        return 2 ** (self.scales - 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def tiny(cls, **kw) -> "ModelConfig":
        """Two scales, four base channels; used by gradient checks."""
        kw = {"scales": 2, "base_channels": 4, "divisor": 1, "period": 8, **kw}
        return cls(**kw)


def layer_table(cfg: ModelConfig) -> dict[str, LayerSpec]:
    """Every parameterized layer, keyed by name, in a fixed order."""
    ch = cfg.channels
    d = cfg.code_dim
    layers: dict[str, LayerSpec] = {}
    for i, c in enumerate(ch):
        if i == 0:
            layers["enc0.conv_a"] = LayerSpec("conv", cfg.in_channels, c, 3)
        else:
            layers[f"enc{i}.down"] = LayerSpec("downsample", ch[i - 1], c, 3, stride=2)
        layers[f"enc{i}.conv_b"] = LayerSpec("conv", c, c, 3)
        layers[f"inj{i}.pre"] = LayerSpec("conv", c, c, 1)
        layers[f"inj{i}.code"] = LayerSpec("linear", d, c)
        layers[f"inj{i}.post"] = LayerSpec("conv", c, c, 1)
    for i in range(len(ch) - 2, -1, -1):
        layers[f"dec{i}.up"] = LayerSpec("conv", ch[i + 1], ch[i], 3)
        layers[f"dec{i}.fuse"] = LayerSpec("conv", 2 * ch[i], ch[i], 3)
    layers["head"] = LayerSpec("conv", ch[0], cfg.out_channels, 1)
    return layers


@dataclass
class ModelParameters:
    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {k: t.grad for k, t in self.tensors.items() if t.grad is not None}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def astype(self, dtype) -> "ModelParameters":
        return ModelParameters(
            self.config,
            {k: Tensor(t.data.astype(dtype), requires_grad=True, name=k) for k, t in self.tensors.items()},
        )

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            self.config,
            {k: Tensor(t.data.copy(), requires_grad=True, name=k) for k, t in self.tensors.items()},
        )

    def count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParameters:
    """He-uniform kernels, zero biases; injection maps scaled by 1/sqrt(D)."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for lname, spec in layer_table(cfg).items():
        for pname, shape in spec.param_shapes().items():
            if pname == "b":
                arr = np.zeros(shape, dtype=np.float32)
            elif spec.kind == "linear":
                bound = 1.0 / np.sqrt(spec.in_channels)
                arr = rng.uniform(-bound, bound, size=shape).astype(np.float32)
            else:
                fan_in = spec.in_channels * spec.kernel * spec.kernel
                bound = np.sqrt(6.0 / fan_in)
                arr = rng.uniform(-bound, bound, size=shape).astype(np.float32)
            name = f"{lname}.{pname}"
            tensors[name] = Tensor(arr, requires_grad=True, name=name)
    return ModelParameters(cfg, tensors)


def _conv(params: ModelParameters, layer: str, x: Tensor, stride: int = 1) -> Tensor:
    return conv2d(x, params[f"{layer}.w"], params[f"{layer}.b"], stride=stride)


def inject_conditioning(feature: Tensor, code: Tensor, params: ModelParameters, scale: int) -> Tensor:
    """``post(pre(feature) + W_i·code)`` with the projected code broadcast over pixels."""
    w = params[f"inj{scale}.code.w"]
    if code.ndim != 2 or code.shape[1] != w.shape[1]:
        raise ShapeError(f"code of shape {code.shape} does not match W_{scale} of shape {w.shape}")
    if feature.shape[1] != w.shape[0] or feature.shape[0] != code.shape[0]:
        raise ShapeError(f"feature {feature.shape} incompatible with code {code.shape} / W {w.shape}")
    h = _conv(params, f"inj{scale}.pre", feature)
    bias = linear(code, w).reshape(code.shape[0], w.shape[0], 1, 1)
    return _conv(params, f"inj{scale}.post", h + bias)


def forward_raw(params: ModelParameters, x: Tensor, code: Tensor) -> Tensor:
    """Unnormalized 3-channel prediction for a batch ``x[N,3,H,W]``, ``code[N,D]``."""
    cfg = params.config
    m = cfg.size_multiple
    if x.ndim != 4 or x.shape[2] % m or x.shape[3] % m:
        raise ShapeError(f"input spatial size {x.shape[2:]} must be divisible by {m}; pad first")
    slope = cfg.slope
    skips = []
    h = x
    for i in range(cfg.scales):
        if i == 0:
            h = leaky_relu(_conv(params, "enc0.conv_a", h), slope)
        else:
            h = leaky_relu(_conv(params, f"enc{i}.down", h, stride=2), slope)
        h = leaky_relu(_conv(params, f"enc{i}.conv_b", h), slope)
        skips.append(inject_conditioning(h, code, params, i))
    y = skips[-1]
    for i in range(cfg.scales - 2, -1, -1):
        y = leaky_relu(_conv(params, f"dec{i}.up", upsample_nearest(y, 2)), slope)
        y = leaky_relu(_conv(params, f"dec{i}.fuse", concat([y, skips[i]], axis=1)), slope)
    return _conv(params, "head", y)


def normalize(raw: np.ndarray, axis: int = 1, eps: float = 1e-8) -> np.ndarray:
    norm = np.sqrt(np.sum(raw * raw, axis=axis, keepdims=True))
    return raw / np.maximum(norm, eps)


def _reflect_pad(x: np.ndarray, multiple: int):
    h, w = x.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return x, (h, w)
    mode = "reflect" if (ph < h and pw < w) else "symmetric"
    pad = [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(x, pad, mode=mode), (h, w)


def predict(params: ModelParameters, normals: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Batched inference on numpy arrays.

    ``normals`` is ``(N,3,H,W)`` or ``(3,H,W)``; ``codes`` is ``(N,D)`` or
    ``(D,)``.  Arbitrary sizes are reflect-padded to the size multiple and
    cropped back.  Returns unit normals, same layout as the input.
    """
    single = normals.ndim == 3
    x = normals[None] if single else normals
    c = np.atleast_2d(codes)
    if c.shape[0] == 1 and x.shape[0] > 1:
        c = np.repeat(c, x.shape[0], axis=0)
    dtype = next(iter(params.tensors.values())).dtype
    xp, (h, w) = _reflect_pad(np.asarray(x, dtype=dtype), params.config.size_multiple)
    raw = forward_raw(params, Tensor(xp, dtype=dtype), Tensor(c, dtype=dtype)).data[..., :h, :w]
    out = normalize(raw)
    return out[0] if single else out


def forward(normals: np.ndarray, dt, wind: WindSpec, params: ModelParameters,
            encoding: EncodingConfig | None = None) -> np.ndarray:
    """Single-map convenience: ``N_{t+Δt}`` from ``N_t`` as ``(3,H,W)``."""
    enc = encoding or params.config.encoding
    return predict(params, normals, build_code(dt, enc, wind))


def predict_sequence(params: ModelParameters, normals: np.ndarray, wind: WindSpec, period: int | None = None,
                     batch: int = 8) -> np.ndarray:
    """Anchor-frame inference: frame t is ``f(N_input, t, w)`` for t in ``0..T-1``."""
    enc = params.config.encoding if period is None else EncodingConfig(period, params.config.harmonics)
    frames = []
    for lo in range(0, enc.period, batch):
        ts = np.arange(lo, min(lo + batch, enc.period))
        codes = build_codes(ts, enc, np.repeat(wind.as_array()[None], len(ts), axis=0))
        frames.append(predict(params, np.repeat(normals[None], len(ts), axis=0), codes))
    return np.concatenate(frames, axis=0)


# -- checkpoint --------------------------------------------------------------------------


def save_checkpoint(params: ModelParameters, path, extra: dict | None = None) -> Path:
    """Write ``CGNW | u32 version | u32 header_len | JSON header | f32 blobs``."""
    path = Path(path)
    index = []
    offset = 0
    blobs = []
    for name, t in params.tensors.items():
        arr = np.ascontiguousarray(t.data, dtype="<f4")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
        offset += arr.nbytes
        blobs.append(arr.tobytes())
    header = {"config": params.config.to_dict(), "tensors": index}
    if extra:
        header["extra"] = extra
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for b in blobs:
            fh.write(b)
    return path


def load_checkpoint(path, expected: ModelConfig | None = None) -> tuple[ModelParameters, ModelConfig]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r} at offset 0, expected {MAGIC!r}")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header at offset 4")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4, expected {FORMAT_VERSION}")
    if len(raw) < 12 + hlen:
        raise FormatError(f"{path}: truncated JSON header (need {hlen} bytes at offset 12)")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
        cfg = ModelConfig.from_dict(header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    if expected is not None and cfg != expected:
        raise FormatError(
            f"{path}: checkpoint config {cfg.to_dict()} does not match expected config {expected.to_dict()}"
        )
    body = raw[12 + hlen:]
    want = {f"{ln}.{pn}": shape for ln, spec in layer_table(cfg).items()
            for pn, shape in spec.param_shapes().items()}
    tensors: dict[str, Tensor] = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        lo, n = entry["offset"], entry["nbytes"]
        if want.get(name) != shape:
            raise FormatError(f"{path}: tensor {name!r} shape {shape} does not fit config (want {want.get(name)})")
        if lo + n > len(body):
            raise FormatError(f"{path}: truncated payload for {name!r} at offset {12 + hlen + lo}")
        arr = np.frombuffer(body, dtype="<f4", count=n // 4, offset=lo).reshape(shape).astype(np.float32)
        tensors[name] = Tensor(arr, requires_grad=True, name=name)
    missing = set(want) - set(tensors)
    if missing:
        raise FormatError(f"{path}: missing tensors {sorted(missing)}")
    ordered = {k: tensors[k] for k in want}
    return ModelParameters(cfg, ordered), cfg
