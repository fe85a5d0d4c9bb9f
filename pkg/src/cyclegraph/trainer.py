"""Supervised training and held-out evaluation of the cyclic UNet."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .cyclenet import (ModelConfig, ModelParameters, forward_raw, init_params, load_checkpoint,
                       predict, save_checkpoint)
from .encoding import build_codes
from .errors import FormatError, NumericsError, ValidationError
from .metrics import MetricReport
from .tensor import AdamState, Tensor, adam_step
from .windfield import Dataset

NORMAL_PEAK = 2.0  # normal components span [-1, 1]


@dataclass
class TrainConfig:
    batch_size: int = 8
    steps: int = 2000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    norm_weight: float = 0.1
    seed: int = 0
    dt_half_range: float | None = None  # defaults to T/2
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        for name in ("batch_size", "steps", "lr", "eps"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValidationError("Adam betas must lie in (0, 1)")
        if self.norm_weight < 0:
            raise ValidationError("norm_weight must be >= 0")
        if self.dt_half_range is not None and self.dt_half_range <= 0:
            raise ValidationError("dt_half_range must be positive")

    @property
    def dt_range(self) -> tuple[float, float]:
        half = self.model.period / 2 if self.dt_half_range is None else self.dt_half_range
        return -half, half

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: expected a JSON object")
        return cls.from_dict(data)


@dataclass
class Batch:
    inputs: np.ndarray  # (B,3,H,W)
    codes: np.ndarray  # (B,D)
    targets: np.ndarray  # (B,3,H,W)
    masks: np.ndarray  # (B,H,W)
    seq: np.ndarray
    t: np.ndarray
    dt: np.ndarray


def sample_batch(dataset: Dataset, cfg: TrainConfig, rng: np.random.Generator,
                 dt: np.ndarray | None = None, t: np.ndarray | None = None) -> Batch:
    """Random ``(N_t, code(Δt, w)) -> N_{t+Δt}`` pairs; targets wrap modulo T.

    ``t`` is uniform over frames and ``Δt`` uniform over the integers in
    ``[−T/2, T/2]``.  Either can be pinned by passing arrays.
    """
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    period = dataset.period
    b = cfg.batch_size
    seq = rng.integers(0, len(dataset), size=b)
    if t is None:
        t = rng.integers(0, period, size=b)
    if dt is None:
        lo, hi = cfg.dt_range
        dt = rng.integers(math.ceil(lo), math.floor(hi), size=b, endpoint=True)
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), (b,))
    dt = np.broadcast_to(np.asarray(dt), (b,))
    target_t = np.mod(t + np.round(dt).astype(np.int64), period)
    inputs = np.stack([dataset.sequences[s].frames[ti] for s, ti in zip(seq, t)])
    targets = np.stack([dataset.sequences[s].frames[ti] for s, ti in zip(seq, target_t)])
    masks = np.stack([dataset.sequences[s].mask for s in seq])
    winds = np.stack([dataset.sequences[s].wind.as_array() for s in seq])
    codes = build_codes(dt, cfg.model.encoding, winds)
    return Batch(inputs.astype(np.float32), codes.astype(np.float32), targets.astype(np.float32),
                 masks, seq, np.array(t), np.array(dt))


def loss_terms(pred: Tensor, target: np.ndarray, mask: np.ndarray):
    """``(masked L1 over the 3 components, masked mean of (‖pred‖ − 1)²)``."""
    if pred.shape != np.shape(target):
        raise ValidationError(f"prediction {pred.shape} and target {np.shape(target)} differ")
    m = np.asarray(mask, dtype=pred.dtype)
    if m.ndim == 3:
        m = m[:, None]
    count = float(m.sum())
    if count == 0:
        raise ValidationError("loss mask is empty")
    tgt = Tensor(np.asarray(target, dtype=pred.dtype))
    l1 = ((pred - tgt).abs() * m).sum() * (1.0 / (3.0 * count))
    norm = ((pred * pred).sum(axis=1, keepdims=True) + 1e-12).sqrt()
    unit = (((norm - 1.0) ** 2) * m).sum() * (1.0 / count)
    return l1, unit


def loss(pred: Tensor, target: np.ndarray, mask: np.ndarray, norm_weight: float = 0.1) -> Tensor:
    l1, unit = loss_terms(pred, target, mask)
    return l1 + unit * norm_weight


def batch_loss(params: ModelParameters, batch: Batch, norm_weight: float = 0.1) -> Tensor:
    dtype = next(iter(params.tensors.values())).dtype
    pred = forward_raw(params, Tensor(batch.inputs, dtype=dtype), Tensor(batch.codes, dtype=dtype))
    return loss(pred, batch.targets, batch.masks, norm_weight)


# -- evaluation ----------------------------------------------------------------------------


@dataclass
class EvalResult:
    masked_mae: list[float]  # per component, aggregated over sequences
    per_sequence: list[dict]
    aggregate: dict

    @property
    def masked_mae_mean(self) -> float:
        return float(np.mean(self.masked_mae))

    def to_dict(self) -> dict:
        return {"masked_mae": self.masked_mae, "masked_mae_mean": self.masked_mae_mean,
                "aggregate": self.aggregate, "per_sequence": self.per_sequence}


def wrap_dt(dt, period: int) -> np.ndarray:
    """Map offsets into ``[−T/2, T/2)``."""
    dt = np.asarray(dt)
    return np.mod(dt + period // 2, period) - period // 2


def score_sequence(preds: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> dict:
    """Masked per-component MAE plus full-frame metrics for ``(F,3,H,W)`` normal stacks."""
    report = MetricReport()
    m = np.asarray(mask, dtype=bool)
    abs_err = np.zeros(3)
    for p, tgt in zip(preds, targets):
        report.add(p, tgt, peak=NORMAL_PEAK, channel_axis=0)
        abs_err += np.abs(np.asarray(p, np.float64) - tgt)[:, m].sum(axis=1)
    count = float(m.sum()) * len(preds)
    return {"masked_mae": (abs_err / count).tolist(), **report.aggregate()}


def evaluate(params: ModelParameters, dataset: Dataset, anchors=(0,), batch: int = 16) -> EvalResult:
    """Predict every frame of every sequence from each anchor frame and score it.

    Metrics are in normal space (components as channels, peak 2).  Aggregates
    are exactly-rounded means over sequences, so sequence order is irrelevant.
    """
    if len(dataset) == 0:
        raise ValidationError("evaluation split is empty")
    cfg = params.config
    if dataset.period != cfg.period:
        raise FormatError(f"dataset period {dataset.period} does not match model period {cfg.period}")
    period = dataset.period
    per_seq = []
    for seq in dataset.sequences:
        preds, targets = [], []
        for t0 in anchors:
            dts = wrap_dt(np.arange(period) - t0, period)
            for lo in range(0, period, batch):
                sl = dts[lo:lo + batch]
                codes = build_codes(sl, cfg.encoding, np.repeat(seq.wind.as_array()[None], len(sl), 0))
                preds.append(predict(params, np.repeat(seq.frames[t0][None], len(sl), axis=0), codes))
            targets.append(seq.frames)
        entry = score_sequence(np.concatenate(preds), np.concatenate(targets), seq.mask)
        per_seq.append({"seed": seq.seed, **entry})
    masked = [math.fsum(e["masked_mae"][c] for e in per_seq) / len(per_seq) for c in range(3)]
    agg = {k: math.fsum(e[k] for e in per_seq) / len(per_seq) for k in MetricReport.NAMES}
    return EvalResult(masked, per_seq, agg)


def evaluate_checkpoint(path, dataset: Dataset, expected: ModelConfig | None = None, **kw) -> EvalResult:
    params, _ = load_checkpoint(path, expected)
    return evaluate(params, dataset, **kw)


# -- training loop -------------------------------------------------------------------------


@dataclass
class TrainReport:
    loss_curve: list[float]
    metrics: dict
    baseline_metrics: dict | None
    wall_clock: float
    checkpoint: str | None
    config: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        with open(out / "loss.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("step", "loss"))
            for i, v in enumerate(self.loss_curve):
                w.writerow((i, repr(v)))


def train(dataset: Dataset, cfg: TrainConfig, out_dir=None, eval_split: str = "test",
          log_every: int = 0, params: ModelParameters | None = None):
    """Adam on masked L1 + unit-norm penalty.

    Returns ``(params, report)``.  With ``out_dir`` the checkpoint, report
    JSON and loss CSV are written there.  A non-finite loss saves the last
    good parameters (when ``out_dir`` is given) and raises ``NumericsError``.
    """
    if dataset.period != cfg.model.period:
        raise ValidationError(f"dataset period {dataset.period} != model period {cfg.model.period}")
    train_set = dataset.split("train") if "train" in dataset.splits else dataset
    if len(train_set) == 0:
        raise ValidationError("no training sequences")
    out = Path(out_dir) if out_dir is not None else None
    if params is None:
        params = init_params(cfg.model, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    curve: list[float] = []
    start = time.perf_counter()

    for step in range(cfg.steps):
        batch = sample_batch(train_set, cfg, rng)
        params.zero_grad()
        value = batch_loss(params, batch, cfg.norm_weight)
        lv = float(value.data)
        if not np.isfinite(lv):
            if out is not None:
                save_checkpoint(params, out / "last_good.bin", extra={"step": step})
            raise NumericsError(f"non-finite loss {lv} at step {step}")
        value.backward()
        try:
            adam_step(params.arrays(), params.grads(), state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        except NumericsError:
            if out is not None:
                save_checkpoint(params, out / "last_good.bin", extra={"step": step})
            raise
        curve.append(lv)
        if log_every and (step % log_every == 0 or step == cfg.steps - 1):
            print(f"step {step:5d}  loss {lv:.5f}", flush=True)

    wall = time.perf_counter() - start
    metrics, baseline = {}, None
    held = dataset.split(eval_split)
    if len(held):
        metrics = evaluate(params, held).to_dict()
        baseline = evaluate(init_params(cfg.model, cfg.seed), held).to_dict()
    ckpt = None
    if out is not None:
        ckpt = str(save_checkpoint(params, out / "model.bin"))
    report = TrainReport(curve, metrics, baseline, wall, ckpt, cfg.to_dict())
    if out is not None:
        report.write(out)
    return params, report
