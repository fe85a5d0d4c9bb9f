"""``cyclegraph`` command line.

Exit codes: 0 success, 1 validation/usage error, 2 IO error, 3 numerics error.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import io
from .errors import CycleGraphError, NumericsError, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICS = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def parse_wind(text: str):
    from .encoding import WindSpec

    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(f"wind must look like 'x,y', got {text!r}") from None
    return WindSpec.from_vector(x, y)


def load_strict(cls, path):
    """Dataclass from a JSON object, rejecting unknown keys."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    if hasattr(cls, "from_dict"):
        return cls.from_dict(data)
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ValidationError(f"{path}: unknown keys {sorted(unknown)}")
    return cls(**data)


# -- subcommands ---------------------------------------------------------------------------


def cmd_gen_data(args) -> dict:
    from .windfield import DatasetSpec, generate_dataset

    if args.config:
        spec = load_strict(DatasetSpec, args.config)
    else:
        spec = DatasetSpec(n_sequences=args.n, height=args.height, width=args.width, period=args.period,
                           seed=args.seed, test_fraction=args.test_fraction)
    manifest = generate_dataset(spec, args.out)
    return {"out": str(args.out), "sequences": len(manifest["sequences"]), "spec": asdict(spec)}


def cmd_train(args) -> dict:
    from .trainer import TrainConfig, train
    from .windfield import load_dataset

    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    overrides = {k: v for k, v in (("steps", args.steps), ("batch_size", args.batch), ("lr", args.lr),
                                   ("seed", args.seed)) if v is not None}
    dataset = load_dataset(args.data)
    model = cfg.model.to_dict()
    model["period"] = dataset.period
    if args.divisor is not None:
        model["divisor"] = args.divisor
    cfg = TrainConfig.from_dict({**cfg.to_dict(), **overrides, "model": model})
    _, report = train(dataset, cfg, args.out, log_every=0 if args.json else args.log_every)
    out = {"checkpoint": report.checkpoint, "final_loss": report.loss_curve[-1], "wall_clock": report.wall_clock}
    if report.metrics:
        out["masked_mae"] = report.metrics["masked_mae"]
        out["baseline_masked_mae"] = report.baseline_metrics["masked_mae"]
    return out


def cmd_eval(args) -> dict:
    from .trainer import evaluate_checkpoint
    from .windfield import load_dataset

    dataset = load_dataset(args.data).split(args.split)
    result = evaluate_checkpoint(args.ckpt, dataset)
    payload = result.to_dict()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        import csv

        with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            keys = ["seed", "mae", "mse", "rmse", "psnr", "ssim", "mae_x", "mae_y", "mae_z"]
            w.writerow(keys)
            for e in result.per_sequence:
                w.writerow([e["seed"]] + [repr(e[k]) for k in keys[1:6]] + [repr(v) for v in e["masked_mae"]])
    return {"masked_mae": result.masked_mae, "aggregate": result.aggregate, "sequences": len(dataset)}


def cmd_animate(args) -> dict:
    from .cyclenet import load_checkpoint
    from .reshader import animate

    wind = parse_wind(args.wind)
    image = io.read_png(args.image, "RGB")
    normals = io.load_normals(args.normals)
    mask = io.load_mask(args.mask)
    if not (image.shape[:2] == normals.shape[1:] == mask.shape):
        raise ValidationError(
            f"size mismatch: image {image.shape[:2]}, normals {normals.shape[1:]}, mask {mask.shape}"
        )
    params, _ = load_checkpoint(args.ckpt)
    seq = animate(image, normals, mask, wind, params, period=args.period)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"frame_{t:04d}.png" for t in range(seq.period)]
    with ThreadPoolExecutor(max_workers=io.worker_count()) as pool:
        list(pool.map(io.write_png, paths, seq.frames))
    gif = io.export_gif(list(seq.frames), out / "out.gif", fps=args.fps)
    light = {"l": list(seq.light.l), "delta": seq.light.delta, "residual_rms": seq.light.residual_rms,
             "residual_max": seq.light.residual_max, "degenerate": seq.light.degenerate}
    return {"frames": len(paths), "out": str(out), "gif": str(gif), "light": light}


def cmd_loopfind(args) -> dict:
    from .loopfinder import extract_loop, find_loop

    frames = io.read_frame_dir(args.frames)
    spec = find_loop(frames, args.pmin, args.pmax)
    result = {"start": spec.start, "period": spec.period, "cost": spec.cost, "frames": len(frames)}
    if args.out:
        loop = extract_loop(frames, spec, args.crossfade)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        u8 = [io.to_uint8(f) for f in loop]
        for i, f in enumerate(u8):
            io.write_png(out / f"frame_{i:04d}.png", f)
        io.export_gif(u8, out / "out.gif", fps=args.fps)
        result["out"] = str(out)
    return result


def cmd_grad_check(args) -> dict:
    from .gradcheck import pipeline_gradient_check

    dtype = np.float64 if args.dtype == "float64" else np.float32
    tol = args.tol if args.tol is not None else (1e-6 if dtype == np.float64 else 1e-3)
    r = pipeline_gradient_check(dtype, seed=args.seed, samples=args.samples)
    r["tolerance"] = tol
    r["passed"] = bool(r["max_relative_error"] < tol)
    if not args.json:
        print(f"max relative error {r['max_relative_error']:.3e} ({r['dtype']}, tol {tol:g})")
    if not r["passed"]:
        raise NumericsError(f"gradient check failed: {r['max_relative_error']:.3e} >= {tol:g}")
    return r


# -- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a JSON result on stdout")
    common.add_argument("--seed", type=int, default=0)

    p = _Parser(prog="cyclegraph", description="Cyclic wind-conditioned normal-map cinemagraphs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", parents=[common], help="write a procedural windfield dataset")
    g.add_argument("--n", type=int, default=64)
    g.add_argument("--height", type=int, default=32)
    g.add_argument("--width", type=int, default=32)
    g.add_argument("--period", type=int, default=30)
    g.add_argument("--test-fraction", type=float, default=0.2)
    g.add_argument("--config", help="DatasetSpec JSON (overrides the flags)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train the cyclic UNet")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="TrainConfig JSON")
    t.add_argument("--steps", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--divisor", type=int)
    t.add_argument("--log-every", type=int, default=100)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("animate", parents=[common], help="turn a still image into a looping cinemagraph")
    a.add_argument("--image", required=True)
    a.add_argument("--normals", required=True)
    a.add_argument("--mask", required=True)
    a.add_argument("--wind", required=True, help="x,y (renormalized)")
    a.add_argument("--ckpt", required=True)
    a.add_argument("--period", type=int, default=150)
    a.add_argument("--fps", type=float, default=30.0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_animate)

    lf = sub.add_parser("loopfind", parents=[common], help="find the best global loop in a PNG sequence")
    lf.add_argument("--frames", required=True)
    lf.add_argument("--pmin", type=int, default=2)
    lf.add_argument("--pmax", type=int)
    lf.add_argument("--crossfade", type=int, default=0)
    lf.add_argument("--fps", type=float, default=30.0)
    lf.add_argument("--out")
    lf.set_defaults(func=cmd_loopfind)

    gc = sub.add_parser("grad-check", parents=[common], help="finite-difference check on the tiny model")
    gc.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    gc.add_argument("--samples", type=int, default=6, help="coordinates probed per tensor")
    gc.add_argument("--tol", type=float)
    gc.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        result = args.func(args)
    except NumericsError as exc:
        print(f"numerics error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except (ValidationError, CycleGraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.json:
        print(json.dumps(result, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
