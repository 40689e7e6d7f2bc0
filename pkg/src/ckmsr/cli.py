"""Command-line entry point composing the library into end-to-end workflows.

Subcommands: ingest, split, generate-synthetic, downsample, upsample,
train, evaluate, compare, sweep, montage. Numeric outputs are
bit-reproducible for a fixed --seed; report files are written atomically
(write to a temp file, then rename).
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import baselines, data, metrics, model, sampling, training
from .core import CKMGrid, PixelImage, decode_image, encode_grid, get_codec, standard_codecs


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_phase(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"phase must be 'row,col', got {text!r}")
    return int(parts[0]), int(parts[1])


def _load_split_images(manifest: data.DatasetManifest, tag: str) -> tuple[list[str], np.ndarray]:
    entries = manifest.subset(tag)
    if not entries:
        raise ValueError(f"manifest has no '{tag}' entries")
    ids = [e.path for e in entries]
    stack = np.stack([PixelImage.load_png(e.path).pixels for e in entries])
    return ids, stack


def _reconstruct(method: str, sparse: CKMGrid, k: int, codec, net) -> CKMGrid:
    if method == "nearest":
        return baselines.nn_upsample(sparse, k)
    if method == "bicubic":
        return baselines.bicubic_upsample(sparse, k, domain=(codec.v_min, codec.v_max))
    if method == "srresnet":
        return training.infer(net, sparse, codec)
    raise ValueError(f"unknown method {method!r}")


def _evaluate_methods(
    manifest: data.DatasetManifest,
    methods: list[str],
    k: int,
    checkpoints: dict[int, str],
) -> dict[str, metrics.MetricsReport]:
    codec = manifest.codec
    ids, stack = _load_split_images(manifest, "test")
    w, h = manifest.image_size
    if w % k or h % k:
        raise ValueError(f"factor {k} does not divide image size {w}x{h}")
    net = None
    if "srresnet" in methods:
        if k not in checkpoints:
            raise ValueError(f"method srresnet needs a checkpoint for factor {k}")
        net, _ = model.load_checkpoint(checkpoints[k])
        if net.config.upscale_factor != k:
            raise ValueError(
                f"checkpoint upscale factor {net.config.upscale_factor} does not match --factor {k}"
            )
    spec = sampling.SamplingSpec(k)
    truths = [decode_image(PixelImage(p), codec) for p in stack]
    sparse_grids = [sampling.downsample(t, spec) for t in truths]
    reports = {}
    for method in methods:
        pairs = [
            (_reconstruct(method, s, k, codec, net), t)
            for s, t in zip(sparse_grids, truths)
        ]
        reports[method] = metrics.evaluate(pairs, codec, ids=ids)
    return reports


def _checkpoint_map(args) -> dict[int, str]:
    mapping: dict[int, str] = {}
    for item in args.checkpoint or []:
        if "=" in item:
            factor_text, path = item.split("=", 1)
            mapping[int(factor_text)] = path
        else:
            mapping[args.factor] = item
    return mapping


def cmd_ingest(args) -> int:
    manifest = data.ingest(args.root, data.DatasetLayout(args.layout), name=args.name)
    manifest.save(args.out)
    print(f"wrote manifest with {len(manifest.entries)} entries to {args.out}")
    return 0


def cmd_split(args) -> int:
    manifest = data.DatasetManifest.load(args.manifest)
    manifest = data.split(
        manifest, args.train, args.test, by=data.SplitMode(args.by), seed=args.seed
    )
    manifest.save(args.out)
    print(f"split {args.train} train / {args.test} test (by {args.by}) -> {args.out}")
    return 0


def cmd_generate_synthetic(args) -> int:
    out = Path(args.out)
    image_dir = out / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    if args.train_count + args.test_count > args.count:
        raise ValueError("train-count + test-count cannot exceed count")
    kind_index = {"pathloss": 0, "aoa": 1}[args.kind]
    codec_name = (data.SYNTHETIC_PATHLOSS_CODEC, data.SYNTHETIC_AOA_CODEC)[kind_index]
    codec = get_codec(codec_name)
    scenes = data.synthetic_dataset(args.count, size=args.size, seed=args.seed)
    entries = []
    for i, scene in enumerate(scenes):
        grid = scene[kind_index]
        path = image_dir / f"{i:05d}_0.png"
        encode_grid(grid, codec).save_png(path)
        if i < args.train_count:
            tag = "train"
        elif i < args.train_count + args.test_count:
            tag = "test"
        else:
            tag = "unsplit"
        entries.append(data.ManifestEntry(str(path), tag, scene=f"{i:05d}", transmitter="0"))
    manifest = data.DatasetManifest(f"synthetic-{args.kind}", codec_name, (args.size, args.size), tuple(entries))
    manifest_path = out / "manifest.tsv"
    manifest.save(manifest_path)
    print(f"wrote {args.count} synthetic {args.kind} maps and {manifest_path}")
    return 0


def cmd_downsample(args) -> int:
    img = PixelImage.load_png(args.input)
    spec = sampling.SamplingSpec(args.factor, _parse_phase(args.phase))
    out = PixelImage(sampling.downsample_array(img.pixels, spec))
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    out.save_png(args.output)
    print(f"{img.width}x{img.height} -> {out.width}x{out.height}")
    return 0


def cmd_upsample(args) -> int:
    codec = get_codec(args.codec)
    grid = decode_image(PixelImage.load_png(args.input), codec)
    if args.method == "nearest":
        up = baselines.nn_upsample(grid, args.factor)
    else:
        up = baselines.bicubic_upsample(
            grid, args.factor, a=args.kernel_a, domain=(codec.v_min, codec.v_max)
        )
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    encode_grid(up, codec).save_png(args.output)
    print(f"{grid.width}x{grid.height} -> {up.width}x{up.height} via {args.method}")
    return 0


def cmd_train(args) -> int:
    manifest = data.DatasetManifest.load(args.manifest)
    _, stack = _load_split_images(manifest, "train")
    config = model.SRResNetConfig(
        in_channels=args.in_channels,
        num_residual_blocks=args.blocks,
        upscale_factor=args.factor,
    )
    net = model.build(config, args.seed)
    cfg = training.TrainConfig(
        factor=args.factor,
        batch_size=args.batch_size,
        iterations=args.iterations,
        learning_rate=args.lr,
        seed=args.seed,
        checkpoint_interval=args.checkpoint_interval,
        optimizer=args.optimizer,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = training.train(
        net,
        stack,
        cfg,
        loss_log_path=out / "loss.csv",
        checkpoint_path=out / "checkpoint.pt",
    )
    print(
        f"trained {result.schedule.total_updates} iterations "
        f"({result.schedule.epochs} epochs x {result.schedule.iterations_per_epoch}); "
        f"final loss {result.losses[-1]:.6g}; checkpoint at {out / 'checkpoint.pt'}"
    )
    return 0


def cmd_evaluate(args) -> int:
    manifest = data.DatasetManifest.load(args.manifest)
    reports = _evaluate_methods(manifest, [args.method], args.factor, _checkpoint_map(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = reports[args.method]
    lines = ["image_id,PSNR,SSIM,MSE(pixel),RMSE"]
    for r in rep.records:
        lines.append(f"{r.image_id},{r.psnr:.6g},{r.ssim:.6g},{r.mse_pixel:.6g},{r.rmse_physical:.6g}")
    _atomic_write_text(out / f"metrics_{args.method}.csv", "\n".join(lines) + "\n")
    table = metrics.format_report_table(reports, header=f"{manifest.name}, factor {args.factor}")
    _atomic_write_text(out / f"metrics_{args.method}.txt", table)
    print(table, end="")
    return 0


def cmd_compare(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ValueError("no methods given")
    manifest = data.DatasetManifest.load(args.manifest)
    reports = _evaluate_methods(manifest, methods, args.factor, _checkpoint_map(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = (
        f"{manifest.name}: {args.factor}x reconstruction, "
        f"sampled fraction 1/{args.factor**2}"
    )
    table = metrics.format_report_table(reports, header=header)
    _atomic_write_text(out / "compare.txt", table)
    csv_lines = [",".join(metrics.REPORT_COLUMNS)]
    for row in metrics.report_rows(reports):
        csv_lines.append(",".join(f"{row[c]:.6g}" if c != "method" else str(row[c]) for c in metrics.REPORT_COLUMNS))
    _atomic_write_text(out / "compare.csv", "\n".join(csv_lines) + "\n")
    print(table, end="")
    return 0


def cmd_sweep(args) -> int:
    factors = [int(f) for f in args.factors.split(",") if f.strip()]
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    manifest = data.DatasetManifest.load(args.manifest)
    w, h = manifest.image_size
    for k in factors:
        if w % k or h % k:
            raise ValueError(f"factor {k} does not divide image size {w}x{h}")
    checkpoints = _checkpoint_map(args)
    rows = []
    for k in factors:
        reports = _evaluate_methods(manifest, methods, k, checkpoints)
        for method in methods:
            rows.append((k, method, reports[method].mean_rmse_physical))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["factor,method,RMSE"]
    for k, method, rmse in rows:
        lines.append(f"{k},{method},{rmse:.6g}")
    _atomic_write_text(out / "sweep.csv", "\n".join(lines) + "\n")
    for k, method, rmse in rows:
        print(f"{k}x {method}: RMSE {rmse:.4f}")
    return 0


def make_montage(panels: list[tuple[str, PixelImage]]) -> Image.Image:
    """Horizontal strip of labeled grayscale panels (labels burned in)."""
    if not panels:
        raise ValueError("montage needs at least one panel")
    sizes = {(img.width, img.height) for _, img in panels}
    if len(sizes) > 1:
        raise ValueError(f"panel sizes differ: {sorted(sizes)}")
    w, h = next(iter(sizes))
    gap = 2
    strip = Image.new("L", (len(panels) * w + gap * (len(panels) - 1), h), color=255)
    draw = ImageDraw.Draw(strip)
    for i, (label, img) in enumerate(panels):
        x = i * (w + gap)
        strip.paste(Image.fromarray(img.pixels, mode="L"), (x, 0))
        draw.text((x + 2, 1), label, fill=255)
        draw.text((x + 3, 2), label, fill=0)
    return strip


def cmd_montage(args) -> int:
    panels: list[tuple[str, PixelImage]] = []
    if args.lr:
        lr = PixelImage.load_png(args.lr)
        up = baselines.nn_upsample_array(lr.pixels, args.factor)
        panels.append((f"LR (NN {args.factor}x)", PixelImage(up)))
    for item in args.panel or []:
        if "=" not in item:
            raise ValueError(f"panel must be label=path, got {item!r}")
        label, path = item.split("=", 1)
        panels.append((label, PixelImage.load_png(path)))
    panels.append(("ground truth", PixelImage.load_png(args.truth)))
    strip = make_montage(panels)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    strip.save(args.out, format="PNG")
    print(f"wrote {len(panels)}-panel montage to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ckmsr",
        description="Channel knowledge map reconstruction from sparse measurements",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    codec_names = sorted(standard_codecs())

    p = sub.add_parser("ingest", help="scan a dataset directory into a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--layout", required=True, choices=[l.value for l in data.DatasetLayout])
    p.add_argument("--name", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="assign train/test tags to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--by", default="random", choices=[m.value for m in data.SplitMode])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("generate-synthetic", help="write a deterministic synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=240)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--train-count", type=int, default=200)
    p.add_argument("--test-count", type=int, default=40)
    p.add_argument("--kind", default="pathloss", choices=["pathloss", "aoa"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate_synthetic)

    p = sub.add_parser("downsample", help="uniformly sample an image down by a factor")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--phase", default="0,0")
    p.set_defaults(func=cmd_downsample)

    p = sub.add_parser("upsample", help="reconstruct with an interpolation baseline")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--method", required=True, choices=["nearest", "bicubic"])
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--codec", required=True, choices=codec_names)
    p.add_argument("--kernel-a", type=float, default=baselines.DEFAULT_KERNEL_A)
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("train", help="train the generator on a manifest's train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--iterations", type=int, default=100_000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blocks", type=int, default=16)
    p.add_argument("--in-channels", type=int, default=3)
    p.add_argument("--optimizer", default="adam", choices=list(training.OPTIMIZERS))
    p.add_argument("--checkpoint-interval", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics for one method on the test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--method", required=True, choices=["nearest", "bicubic", "srresnet"])
    p.add_argument("--checkpoint", action="append", default=None, metavar="[FACTOR=]PATH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="side-by-side metrics table for several methods")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--methods", default="nearest,bicubic")
    p.add_argument("--checkpoint", action="append", default=None, metavar="[FACTOR=]PATH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="RMSE across several sampling factors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factors", default="2,4,8,16")
    p.add_argument("--methods", default="nearest,bicubic")
    p.add_argument("--checkpoint", action="append", default=None, metavar="FACTOR=PATH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    p.add_argument("--factor", type=int, default=0, help=argparse.SUPPRESS)

    p = sub.add_parser("montage", help="labeled strip of reconstructions next to the truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--panel", action="append", default=None, metavar="LABEL=PATH")
    p.add_argument("--lr", default=None, help="sparse image; shown NN-upsampled")
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_montage)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, RuntimeError) as exc:
        message = exc.args[0] if exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
