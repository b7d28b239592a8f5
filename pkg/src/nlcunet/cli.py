"""Command-line entry point.

Subcommands wrap the library one-to-one: prepare-data, degrade, train,
infer, eval, kernel-grid, print-config. Exit codes: 1 configuration
error, 2 I/O error, 3 numeric failure. Diagnostics are single lines on
stderr of the form ``nlcunet: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import (ConfigError, DegradationSpec, RunConfig, load_run_config,
                     run_config_to_json)
from .data import load_image, read_manifest, save_image, write_manifest
from .degradation import degrade, test_kernel_grid
from .metrics import MetricReport, y_psnr, y_ssim
from .model import (CheckpointError, build_discriminator, build_generator,
                    load_checkpoint)
from .ops import resize_array
from .rng import CounterRng
from .tensor import Tensor, no_grad
from .training import NumericError, train_gan_stage, train_psnr_stage


class CliError(Exception):
    def __init__(self, kind: str, code: int, message: str):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _config_error(msg: str) -> CliError:
    return CliError("config-error", 1, msg)


def _io_error(msg: str) -> CliError:
    return CliError("io-error", 2, msg)


def _list_pngs(directory: Path) -> list:
    if not directory.is_dir():
        raise _io_error(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_prepare_data(args) -> int:
    root = Path(args.input)
    if not root.is_dir():
        raise _io_error(f"not a directory: {root}")
    images = sorted(p for p in root.rglob("*") if p.suffix.lower() == ".png")
    if not images:
        raise _io_error(f"no PNG files under {args.input}")
    kept = []
    for path in images:
        record = load_image(path)
        if record.height < args.min_size or record.width < args.min_size:
            print(f"skipping {path}: {record.height}x{record.width} below "
                  f"minimum {args.min_size}", file=sys.stderr)
            continue
        kept.append(str(path))
    if not kept:
        raise _io_error("no images satisfied the size requirement")
    write_manifest(args.out, kept)
    print(f"indexed {len(kept)} images -> {args.out}")
    return 0


def cmd_degrade(args) -> int:
    spec = DegradationSpec(mode=args.mode, scale=args.scale,
                           noise_sigma=args.noise_sigma, seed=args.seed)
    try:
        spec.validate()
    except ConfigError as exc:
        raise _config_error(str(exc))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_rows = []
    for i, path in enumerate(_list_pngs(Path(args.input))):
        record = load_image(path)
        arr = record.pixels[None]
        if args.upscale:
            if spec.mode != "identity":
                raise _config_error("--upscale is only meaningful with --mode identity")
            h, w = arr.shape[2], arr.shape[3]
            out = resize_array(arr, h * args.scale, w * args.scale)
            kernel_params = {"type": "delta"}
        else:
            h, w = arr.shape[2], arr.shape[3]
            if h % args.scale or w % args.scale:
                arr = arr[:, :, :h - h % args.scale, :w - w % args.scale]
            lr, kernels = degrade(arr, spec, CounterRng(args.seed, "degrade", i))
            out = lr.data
            kernel_params = kernels[0].params
        out_path = out_dir / path.name
        save_image(out_path, out[0])
        manifest_rows.append({"file": path.name, "mode": spec.mode, "scale": args.scale,
                              "kernel": kernel_params, "seed": args.seed,
                              "noise_sigma": args.noise_sigma})
    manifest_path = out_dir / "degradation_manifest.jsonl"
    with open(manifest_path, "w") as fh:
        for row in manifest_rows:
            fh.write(json.dumps(row) + "\n")
    print(f"degraded {len(manifest_rows)} images -> {out_dir}")
    return 0


def cmd_kernel_grid(args) -> int:
    try:
        kernels = test_kernel_grid(args.scale)
    except ValueError as exc:
        raise _config_error(str(exc))
    payload = [{"sigma": k.params["sigma"], "size": k.size,
                "values": k.values.tolist()} for k in kernels]
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {len(kernels)} kernels -> {args.out}")
    return 0


def cmd_print_config(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    sys.stdout.write(run_config_to_json(cfg))
    return 0


def _load_records(manifest_path) -> list:
    try:
        paths = read_manifest(manifest_path)
    except (OSError, ValueError) as exc:
        raise _io_error(f"cannot read manifest {manifest_path}: {exc}")
    if not paths:
        raise _config_error(f"manifest {manifest_path} lists no images")
    return [load_image(p) for p in paths]


def _val_pairs_from_records(records, cfg: RunConfig) -> list:
    """Deterministic validation pairs: center HR crop, seeded degradation."""
    from .data import center_window
    pairs = []
    side = cfg.crop.patch_size * cfg.model.scale
    rng = CounterRng(cfg.seed, "val")
    for i, rec in enumerate(records):
        if rec.height < side or rec.width < side:
            continue
        top, left, _, _ = center_window(rec.height, rec.width, side)
        hr = rec.pixels[:, top:top + side, left:left + side]
        lr, _ = degrade(hr[None], cfg.degradation, rng.spawn(i))
        pairs.append((lr.data[0], hr))
    if not pairs:
        raise _config_error("no validation image is large enough for one patch")
    return pairs


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.print_config:
        sys.stdout.write(run_config_to_json(cfg))
        return 0
    if cfg.data.train_manifest is None:
        raise _config_error("config: data.train_manifest is required for training")
    records = _load_records(cfg.data.train_manifest)
    val_pairs = None
    if cfg.data.val_manifest:
        val_pairs = _val_pairs_from_records(_load_records(cfg.data.val_manifest), cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(run_config_to_json(cfg))

    gen = build_generator(cfg.model, cfg.seed)
    if cfg.train.stage == "psnr":
        result = train_psnr_stage(gen, records, cfg.train, cfg.degradation, cfg.crop,
                                  seed=cfg.seed, out_dir=out_dir, val_pairs=val_pairs,
                                  resume=args.resume)
    else:
        disc = build_discriminator(cfg.seed, cfg.train.disc_base_channels)
        resume = None
        if args.resume:
            disc_resume = Path(args.resume).parent / "disc_gan.nlcu"
            if not disc_resume.exists():
                raise _io_error(f"missing discriminator checkpoint {disc_resume}")
            resume = (args.resume, disc_resume)
        result = train_gan_stage(gen, disc, records, cfg.train, cfg.degradation,
                                 cfg.crop, seed=cfg.seed, out_dir=out_dir,
                                 val_pairs=val_pairs, init_from=cfg.train.init_checkpoint,
                                 resume=resume)
    if result.checkpoint_path is not None:
        sidecar = result.checkpoint_path.with_suffix(".json")
        sidecar.write_text(run_config_to_json(cfg))
    if result.halted:
        raise CliError("numeric-error", 3, result.halted)
    print(f"trained {result.iterations_run} iterations; "
          f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_infer(args) -> int:
    ckpt_path = Path(args.checkpoint)
    sidecar = ckpt_path.with_suffix(".json")
    if not sidecar.exists():
        raise _io_error(f"missing config sidecar {sidecar} for checkpoint")
    cfg = load_run_config(sidecar)
    try:
        ckpt = load_checkpoint(ckpt_path)
    except (OSError, CheckpointError) as exc:
        raise _io_error(f"cannot load checkpoint {ckpt_path}: {exc}")
    gen = build_generator(cfg.model, cfg.seed)
    gen.load_state_dict(ckpt.params)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    with no_grad():
        for path in _list_pngs(Path(args.input)):
            record = load_image(path)
            sr = gen(Tensor(record.pixels[None]))
            save_image(out_dir / path.name, np.clip(sr.data[0], 0.0, 1.0))
            count += 1
    if count == 0:
        raise _io_error(f"no PNG files under {args.input}")
    print(f"super-resolved {count} images at x{cfg.model.scale} -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    sr_paths = _list_pngs(Path(args.sr))
    hr_dir = Path(args.hr)
    if not sr_paths:
        raise _io_error(f"no PNG files under {args.sr}")
    widths = {}
    if args.manifest:
        try:
            with open(args.manifest) as fh:
                for line in fh:
                    row = json.loads(line)
                    widths[row["file"]] = row.get("kernel", {}).get("sigma")
        except OSError as exc:
            raise _io_error(f"cannot read manifest {args.manifest}: {exc}")
    report = MetricReport(scale=args.scale, border_shave=args.scale)
    for sr_path in sr_paths:
        hr_path = hr_dir / sr_path.name
        if not hr_path.exists():
            raise _io_error(f"no ground-truth image for {sr_path.name} under {hr_dir}")
        sr = load_image(sr_path).pixels
        hr = load_image(hr_path).pixels
        h = min(sr.shape[1], hr.shape[1])
        w = min(sr.shape[2], hr.shape[2])
        sr, hr = sr[:, :h, :w], hr[:, :h, :w]
        report.add(sr_path.name, y_psnr(sr, hr, border=args.scale),
                   y_ssim(sr, hr, border=args.scale),
                   kernel_width=widths.get(sr_path.name))
    sys.stdout.write(report.to_table())
    if args.out:
        Path(args.out).write_text(report.to_json())
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _config_error(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlcunet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="index a directory of HR PNGs")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="manifest JSON to write")
    p.add_argument("--min-size", type=int, default=64, dest="min_size")
    p.set_defaults(fn=cmd_prepare_data)

    p = sub.add_parser("degrade", help="synthesize LR images from HR PNGs")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="config1", choices=["config1", "config2", "identity"])
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--noise-sigma", type=float, default=0.0, dest="noise_sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--upscale", action="store_true",
                   help="identity mode only: bicubic-upsample instead of downsampling")
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("kernel-grid", help="emit the 8-kernel evaluation grid as JSON")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_kernel_grid)

    p = sub.add_parser("train", help="run a training stage from a run-config JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--print-config", action="store_true", dest="print_config",
                   help="print the effective config and exit")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="super-resolve a directory of PNGs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="Y-channel PSNR/SSIM of SR outputs against ground truth")
    p.add_argument("--sr", required=True)
    p.add_argument("--hr", required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--manifest", default=None,
                   help="degradation manifest for kernel-width breakdown")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("print-config", help="print a run config (defaults if none given)")
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_print_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except CliError as exc:
        print(f"nlcunet: {exc.kind}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"nlcunet: config-error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"nlcunet: numeric-error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"nlcunet: io-error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
