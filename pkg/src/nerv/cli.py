"""Command-line entry point: ``nerv <subcommand> ...``.

Every subcommand accepts ``--config FILE`` (flat ``key = value`` text) and
repeatable ``--set KEY=VALUE`` overrides, and writes its outputs plus a
resolved config snapshot and ``meta.json`` into ``--run-dir``.

Videos are PNG directories or ``synthetic:KIND`` (texture, detail, shape, static)
sized by the ``synth_frames``/``synth_height``/``synth_width`` keys.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import torch

from . import __version__
from .baselines import PixelwiseConfig, build_pixelwise, hidden_for_params
from .bitstream import section_sizes, serialize
from .compression import FINETUNE_EPOCHS, bpp, compress_model
from .decoder import benchmark_fps, decode_frames, hardware_descriptor, load
from .errors import InvalidConfigError, NervError
from .io import _coerce, apply_overrides, format_kv, load_frames, parse_kv, save_frames, synthetic_video
from .model import NervConfig, build_model, count_params
from .tasks import (
    ABLATION_AXES,
    NoiseSpec,
    ablation_sweep,
    denoise_eval,
    interpolation_eval,
    plot_rd,
    rd_report,
    write_records_csv,
)
from .training import TrainConfig, deterministic_mode, load_checkpoint, save_checkpoint, train

log = logging.getLogger("nerv")


@dataclasses.dataclass(frozen=True)
class RunOptions:
    """Keys that belong to neither the model nor the training schedule."""

    q: float = 0.0
    bit: int = 8
    finetune_epochs: int = FINETUNE_EPOCHS
    noise_pattern: str = "salt_pepper"
    noise_density: float = 0.05
    noise_seed: int = 0
    filter_window: int = 3
    stride: int = 2
    widths: tuple[int, ...] = (32, 64, 96)
    synth_frames: int = 16
    synth_height: int = 128
    synth_width: int = 128


def _raw_config(args) -> dict[str, str]:
    raw = {}
    if getattr(args, "config", None):
        try:
            raw.update(parse_kv(Path(args.config).read_text()))
        except OSError as e:
            raise InvalidConfigError(f"cannot read config {args.config}: {e}") from e
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise InvalidConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    return raw


def _resolve(args, video_hw=None, train_base: TrainConfig | None = None, model_base: NervConfig | None = None):
    """(model config, train config, run options) from file + overrides.

    The model resolution defaults to the video's; unknown keys are an error.
    """
    raw = _raw_config(args)
    consumed: set[str] = set()
    opts = apply_overrides(RunOptions(), raw, consumed)
    tcfg = apply_overrides(train_base or TrainConfig(), raw, consumed)
    default = model_base or NervConfig()
    changes = {}
    for f in dataclasses.fields(NervConfig):
        if f.name in raw:
            like = getattr(default, f.name)
            changes[f.name] = _coerce(raw[f.name], (0,) if like is None else like, f.name)
            consumed.add(f.name)
    if video_hw is not None:
        changes.setdefault("target_resolution", tuple(int(v) for v in video_hw))
    mcfg = default.replace(**changes)
    unknown = sorted(set(raw) - consumed)
    if unknown:
        raise InvalidConfigError(f"unknown config keys: {', '.join(unknown)}")
    return mcfg, tcfg, opts


def _video(spec: str, opts: RunOptions):
    if spec.startswith("synthetic:"):
        kind = spec.split(":", 1)[1]
        return synthetic_video(kind, opts.synth_frames, opts.synth_height, opts.synth_width)
    return load_frames(spec)


def _setup(args):
    """Load the video, resolve configs and prepare the run directory."""
    opts = apply_overrides(RunOptions(), _raw_config(args))
    video = _video(args.video, opts)
    mcfg, tcfg, opts = _resolve(args, video.frames.shape[1:3])
    run = _run_dir(args)
    return video, mcfg, tcfg, opts, run


def _run_dir(args) -> Path:
    d = Path(args.run_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _snapshot(run: Path, args, *objs, video=None, extra=None) -> None:
    (run / "config.resolved.txt").write_text(format_kv(*objs, extra=extra))
    meta = {
        "command": args.command,
        "argv": list(args.argv),
        "version": __version__,
        "deterministic": deterministic_mode(),
        "torch": torch.__version__,
        "hardware": hardware_descriptor(),
    }
    for obj in objs:
        if isinstance(obj, TrainConfig):
            meta["seed"] = obj.seed
        if isinstance(obj, RunOptions):
            meta["noise_seed"] = obj.noise_seed
    if video is not None:
        T, H, W, _ = video.frames.shape
        meta |= {"video": args.video, "video_sha256": video.fingerprint, "frames": T, "height": H, "width": W}
    (run / "meta.json").write_text(json.dumps(meta | (extra or {}), indent=2, sort_keys=True) + "\n")


# -- subcommands --------------------------------------------------------------


def cmd_fit(args) -> int:
    video, mcfg, tcfg, opts, run = _setup(args)
    _snapshot(run, args, mcfg, tcfg, opts, video=video)
    model = build_model(mcfg, tcfg.seed)
    log.info("fitting %d-parameter model to %s", count_params(model), args.video)
    model, history = train(model, video, tcfg, checkpoint_dir=run / "checkpoints")
    history.to_csv(run / "history.csv")
    save_checkpoint(run / "model.pt", model, None, tcfg.epochs, tcfg)
    log.info("final psnr %.3f dB; checkpoint %s", history.final.psnr, run / "model.pt")
    print(run / "model.pt")
    return 0


def _checkpoint_video(ckpt: Path, opts: RunOptions, override: str | None):
    source = override
    meta_path = ckpt.parent / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    if source is None and meta.get("video", "").startswith("synthetic:"):
        opts = dataclasses.replace(opts, synth_frames=meta["frames"], synth_height=meta["height"], synth_width=meta["width"])
    source = source or meta.get("video")
    return (_video(source, opts) if source else None), meta, source


def cmd_compress(args) -> int:
    ckpt = Path(args.checkpoint)
    model, blob = load_checkpoint(ckpt)
    saved = blob.get("train_config")
    _, tcfg, opts = _resolve(args, None, TrainConfig(**saved) if saved else None, model.config)
    video, meta, source = _checkpoint_video(ckpt, opts, args.video)
    args.video = source
    q = args.q if args.q is not None else opts.q
    bit = args.bit if args.bit is not None else opts.bit
    ft = args.finetune_epochs if args.finetune_epochs is not None else opts.finetune_epochs
    if q > 0 and ft > 0 and video is None:
        raise InvalidConfigError("pruning fine-tune needs the training video: pass --video or --finetune-epochs 0")
    if video is not None:
        dims = video.frames.shape[:3]
    elif "frames" in meta:
        dims = (meta["frames"], meta["height"], meta["width"])
    elif args.frames:
        dims = (args.frames, *model.config.target_resolution)
    else:
        raise InvalidConfigError("frame count unknown: pass --video or --frames")
    run = _run_dir(args)
    _snapshot(run, args, model.config, tcfg, opts, video=video, extra={"q": q, "bit": bit, "finetune_epochs": ft})
    artifact = compress_model(model, q, bit, dims, video=video, train_cfg=tcfg, finetune_epochs=ft)
    data = serialize(artifact)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)

    rows = [(k, bits / 8) for k, bits in artifact.stages.items()]
    rows += [(f"file_{k}", n) for k, n in section_sizes(artifact).items()]
    rows.append(("file_total", len(data)))
    with open(run / "sizes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "bytes", "bpp"])
        for stage, nbytes in rows:
            w.writerow([stage, repr(float(nbytes)), repr(bpp(8 * nbytes, dims))])
    log.info("wrote %s: %d bytes, %.5f bpp", out, len(data), bpp(8 * len(data), dims))
    print(out)
    return 0


def cmd_decode(args) -> int:
    model = load(args.file)
    T = model.frame_count
    idx = range(T) if not args.frames else [int(i) for i in args.frames.split(",")]
    frames = decode_frames(model, idx, workers=args.workers)
    save_frames(frames, args.output, indices=list(idx))
    log.info("decoded %d frames to %s", len(frames), args.output)
    return 0


def cmd_eval_rd(args) -> int:
    video, mcfg, tcfg, opts, run = _setup(args)
    _snapshot(run, args, mcfg, tcfg, opts, video=video)
    sizes = [mcfg.replace(block_channels=w) for w in opts.widths]
    records = rd_report(video, sizes, opts.q, opts.bit, tcfg, out_dir=run, finetune_epochs=opts.finetune_epochs)
    write_records_csv(records, run / "rd.csv")
    plot_rd(records, run / "rd.png")
    return 0


def cmd_eval_denoise(args) -> int:
    video, mcfg, tcfg, opts, run = _setup(args)
    _snapshot(run, args, mcfg, tcfg, opts, video=video)
    spec = NoiseSpec(opts.noise_pattern, opts.noise_density, opts.noise_seed)
    record = denoise_eval(video, spec, mcfg, tcfg, opts.filter_window)
    write_records_csv([record], run / "denoise.csv")
    return 0


def cmd_eval_interp(args) -> int:
    video, mcfg, tcfg, opts, run = _setup(args)
    _snapshot(run, args, mcfg, tcfg, opts, video=video)
    record = interpolation_eval(video, opts.stride, mcfg, tcfg)
    write_records_csv([record], run / "interp.csv")
    return 0


def cmd_ablate(args) -> int:
    video, mcfg, tcfg, opts, run = _setup(args)
    _snapshot(run, args, mcfg, tcfg, opts, video=video, extra={"axis": args.axis})
    records = ablation_sweep(video, args.axis, (mcfg, tcfg))
    write_records_csv(records, run / f"ablation_{args.axis}.csv")
    return 0


def cmd_bench(args) -> int:
    path = Path(args.model)
    run = _run_dir(args)
    if path.suffix == ".nrv" or path.read_bytes()[:4] == b"NRVB":
        model = load(path)
    else:
        model, _ = load_checkpoint(path)
        model.frame_count = args.frames
    rows = [("nerv", count_params(model), benchmark_fps(model, args.frames, args.precision))]
    if args.baseline:
        H, W = model.config.target_resolution
        n = count_params(model)
        base = build_pixelwise(PixelwiseConfig(hidden=hidden_for_params(n)), 0, (H, W))
        rows.append(("pixelwise", count_params(base), benchmark_fps(base, max(1, args.frames // 8), num_frames=args.frames)))
    with open(run / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "params", "fps", "precision", "hardware"])
        for name, n, fps in rows:
            w.writerow([name, n, repr(fps), args.precision, hardware_descriptor()])
    for name, n, fps in rows:
        print(f"{name}: {fps:.2f} fps ({n} params)")
    return 0


# -- parser -------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, run_dir: str) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--run-dir", default=run_dir, help=f"output directory (default {run_dir})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nerv", description="Image-wise neural video representation codec.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="overfit a model to a video")
    p.add_argument("--video", required=True, help="PNG directory or synthetic:KIND")
    _common(p, "runs/fit")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compress", help="prune, quantize and entropy-code a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-q", type=float, default=None, help="pruning fraction")
    p.add_argument("-b", "--bit", type=int, default=None, help="quantization bit width (32 = raw)")
    p.add_argument("-o", "--output", required=True, help="output .nrv file")
    p.add_argument("--video", default=None, help="video for pruning fine-tune (default: from the fit run)")
    p.add_argument("--finetune-epochs", type=int, default=None)
    p.add_argument("--frames", type=int, default=None, help="frame count when no video is known")
    _common(p, "runs/compress")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decode", help="render frames from a .nrv file")
    p.add_argument("file")
    p.add_argument("-o", "--output", required=True, help="output PNG directory")
    p.add_argument("--frames", default=None, help="comma-separated indices (default: all)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_decode)

    for name, func, out in (
        ("eval-rd", cmd_eval_rd, "runs/rd"),
        ("eval-denoise", cmd_eval_denoise, "runs/denoise"),
        ("eval-interp", cmd_eval_interp, "runs/interp"),
    ):
        p = sub.add_parser(name, help=f"{name[5:]} evaluation")
        p.add_argument("--video", required=True)
        _common(p, out)
        p.set_defaults(func=func)

    p = sub.add_parser("ablate", help="one fit per variant along an axis")
    p.add_argument("--video", required=True)
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES))
    _common(p, "runs/ablate")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="decode throughput of a checkpoint or .nrv file")
    p.add_argument("model")
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--precision", choices=["full", "half"], default="full")
    p.add_argument("--baseline", action="store_true", help="also time a pixel-wise model of equal size")
    p.add_argument("--run-dir", default="runs/bench")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (NervError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
