"""Application harnesses: denoising, temporal interpolation, ablation sweeps
and rate-distortion reports, each producing :class:`EvalRecord` rows.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .bitstream import serialize
from .compression import bpp, compress_model, prune_count
from .decoder import benchmark_fps, decode_frames, load
from .errors import InvalidConfigError
from .metrics import video_ms_ssim, video_psnr
from .model import NervConfig, build_model, count_params
from .training import TrainConfig, reconstruct, train

log = logging.getLogger(__name__)

NOISE_PATTERNS = ("white", "black", "salt_pepper", "random")
FILTERS = ("gaussian", "uniform", "median", "minimum", "maximum")
ABLATION_AXES = {
    "embedding": [("pe", {"embedding": "pe"}), ("none", {"embedding": "none"})],
    "upscale": [(m, {"upscale_mode": m}) for m in ("bilinear_conv", "transpose_conv", "pixelshuffle")],
    "norm": [(n, {"norm": n}) for n in ("batch", "instance", "none")],
    "activation": [(a, {"activation": a}) for a in ("relu", "leaky_relu", "swish", "gelu")],
    "loss": [
        ("+".join(t), {"loss_terms": t})
        for t in (("l2",), ("l1",), ("ssim",), ("l2", "l1"), ("l2", "ssim"), ("l1", "ssim"))
    ],
}


@dataclass
class EvalRecord:
    name: str
    bpp: float = float("nan")
    psnr: float = float("nan")
    ms_ssim: float = float("nan")
    encode_seconds: float = float("nan")
    decode_fps: float = float("nan")
    params: int = 0
    extras: dict[str, float] = field(default_factory=dict)

    def row(self) -> dict:
        base = {k: getattr(self, k) for k in ("name", "bpp", "psnr", "ms_ssim", "encode_seconds", "decode_fps", "params")}
        return base | self.extras


def write_records_csv(records: list[EvalRecord], path) -> None:
    rows = [r.row() for r in records]
    keys = list(rows[0]) if rows else ["name"]
    for row in rows[1:]:
        keys += [k for k in row if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _frames(video) -> np.ndarray:
    return np.asarray(getattr(video, "frames", video), dtype=np.float32)


def fit(video, model_cfg: NervConfig, train_cfg: TrainConfig, indices=None):
    """Build and overfit a model; returns (model, history, wall seconds)."""
    model = build_model(model_cfg, train_cfg.seed)
    t0 = time.perf_counter()
    model, history = train(model, video, train_cfg, indices=indices)
    return model, history, time.perf_counter() - t0


def _reconstruction(model, T: int, indices=None) -> np.ndarray:
    idx = np.arange(T) if indices is None else np.asarray(indices)
    return reconstruct(model, T, idx).permute(0, 2, 3, 1).numpy()


# -- denoising ---------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    pattern: str = "salt_pepper"
    density: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.pattern not in NOISE_PATTERNS:
            raise InvalidConfigError(f"noise pattern must be one of {NOISE_PATTERNS}")
        if not 0 <= self.density <= 1:
            raise InvalidConfigError(f"noise density must lie in [0, 1], got {self.density}")


def add_noise(video, spec: NoiseSpec) -> np.ndarray:
    """Corrupt exactly floor(density * H * W) pixel locations per frame."""
    frames = _frames(video).copy()
    T, H, W, _ = frames.shape
    n = prune_count(spec.density, H * W)
    rng = np.random.default_rng(spec.seed)
    flat = frames.reshape(T, H * W, 3)
    for t in range(T):
        locs = rng.choice(H * W, size=n, replace=False)
        if spec.pattern == "white":
            flat[t, locs] = 1.0
        elif spec.pattern == "black":
            flat[t, locs] = 0.0
        elif spec.pattern == "salt_pepper":
            flat[t, locs] = rng.integers(0, 2, size=n).astype(np.float32)[:, None]
        else:
            flat[t, locs] = rng.random((n, 3), dtype=np.float32)
    return frames


def filter_baseline(video, kind: str, window: int = 3) -> np.ndarray:
    """Per-frame, per-channel spatial filter with reflect padding.

    The Gaussian uses sigma = window / 3 truncated to the window.
    """
    if window < 3 or window % 2 == 0:
        raise InvalidConfigError(f"filter window must be odd and >= 3, got {window}")
    frames = _frames(video)
    size = (1, window, window, 1)
    if kind == "gaussian":
        sigma = window / 3
        return ndimage.gaussian_filter(frames, sigma=(0, sigma, sigma, 0), mode="reflect", truncate=(window // 2) / sigma)
    if kind == "uniform":
        return ndimage.uniform_filter(frames, size=size, mode="reflect")
    if kind == "median":
        return ndimage.median_filter(frames, size=size, mode="reflect")
    if kind == "minimum":
        return ndimage.minimum_filter(frames, size=size, mode="reflect")
    if kind == "maximum":
        return ndimage.maximum_filter(frames, size=size, mode="reflect")
    raise InvalidConfigError(f"filter must be one of {FILTERS}, got {kind!r}")


def denoise_eval(clean, spec: NoiseSpec, model_cfg: NervConfig, train_cfg: TrainConfig, window: int = 3) -> EvalRecord:
    """Fit on the noisy video only and score every output against the clean one."""
    clean = _frames(clean)
    noisy = add_noise(clean, spec)
    model, history, seconds = fit(noisy, model_cfg, train_cfg)
    out = _reconstruction(model, len(clean))
    extras = {"noisy_psnr": video_psnr(noisy, clean), "fit_psnr_vs_noisy": history.final.psnr}
    for kind in FILTERS:
        extras[f"{kind}_psnr"] = video_psnr(filter_baseline(noisy, kind, window), clean)
    return EvalRecord(
        name=f"denoise_{spec.pattern}",
        psnr=video_psnr(out, clean),
        ms_ssim=video_ms_ssim(out, clean),
        encode_seconds=seconds,
        params=count_params(model),
        extras=extras,
    )


# -- interpolation -----------------------------------------------------------


def interpolation_eval(video, train_stride: int, model_cfg: NervConfig, train_cfg: TrainConfig) -> EvalRecord:
    """Fit on every ``train_stride``-th frame; score the frames in between.

    Time stays normalized over the whole video, so held-out frames sit
    between training timestamps.
    """
    frames = _frames(video)
    T = len(frames)
    if train_stride < 2:
        raise InvalidConfigError("train_stride must be >= 2")
    seen = np.arange(0, T, train_stride)
    unseen = np.setdiff1d(np.arange(T), seen)
    if len(seen) < 2 or len(unseen) == 0:
        raise InvalidConfigError(f"stride {train_stride} on {T} frames leaves {len(seen)} training / {len(unseen)} held-out frames")
    model, _, seconds = fit(frames, model_cfg, train_cfg, indices=seen)
    out = _reconstruction(model, T)
    return EvalRecord(
        name=f"interp_stride{train_stride}",
        psnr=video_psnr(out[unseen], frames[unseen]),
        ms_ssim=video_ms_ssim(out[unseen], frames[unseen]),
        encode_seconds=seconds,
        params=count_params(model),
        extras={"train_psnr": video_psnr(out[seen], frames[seen])},
    )


# -- ablations ---------------------------------------------------------------


def ablation_sweep(video, axis: str, budget: tuple[NervConfig, TrainConfig]) -> list[EvalRecord]:
    """One fit per variant along ``axis`` at the same base architecture and schedule."""
    if axis not in ABLATION_AXES:
        raise InvalidConfigError(f"axis must be one of {sorted(ABLATION_AXES)}")
    model_cfg, train_cfg = budget
    frames = _frames(video)
    records = []
    for name, change in ABLATION_AXES[axis]:
        if "loss_terms" in change:
            mc, tc = model_cfg, train_cfg.replace(**change)
        else:
            mc, tc = model_cfg.replace(**change), train_cfg
        model, history, seconds = fit(frames, mc, tc)
        out = _reconstruction(model, len(frames))
        records.append(
            EvalRecord(
                name=f"{axis}={name}",
                psnr=video_psnr(out, frames),
                ms_ssim=video_ms_ssim(out, frames),
                encode_seconds=seconds,
                params=count_params(model),
            )
        )
        log.info("%s: psnr %.2f", records[-1].name, records[-1].psnr)
    return records


# -- rate-distortion ---------------------------------------------------------


def rd_report(
    video,
    size_configs: list[NervConfig],
    q: float,
    bit: int,
    train_cfg: TrainConfig,
    out_dir=None,
    finetune_epochs: int = 50,
) -> list[EvalRecord]:
    """fit -> compress -> serialize -> decode for each model size.

    BPP is computed from the serialized byte count.  With ``out_dir`` each
    artifact is written as ``size{i}.nrv``.
    """
    if not size_configs:
        raise InvalidConfigError("need at least one model configuration")
    frames = _frames(video)
    T, H, W, _ = frames.shape
    records = []
    for i, cfg in enumerate(size_configs):
        model, _, seconds = fit(frames, cfg, train_cfg)
        artifact = compress_model(model, q, bit, (T, H, W), video=frames, train_cfg=train_cfg, finetune_epochs=finetune_epochs)
        blob = serialize(artifact)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / f"size{i}.nrv").write_bytes(blob)
        decoded = load(blob)
        out = decode_frames(decoded, range(T))
        records.append(
            EvalRecord(
                name=f"size{i}",
                bpp=bpp(8 * len(blob), (T, H, W)),
                psnr=video_psnr(out, frames),
                ms_ssim=video_ms_ssim(out, frames),
                encode_seconds=seconds,
                decode_fps=benchmark_fps(decoded, min(T, 8)),
                params=count_params(model),
                extras={"bytes": len(blob), "q": q, "bit": bit},
            )
        )
    return records


def plot_rd(records: list[EvalRecord], path) -> bool:
    """PSNR and MS-SSIM vs BPP; returns False when matplotlib is unavailable."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    x = [r.bpp for r in records]
    axes[0].plot(x, [r.psnr for r in records], "o-")
    axes[0].set(xlabel="BPP", ylabel="PSNR (dB)")
    axes[1].plot(x, [r.ms_ssim for r in records], "o-")
    axes[1].set(xlabel="BPP", ylabel="MS-SSIM")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True
