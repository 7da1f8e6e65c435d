"""Fitting a representation to a video: loss, schedule, optimization loop, checkpoints."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import DomainError, InvalidConfigError, TrainingDivergedError
from .metrics import ms_ssim_batch, psnr, ssim_batch
from .model import NervConfig, NervModel, frame_time

log = logging.getLogger(__name__)

LOSS_TERMS = ("l2", "l1", "ssim")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    warmup_epochs: int = 30
    base_lr: float = 5e-4
    batch_size: int = 1
    loss_alpha: float = 0.7
    loss_terms: tuple[str, ...] = ("l1", "ssim")
    seed: int = 0
    checkpoint_every: int = 0
    eval_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "loss_terms", tuple(self.loss_terms))
        if self.epochs < 1:
            raise InvalidConfigError("epochs must be >= 1")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise InvalidConfigError("warmup_epochs must lie in [0, epochs]")
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1")
        if not self.base_lr > 0:
            raise InvalidConfigError("base_lr must be positive")
        if not 0 <= self.loss_alpha <= 1:
            raise InvalidConfigError("loss_alpha must lie in [0, 1]")
        _check_terms(self.loss_terms)
        if self.eval_every < 1 or self.checkpoint_every < 0:
            raise InvalidConfigError("eval_every must be >= 1 and checkpoint_every >= 0")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["loss_terms"] = list(self.loss_terms)
        return d


def _check_terms(terms) -> None:
    if not terms:
        raise InvalidConfigError("loss needs at least one term")
    bad = set(terms) - set(LOSS_TERMS)
    if bad:
        raise InvalidConfigError(f"unknown loss terms {sorted(bad)}; allowed {LOSS_TERMS}")


def lr_at(epoch: float, cfg: TrainConfig) -> float:
    """Linear warmup from 0 to base_lr, then cosine decay to 0 at cfg.epochs."""
    if not 0 <= epoch <= cfg.epochs:
        raise DomainError(f"epoch {epoch} outside [0, {cfg.epochs}]")
    if epoch < cfg.warmup_epochs:
        return cfg.base_lr * epoch / cfg.warmup_epochs
    span = cfg.epochs - cfg.warmup_epochs
    progress = 1.0 if span == 0 else (epoch - cfg.warmup_epochs) / span
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def loss(pred, target, alpha: float = 0.7, terms=("l1", "ssim")):
    """Per-frame reconstruction loss averaged over the batch.

    Weighting: with a pixel term and SSIM, ``alpha * pixel + (1 - alpha) *
    (1 - SSIM)`` where pixel is the mean of the present L1/L2 terms; L2 with
    L1 alone is ``alpha * L2 + (1 - alpha) * L1``; a single term has weight 1.
    Accepts (N, 3, H, W) tensors (returns a tensor) or (H, W, 3) /
    (N, H, W, 3) arrays (returns a float).
    """
    _check_terms(terms)
    terms = set(terms)
    as_float = not isinstance(pred, torch.Tensor)
    if as_float:
        from .metrics import _pair

        pred, target = _pair(pred, target)
    elif pred.shape != target.shape:
        from .errors import ShapeError

        raise ShapeError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    diff = pred - target
    parts = {}
    if "l2" in terms:
        parts["l2"] = (diff * diff).mean(dim=(1, 2, 3))
    if "l1" in terms:
        parts["l1"] = diff.abs().mean(dim=(1, 2, 3))
    if "ssim" in terms:
        parts["ssim"] = 1.0 - ssim_batch(pred, target)
    pixel = [parts[k] for k in ("l2", "l1") if k in parts]
    if "ssim" in parts and pixel:
        per_frame = alpha * sum(pixel) / len(pixel) + (1 - alpha) * parts["ssim"]
    elif len(pixel) == 2:
        per_frame = alpha * parts["l2"] + (1 - alpha) * parts["l1"]
    else:
        per_frame = next(iter(parts.values()))
    out = per_frame.mean()
    return float(out) if as_float else out


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    psnr: float
    ms_ssim: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def psnr_at(self, epoch: int) -> float:
        return next(r.psnr for r in self.records if r.epoch == epoch)

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    @property
    def total_seconds(self) -> float:
        return sum(r.seconds for r in self.records)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "psnr", "ms_ssim", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.loss), repr(r.psnr), repr(r.ms_ssim), repr(r.seconds)])


def _video_array(video) -> np.ndarray:
    return np.asarray(getattr(video, "frames", video), dtype=np.float32)


def deterministic_mode() -> bool:
    return os.environ.get("NERV_DETERMINISTIC", "1") not in ("0", "false", "")


@torch.no_grad()
def evaluate(model: NervModel, video, indices=None, batch: int = 4) -> tuple[float, float]:
    """(mean per-frame PSNR, MS-SSIM) of the model's reconstruction of ``indices``."""
    frames = _video_array(video)
    T = frames.shape[0]
    idx = np.arange(T) if indices is None else np.asarray(indices)
    preds = reconstruct(model, T, idx, batch=batch)
    target = torch.from_numpy(frames[idx]).permute(0, 3, 1, 2)
    p = float(np.mean([psnr(preds[i : i + 1], target[i : i + 1]) for i in range(len(idx))]))
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = float(ms_ssim_batch(preds.double(), target.double()).mean())
    return p, m


@torch.no_grad()
def reconstruct(model: NervModel, num_frames: int, indices, batch: int = 4) -> torch.Tensor:
    """Decoded frames (k, 3, H, W) for integer ``indices`` of a T-frame video."""
    was = model.training
    model.eval()
    times = torch.from_numpy(frame_time(np.asarray(indices), num_frames))
    out = torch.cat([model(times[i : i + batch]) for i in range(0, len(times), batch)])
    model.train(was)
    return out


def train(
    model: NervModel,
    video,
    cfg: TrainConfig,
    *,
    indices=None,
    mask: dict[str, torch.Tensor] | None = None,
    checkpoint_dir=None,
) -> tuple[NervModel, TrainHistory]:
    """Overfit ``model`` to ``video`` in place.

    ``indices`` restricts training to a subset of frames while keeping time
    normalized over the full video length.  ``mask`` maps parameter names to
    0/1 tensors; masked entries get zero gradient and are re-zeroed after
    every step.
    """
    frames = _video_array(video)
    T, H, W, _ = frames.shape
    if tuple(model.config.target_resolution) != (H, W):
        raise InvalidConfigError(f"model resolution {model.config.target_resolution} != video {(H, W)}")
    idx = np.arange(T) if indices is None else np.asarray(sorted(indices), dtype=np.int64)
    if len(idx) == 0:
        raise InvalidConfigError("no frames to train on")
    if deterministic_mode():
        torch.use_deterministic_algorithms(True)

    target_all = torch.from_numpy(frames).permute(0, 3, 1, 2).contiguous()
    times_all = torch.from_numpy(frame_time(np.arange(T), T))
    params = dict(model.named_parameters())
    if mask is not None:
        mask = {k: v.to(params[k].dtype) for k, v in mask.items()}
        _apply_mask(params, mask)

    opt = torch.optim.Adam(model.parameters(), lr=cfg.base_lr, betas=(0.9, 0.999), eps=1e-8)
    gen = torch.Generator().manual_seed(cfg.seed)
    steps = math.ceil(len(idx) / cfg.batch_size)
    history = TrainHistory()
    model.train()

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = idx[torch.randperm(len(idx), generator=gen).numpy()]
        total = 0.0
        for s in range(steps):
            lr = lr_at(epoch - 1 + (s + 0.5) / steps, cfg)
            for g in opt.param_groups:
                g["lr"] = lr
            b = torch.from_numpy(order[s * cfg.batch_size : (s + 1) * cfg.batch_size])
            pred = model(times_all[b])
            value = loss(pred, target_all[b], cfg.loss_alpha, cfg.loss_terms)
            if not torch.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss {value.item()} at epoch {epoch} step {s} (lr={lr:.3g}, frames={b.tolist()})"
                )
            opt.zero_grad(set_to_none=False)
            value.backward()
            if mask is not None:
                for k, m in mask.items():
                    params[k].grad.mul_(m)
            opt.step()
            if mask is not None:
                _apply_mask(params, mask)
            total += value.item() * len(b)
        seconds = time.perf_counter() - t0

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            p, m = evaluate(model, frames, idx)
        else:
            p = m = float("nan")
        history.records.append(EpochRecord(epoch, total / len(idx), p, m, seconds))
        log.debug("epoch %d loss %.5f psnr %.2f", epoch, total / len(idx), p)
        if checkpoint_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / f"epoch_{epoch:05d}.pt", model, opt, epoch, cfg)
    model.eval()
    return model, history


@torch.no_grad()
def _apply_mask(params, mask) -> None:
    for k, m in mask.items():
        params[k].mul_(m)


def save_checkpoint(path, model: NervModel, optimizer=None, epoch: int = 0, cfg: TrainConfig | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "config": model.config.to_dict(),
            "state_dict": model.state_dict(),
            "optimizer": None if optimizer is None else optimizer.state_dict(),
            "epoch": epoch,
            "train_config": None if cfg is None else cfg.to_dict(),
        },
        path,
    )


def load_checkpoint(path) -> tuple[NervModel, dict]:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise InvalidConfigError(f"unsupported checkpoint version {blob.get('version')}")
    model = NervModel(NervConfig.from_dict(blob["config"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob
