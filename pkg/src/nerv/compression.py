"""Post-fit model compression: global magnitude pruning with fine-tuning,
per-tensor affine quantization, and one Huffman code over every index stream.
"""

from __future__ import annotations

import copy
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import DataError, InvalidConfigError
from .huffman import BitPayload, HuffmanCode, huffman_encode
from .model import NervConfig, NervModel
from .training import TrainConfig, train

RAW_BITS = 32
FINETUNE_EPOCHS = 50


# -- pruning -----------------------------------------------------------------


@dataclass
class PruneMask:
    masks: dict[str, torch.Tensor]  # True = kept
    sparsity: float
    n_prunable: int

    @property
    def n_pruned(self) -> int:
        return sum(int((~m).sum()) for m in self.masks.values())


def _named_tensors(model) -> dict[str, torch.Tensor]:
    if isinstance(model, nn.Module):
        return dict(model.named_parameters())
    if isinstance(model, Mapping):
        return {k: torch.as_tensor(v) for k, v in model.items()}
    raise TypeError(f"cannot prune {type(model).__name__}")


def prunable_names(model) -> list[str]:
    """Weight tensors eligible for pruning (rank >= 2), in sorted name order."""
    return sorted(k for k, v in _named_tensors(model).items() if v.ndim >= 2)


def prune_count(q: float, n: int) -> int:
    # round() guards against q*n landing a hair under an integer, e.g. 0.29 * 100
    return math.floor(round(q * n, 9))


def prune_global(model, q: float):
    """Zero the floor(q*N) smallest-magnitude prunable weights across all tensors.

    Ties in magnitude resolve by tensor name, then flat index.  Returns a
    pruned copy (module or dict, matching the input) and the mask.
    """
    if not 0 <= q < 1:
        raise InvalidConfigError(f"sparsity must lie in [0, 1), got {q}")
    pruned = copy.deepcopy(model) if isinstance(model, nn.Module) else {k: torch.as_tensor(v).clone() for k, v in model.items()}
    tensors = _named_tensors(pruned)
    names = prunable_names(pruned)
    flat = np.concatenate([tensors[k].detach().abs().reshape(-1).double().numpy() for k in names]) if names else np.zeros(0)
    k = prune_count(q, flat.size)
    keep = np.ones(flat.size, dtype=bool)
    keep[np.argsort(flat, kind="stable")[:k]] = False
    masks = {}
    offset = 0
    with torch.no_grad():
        for name in names:
            t = tensors[name]
            m = torch.from_numpy(keep[offset : offset + t.numel()].reshape(tuple(t.shape)).copy())
            offset += t.numel()
            t.mul_(m.to(t.dtype))
            masks[name] = m
    return pruned, PruneMask(masks, q, int(flat.size))


def finetune(model: NervModel, mask: PruneMask, video, cfg: TrainConfig | None = None, epochs: int = FINETUNE_EPOCHS):
    """Retrain a pruned model with pruned entries pinned at zero."""
    params = dict(model.named_parameters())
    for k, m in mask.masks.items():
        if k not in params or tuple(params[k].shape) != tuple(m.shape):
            raise InvalidConfigError(f"mask entry {k} does not match the model")
    cfg = (cfg or TrainConfig()).replace(epochs=epochs, warmup_epochs=0, checkpoint_every=0, eval_every=epochs)
    model, _ = train(model, video, cfg, mask=mask.masks)
    return model


def sparsity(model) -> float:
    names = prunable_names(model)
    tensors = _named_tensors(model)
    total = sum(tensors[k].numel() for k in names)
    zeros = sum(int((tensors[k] == 0).sum()) for k in names)
    return zeros / total if total else 0.0


# -- quantization ------------------------------------------------------------


@dataclass
class QuantizedTensor:
    """Affine-quantized tensor: value = index * scale + mu_min.

    ``bit == 32`` is the lossless bypass: ``indices`` then hold the raw
    float32 bit patterns and scale/mu_min are unused.
    """

    indices: np.ndarray
    bit: int
    scale: float
    mu_min: float
    shape: tuple[int, ...]

    def __eq__(self, other):
        return (
            isinstance(other, QuantizedTensor)
            and self.bit == other.bit
            and np.float32(self.scale).tobytes() == np.float32(other.scale).tobytes()
            and np.float32(self.mu_min).tobytes() == np.float32(other.mu_min).tobytes()
            and tuple(self.shape) == tuple(other.shape)
            and np.array_equal(self.indices, other.indices)
        )


def quantize_tensor(x, bit: int) -> QuantizedTensor:
    """Map ``x`` to 2**bit levels spanning [min, max], rounding half away from zero.

    ``scale`` and ``mu_min`` are float32 (they are stored that way); mu_min is
    rounded down and scale up so every element stays within half a step of
    its level.
    """
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().numpy()
    x = np.asarray(x)
    shape = tuple(x.shape)
    if not np.all(np.isfinite(x)):
        raise DataError("cannot quantize non-finite values")
    if bit == RAW_BITS:
        raw = np.ascontiguousarray(x, dtype=np.float32).view(np.uint32).copy()
        return QuantizedTensor(raw, RAW_BITS, 0.0, 0.0, shape)
    if not 1 <= bit <= 16:
        raise InvalidConfigError(f"bit width must lie in [1, 16] (or 32 for bypass), got {bit}")
    xf = x.astype(np.float64)
    if xf.size == 0:
        return QuantizedTensor(np.zeros(shape, dtype=np.uint32), bit, 0.0, 0.0, shape)
    lo, hi = float(xf.min()), float(xf.max())
    levels = 2**bit - 1
    mu_min = np.float32(lo)
    if float(mu_min) > lo:
        mu_min = np.nextafter(mu_min, np.float32(-np.inf))
    if hi == lo and float(mu_min) == lo:
        return QuantizedTensor(np.zeros(shape, dtype=np.uint32), bit, 0.0, float(mu_min), shape)
    scale = np.float32((hi - float(mu_min)) / levels)
    while float(mu_min) + levels * float(scale) < hi:
        scale = np.nextafter(scale, np.float32(np.inf))
    idx = np.floor((xf - float(mu_min)) / float(scale) + 0.5)
    idx = np.clip(idx, 0, levels).astype(np.uint32)
    return QuantizedTensor(idx, bit, float(scale), float(mu_min), shape)


def dequantize_tensor(qt: QuantizedTensor) -> np.ndarray:
    """Reconstructed values in float64 (float32 bit patterns for the bypass)."""
    if qt.bit == RAW_BITS:
        return np.asarray(qt.indices, dtype=np.uint32).view(np.float32).astype(np.float64).reshape(qt.shape)
    return (np.asarray(qt.indices, dtype=np.float64) * qt.scale + qt.mu_min).reshape(qt.shape)


def index_symbols(qt: QuantizedTensor) -> np.ndarray:
    """Symbol stream for one tensor; bypass words split into (low, high) 16-bit halves."""
    flat = np.asarray(qt.indices, dtype=np.uint32).reshape(-1)
    if qt.bit == RAW_BITS:
        halves = np.empty(flat.size * 2, dtype=np.uint32)
        halves[0::2] = flat & 0xFFFF
        halves[1::2] = flat >> 16
        return halves
    return flat


def symbols_to_indices(symbols: np.ndarray, bit: int) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.uint32)
    if bit == RAW_BITS:
        return symbols[0::2] | (symbols[1::2] << 16)
    return symbols


def symbols_per_element(bit: int) -> int:
    return 2 if bit == RAW_BITS else 1


# -- artifact ----------------------------------------------------------------


@dataclass
class TensorRecord:
    name: str
    shape: tuple[int, ...]
    bit: int
    scale: float
    mu_min: float
    n_symbols: int

    def __eq__(self, other):
        return (
            isinstance(other, TensorRecord)
            and (self.name, tuple(self.shape), self.bit, self.n_symbols)
            == (other.name, tuple(other.shape), other.bit, other.n_symbols)
            and np.float32(self.scale).tobytes() == np.float32(other.scale).tobytes()
            and np.float32(self.mu_min).tobytes() == np.float32(other.mu_min).tobytes()
        )


@dataclass
class CompressedArtifact:
    config: NervConfig
    frame_count: int
    tensors: list[TensorRecord]
    code: HuffmanCode
    payload: BitPayload
    stages: dict[str, int] = field(default_factory=dict, compare=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        H, W = self.config.target_resolution
        return self.frame_count, H, W


def compressible_state(model: NervModel) -> dict[str, torch.Tensor]:
    """Floating-point state (parameters and e.g. batch-norm statistics) in registration order."""
    return {k: v for k, v in model.state_dict().items() if v.is_floating_point()}


def quantize_model(model: NervModel, bit: int) -> dict[str, QuantizedTensor]:
    return {k: quantize_tensor(v, bit) for k, v in compressible_state(model).items()}


def build_artifact(config: NervConfig, frame_count: int, quantized: dict[str, QuantizedTensor]) -> CompressedArtifact:
    records = []
    streams = []
    for name, qt in quantized.items():
        syms = index_symbols(qt)
        streams.append(syms)
        records.append(TensorRecord(name, tuple(qt.shape), qt.bit, qt.scale, qt.mu_min, int(syms.size)))
    code, payload = huffman_encode(np.concatenate(streams))
    return CompressedArtifact(config, int(frame_count), records, code, payload)


def compress_model(
    model: NervModel,
    q: float,
    bit: int,
    video_dims: tuple[int, int, int] | None = None,
    *,
    video=None,
    train_cfg: TrainConfig | None = None,
    finetune_epochs: int = FINETUNE_EPOCHS,
) -> CompressedArtifact:
    """Prune (+ fine-tune on ``video``), quantize and entropy-code ``model``.

    The input model is left untouched.  ``artifact.stages`` records the size
    in bits after each stage.
    """
    if video_dims is None:
        if video is None:
            raise InvalidConfigError("need video_dims or video")
        video_dims = np.asarray(getattr(video, "frames", video)).shape[:3]
    T = int(video_dims[0])
    work = copy.deepcopy(model)
    stages = {"raw_fp32": RAW_BITS * sum(v.numel() for v in compressible_state(work).values())}
    if q > 0:
        work, mask = prune_global(work, q)
        if finetune_epochs > 0:
            if video is None:
                raise InvalidConfigError("pruning with fine-tuning needs the video")
            work = finetune(work, mask, video, train_cfg, epochs=finetune_epochs)
        stages["pruned_nonzero_fp32"] = RAW_BITS * sum(
            int((v != 0).sum()) for v in compressible_state(work).values()
        )
    quantized = quantize_model(work, bit)
    stages["quantized_fixed"] = sum(qt.bit * int(np.prod(qt.shape)) for qt in quantized.values())
    artifact = build_artifact(work.config, T, quantized)
    stages["huffman_payload"] = artifact.payload.nbits
    artifact.stages = stages
    return artifact


def artifact_state(artifact: CompressedArtifact, symbols: np.ndarray) -> dict[str, np.ndarray]:
    """Split a decoded symbol stream back into dequantized float64 tensors."""
    out = {}
    pos = 0
    for rec in artifact.tensors:
        chunk = symbols[pos : pos + rec.n_symbols]
        pos += rec.n_symbols
        idx = symbols_to_indices(chunk, rec.bit)
        qt = QuantizedTensor(idx.reshape(rec.shape), rec.bit, rec.scale, rec.mu_min, tuple(rec.shape))
        out[rec.name] = dequantize_tensor(qt)
    return out


def bpp(artifact_bits: int, dims) -> float:
    T, H, W = (int(d) for d in dims)
    if min(T, H, W) < 1:
        raise InvalidConfigError(f"dimensions must be positive, got {dims}")
    return artifact_bits / (T * H * W)


def huffman_gain(artifact: CompressedArtifact) -> dict[str, float]:
    """Relative saving of the Huffman payload vs fixed-width and vs float32 storage."""
    fixed = artifact.stages.get("quantized_fixed")
    raw = artifact.stages.get("raw_fp32")
    nbits = artifact.payload.nbits
    return {
        "vs_fixed_width": 1 - nbits / fixed if fixed else float("nan"),
        "vs_fp32": 1 - nbits / raw if raw else float("nan"),
    }
