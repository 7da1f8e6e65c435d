"""Image-wise implicit video network: frame time in, whole RGB frame out.

The network is a positional encoding of the normalized frame time, a two
layer MLP whose output is reshaped into a small feature map, a stack of
upscaling blocks (conv -> sub-pixel shuffle -> norm -> activation) and a
3x3 head convolution squashed into (0, 1) with a logistic.
"""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import DomainError, InvalidConfigError, ShapeError

ACTIVATIONS = ("relu", "leaky_relu", "swish", "gelu")
NORMS = ("none", "batch", "instance")
UPSCALE_MODES = ("pixelshuffle", "transpose_conv", "bilinear_conv")
EMBEDDINGS = ("pe", "none")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class NervConfig:
    """Architecture hyperparameters.

    ``stem_spatial`` may be left as ``None``; it is then derived from
    ``target_resolution`` and the product of ``upscale_factors``.
    """

    target_resolution: tuple[int, int] = (1080, 1920)
    upscale_factors: tuple[int, ...] = (5, 3, 2, 2, 2)
    stem_channels: int = 64
    block_channels: int = 512
    mlp_hidden: int = 512
    embed_base: float = 1.25
    embed_length: int = 80
    embedding: str = "pe"
    activation: str = "gelu"
    norm: str = "none"
    upscale_mode: str = "pixelshuffle"
    conv_kernel: int = 3
    stem_spatial: tuple[int, int] | None = field(default=None)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("target_resolution", tuple(int(v) for v in self.target_resolution))
        set_("upscale_factors", tuple(int(v) for v in self.upscale_factors))
        if len(self.target_resolution) != 2 or min(self.target_resolution) < 1:
            raise InvalidConfigError(f"bad target_resolution {self.target_resolution}")
        if not self.upscale_factors or min(self.upscale_factors) < 1:
            raise InvalidConfigError(f"bad upscale_factors {self.upscale_factors}")
        if not self.embed_base > 0:
            raise InvalidConfigError("embed_base must be positive")
        if self.embed_length < 1:
            raise InvalidConfigError("embed_length must be >= 1")
        for name, allowed in (
            ("embedding", EMBEDDINGS),
            ("activation", ACTIVATIONS),
            ("norm", NORMS),
            ("upscale_mode", UPSCALE_MODES),
        ):
            if getattr(self, name) not in allowed:
                raise InvalidConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise InvalidConfigError("conv_kernel must be an odd positive integer")
        for name in ("stem_channels", "block_channels", "mlp_hidden"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be positive")

        total = math.prod(self.upscale_factors)
        H, W = self.target_resolution
        if H % total or W % total:
            raise InvalidConfigError(
                f"resolution {H}x{W} is not divisible by the upscale product {total}; "
                f"stem would be {H / total}x{W / total}"
            )
        derived = (H // total, W // total)
        if self.stem_spatial is None:
            set_("stem_spatial", derived)
        else:
            set_("stem_spatial", tuple(int(v) for v in self.stem_spatial))
            if self.stem_spatial != derived:
                raise InvalidConfigError(
                    f"stem {self.stem_spatial} times upscale product {total} "
                    f"does not reach {self.target_resolution}"
                )

    @property
    def embed_dim(self) -> int:
        return 2 * self.embed_length if self.embedding == "pe" else 1

    def block_out_channels(self) -> list[int]:
        """Channel count after each block: C2, C2/2, C2/4, ... floored at 1."""
        return [max(_round_half_up(self.block_channels / 2**k), 1) for k in range(len(self.upscale_factors))]

    def replace(self, **changes) -> "NervConfig":
        if "target_resolution" in changes or "upscale_factors" in changes:
            changes.setdefault("stem_spatial", None)
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NervConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def frame_time(t_raw, num_frames: int):
    """Map integer frame index(es) in [0, T-1] to normalized time in (0, 1]."""
    idx = np.asarray(t_raw)
    if num_frames < 1:
        raise DomainError("num_frames must be >= 1")
    if np.any(idx < 0) or np.any(idx > num_frames - 1):
        raise DomainError(f"frame index out of range [0, {num_frames - 1}]: {t_raw}")
    return (idx + 1.0) / num_frames


def positional_encode(t_norm: float, b: float, l: int) -> np.ndarray:
    """Interleaved sin/cos embedding at frequencies b**k * pi, k < l."""
    if l < 1 or not b > 0:
        raise InvalidConfigError(f"positional encoding needs l >= 1 and b > 0, got l={l}, b={b}")
    arg = np.pi * float(t_norm) * np.power(float(b), np.arange(l, dtype=np.float64))
    out = np.empty(2 * l, dtype=np.float64)
    out[0::2] = np.sin(arg)
    out[1::2] = np.cos(arg)
    return out


def _encode_batch(t: torch.Tensor, b: float, l: int) -> torch.Tensor:
    # float64 arguments: b**79 * pi is ~1e8, beyond float32 resolution
    freqs = torch.pow(torch.tensor(float(b), dtype=torch.float64), torch.arange(l, dtype=torch.float64))
    arg = math.pi * t.to(torch.float64)[:, None] * freqs[None, :]
    return torch.stack((torch.sin(arg), torch.cos(arg)), dim=-1).flatten(1)


def pixel_shuffle(x: np.ndarray, S: int) -> np.ndarray:
    """Rearrange (C*S*S, h, w) into (C, S*h, S*w), channel-major sub-pixel order."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"expected (C*S^2, h, w), got shape {x.shape}")
    c, h, w = x.shape
    if S < 1 or c % (S * S):
        raise ShapeError(f"channel count {c} not divisible by S^2={S * S}")
    return x.reshape(c // (S * S), S, S, h, w).transpose(0, 3, 1, 4, 2).reshape(c // (S * S), h * S, w * S)


def pixel_unshuffle(y: np.ndarray, S: int) -> np.ndarray:
    y = np.asarray(y)
    c, H, W = y.shape
    if H % S or W % S:
        raise ShapeError(f"spatial dims {H}x{W} not divisible by {S}")
    return y.reshape(c, H // S, S, W // S, S).transpose(0, 2, 4, 1, 3).reshape(c * S * S, H // S, W // S)


def _activation(name: str) -> nn.Module:
    return {
        "relu": nn.ReLU,
        "leaky_relu": nn.LeakyReLU,
        "swish": nn.SiLU,
        "gelu": nn.GELU,
    }[name]()


class NervBlock(nn.Module):
    def __init__(self, cin: int, cout: int, scale: int, cfg: NervConfig):
        super().__init__()
        k = cfg.conv_kernel
        mode = cfg.upscale_mode
        if mode == "pixelshuffle":
            self.up = nn.Sequential(nn.Conv2d(cin, cout * scale * scale, k, padding=k // 2), nn.PixelShuffle(scale))
        elif mode == "transpose_conv":
            # kernel k*S keeps the weight count equal to the pixelshuffle conv
            self.up = nn.ConvTranspose2d(cin, cout, k * scale, stride=scale, padding=scale * (k - 1) // 2)
        else:
            self.up = nn.Sequential(
                nn.Upsample(scale_factor=scale, mode="bilinear", align_corners=False),
                nn.Conv2d(cin, cout, k, padding=k // 2),
            )
        if cfg.norm == "batch":
            self.norm = nn.BatchNorm2d(cout)
        elif cfg.norm == "instance":
            self.norm = nn.InstanceNorm2d(cout, affine=True)
        else:
            self.norm = nn.Identity()
        self.act = _activation(cfg.activation)

    def forward(self, x):
        return self.act(self.norm(self.up(x)))


class NervModel(nn.Module):
    """The video representation; parameters are the encoded video."""

    def __init__(self, config: NervConfig):
        super().__init__()
        self.config = config
        c1 = config.stem_channels
        h0, w0 = config.stem_spatial
        self.mlp = nn.Sequential(
            nn.Linear(config.embed_dim, config.mlp_hidden),
            _activation(config.activation),
            nn.Linear(config.mlp_hidden, c1 * h0 * w0),
        )
        blocks = []
        cin = c1
        for cout, s in zip(config.block_out_channels(), config.upscale_factors):
            blocks.append(NervBlock(cin, cout, s, config))
            cin = cout
        self.blocks = nn.ModuleList(blocks)
        k = config.conv_kernel
        self.head = nn.Conv2d(cin, 3, k, padding=k // 2)

    def embed(self, t: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if cfg.embedding == "none":
            return t.to(self.head.weight.dtype)[:, None]
        return _encode_batch(t, cfg.embed_base, cfg.embed_length).to(self.head.weight.dtype)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        """(B,) normalized times -> (B, 3, H, W) frames in (0, 1)."""
        h0, w0 = self.config.stem_spatial
        x = self.mlp(self.embed(t)).view(t.shape[0], self.config.stem_channels, h0, w0)
        for block in self.blocks:
            x = block(x)
        return torch.sigmoid(self.head(x))


def build_model(config: NervConfig, seed: int = 0) -> NervModel:
    """Construct a freshly initialized model; identical for identical (config, seed)."""
    if not isinstance(config, NervConfig):
        raise InvalidConfigError("build_model expects a NervConfig")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = NervModel(config)
    return model


def count_params(model) -> int:
    if isinstance(model, nn.Module):
        return sum(p.numel() for p in model.parameters())
    if isinstance(model, Mapping):
        return sum(int(np.prod(np.shape(v))) for v in model.values())
    raise TypeError(f"cannot count parameters of {type(model).__name__}")


def _check_times(t_norm) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(t_norm, dtype=np.float64)).reshape(-1)
    if torch.any(t <= 0) or torch.any(t > 1) or not torch.all(torch.isfinite(t)):
        raise DomainError(f"normalized time must lie in (0, 1], got {t_norm}")
    return t


@torch.no_grad()
def forward(model: NervModel, t_norm) -> np.ndarray:
    """Decode one frame (H, W, 3) or, for a sequence of times, a stack (k, H, W, 3)."""
    t = _check_times(t_norm)
    if model.training:
        # batch norm would otherwise update its running statistics
        model.eval()
    out = model(t).permute(0, 2, 3, 1).cpu().numpy()
    return out if np.ndim(t_norm) > 0 else out[0]
