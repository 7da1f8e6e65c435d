"""Pixel-wise coordinate networks used as comparison baselines.

``sine_mlp`` takes (x, y, t) scaled to [-1, 1] through sine activations
sin(omega0 * (Wx + b)); ``pe_relu_mlp`` positionally encodes
each coordinate in (0, 1] and uses ReLU.  Both end in a linear layer
squashed by a logistic, so every output lies in (0, 1).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DomainError, InvalidConfigError

VARIANTS = ("sine_mlp", "pe_relu_mlp")


@dataclass(frozen=True)
class PixelwiseConfig:
    variant: str = "sine_mlp"
    depth: int = 3
    hidden: int = 256
    embed_base: float = 2.0
    embed_length: int = 10
    omega0: float = 30.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidConfigError(f"variant must be one of {VARIANTS}")
        if self.depth < 2 or self.hidden < 1:
            raise InvalidConfigError("need depth >= 2 and hidden >= 1")
        if self.embed_length < 1 or not self.embed_base > 0:
            raise InvalidConfigError("bad embedding parameters")

    @property
    def in_dim(self) -> int:
        return 3 if self.variant == "sine_mlp" else 3 * 2 * self.embed_length


class _Sine(nn.Module):
    def __init__(self, omega0: float):
        super().__init__()
        self.omega0 = omega0

    def forward(self, x):
        return torch.sin(self.omega0 * x)


class PixelwiseModel(nn.Module):
    def __init__(self, config: PixelwiseConfig, resolution: tuple[int, int] = (0, 0)):
        super().__init__()
        self.config = config
        self.resolution = tuple(resolution)
        dims = [config.in_dim] + [config.hidden] * (config.depth - 1) + [3]
        layers = []
        for i in range(config.depth):
            layers.append(nn.Linear(dims[i], dims[i + 1]))
            if i < config.depth - 1:
                layers.append(_Sine(config.omega0) if config.variant == "sine_mlp" else nn.ReLU())
        self.net = nn.Sequential(*layers)
        if config.variant == "sine_mlp":
            self._sine_init()

    @torch.no_grad()
    def _sine_init(self):
        linears = [m for m in self.net if isinstance(m, nn.Linear)]
        for i, lin in enumerate(linears):
            fan_in = lin.in_features
            bound = 1 / fan_in if i == 0 else math.sqrt(6 / fan_in) / self.config.omega0
            lin.weight.uniform_(-bound, bound)

    def encode(self, coords: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if cfg.variant == "sine_mlp":
            return coords
        freqs = math.pi * cfg.embed_base ** torch.arange(cfg.embed_length, dtype=coords.dtype)
        arg = coords[..., None] * freqs
        return torch.stack((torch.sin(arg), torch.cos(arg)), -1).flatten(-3)

    def forward(self, coords: torch.Tensor) -> torch.Tensor:
        """(N, 3) normalized (x, y, t) -> (N, 3) RGB."""
        return torch.sigmoid(self.net(self.encode(coords)))


def build_pixelwise(config: PixelwiseConfig, seed: int = 0, resolution=(0, 0)) -> PixelwiseModel:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return PixelwiseModel(config, resolution)


def hidden_for_params(target: int, variant: str = "sine_mlp", depth: int = 3, embed_length: int = 10) -> int:
    """Hidden width whose parameter count is closest to ``target``."""
    cfg = PixelwiseConfig(variant=variant, depth=depth, embed_length=embed_length, hidden=1)
    best, best_err = 1, math.inf
    h = 1
    while True:
        n = cfg.in_dim * h + h + (depth - 2) * (h * h + h) + 3 * h + 3
        if abs(n - target) < best_err:
            best, best_err = h, abs(n - target)
        if n > target:
            return best
        h += 1


def _coord_range(variant: str) -> tuple[float, float, bool]:
    return (-1.0, 1.0, True) if variant == "sine_mlp" else (0.0, 1.0, False)


def normalize_coords(x, y, t, H: int, W: int, T: int, variant: str) -> np.ndarray:
    """Integer pixel coordinates to the network's input range."""
    x, y, t = (np.asarray(v, dtype=np.float64) for v in (x, y, t))
    if variant == "sine_mlp":
        return np.stack([2 * (x + 0.5) / W - 1, 2 * (y + 0.5) / H - 1, 2 * (t + 0.5) / T - 1], -1)
    return np.stack([(x + 1) / W, (y + 1) / H, (t + 1) / T], -1)


@torch.no_grad()
def pixelwise_forward(model: PixelwiseModel, x: float, y: float, t: float) -> np.ndarray:
    """RGB triple at one normalized (x, y, t) coordinate."""
    lo, hi, closed = _coord_range(model.config.variant)
    for v in (x, y, t):
        if not (lo <= v <= hi if closed else lo < v <= hi):
            raise DomainError(f"coordinate {v} outside {'[' if closed else '('}{lo}, {hi}]")
    c = torch.tensor([[x, y, t]], dtype=torch.float32)
    return model(c)[0].double().numpy()


@torch.no_grad()
def render_frame(model: PixelwiseModel, t_idx: int, T: int, H: int, W: int, chunk: int = 16384) -> np.ndarray:
    """Full frame by H*W independent samples."""
    y, x = np.mgrid[0:H, 0:W]
    coords = torch.from_numpy(normalize_coords(x.ravel(), y.ravel(), np.full(H * W, t_idx), H, W, T, model.config.variant)).float()
    out = torch.cat([model(coords[i : i + chunk]) for i in range(0, len(coords), chunk)])
    return out.view(H, W, 3).numpy()


def train_pixelwise(model: PixelwiseModel, video, epochs: int = 1, batch_pixels: int = 8192, lr: float = 1e-4, seed: int = 0):
    """MSE fit on random pixel minibatches; one epoch visits all T*H*W pixels.

    Returns (model, list of (epoch, mean loss, seconds)).
    """
    frames = np.asarray(getattr(video, "frames", video), dtype=np.float32)
    T, H, W, _ = frames.shape
    t, y, x = np.meshgrid(np.arange(T), np.arange(H), np.arange(W), indexing="ij")
    coords = torch.from_numpy(normalize_coords(x.ravel(), y.ravel(), t.ravel(), H, W, T, model.config.variant)).float()
    target = torch.from_numpy(frames.reshape(-1, 3))
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    gen = torch.Generator().manual_seed(seed)
    history = []
    model.train()
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        perm = torch.randperm(len(coords), generator=gen)
        total = 0.0
        for i in range(0, len(perm), batch_pixels):
            b = perm[i : i + batch_pixels]
            pred = model(coords[b])
            value = torch.mean((pred - target[b]) ** 2)
            opt.zero_grad()
            value.backward()
            opt.step()
            total += value.item() * len(b)
        history.append((epoch, total / len(perm), time.perf_counter() - t0))
    model.eval()
    return model, history


def sampling_cost(video_dims, representation: str) -> int:
    """Network evaluations needed to reconstruct a (T, H, W) video."""
    T, H, W = (int(d) for d in video_dims)
    if min(T, H, W) < 1:
        raise InvalidConfigError(f"dimensions must be positive, got {video_dims}")
    if representation in ("pixel", "pixel-wise", "pixelwise"):
        return T * H * W
    if representation in ("image", "image-wise", "imagewise"):
        return T
    raise InvalidConfigError(f"unknown representation {representation!r}")
