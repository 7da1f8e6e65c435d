"""Frame quality metrics: PSNR, SSIM and multi-scale SSIM.

All functions accept numpy arrays laid out (H, W, 3) / (T, H, W, 3) or torch
tensors laid out (N, C, H, W).  SSIM uses an 11x11 Gaussian window with
sigma 1.5 evaluated only where the window fits ("valid" positions), and
stability constants (0.01)^2 and (0.03)^2 for a dynamic range of 1.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ShapeError

WINDOW = 11
SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2
MS_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
PSNR_CAP = 100.0


def _as_nchw(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        t = x
        if t.ndim == 3:
            t = t[None]
        return t
    a = np.asarray(x)
    if a.ndim == 3:
        a = a[None]
    if a.ndim != 4:
        raise ShapeError(f"expected (H, W, C) or (N, H, W, C) image, got shape {a.shape}")
    return torch.from_numpy(np.ascontiguousarray(a.transpose(0, 3, 1, 2))).to(torch.float64)


def _pair(a, b) -> tuple[torch.Tensor, torch.Tensor]:
    x, y = _as_nchw(a), _as_nchw(b)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dtype != y.dtype:
        dtype = torch.promote_types(x.dtype, y.dtype)
        x, y = x.to(dtype), y.to(dtype)
    return x, y


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA, dtype=torch.float64) -> torch.Tensor:
    r = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(r**2) / (2 * sigma**2))
    return (g / g.sum()).to(dtype)


def _filter(x: torch.Tensor, win: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    x = F.conv2d(x, win.view(1, 1, -1, 1).expand(c, 1, -1, 1), groups=c)
    return F.conv2d(x, win.view(1, 1, 1, -1).expand(c, 1, 1, -1), groups=c)


def _ssim_cs(x: torch.Tensor, y: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-image SSIM and contrast-structure terms, averaged over channels and positions."""
    if min(x.shape[-2:]) < WINDOW:
        raise ShapeError(f"images must be at least {WINDOW}x{WINDOW}, got {tuple(x.shape[-2:])}")
    win = gaussian_window(dtype=x.dtype).to(x.device)
    mu_x = _filter(x, win)
    mu_y = _filter(y, win)
    var_x = (_filter(x * x, win) - mu_x * mu_x).clamp_min(0)
    var_y = (_filter(y * y, win) - mu_y * mu_y).clamp_min(0)
    cov = _filter(x * y, win) - mu_x * mu_y
    cs_map = (2 * cov + C2) / (var_x + var_y + C2)
    lum = (2 * mu_x * mu_y + C1) / (mu_x * mu_x + mu_y * mu_y + C1)
    return (lum * cs_map).mean(dim=(1, 2, 3)), cs_map.mean(dim=(1, 2, 3))


def ssim_batch(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Differentiable per-image SSIM for (N, C, H, W) tensors."""
    return _ssim_cs(x, y)[0]


def ssim(a, b) -> float:
    x, y = _pair(a, b)
    return float(ssim_batch(x, y).mean())


def ms_scale_count(height: int, width: int, requested: int = 5) -> int:
    """Largest scale count <= requested whose coarsest level still fits the window."""
    m = 1
    while m < requested and min(height, width) // 2**m >= WINDOW:
        m += 1
    return m


def ms_ssim_batch(x: torch.Tensor, y: torch.Tensor, scales: int = 5) -> torch.Tensor:
    m = ms_scale_count(*x.shape[-2:], requested=scales)
    if m < scales:
        warnings.warn(
            f"image {tuple(x.shape[-2:])} too small for {scales} scales; using {m}",
            RuntimeWarning,
            stacklevel=3,
        )
    weights = torch.tensor(MS_WEIGHTS[:m], dtype=x.dtype)
    weights = weights / weights.sum()
    terms = []
    for j in range(m):
        s, cs = _ssim_cs(x, y)
        terms.append(s if j == m - 1 else cs)
        if j < m - 1:
            x = F.avg_pool2d(x, 2)
            y = F.avg_pool2d(y, 2)
    stack = torch.stack(terms).clamp_min(0)
    return torch.prod(stack ** weights.view(-1, 1), dim=0)


def ms_ssim(a, b, scales: int = 5) -> float:
    """Multi-scale SSIM with the canonical 5-scale weights.

    Images too small for ``scales`` dyadic levels get fewer scales (with a
    warning) and the leading weights renormalized to sum to one.  With one
    scale this is plain SSIM.
    """
    x, y = _pair(a, b)
    return float(ms_ssim_batch(x, y, scales).mean())


def psnr(a, b) -> float:
    """10*log10(1/MSE) over all elements; identical inputs give the 100 dB cap."""
    x, y = _pair(a, b)
    mse = float(torch.mean((x.to(torch.float64) - y.to(torch.float64)) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10 * math.log10(1.0 / mse))


def video_psnr(a, b) -> float:
    """Mean of per-frame PSNR over (T, H, W, 3) videos."""
    x, y = _pair(a, b)
    return float(np.mean([psnr(x[i : i + 1], y[i : i + 1]) for i in range(x.shape[0])]))


def video_ms_ssim(a, b) -> float:
    x, y = _pair(a, b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return float(ms_ssim_batch(x, y).mean())
