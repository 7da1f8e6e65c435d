import math
import warnings

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from _oracles import ref_ms_ssim, ref_ssim
from torchmetrics.functional.image import multiscale_structural_similarity_index_measure

from nerv.errors import ShapeError
from nerv.metrics import C1, PSNR_CAP, ms_scale_count, ms_ssim, psnr, ssim, video_psnr


def _pair(rng, size=32, noise=0.1):
    a = rng.random((size, size, 3))
    b = np.clip(a + noise * rng.standard_normal(a.shape), 0, 1)
    return a, b


def torchmetrics_ms_ssim(a, b):
    x = torch.from_numpy(a.transpose(2, 0, 1)[None].copy())
    y = torch.from_numpy(b.transpose(2, 0, 1)[None].copy())
    return float(multiscale_structural_similarity_index_measure(x, y, data_range=1.0, kernel_size=11, sigma=1.5))


def test_ssim_identity_and_symmetry(rng):
    a, b = _pair(rng)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_constant_images_closed_form():
    zeros, ones = np.zeros((16, 16, 3)), np.ones((16, 16, 3))
    assert ssim(zeros, ones) == pytest.approx(C1 / (1 + C1), rel=1e-9)
    c = np.full((16, 16, 3), 0.5)
    lum = (2 * 0.5 * 0.6 + C1) / (0.25 + 0.36 + C1)
    assert ssim(c, c + 0.1) == pytest.approx(lum, rel=1e-9)


def test_ssim_matches_reference(rng):
    for size, noise in [(16, 0.05), (32, 0.2), (64, 0.5)]:
        a, b = _pair(rng, size, noise)
        assert ssim(a, b) == pytest.approx(ref_ssim(a, b), abs=1e-6)


def test_ms_ssim_matches_reference(rng):
    for noise in (0.05, 0.3):
        a, b = _pair(rng, 192, noise)
        assert ms_ssim(a, b) == pytest.approx(ref_ms_ssim(a, b), abs=1e-6)


def test_ms_ssim_reduced_scales_match_reference(rng):
    a, b = _pair(rng, 128, 0.1)
    with pytest.warns(RuntimeWarning):
        ours = ms_ssim(a, b)
    assert ours == pytest.approx(ref_ms_ssim(a, b, scales=4), abs=1e-6)


def test_ms_ssim_close_to_torchmetrics(rng):
    # torchmetrics averages its last-scale SSIM over a different border region,
    # so only approximate agreement is expected
    a, b = _pair(rng, 192, 0.1)
    assert ms_ssim(a, b) == pytest.approx(torchmetrics_ms_ssim(a, b), abs=1e-3)


def test_ms_ssim_single_scale_is_ssim(rng):
    a, b = _pair(rng, 32)
    assert ms_ssim(a, b, scales=1) == pytest.approx(ssim(a, b), abs=1e-12)
    assert ms_ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ms_ssim_reduces_scales_with_warning(rng):
    assert ms_scale_count(128, 128) == 4
    assert ms_scale_count(176, 176) == 5
    assert ms_scale_count(11, 40) == 1
    a, b = _pair(rng, 64)
    with pytest.warns(RuntimeWarning, match="too small"):
        ms_ssim(a, b)


def test_ssim_shape_errors():
    with pytest.raises(ShapeError):
        ssim(np.zeros((16, 16, 3)), np.zeros((16, 17, 3)))
    with pytest.raises(ShapeError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_psnr_examples():
    a = np.full((8, 8, 3), 0.3)
    assert psnr(a, a) == PSNR_CAP
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)
    b = a.copy()
    b[..., 0] += math.sqrt(0.03)  # MSE = 0.01 spread over one channel
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)
    with pytest.raises(ShapeError):
        psnr(a, a[:4])


def test_video_psnr_is_mean_of_frames(rng):
    a = rng.random((3, 8, 8, 3))
    b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
    assert video_psnr(a, b) == pytest.approx(np.mean([psnr(a[i], b[i]) for i in range(3)]), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (12, 12, 3), elements=st.floats(0, 1)), arrays(np.float64, (12, 12, 3), elements=st.floats(0, 1)))
def test_metric_symmetry_and_bounds(a, b):
    s = ssim(a, b)
    assert -1 - 1e-9 <= s <= 1 + 1e-9
    assert s == pytest.approx(ssim(b, a), abs=1e-12)
    assert psnr(a, b) == psnr(b, a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert ms_ssim(a, b) == pytest.approx(ms_ssim(b, a), abs=1e-12)
