import math

import numpy as np
import pytest
import torch

from nerv.baselines import (
    PixelwiseConfig,
    build_pixelwise,
    hidden_for_params,
    normalize_coords,
    pixelwise_forward,
    render_frame,
    sampling_cost,
    train_pixelwise,
)
from nerv.errors import DomainError, InvalidConfigError
from nerv.model import count_params


def test_sampling_cost_examples():
    assert sampling_cost((132, 720, 1080), "pixel") == 102_643_200
    assert sampling_cost((132, 720, 1080), "image") == 132
    assert sampling_cost((1, 1, 1), "pixel") == sampling_cost((1, 1, 1), "image") == 1
    with pytest.raises(InvalidConfigError):
        sampling_cost((0, 2, 2), "pixel")
    with pytest.raises(InvalidConfigError):
        sampling_cost((1, 2, 2), "voxel")


@pytest.mark.parametrize("variant", ["sine_mlp", "pe_relu_mlp"])
def test_forward_range_and_determinism(variant):
    m = build_pixelwise(PixelwiseConfig(variant=variant, hidden=32), 0)
    x = (0.3, -0.2, 0.9) if variant == "sine_mlp" else (0.3, 0.2, 0.9)
    a = pixelwise_forward(m, *x)
    assert a.shape == (3,) and np.all((a >= 0) & (a <= 1))
    np.testing.assert_array_equal(a, pixelwise_forward(m, *x))


@pytest.mark.parametrize("variant, bad", [("sine_mlp", (1.5, 0, 0)), ("sine_mlp", (0, -1.01, 0)), ("pe_relu_mlp", (0.0, 0.5, 0.5)), ("pe_relu_mlp", (0.5, 0.5, 1.2))])
def test_forward_domain(variant, bad):
    m = build_pixelwise(PixelwiseConfig(variant=variant, hidden=8), 0)
    with pytest.raises(DomainError):
        pixelwise_forward(m, *bad)


def test_config_validation():
    for kwargs in ({"variant": "nerf"}, {"depth": 1}, {"hidden": 0}, {"embed_length": 0}):
        with pytest.raises(InvalidConfigError):
            PixelwiseConfig(**kwargs)


@pytest.mark.parametrize("variant", ["sine_mlp", "pe_relu_mlp"])
@pytest.mark.parametrize("depth", [2, 3, 5])
def test_hidden_for_params_is_closest(variant, depth):
    target = 50_000
    h = hidden_for_params(target, variant, depth)

    def n(width):
        return count_params(build_pixelwise(PixelwiseConfig(variant=variant, depth=depth, hidden=width)))

    assert abs(n(h) - target) <= min(abs(n(h - 1) - target), abs(n(h + 1) - target))


def test_sine_initialization_bounds():
    m = build_pixelwise(PixelwiseConfig(hidden=64, omega0=30.0), 0)
    linears = [l for l in m.net if isinstance(l, torch.nn.Linear)]
    assert linears[0].weight.abs().max() <= 1 / 3
    for lin in linears[1:]:
        assert lin.weight.abs().max() <= math.sqrt(6 / lin.in_features) / 30.0


def test_normalized_coordinates():
    c = normalize_coords([0, 3], [0, 1], [0, 4], H=2, W=4, T=5, variant="sine_mlp")
    np.testing.assert_allclose(c, [[-0.75, -0.5, -0.8], [0.75, 0.5, 0.8]])
    c = normalize_coords([0, 3], [0, 1], [0, 4], H=2, W=4, T=5, variant="pe_relu_mlp")
    np.testing.assert_allclose(c, [[0.25, 0.5, 0.2], [1.0, 1.0, 1.0]])
    assert np.all((c > 0) & (c <= 1))


@pytest.mark.parametrize("variant", ["sine_mlp", "pe_relu_mlp"])
def test_training_reduces_loss_and_renders(variant, tiny_video):
    m = build_pixelwise(PixelwiseConfig(variant=variant, hidden=32), 0, (16, 16))
    m, hist = train_pixelwise(m, tiny_video, epochs=4, batch_pixels=256, lr=1e-3)
    assert [h[0] for h in hist] == [1, 2, 3, 4]
    assert hist[-1][1] < hist[0][1]
    frame = render_frame(m, 2, 4, 16, 16)
    assert frame.shape == (16, 16, 3)
    x, y = 5, 9
    coords = normalize_coords(x, y, 2, 16, 16, 4, variant)
    np.testing.assert_allclose(frame[y, x], pixelwise_forward(m, *coords), atol=1e-6)
