import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from nerv.errors import DomainError, InvalidConfigError, ShapeError
from nerv.model import (
    NervConfig,
    build_model,
    count_params,
    forward,
    frame_time,
    pixel_shuffle,
    pixel_unshuffle,
    positional_encode,
)


def test_positional_encode_hand_values():
    np.testing.assert_allclose(positional_encode(0.5, 2, 1), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(positional_encode(1.0, 2, 2), [0, -1, 0, 1], atol=1e-14)


def test_positional_encode_default_length():
    assert positional_encode(0.3, 1.25, 80).shape == (160,)


def test_positional_encode_matches_scalar_loop():
    t, b, l = 0.37, 1.25, 80
    expected = []
    for k in range(l):
        expected += [math.sin(b**k * math.pi * t), math.cos(b**k * math.pi * t)]
    # arguments reach ~1e8 at k = 79, so float rounding order matters at ~1e-8
    np.testing.assert_allclose(positional_encode(t, b, l), expected, rtol=0, atol=1e-6)


@pytest.mark.parametrize("b, l", [(0, 4), (-1.0, 4), (1.25, 0)])
def test_positional_encode_rejects_bad_params(b, l):
    with pytest.raises(InvalidConfigError):
        positional_encode(0.5, b, l)


@given(st.floats(1e-6, 1.0), st.floats(0.1, 3.0), st.integers(1, 40))
def test_positional_encode_bounded(t, b, l):
    v = positional_encode(t, b, l)
    assert v.shape == (2 * l,)
    assert np.all(np.abs(v) <= 1.0)


def _shuffle_oracle(x, S):
    c, h, w = x.shape
    out = np.empty((c // (S * S), h * S, w * S), dtype=x.dtype)
    for ch in range(c // (S * S)):
        for i in range(h):
            for j in range(w):
                for a in range(S):
                    for d in range(S):
                        out[ch, S * i + a, S * j + d] = x[ch * S * S + a * S + d, i, j]
    return out


def test_pixel_shuffle_abcd():
    x = np.array([1, 2, 3, 4]).reshape(4, 1, 1)
    np.testing.assert_array_equal(pixel_shuffle(x, 2), [[[1, 2], [3, 4]]])


@pytest.mark.parametrize("S", [1, 2, 3])
def test_pixel_shuffle_matches_index_oracle_and_torch(S, rng):
    x = rng.standard_normal((2 * S * S, 3, 4))
    out = pixel_shuffle(x, S)
    np.testing.assert_array_equal(out, _shuffle_oracle(x, S))
    np.testing.assert_array_equal(out, torch.nn.functional.pixel_shuffle(torch.from_numpy(x)[None], S)[0].numpy())
    np.testing.assert_array_equal(pixel_unshuffle(out, S), x)
    np.testing.assert_array_equal(np.sort(out, axis=None), np.sort(x, axis=None))


def test_pixel_shuffle_identity_and_errors():
    x = np.arange(12.0).reshape(3, 2, 2)
    np.testing.assert_array_equal(pixel_shuffle(x, 1), x)
    with pytest.raises(ShapeError):
        pixel_shuffle(x, 2)


def test_frame_time_range():
    np.testing.assert_allclose(frame_time(np.arange(4), 4), [0.25, 0.5, 0.75, 1.0])
    with pytest.raises(DomainError):
        frame_time(4, 4)


def test_config_derives_stem_and_rejects_nonintegral():
    cfg = NervConfig(target_resolution=(720, 1280), upscale_factors=(5, 2, 2, 2, 2))
    assert cfg.stem_spatial == (9, 16)
    with pytest.raises(InvalidConfigError):
        NervConfig(target_resolution=(720, 1080), upscale_factors=(5, 2, 2, 2, 2))
    with pytest.raises(InvalidConfigError):
        NervConfig(target_resolution=(64, 64), upscale_factors=(2, 2), stem_spatial=(8, 8))


@pytest.mark.parametrize(
    "field, value",
    [("activation", "tanh"), ("norm", "layer"), ("upscale_mode", "nearest"), ("conv_kernel", 4), ("embed_length", 0)],
)
def test_config_validation(field, value):
    with pytest.raises(InvalidConfigError):
        NervConfig().replace(**{field: value})


def test_channel_schedule_halves():
    cfg = NervConfig(block_channels=5, upscale_factors=(2, 2, 2, 2), target_resolution=(16, 16))
    assert cfg.block_out_channels() == [5, 3, 1, 1]


def test_build_model_shapes(tiny_config):
    m = build_model(tiny_config, 0)
    sd = m.state_dict()
    assert tuple(sd["mlp.0.weight"].shape) == (16, 8)
    assert tuple(sd["mlp.2.weight"].shape) == (4 * 4 * 4, 16)
    assert tuple(sd["blocks.0.up.0.weight"].shape) == (8 * 4, 4, 3, 3)
    assert tuple(sd["blocks.1.up.0.weight"].shape) == (4 * 4, 8, 3, 3)
    assert tuple(sd["head.weight"].shape) == (3, 4, 3, 3)


def test_build_model_deterministic(tiny_config):
    a, b = build_model(tiny_config, 7).state_dict(), build_model(tiny_config, 7).state_dict()
    assert all(torch.equal(a[k], b[k]) for k in a)
    c = build_model(tiny_config, 8).state_dict()
    assert not torch.equal(a["head.weight"], c["head.weight"])


def test_count_params_conv_and_empty():
    assert count_params(torch.nn.Conv2d(64, 64, 3)) == 36928
    assert count_params({}) == 0


def _hd_config(c1, c2, hidden):
    return NervConfig(target_resolution=(720, 1280), upscale_factors=(5, 2, 2, 2, 2), stem_channels=c1, block_channels=c2, mlp_hidden=hidden)


def test_small_and_medium_sizes():
    # 720p-shaped stand-ins for the small (3.2M) and medium (6.3M) model sizes
    with torch.device("meta"):
        small = count_params(build_model(_hd_config(16, 218, 512)))
        medium = count_params(build_model(_hd_config(16, 390, 512)))
    assert abs(small / 3.2e6 - 1) < 0.05, small
    assert abs(medium / 6.3e6 - 1) < 0.05, medium


def test_forward_range_purity_and_batching(tiny_config):
    m = build_model(tiny_config, 0)
    a = forward(m, 0.5)
    assert a.shape == (16, 16, 3) and a.min() >= 0 and a.max() <= 1
    np.testing.assert_array_equal(a, forward(m, 0.5))
    ts = [0.25, 0.5, 1.0]
    batch = forward(m, ts)
    for i, t in enumerate(ts):
        np.testing.assert_allclose(batch[i], forward(m, t), atol=1e-6)
    np.testing.assert_array_equal(forward(m, [1.0, 0.25])[1], forward(m, [0.25, 1.0])[0])


@pytest.mark.parametrize("t", [0.0, -0.1, 1.5, float("nan")])
def test_forward_domain(tiny_config, t):
    with pytest.raises(DomainError):
        forward(build_model(tiny_config, 0), t)


@pytest.mark.parametrize("mode", ["pixelshuffle", "transpose_conv", "bilinear_conv"])
@pytest.mark.parametrize("norm", ["none", "batch", "instance"])
def test_variants_produce_target_resolution(tiny_config, mode, norm):
    cfg = tiny_config.replace(upscale_mode=mode, norm=norm)
    assert forward(build_model(cfg, 0), [0.5, 1.0]).shape == (2, 16, 16, 3)


def test_transpose_conv_matches_pixelshuffle_weight_count(tiny_config):
    ps = count_params(build_model(tiny_config, 0))
    tc = count_params(build_model(tiny_config.replace(upscale_mode="transpose_conv"), 0))
    # only the conv biases differ: C_out * S^2 vs C_out per block
    assert ps - tc == (8 * 4 - 8) + (4 * 4 - 4)


def test_no_embedding_variant(tiny_config):
    m = build_model(tiny_config.replace(embedding="none"), 0)
    assert m.mlp[0].in_features == 1
    assert forward(m, 0.5).shape == (16, 16, 3)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.sampled_from([2, 3]), min_size=1, max_size=3), st.integers(1, 3), st.integers(1, 3))
def test_output_resolution_property(factors, h0, w0):
    total = math.prod(factors)
    cfg = NervConfig(
        target_resolution=(h0 * total, w0 * total), upscale_factors=factors, stem_channels=2, block_channels=4, mlp_hidden=4, embed_length=2
    )
    assert forward(build_model(cfg, 0), 1.0).shape == (h0 * total, w0 * total, 3)
