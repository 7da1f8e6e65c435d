import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nerv.compression import (
    compress_model,
    dequantize_tensor,
    finetune,
    huffman_gain,
    index_symbols,
    prunable_names,
    prune_count,
    prune_global,
    quantize_tensor,
    sparsity,
    symbols_to_indices,
    bpp,
)
from nerv.errors import DataError, InvalidConfigError
from nerv.model import build_model
from nerv.training import TrainConfig


def test_prune_hand_example():
    pruned, mask = prune_global({"w": torch.tensor([[0.5, -0.05, 0.2, -0.9]])}, 0.5)
    assert torch.equal(pruned["w"], torch.tensor([[0.5, 0.0, 0.0, -0.9]]))
    assert mask.n_pruned == 2 and mask.n_prunable == 4


def test_prune_skips_rank_one_tensors():
    state = {"b": torch.tensor([1e-9, 2e-9]), "w": torch.tensor([[1.0, 2.0], [3.0, 4.0]])}
    pruned, mask = prune_global(state, 0.5)
    assert torch.equal(pruned["b"], state["b"])
    assert pruned["w"].tolist() == [[0.0, 0.0], [3.0, 4.0]]
    assert prunable_names(state) == ["w"]


def test_prune_ties_are_deterministic():
    state = {"b.w": torch.ones(2, 3), "a.w": torch.ones(3, 2)}
    pruned, mask = prune_global(state, 0.5)
    # equal magnitudes: tensor name order, then flat index
    assert pruned["a.w"].sum() == 0 and pruned["b.w"].sum() == 6
    assert mask.n_pruned == 6


@pytest.mark.parametrize("q, n, expected", [(0.2, 10, 2), (0.29, 100, 29), (0.5, 3, 1), (0.0, 7, 0), (0.999, 1000, 999)])
def test_prune_count(q, n, expected):
    assert prune_count(q, n) == expected


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 0.99), st.integers(0, 2**31 - 1))
def test_prune_zero_count_exact_and_idempotent(q, seed):
    gen = torch.Generator().manual_seed(seed)
    state = {"x": torch.randn(7, 5, generator=gen), "y": torch.randn(3, 3, 2, generator=gen), "z": torch.randn(4, generator=gen)}
    pruned, mask = prune_global(state, q)
    n = 35 + 18
    assert mask.n_pruned == math.floor(round(q * n, 9))
    assert sum(int((pruned[k] == 0).sum()) for k in ("x", "y")) == mask.n_pruned
    again, _ = prune_global(pruned, q)
    assert all(torch.equal(pruned[k], again[k]) for k in state)
    kept = torch.cat([pruned[k][mask.masks[k]].abs() for k in ("x", "y")])
    dropped = torch.cat([state[k][~mask.masks[k]].abs() for k in ("x", "y")])
    if len(kept) and len(dropped):
        assert dropped.max() <= kept.min()


def test_prune_validation_and_identity(tiny_config):
    model = build_model(tiny_config, 0)
    same, mask = prune_global(model, 0.0)
    assert all(torch.equal(a, b) for a, b in zip(model.state_dict().values(), same.state_dict().values()))
    assert all(bool(m.all()) for m in mask.masks.values())
    for q in (1.0, -0.1):
        with pytest.raises(InvalidConfigError):
            prune_global(model, q)


def test_finetune_preserves_sparsity(tiny_config, tiny_video):
    pruned, mask = prune_global(build_model(tiny_config, 0), 0.4)
    before = sparsity(pruned)
    tuned = finetune(pruned, mask, tiny_video, TrainConfig(base_lr=1e-2), epochs=3)
    assert sparsity(tuned) == before
    assert before == pytest.approx(mask.n_pruned / mask.n_prunable)


def test_quantize_hand_example():
    qt = quantize_tensor(np.array([-1.0, 0.0, 1.0]), 1)
    assert qt.scale == 2.0 and qt.mu_min == -1.0
    assert qt.indices.tolist() == [0, 1, 1]
    assert dequantize_tensor(qt).tolist() == [-1.0, 1.0, 1.0]


def test_quantize_constant_tensor():
    x = np.full((3, 4), -0.3, dtype=np.float32)
    qt = quantize_tensor(x, 8)
    assert qt.scale == 0.0 and not qt.indices.any()
    np.testing.assert_array_equal(dequantize_tensor(qt), x.astype(np.float64))


def test_quantize_errors():
    with pytest.raises(DataError):
        quantize_tensor(np.array([0.0, np.inf]), 8)
    for bit in (0, 17, 31):
        with pytest.raises(InvalidConfigError):
            quantize_tensor(np.zeros(3), bit)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float32, st.integers(1, 64), elements=st.floats(-1e3, 1e3, width=32)), st.integers(1, 16))
def test_quantization_error_bound(x, bit):
    qt = quantize_tensor(x, bit)
    assert qt.indices.max() <= 2**bit - 1
    err = np.abs(x.astype(np.float64) - dequantize_tensor(qt))
    assert np.all(err <= qt.scale / 2)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, 20, elements=st.floats(-5, 5, width=32)), st.integers(1, 4))
def test_quantization_picks_nearest_level(x, bit):
    qt = quantize_tensor(x, bit)
    if qt.scale == 0:
        return
    levels = np.arange(2**bit) * qt.scale + qt.mu_min
    dist = np.abs(x.astype(np.float64)[:, None] - levels[None, :])
    chosen = dist[np.arange(len(x)), qt.indices.astype(int)]
    assert np.all(chosen <= dist.min(axis=1) + 1e-12 * qt.scale)


def test_bypass_is_lossless(rng):
    x = rng.standard_normal((5, 7)).astype(np.float32)
    qt = quantize_tensor(x, 32)
    np.testing.assert_array_equal(dequantize_tensor(qt).astype(np.float32), x)
    syms = index_symbols(qt)
    assert syms.size == 70 and syms.max() <= 0xFFFF
    np.testing.assert_array_equal(symbols_to_indices(syms, 32), qt.indices.reshape(-1))


def test_bpp_examples():
    assert bpp(0, (3, 4, 5)) == 0.0
    assert bpp(8 * 2**20, (132, 720, 1080)) == pytest.approx(0.0817, abs=5e-5)
    with pytest.raises(InvalidConfigError):
        bpp(10, (0, 1, 1))


def test_compress_stage_sizes_decrease(tiny_config, tiny_video):
    model = build_model(tiny_config, 0)
    art = compress_model(model, 0.3, 8, video=tiny_video, train_cfg=TrainConfig(), finetune_epochs=1)
    s = art.stages
    assert s["raw_fp32"] > s["pruned_nonzero_fp32"]
    assert s["raw_fp32"] > s["quantized_fixed"] > s["huffman_payload"]
    assert s["quantized_fixed"] == 8 * sum(p.numel() for p in model.parameters())
    gain = huffman_gain(art)
    assert 0 < gain["vs_fixed_width"] < gain["vs_fp32"] < 1


def test_compress_leaves_input_untouched(tiny_config):
    model = build_model(tiny_config, 0)
    before = {k: v.clone() for k, v in model.state_dict().items()}
    compress_model(model, 0.5, 4, (4, 16, 16), finetune_epochs=0)
    assert all(torch.equal(before[k], v) for k, v in model.state_dict().items())


def test_prune_with_finetune_needs_video(tiny_config):
    with pytest.raises(InvalidConfigError):
        compress_model(build_model(tiny_config, 0), 0.2, 8, (4, 16, 16))
