import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nerv import huffman
from nerv.errors import CorruptStreamError, DataError
from nerv.huffman import BitPayload, HuffmanCode, code_lengths, encode_with, huffman_decode, huffman_encode


def _available():
    names = ["python"]
    try:
        huffman.get_backend("compiled")
        names.append("compiled")
    except ImportError:
        pass
    return names


BACKENDS = _available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return huffman.get_backend(request.param)


def brute_force_cost(freqs):
    """Minimum sum(f * len) over all length assignments satisfying Kraft."""
    n = len(freqs)
    best = None
    for lens in itertools.product(range(1, n), repeat=n):
        if sum(2.0**-ln for ln in lens) <= 1:
            cost = sum(f * ln for f, ln in zip(freqs, lens))
            best = cost if best is None else min(best, cost)
    return best


def test_hand_example(backend):
    code, payload = huffman_encode([0, 0, 0, 0, 1, 2], backend)
    assert code.lengths == {0: 1, 1: 2, 2: 2}
    assert payload.nbits == 8
    assert payload.data == bytes([0b00001011])
    np.testing.assert_array_equal(huffman_decode(code, payload, 6, backend), [0, 0, 0, 0, 1, 2])


def test_single_symbol_gets_one_bit(backend):
    code, payload = huffman_encode([7] * 13, backend)
    assert code.lengths == {7: 1} and payload.nbits == 13
    np.testing.assert_array_equal(huffman_decode(code, payload, 13, backend), [7] * 13)


def test_empty_and_out_of_range_inputs():
    with pytest.raises(DataError):
        huffman_encode([])
    with pytest.raises(DataError):
        huffman_encode([70000])
    with pytest.raises(DataError):
        huffman_encode([1.5])
    with pytest.raises(DataError):
        code_lengths({})


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=2, max_size=5))
def test_code_lengths_are_optimal(freqs):
    lengths = code_lengths(dict(enumerate(freqs)))
    assert sum(f * lengths[i] for i, f in enumerate(freqs)) == brute_force_cost(freqs)


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.integers(0, 0xFFFF), st.integers(1, 10**6), min_size=1, max_size=60))
def test_code_is_prefix_free_and_canonical(freqs):
    code = HuffmanCode.from_frequencies(freqs)
    assert code.kraft_sum() <= 1
    words = [format(c, f"0{ln}b") for ln, c in code.codewords().values()]
    for a, b in itertools.permutations(words, 2):
        assert not b.startswith(a)
    order = code.canonical_order()
    assert order == sorted(order, key=lambda kv: (kv[1], kv[0]))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 0xFFFF), min_size=1, max_size=400))
def test_roundtrip_and_backends_agree(symbols):
    payloads = []
    for name in BACKENDS:
        b = huffman.get_backend(name)
        code, payload = huffman_encode(symbols, b)
        np.testing.assert_array_equal(huffman_decode(code, payload, len(symbols), b), symbols)
        assert payload.nbits <= len(symbols) * code.max_length
        assert len(payload.data) == (payload.nbits + 7) // 8
        payloads.append(payload)
    assert all(p == payloads[0] for p in payloads)


def test_skewed_stream_beats_fixed_width(rng):
    symbols = np.where(rng.random(5000) < 0.8, 0, rng.integers(0, 256, 5000))
    _, payload = huffman_encode(symbols)
    assert payload.nbits < 8 * len(symbols)


def test_truncated_payload(backend):
    code, payload = huffman_encode(np.arange(40) % 5, backend)
    short = BitPayload(payload.data[:-2], payload.nbits - 16)
    with pytest.raises(CorruptStreamError, match="truncated"):
        huffman_decode(code, short, 40, backend)


def test_declared_length_beyond_data(backend):
    code, payload = huffman_encode([0, 1, 1, 0], backend)
    with pytest.raises(CorruptStreamError):
        huffman_decode(code, BitPayload(payload.data, payload.nbits + 64), 4, backend)


def test_invalid_codeword(backend):
    # incomplete code: 00, 01, 10 are assigned; 11 is not
    code = HuffmanCode({0: 2, 1: 2, 2: 2})
    with pytest.raises(CorruptStreamError, match="invalid codeword"):
        huffman_decode(code, BitPayload(bytes([0b11000000]), 2), 1, backend)


def test_trailing_bits_rejected(backend):
    code, payload = huffman_encode([0, 0, 1], backend)
    with pytest.raises(CorruptStreamError, match="trailing"):
        huffman_decode(code, payload, 2, backend)


def test_encode_rejects_unknown_symbol():
    code = HuffmanCode({0: 1, 1: 1})
    with pytest.raises((ValueError, IndexError)):
        encode_with(code, [2])


def test_kraft_violation_rejected():
    with pytest.raises(CorruptStreamError):
        huffman_decode(HuffmanCode({0: 1, 1: 1, 2: 1}), BitPayload(b"\x00", 1), 1)
