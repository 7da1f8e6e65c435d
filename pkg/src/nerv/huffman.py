"""Canonical Huffman coding over 16-bit symbol streams.

Code lengths come from a deterministic Huffman tree (ties broken by symbol,
then by node creation order); codewords are then assigned canonically in
(length, symbol) order so a codebook is fully described by its lengths.
Bits are packed MSB-first.  Packing and unpacking run in a compiled
extension when it is built, otherwise in a pure-Python twin; set
``NERV_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import heapq
import os
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _huffman_py
from .errors import CorruptStreamError, DataError

MAX_SYMBOL = 0xFFFF
MAX_CODE_LENGTH = 57  # keeps every codeword inside the 64-bit packing accumulator

try:
    if os.environ.get("NERV_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _huffman_ext as _kernels

    BACKEND = "compiled"
except ImportError:
    _kernels = _huffman_py
    BACKEND = "python"


def get_backend(name: str | None = None):
    """Kernel module by name ('compiled' / 'python'); default is the active one."""
    if name is None:
        return _kernels
    if name == "python":
        return _huffman_py
    if name == "compiled":
        from . import _huffman_ext

        return _huffman_ext
    raise ValueError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class BitPayload:
    data: bytes
    nbits: int


def code_lengths(frequencies: dict[int, int]) -> dict[int, int]:
    """Huffman code length per symbol; a lone symbol gets length 1."""
    if not frequencies:
        raise DataError("cannot build a Huffman code for an empty alphabet")
    syms = sorted(frequencies)
    if len(syms) == 1:
        return {syms[0]: 1}
    # heap entries: (weight, tiebreak, leaves under node)
    heap = [(frequencies[s], i, [s]) for i, s in enumerate(syms)]
    heapq.heapify(heap)
    depth = dict.fromkeys(syms, 0)
    counter = len(syms)
    while len(heap) > 1:
        w1, _, a = heapq.heappop(heap)
        w2, _, b = heapq.heappop(heap)
        for s in a:
            depth[s] += 1
        for s in b:
            depth[s] += 1
        heapq.heappush(heap, (w1 + w2, counter, a + b))
        counter += 1
    if max(depth.values()) > MAX_CODE_LENGTH:
        raise DataError(f"code length exceeds {MAX_CODE_LENGTH} bits")
    return depth


@dataclass(frozen=True)
class HuffmanCode:
    """Canonical codebook: ``lengths`` maps symbol -> code length."""

    lengths: dict[int, int]
    frequencies: dict[int, int] | None = field(default=None, compare=False)

    @classmethod
    def from_frequencies(cls, frequencies: dict[int, int]) -> "HuffmanCode":
        return cls(code_lengths(frequencies), dict(frequencies))

    def canonical_order(self) -> list[tuple[int, int]]:
        """(symbol, length) pairs sorted by (length, symbol)."""
        return sorted(self.lengths.items(), key=lambda kv: (kv[1], kv[0]))

    def codewords(self) -> dict[int, tuple[int, int]]:
        """symbol -> (length, codeword)."""
        out = {}
        code = 0
        prev = 0
        for sym, ln in self.canonical_order():
            code <<= ln - prev
            prev = ln
            out[sym] = (ln, code)
            code += 1
        return out

    @property
    def max_length(self) -> int:
        return max(self.lengths.values())

    def kraft_sum(self) -> Fraction:
        return sum((Fraction(1, 2**ln) for ln in self.lengths.values()), Fraction(0))

    def validate(self) -> None:
        if not self.lengths:
            raise CorruptStreamError("empty codebook")
        for s, ln in self.lengths.items():
            if not 0 <= s <= MAX_SYMBOL or not 1 <= ln <= MAX_CODE_LENGTH:
                raise CorruptStreamError(f"invalid codebook entry symbol={s} length={ln}")
        if self.kraft_sum() > 1:
            raise CorruptStreamError("codebook violates the Kraft inequality")

    def tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(codes, lengths) indexed by symbol for encoding; (counts per length, sorted symbols) for decoding."""
        size = max(self.lengths) + 1
        codes = np.zeros(size, dtype=np.uint64)
        lengths = np.zeros(size, dtype=np.uint8)
        for s, (ln, c) in self.codewords().items():
            codes[s] = c
            lengths[s] = ln
        order = self.canonical_order()
        counts = np.zeros(self.max_length + 1, dtype=np.int64)
        for _, ln in order:
            counts[ln] += 1
        sorted_syms = np.array([s for s, _ in order], dtype=np.uint32)
        return codes, lengths, counts, sorted_syms


def _as_symbols(symbols) -> np.ndarray:
    arr = np.asarray(symbols)
    if arr.size == 0:
        raise DataError("cannot Huffman-encode an empty sequence")
    if arr.dtype.kind not in "iu":
        raise DataError(f"symbols must be integers, got {arr.dtype}")
    if arr.min() < 0 or arr.max() > MAX_SYMBOL:
        raise DataError(f"symbols must lie in [0, {MAX_SYMBOL}]")
    return np.ascontiguousarray(arr.reshape(-1), dtype=np.uint32)


def encode_with(code: HuffmanCode, symbols, backend=None) -> BitPayload:
    syms = _as_symbols(symbols)
    codes, lengths, _, _ = code.tables()
    data, nbits = (backend or _kernels).encode_bits(syms, codes, lengths)
    return BitPayload(data, nbits)


def huffman_encode(symbols, backend=None) -> tuple[HuffmanCode, BitPayload]:
    syms = _as_symbols(symbols)
    values, counts = np.unique(syms, return_counts=True)
    code = HuffmanCode.from_frequencies(dict(zip(values.tolist(), counts.tolist())))
    return code, encode_with(code, syms, backend)


def huffman_decode(code: HuffmanCode, payload: BitPayload, n_symbols: int, backend=None) -> np.ndarray:
    """Recover exactly ``n_symbols`` symbols; raises CorruptStreamError on bad input."""
    code.validate()
    _, _, counts, sorted_syms = code.tables()
    buf = np.frombuffer(payload.data, dtype=np.uint8)
    out, used = (backend or _kernels).decode_bits(buf, payload.nbits, n_symbols, counts, sorted_syms)
    if used != payload.nbits:
        raise CorruptStreamError(f"{payload.nbits - used} undecoded trailing bits", used >> 3)
    return out


def fixed_width_bits(n_symbols: int, bit: int) -> int:
    return n_symbols * bit


def symbol_histogram(symbols) -> Counter:
    return Counter(np.asarray(symbols).reshape(-1).tolist())
