"""Pure-Python twin of the compiled bit-packing kernels; same signatures and errors."""

import numpy as np

from .errors import CorruptStreamError


def encode_bits(symbols, codes, lengths):
    symbols = np.asarray(symbols, dtype=np.uint32)
    codes = [int(c) for c in codes]
    lengths = [int(n) for n in lengths]
    out = bytearray()
    acc = 0
    filled = 0
    total = 0
    for s in symbols.tolist():
        if s >= len(lengths) or lengths[s] == 0:
            raise ValueError(f"symbol {s} has no codeword")
        ln = lengths[s]
        acc = (acc << ln) | codes[s]
        filled += ln
        total += ln
        while filled >= 8:
            filled -= 8
            out.append((acc >> filled) & 0xFF)
        acc &= (1 << filled) - 1
    if filled:
        out.append((acc << (8 - filled)) & 0xFF)
    return bytes(out), total


def decode_bits(payload, nbits, n_symbols, counts, sorted_symbols):
    data = bytes(payload)
    if nbits > len(data) * 8:
        raise CorruptStreamError("declared bit length exceeds payload", len(data))
    counts = [int(c) for c in counts]
    syms = [int(s) for s in sorted_symbols]
    maxlen = len(counts) - 1
    out = np.empty(n_symbols, dtype=np.uint32)
    bitpos = 0
    for k in range(n_symbols):
        code = first = index = 0
        ln = 1
        while True:
            if ln > maxlen:
                raise CorruptStreamError(f"invalid codeword for symbol {k}", bitpos >> 3)
            if bitpos >= nbits:
                raise CorruptStreamError(f"payload truncated after {k} of {n_symbols} symbols", bitpos >> 3)
            code |= (data[bitpos >> 3] >> (7 - (bitpos & 7))) & 1
            bitpos += 1
            cnt = counts[ln]
            if code - first < cnt:
                out[k] = syms[index + code - first]
                break
            index += cnt
            first = (first + cnt) << 1
            code <<= 1
            ln += 1
    return out, bitpos
