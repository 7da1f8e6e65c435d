# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled bit-packing kernels for canonical Huffman streams (MSB-first)."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint32_t, uint64_t, int64_t

from nerv.errors import CorruptStreamError

cnp.import_array()


def encode_bits(const uint32_t[::1] symbols, const uint64_t[::1] codes, const uint8_t[::1] lengths):
    cdef Py_ssize_t n = symbols.shape[0]
    cdef Py_ssize_t i
    cdef uint64_t total = 0
    cdef uint32_t s
    for i in range(n):
        s = symbols[i]
        if s >= <uint32_t>lengths.shape[0] or lengths[s] == 0:
            raise ValueError(f"symbol {s} has no codeword")
        total += lengths[s]
    out = np.zeros((total + 7) // 8, dtype=np.uint8)
    cdef uint8_t[::1] buf = out
    cdef uint64_t acc = 0
    cdef int filled = 0
    cdef Py_ssize_t pos = 0
    cdef int ln
    with nogil:
        for i in range(n):
            s = symbols[i]
            ln = lengths[s]
            acc = (acc << ln) | codes[s]
            filled += ln
            while filled >= 8:
                filled -= 8
                buf[pos] = <uint8_t>((acc >> filled) & 0xFF)
                pos += 1
            acc &= (<uint64_t>1 << filled) - 1
        if filled:
            buf[pos] = <uint8_t>((acc << (8 - filled)) & 0xFF)
    return out.tobytes(), int(total)


def decode_bits(const uint8_t[::1] payload, uint64_t nbits, Py_ssize_t n_symbols,
                const int64_t[::1] counts, const uint32_t[::1] sorted_symbols):
    if nbits > <uint64_t>payload.shape[0] * 8:
        raise CorruptStreamError("declared bit length exceeds payload", payload.shape[0])
    out = np.empty(n_symbols, dtype=np.uint32)
    cdef uint32_t[::1] res = out
    cdef Py_ssize_t maxlen = counts.shape[0] - 1
    cdef uint64_t bitpos = 0
    cdef Py_ssize_t k = 0
    cdef int64_t code, first, index, cnt
    cdef Py_ssize_t ln
    cdef int status = 0
    with nogil:
        while k < n_symbols:
            code = 0
            first = 0
            index = 0
            ln = 1
            while True:
                if ln > maxlen:
                    status = 1
                    break
                if bitpos >= nbits:
                    status = 2
                    break
                code |= (payload[bitpos >> 3] >> (7 - (bitpos & 7))) & 1
                bitpos += 1
                cnt = counts[ln]
                if code - first < cnt:
                    res[k] = sorted_symbols[index + code - first]
                    break
                index += cnt
                first += cnt
                first <<= 1
                code <<= 1
                ln += 1
            if status:
                break
            k += 1
    if status == 1:
        raise CorruptStreamError(f"invalid codeword for symbol {k}", bitpos >> 3)
    if status == 2:
        raise CorruptStreamError(f"payload truncated after {k} of {n_symbols} symbols", bitpos >> 3)
    return out, int(bitpos)
