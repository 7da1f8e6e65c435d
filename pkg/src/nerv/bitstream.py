"""The ``.nrv`` file format.

Little-endian throughout::

    header    magic "NRVB" | version u16
              config: H u32, W u32, frames u32, n_blocks u8, factors u8*n,
                      stem_h u16, stem_w u16, C1 u32, C2 u32, mlp_hidden u32,
                      embed_base f64, embed_length u16, embedding u8,
                      activation u8, norm u8, upscale_mode u8, conv_kernel u8
              tensor count u32
              per tensor: name_len u16, name utf-8, rank u8, dims u32*rank,
                      bit u8, scale f32, mu_min f32, symbol count u32
    codebook  entry count u32, then (symbol u16, length u8) in canonical order
    payload   bit length u64, then ceil(bits / 8) bytes, MSB-first

Version 1 quantizes with 2**bit - 1 levels: value = index * scale + mu_min.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .compression import RAW_BITS, CompressedArtifact, TensorRecord, symbols_per_element
from .errors import CorruptStreamError, InvalidConfigError, NotANervFileError, VersionError
from .huffman import MAX_CODE_LENGTH, BitPayload, HuffmanCode, huffman_decode
from .model import ACTIVATIONS, EMBEDDINGS, NORMS, UPSCALE_MODES, NervConfig

MAGIC = b"NRVB"
FORMAT_VERSION = 1
SUFFIX = ".nrv"
MAX_RANK = 8


def _header_bytes(artifact: CompressedArtifact) -> bytes:
    cfg = artifact.config
    H, W = cfg.target_resolution
    out = bytearray(MAGIC)
    out += struct.pack("<H", FORMAT_VERSION)
    out += struct.pack("<IIIB", H, W, artifact.frame_count, len(cfg.upscale_factors))
    out += bytes(cfg.upscale_factors)
    out += struct.pack("<HH", *cfg.stem_spatial)
    out += struct.pack("<III", cfg.stem_channels, cfg.block_channels, cfg.mlp_hidden)
    out += struct.pack(
        "<dHBBBBB",
        cfg.embed_base,
        cfg.embed_length,
        EMBEDDINGS.index(cfg.embedding),
        ACTIVATIONS.index(cfg.activation),
        NORMS.index(cfg.norm),
        UPSCALE_MODES.index(cfg.upscale_mode),
        cfg.conv_kernel,
    )
    out += struct.pack("<I", len(artifact.tensors))
    for rec in artifact.tensors:
        name = rec.name.encode("utf-8")
        out += struct.pack("<H", len(name)) + name
        out += struct.pack("<B", len(rec.shape)) + struct.pack(f"<{len(rec.shape)}I", *rec.shape)
        out += struct.pack("<BffI", rec.bit, rec.scale, rec.mu_min, rec.n_symbols)
    return bytes(out)


def _codebook_bytes(code: HuffmanCode) -> bytes:
    order = code.canonical_order()
    return struct.pack("<I", len(order)) + b"".join(struct.pack("<HB", s, ln) for s, ln in order)


def _payload_bytes(payload: BitPayload) -> bytes:
    return struct.pack("<Q", payload.nbits) + payload.data


def section_sizes(artifact: CompressedArtifact) -> dict[str, int]:
    """Byte size of each file section; they sum to the serialized length."""
    return {
        "header": len(_header_bytes(artifact)),
        "codebook": len(_codebook_bytes(artifact.code)),
        "payload": len(_payload_bytes(artifact.payload)),
    }


def serialize(artifact: CompressedArtifact) -> bytes:
    return _header_bytes(artifact) + _codebook_bytes(artifact.code) + _payload_bytes(artifact.payload)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptStreamError(f"stream truncated: wanted {n} bytes, {len(self.data) - self.pos} left", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _enum(table, i: int, what: str, offset: int) -> str:
    if i >= len(table):
        raise CorruptStreamError(f"invalid {what} code {i}", offset)
    return table[i]


def deserialize(data: bytes) -> CompressedArtifact:
    """Parse and structurally validate a ``.nrv`` stream (the payload stays packed)."""
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise NotANervFileError("not a NeRV file: bad magic bytes")
    r = _Reader(data)
    r.take(4)
    (version,) = r.unpack("H")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version} (this build reads {FORMAT_VERSION})")

    H, W, frames, nblocks = r.unpack("IIIB")
    factors = tuple(r.take(nblocks))
    stem = r.unpack("HH")
    c1, c2, hidden = r.unpack("III")
    at = r.pos
    base, length, emb, act, norm, mode, kernel = r.unpack("dHBBBBB")
    try:
        config = NervConfig(
            target_resolution=(H, W),
            upscale_factors=factors,
            stem_channels=c1,
            block_channels=c2,
            mlp_hidden=hidden,
            embed_base=base,
            embed_length=length,
            embedding=_enum(EMBEDDINGS, emb, "embedding", at),
            activation=_enum(ACTIVATIONS, act, "activation", at),
            norm=_enum(NORMS, norm, "norm", at),
            upscale_mode=_enum(UPSCALE_MODES, mode, "upscale mode", at),
            conv_kernel=kernel,
            stem_spatial=stem,
        )
    except InvalidConfigError as e:
        raise CorruptStreamError(f"invalid model config: {e}", at) from e
    if frames < 1:
        raise CorruptStreamError("frame count must be >= 1", at)

    (count,) = r.unpack("I")
    records = []
    for _ in range(count):
        at = r.pos
        (nlen,) = r.unpack("H")
        try:
            name = r.take(nlen).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorruptStreamError("tensor name is not valid utf-8", at) from e
        (rank,) = r.unpack("B")
        if rank > MAX_RANK:
            raise CorruptStreamError(f"tensor rank {rank} exceeds {MAX_RANK}", at)
        shape = r.unpack(f"{rank}I")
        bit, scale, mu_min, nsym = r.unpack("BffI")
        if not (1 <= bit <= 16 or bit == RAW_BITS):
            raise CorruptStreamError(f"invalid bit width {bit} for {name}", at)
        if not (math.isfinite(scale) and math.isfinite(mu_min)) or scale < 0:
            raise CorruptStreamError(f"invalid quantization parameters for {name}", at)
        if nsym != math.prod(shape) * symbols_per_element(bit):
            raise CorruptStreamError(f"symbol count {nsym} does not match shape {shape} of {name}", at)
        records.append(TensorRecord(name, tuple(shape), bit, scale, mu_min, nsym))

    at = r.pos
    (nentries,) = r.unpack("I")
    if nentries == 0 or nentries > 0x10000:
        raise CorruptStreamError(f"invalid codebook size {nentries}", at)
    lengths = {}
    for _ in range(nentries):
        sym, ln = r.unpack("HB")
        if sym in lengths:
            raise CorruptStreamError(f"duplicate codebook symbol {sym}", r.pos - 3)
        if not 1 <= ln <= MAX_CODE_LENGTH:
            raise CorruptStreamError(f"invalid code length {ln}", r.pos - 1)
        lengths[sym] = ln
    code = HuffmanCode(lengths)
    if code.kraft_sum() > 1:
        raise CorruptStreamError("codebook violates the Kraft inequality", at)
    if [s for s, _ in code.canonical_order()] != list(lengths):
        raise CorruptStreamError("codebook not in canonical order", at)

    at = r.pos
    (nbits,) = r.unpack("Q")
    remaining = len(data) - r.pos
    if nbits > 8 * remaining:
        raise CorruptStreamError(f"payload truncated: {nbits} bits declared, {remaining} bytes present", at)
    if remaining != (nbits + 7) // 8:
        raise CorruptStreamError(f"{remaining - (nbits + 7) // 8} trailing bytes after payload", r.pos)
    if sum(rec.n_symbols for rec in records) > nbits:
        raise CorruptStreamError("symbol count exceeds payload bit length", at)
    payload = BitPayload(r.take(remaining), nbits)
    return CompressedArtifact(config, frames, records, code, payload)


def decode_symbols(artifact: CompressedArtifact) -> np.ndarray:
    """Unpack the payload and check each symbol fits its tensor's bit width."""
    total = sum(rec.n_symbols for rec in artifact.tensors)
    symbols = huffman_decode(artifact.code, artifact.payload, total)
    pos = 0
    for rec in artifact.tensors:
        width = 16 if rec.bit == RAW_BITS else rec.bit
        if rec.n_symbols and int(symbols[pos : pos + rec.n_symbols].max()) >= 2**width:
            raise CorruptStreamError(f"index out of range for {rec.bit}-bit tensor {rec.name}")
        pos += rec.n_symbols
    return symbols


def write_artifact(artifact: CompressedArtifact, path) -> int:
    blob = serialize(artifact)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read_artifact(path) -> CompressedArtifact:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
