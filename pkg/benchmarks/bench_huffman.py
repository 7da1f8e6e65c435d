"""Huffman bit-packing throughput: compiled extension vs pure-Python fallback.

    python3 benchmarks/bench_huffman.py [--symbols 300000] [--repeats 3]

Streams mimic 8-bit quantized weights (roughly Gaussian indices around 128).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from nerv.huffman import HuffmanCode, encode_with, get_backend, huffman_decode, symbol_histogram


def _best(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--symbols", type=int, default=300_000)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    syms = np.clip(np.rint(rng.normal(128, 20, args.symbols)), 0, 255).astype(np.uint16)
    code = HuffmanCode.from_frequencies(dict(symbol_histogram(syms)))
    backends = {}
    for name in ("python", "compiled"):
        try:
            backends[name] = get_backend(name)
        except ImportError:
            print(f"{name:9s} unavailable")

    payloads = {}
    print(f"{'backend':9s} {'encode MB/s':>12s} {'decode MB/s':>12s}   ({args.symbols} symbols)")
    for name, kernels in backends.items():
        payload = encode_with(code, syms, kernels)
        payloads[name] = payload
        decoded = huffman_decode(code, payload, len(syms), kernels)
        assert np.array_equal(decoded, syms)
        mb = len(syms) * 2 / 1e6
        enc = _best(lambda: encode_with(code, syms, kernels), args.repeats)
        dec = _best(lambda: huffman_decode(code, payload, len(syms), kernels), args.repeats)
        print(f"{name:9s} {mb / enc:12.2f} {mb / dec:12.2f}")
    if len(payloads) == 2:
        assert payloads["python"] == payloads["compiled"], "backends disagree"
        print("payloads identical across backends")


if __name__ == "__main__":
    main()
