#!/usr/bin/env python3
"""Throughput comparison: numba kernels vs the pure-numpy fallback.

Runs the same GEMM workloads against both backends (selected per call via
XRNPE_BACKEND, which the kernel dispatcher re-reads on every use), checks
that the two produce bit-identical results, and reports MAC throughput.

    python3 benchmarks/bench_backends.py
    python3 benchmarks/bench_backends.py --sizes 64,256 --formats posit8_0
"""

import argparse
import os
import time

import numpy as np


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--sizes", default="32,64,128",
                   help="comma-separated square GEMM sizes (M=K=N)")
    p.add_argument("--formats", default="posit16_1,posit8_0,posit4_1,fp4",
                   help="comma-separated element formats")
    p.add_argument("--array", type=int, default=16, choices=(8, 16))
    p.add_argument("--repeats", type=int, default=5,
                   help="timed repetitions; the best one is reported")
    return p.parse_args()


def available_backends():
    backends = ["numpy"]
    try:
        import numba  # noqa: F401
        backends.insert(0, "numba")
    except ImportError:
        pass
    return backends


def bench_one(backend_choice, spec, size, array, repeats):
    os.environ["XRNPE_BACKEND"] = backend_choice
    from xrnpe.morph_array import ArrayConfig, gemm
    from xrnpe.simd_mac import PrecSel
    from xrnpe.tensor import Tensor

    rng = np.random.default_rng(size * 31 + spec.n)
    dtype = np.uint16 if spec.n == 16 else np.uint8
    a = Tensor(spec, rng.integers(0, 1 << spec.n, (size, size)).astype(dtype))
    b = Tensor(spec, rng.integers(0, 1 << spec.n, (size, size)).astype(dtype))
    cfg = ArrayConfig(array, array, PrecSel.for_format(spec))

    c, _ = gemm(a, b, cfg)  # warmup (JIT compile on the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        gemm(a, b, cfg)
        best = min(best, time.perf_counter() - t0)
    macs = size ** 3
    return c, best, macs / best / 1e6


def main():
    args = parse_args()
    from xrnpe.formats import FORMATS_BY_NAME

    sizes = [int(s) for s in args.sizes.split(",")]
    specs = [FORMATS_BY_NAME[f.strip()] for f in args.formats.split(",")]
    backends = available_backends()
    if len(backends) == 1:
        print("note: numba unavailable; benchmarking the numpy fallback only")

    header = f"{'format':<11} {'GEMM':<14} " + "".join(
        f"{b + ' (Mmac/s)':>16}" for b in backends) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for spec in specs:
        for size in sizes:
            rates, results = [], []
            for backend_choice in backends:
                c, best, rate = bench_one(backend_choice, spec, size,
                                          args.array, args.repeats)
                rates.append(rate)
                results.append(c)
            if len(results) == 2 and results[0] != results[1]:
                raise SystemExit(
                    f"backend results differ for {spec.name} {size}")
            speedup = (f"{rates[0] / rates[-1]:>9.1f}x"
                       if len(rates) == 2 else f"{'n/a':>10}")
            shape = f"{size}x{size}x{size}"
            print(f"{spec.name:<11} {shape:<14} "
                  + "".join(f"{r:>16,.1f}" for r in rates) + speedup)
    if len(backends) == 2:
        print("\nbit-identical results confirmed for every workload")


if __name__ == "__main__":
    main()
