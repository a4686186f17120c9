"""Morphable GEMM array model: tiled MAC scheduling, stats, traffic.

The array is rows x cols (8x8 or 16x16) of MAC units in output-stationary
dataflow: each unit owns one output element per tile pass and accumulates
its full K-length dot product in a private quire, so every C element is
rounded exactly once.  In the 4-bit SIMD mode one MAC word-stream carries
4 independent output columns (2 in Posit(8,0) mode), which divides the
tile-step count, not the numeric result.

The traffic model is the deliberately naive no-reuse form: A is streamed
ceil(N/cols) times, B ceil(M/rows) times, C written once, all at the
element bit-width, so byte counts are linear in the format width.  Cycle
counts are tile-steps (one per K element per tile) ignoring fill/drain.
Byte counts are exact rationals; reports carry both the exact string and
a float approximation.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from xrnpe import backend
from xrnpe.errors import DataError, NumericContractViolation
from xrnpe.formats import encode, encode_array
from xrnpe.simd_mac import (
    PrecSel,
    mac_tables,
    quire_frac_bits,
    quire_limb_count,
)
from xrnpe.tensor import Tensor

__all__ = ["ArrayConfig", "RunStats", "gemm", "traffic_model", "report"]

_ARRAY_SIZES = (8, 16)


@dataclass(frozen=True)
class ArrayConfig:
    """Square MAC array (8x8 or 16x16) in one precision mode."""

    rows: int
    cols: int
    sel: PrecSel
    k_max: int | None = None

    def __post_init__(self) -> None:
        if self.rows != self.cols:
            raise ValueError("the array is square: rows must equal cols")
        if self.rows not in _ARRAY_SIZES:
            raise ValueError(f"array size must be one of {_ARRAY_SIZES}")
        if self.k_max is not None and self.k_max < 1:
            raise ValueError("k_max must be at least 1 when given")


@dataclass(frozen=True)
class RunStats:
    """Counters for one GEMM run; byte counts are exact rationals."""

    mac_ops: int
    operand_gated: int
    rmmec_cells_fired: int
    rmmec_cells_gated: int
    bytes_read: Fraction
    bytes_written: Fraction
    cycles: int

    @property
    def effective_ops_per_byte(self) -> Fraction:
        total = self.bytes_read + self.bytes_written
        return Fraction(2 * self.mac_ops) / total if total else Fraction(0)

    def as_dict(self) -> dict:
        return {
            "mac_ops": self.mac_ops,
            "operand_gated": self.operand_gated,
            "rmmec_cells_fired": self.rmmec_cells_fired,
            "rmmec_cells_gated": self.rmmec_cells_gated,
            "bytes_read": float(self.bytes_read),
            "bytes_read_exact": str(self.bytes_read),
            "bytes_written": float(self.bytes_written),
            "bytes_written_exact": str(self.bytes_written),
            "cycles": self.cycles,
            "effective_ops_per_byte": float(self.effective_ops_per_byte),
            "effective_ops_per_byte_exact": str(self.effective_ops_per_byte),
        }


def merge_stats(runs) -> RunStats:
    """Aggregate counters over several GEMM dispatches (e.g. one per layer)."""
    runs = list(runs)
    return RunStats(
        mac_ops=sum(r.mac_ops for r in runs),
        operand_gated=sum(r.operand_gated for r in runs),
        rmmec_cells_fired=sum(r.rmmec_cells_fired for r in runs),
        rmmec_cells_gated=sum(r.rmmec_cells_gated for r in runs),
        bytes_read=sum((r.bytes_read for r in runs), Fraction(0)),
        bytes_written=sum((r.bytes_written for r in runs), Fraction(0)),
        cycles=sum(r.cycles for r in runs),
    )


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def traffic_model(m: int, k: int, n: int, cfg: ArrayConfig) -> dict:
    """Closed-form no-reuse byte counts for an MxKxN GEMM."""
    if min(m, k, n) < 1:
        raise ValueError("dimensions must be positive")
    bits = cfg.sel.element_format.n
    a_passes = _ceil_div(n, cfg.cols)
    b_passes = _ceil_div(m, cfg.rows)
    bytes_read = Fraction((m * k * a_passes + k * n * b_passes) * bits, 8)
    bytes_written = Fraction(m * n * bits, 8)
    return {"bytes_read": bytes_read, "bytes_written": bytes_written}


def _cycles(m: int, k: int, n: int, cfg: ArrayConfig) -> int:
    lanes = cfg.sel.lane_count
    return _ceil_div(m, cfg.rows) * _ceil_div(n, cfg.cols * lanes) * k


def gemm(a: Tensor, b: Tensor, cfg: ArrayConfig):
    """C = A @ B with per-element fused rounding; returns (C, RunStats)."""
    spec = cfg.sel.element_format
    if a.spec != spec or b.spec != spec:
        raise DataError(
            f"operand formats ({a.spec.name}, {b.spec.name}) do not match "
            f"the array mode ({spec.name})")
    if a.codes.ndim != 2 or b.codes.ndim != 2:
        raise DataError("gemm operands must be rank-2 tensors")
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise DataError(f"inner dimensions differ: {k} vs {k2}")
    k_max = cfg.k_max if cfg.k_max is not None else max(k, 1)
    if k > k_max:
        raise NumericContractViolation(
            f"K={k} exceeds the configured k_max={k_max} per accumulation pass")
    nar, sign, scale, sig, nzd, shift_bias, cells = mac_tables(spec)
    limbs, nar_out, st = backend.kernels().gemm_limbs(
        a.codes.astype(np.uint16), b.codes.astype(np.uint16),
        sign, scale, sig, nar, nzd, shift_bias, cells,
        quire_limb_count(spec, k_max))
    c_codes = _round_outputs(limbs, nar_out, spec)
    traffic = traffic_model(m, k, n, cfg) if min(m, k, n) else {
        "bytes_read": Fraction(0), "bytes_written": Fraction(0)}
    stats = RunStats(
        mac_ops=m * n * k,
        operand_gated=int(st[0]),
        rmmec_cells_fired=int(st[1]),
        rmmec_cells_gated=int(st[2]),
        bytes_read=traffic["bytes_read"],
        bytes_written=traffic["bytes_written"],
        cycles=_cycles(m, k, n, cfg) if min(m, k, n) else 0,
    )
    return Tensor(spec, c_codes), stats


def _round_outputs(limbs, nar_out, spec):
    """Terminal rounding of every output quire, exactly once each.

    Quire integers that fit a float64 exactly (|v| < 2^53) go through the
    vectorized encoder; the rare huge ones take the exact scalar path.
    """
    m, n, nl = limbs.shape
    frac_bits = quire_frac_bits(spec)
    weights = [1 << (32 * q) for q in range(nl)]
    vals = np.zeros((m, n), dtype=np.float64)
    slow = []
    flat = limbs.reshape(m * n, nl).tolist()
    for idx, row in enumerate(flat):
        v = 0
        for w, limb in zip(weights, row):
            v += limb * w
        if -(1 << 53) < v < (1 << 53):
            vals[idx // n, idx % n] = v
        else:
            slow.append((idx, v))
    vals /= float(2 ** frac_bits) if frac_bits < 1024 else 2.0 ** frac_bits
    codes = encode_array(vals, spec)
    for idx, v in slow:
        codes[idx // n, idx % n] = encode(Fraction(v, 1 << frac_bits), spec)
    if nar_out.any():
        codes[nar_out] = spec.nar_pattern
    return codes


def report(stats: RunStats, fmt: str = "json") -> str:
    """Serialize RunStats as a JSON object or a two-line CSV table."""
    d = stats.as_dict()
    if fmt == "json":
        return json.dumps(d, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(d.keys())
        writer.writerow(d.values())
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")
