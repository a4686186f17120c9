"""Composed mantissa multiplier: 2-bit cells combined into 2/6/12-bit widths.

A width-W unsigned multiply is decomposed over base-4 digits,
a*b = sum_ij mul2(a_i, b_j) * 4^(i+j), on a grid of (W/2)^2 two-bit
multiplier cells.  A cell whose digit pair contains a zero digit is
power-gated: it contributes zero and is tallied in gated_count instead of
fired_count.  Gating never changes the numeric result; the counters are
the model's dark-silicon/energy proxy.
"""

import numpy as np

__all__ = ["WIDTHS", "MulBlockArray", "composed_mul_bulk"]

WIDTHS = (2, 6, 12)


class MulBlockArray:
    """Grid of 2-bit multiplier cells with cumulative gating counters."""

    def __init__(self, width):
        if width not in WIDTHS:
            raise ValueError(f"width must be one of {WIDTHS}, got {width}")
        self.width = width
        self.digits = width // 2
        self.cells = self.digits * self.digits
        self.fired_count = 0
        self.gated_count = 0

    def reset(self):
        self.fired_count = 0
        self.gated_count = 0

    def mul2(self, a, b):
        """One 2-bit cell: exact 4-bit product, gated on a zero operand."""
        if not (0 <= a < 4 and 0 <= b < 4):
            raise ValueError("mul2 operands are 2-bit")
        if a == 0 or b == 0:
            self.gated_count += 1
            return 0
        self.fired_count += 1
        return a * b

    def composed_mul(self, a, b):
        """Exact width-bit product as the gated sum of 2-bit partials."""
        lim = 1 << self.width
        if not (0 <= a < lim and 0 <= b < lim):
            raise ValueError(f"operands must be unsigned {self.width}-bit")
        acc = 0
        for i in range(self.digits):
            da = (a >> (2 * i)) & 3
            for j in range(self.digits):
                db = (b >> (2 * j)) & 3
                acc += self.mul2(da, db) << (2 * (i + j))
        return acc

    def gating_stats(self):
        total = self.fired_count + self.gated_count
        util = self.fired_count / total if total else 0.0
        return {
            "total_cells_fired": self.fired_count,
            "gated_cells": self.gated_count,
            "utilization": util,
        }


def composed_mul_bulk(width, a, b):
    """Vectorized composed_mul over operand arrays.

    Returns (products, cells_fired, cells_gated) with the same per-cell
    gating rule as MulBlockArray, for bulk verification and statistics.
    """
    if width not in WIDTHS:
        raise ValueError(f"width must be one of {WIDTHS}, got {width}")
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError("operand arrays must have one common shape")
    if a.size and (a.min() < 0 or b.min() < 0 or
                   max(int(a.max()), int(b.max())) >= 1 << width):
        raise ValueError(f"operands must be unsigned {width}-bit")
    d = width // 2
    shifts = 2 * np.arange(d, dtype=np.int64)
    da = (a[..., None] >> shifts) & 3
    db = (b[..., None] >> shifts) & 3
    partial = da[..., :, None] * db[..., None, :]
    weight = shifts[:, None] + shifts[None, :]
    prod = (partial << weight).sum(axis=(-1, -2))
    fired = int(np.count_nonzero(partial))
    gated = a.size * d * d - fired
    return prod, fired, gated
