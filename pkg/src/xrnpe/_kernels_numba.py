"""Numba GEMM kernel; bit-identical to the numpy fallback.

Same limb-accumulation contract as _kernels_numpy (see its docstring).
Rows are distributed over threads; every output element has a single
writer and the statistics are integer sums, so results are independent
of the thread count.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def _gemm_limbs_jit(a_codes, b_codes, sign, scale, sig, nar, nzd, shift_bias,
                    cells, limbs, nar_out, row_stats):
    m, k = a_codes.shape
    n = b_codes.shape[1]
    for i in prange(m):
        gated_ops = 0
        fired = 0
        for j in range(n):
            for t in range(k):
                ca = a_codes[i, t]
                cb = b_codes[t, j]
                if nar[ca] or nar[cb]:
                    nar_out[i, j] = True
                sa = sign[ca]
                sb = sign[cb]
                if sa == 0 or sb == 0:
                    if (sa == 0 and not nar[ca]) or (sb == 0 and not nar[cb]):
                        gated_ops += 1
                    fired += nzd[ca] * nzd[cb]
                    continue
                fired += nzd[ca] * nzd[cb]
                s = np.int64(scale[ca]) + np.int64(scale[cb]) + shift_bias
                p = sig[ca] * sig[cb]
                sgn = np.int64(sa) * np.int64(sb)
                shifted = p << (s & 31)
                q = s >> 5
                limbs[i, j, q] += sgn * (shifted & 0xFFFFFFFF)
                limbs[i, j, q + 1] += sgn * (shifted >> 32)
        row_stats[i, 0] = gated_ops
        row_stats[i, 1] = fired
        row_stats[i, 2] = n * k * cells - fired


def gemm_limbs(a_codes, b_codes, sign, scale, sig, nar, nzd, shift_bias, cells,
               n_limbs):
    """Accumulate A (M,K) x B (K,N) exactly; returns (limbs, nar_out, stats)."""
    m, k = a_codes.shape
    k2, n = b_codes.shape
    if k != k2:
        raise ValueError("inner dimensions differ")
    limbs = np.zeros((m, n, n_limbs), dtype=np.int64)
    nar_out = np.zeros((m, n), dtype=np.bool_)
    row_stats = np.zeros((m, 3), dtype=np.int64)
    _gemm_limbs_jit(
        np.ascontiguousarray(a_codes, dtype=np.uint16),
        np.ascontiguousarray(b_codes, dtype=np.uint16),
        sign, scale, sig, nar, nzd.astype(np.int64),
        np.int64(shift_bias), np.int64(cells), limbs, nar_out, row_stats,
    )
    return limbs, nar_out, row_stats.sum(axis=0)
