"""Pure-numpy GEMM kernel: exact quire accumulation in base-2^32 limbs.

Every MAC contributes sign * (sig_a*sig_b) << (scale_a+scale_b+shift_bias)
to its output element's accumulator, held as signed int64 limbs of 32 bits
each so no carry propagation is needed until the host reconstructs the
exact integer.  shift_bias makes all shifts non-negative; per-limb partial
sums stay below 2^62 for up to 2^30 accumulations, so the arithmetic is
exact end to end.

Gating statistics ride along: a MAC with a zero operand is operand-gated,
and multiplier-cell activity is nzd_a*nzd_b per MAC (nonzero 2-bit-digit
counts of the padded fraction fields), the rest of the cell grid gated.
"""

import numpy as np

_MASK32 = np.int64(0xFFFFFFFF)


def gemm_limbs(a_codes, b_codes, sign, scale, sig, nar, nzd, shift_bias, cells,
               n_limbs):
    """Accumulate A (M,K) x B (K,N) exactly; returns (limbs, nar_out, stats).

    limbs: (M, N, n_limbs) int64, element value = sum(limbs[...,q] << 32q)
    nar_out: (M, N) bool, true if any contributing operand pair had a NaR
    stats: int64 [operand_gated_macs, cells_fired, cells_gated]
    """
    m, k = a_codes.shape
    k2, n = b_codes.shape
    if k != k2:
        raise ValueError("inner dimensions differ")
    limbs = np.zeros((m, n, n_limbs), dtype=np.int64)
    nar_out = np.zeros((m, n), dtype=np.bool_)
    stats = np.zeros(3, dtype=np.int64)

    sgn_b = sign[b_codes].astype(np.int64)
    scl_b = scale[b_codes].astype(np.int64)
    sig_b = sig[b_codes]
    nar_b = nar[b_codes]
    nzd_b = nzd[b_codes].astype(np.int64)
    zero_b = (sgn_b == 0) & ~nar_b
    j_base = np.arange(n, dtype=np.int64) * n_limbs

    for i in range(m):
        ca = a_codes[i]
        sgn = sign[ca].astype(np.int64)[:, None] * sgn_b
        s = scale[ca].astype(np.int64)[:, None] + scl_b + shift_bias
        p = sig[ca][:, None] * sig_b
        live = sgn != 0
        shifted = np.where(live, p << (s & 31), 0)
        q = np.where(live, j_base[None, :] + (s >> 5), 0)
        row = limbs[i].reshape(-1)
        np.add.at(row, q[live], (shifted & _MASK32)[live] * sgn[live])
        np.add.at(row, q[live] + 1, (shifted >> 32)[live] * sgn[live])
        nar_out[i] = (nar[ca][:, None] | nar_b).any(axis=0)
        zero_a = (sign[ca] == 0) & ~nar[ca]
        stats[0] += int(np.count_nonzero(zero_a[:, None] | zero_b))
        fired = int(nzd[ca].astype(np.int64) @ nzd_b.sum(axis=1))
        stats[1] += fired
        stats[2] += k * n * cells - fired
    return limbs, nar_out, stats
