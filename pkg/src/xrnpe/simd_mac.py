"""SIMD MAC lane engine: precision modes, exact quire, fused dot products.

A 16-bit MAC word holds 4 / 2 / 1 lanes depending on the precision mode
(four 4-bit elements, two Posit(8,0), or one Posit(16,1)); lane 0 sits in
the least-significant bits.  Lane products are formed by sign XOR, scale
addition, and a significand multiply routed through the composed 2-bit
multiplier grid (rmmec) on zero-padded fraction fields.  Products stream
into a quire: a fixed-point accumulator wide enough that any k_max
accumulations are exact, so a dot product is rounded exactly once at the
end.

The bulk path (dot) runs on the numpy/numba kernels with identical
semantics; the scalar Quire/LaneProduct objects are the reference
implementation and the unit under cross-test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np

from xrnpe import backend
from xrnpe.errors import NumericContractViolation
from xrnpe.formats import (
    FP4,
    POSIT4_1,
    POSIT8_0,
    POSIT16_1,
    FormatSpec,
    NumClass,
    decode,
    decode_tables,
    encode,
)
from xrnpe.rmmec import MulBlockArray

__all__ = [
    "Mode",
    "FourBitKind",
    "PrecSel",
    "LaneProduct",
    "Quire",
    "lane_multiply",
    "pack_word",
    "unpack_word",
    "quire_init",
    "quire_add",
    "quire_round",
    "dot",
    "mac_tables",
    "quire_width",
    "quire_frac_bits",
    "quire_limb_count",
]

WORD_BITS = 16


class Mode(Enum):
    X4_4BIT = "x4_4bit"
    X2_POSIT8 = "x2_posit8"
    X1_POSIT16 = "x1_posit16"


class FourBitKind(Enum):
    POSIT4 = "posit4"
    FP4 = "fp4"


@dataclass(frozen=True)
class PrecSel:
    """Precision-mode selector: lane count/width and element format."""

    mode: Mode
    four_bit_kind: FourBitKind = FourBitKind.POSIT4

    @property
    def lane_count(self) -> int:
        return {Mode.X4_4BIT: 4, Mode.X2_POSIT8: 2, Mode.X1_POSIT16: 1}[self.mode]

    @property
    def lane_width(self) -> int:
        return WORD_BITS // self.lane_count

    @property
    def element_format(self) -> FormatSpec:
        if self.mode is Mode.X2_POSIT8:
            return POSIT8_0
        if self.mode is Mode.X1_POSIT16:
            return POSIT16_1
        return FP4 if self.four_bit_kind is FourBitKind.FP4 else POSIT4_1

    @property
    def rmmec_width(self) -> int:
        return {Mode.X4_4BIT: 2, Mode.X2_POSIT8: 6, Mode.X1_POSIT16: 12}[self.mode]

    @staticmethod
    def for_format(spec: FormatSpec) -> "PrecSel":
        if spec == POSIT16_1:
            return PrecSel(Mode.X1_POSIT16)
        if spec == POSIT8_0:
            return PrecSel(Mode.X2_POSIT8)
        if spec == POSIT4_1:
            return PrecSel(Mode.X4_4BIT, FourBitKind.POSIT4)
        if spec == FP4:
            return PrecSel(Mode.X4_4BIT, FourBitKind.FP4)
        raise ValueError(f"no MAC mode for format {spec.name}")


@dataclass(frozen=True)
class LaneProduct:
    """One lane's exact product: sign, scale, significand in [1,2)."""

    num_class: NumClass
    sign: int = 1
    scale: int = 0
    significand: Fraction = Fraction(0)
    operand_gated: bool = False

    def __post_init__(self) -> None:
        if self.num_class is NumClass.FINITE and not 1 <= self.significand < 2:
            raise ValueError("finite product significand must lie in [1,2)")

    @property
    def value(self):
        if self.num_class is NumClass.NAR:
            return None
        if self.num_class is NumClass.ZERO:
            return Fraction(0)
        v = self.significand * (1 << self.scale) if self.scale >= 0 else (
            self.significand / (1 << -self.scale))
        return v if self.sign > 0 else -v


def pack_word(codes, sel: PrecSel) -> int:
    """Pack lane element codes (lane 0 first) into one 16-bit word."""
    if len(codes) != sel.lane_count:
        raise ValueError(f"expected {sel.lane_count} lane codes")
    w = sel.lane_width
    word = 0
    for lane, c in enumerate(codes):
        c = int(c)
        if not 0 <= c < (1 << w):
            raise ValueError(f"code 0x{c:x} does not fit a {w}-bit lane")
        word |= c << (lane * w)
    return word


def unpack_word(word: int, sel: PrecSel):
    """Split a 16-bit word into lane element codes, lane 0 least significant."""
    word = int(word)
    if not 0 <= word < (1 << WORD_BITS):
        raise ValueError("word must be 16-bit")
    w = sel.lane_width
    mask = (1 << w) - 1
    return tuple((word >> (lane * w)) & mask for lane in range(sel.lane_count))


def lane_multiply(word_a: int, word_b: int, sel: PrecSel, mul_array=None):
    """Multiply all lanes of two MAC words; returns one LaneProduct per lane.

    Zero operands gate the lane (Zero product, operand_gated), NaR operands
    yield NaR products.  Significands are multiplied through the composed
    2-bit grid at the mode's width on zero-padded fraction fields; hidden-bit
    cross terms are added outside the grid.  Pass a MulBlockArray to
    accumulate its gating counters across calls.
    """
    spec = sel.element_format
    if mul_array is None:
        mul_array = MulBlockArray(sel.rmmec_width)
    elif mul_array.width != sel.rmmec_width:
        raise ValueError("mul_array width does not match the precision mode")
    fb = spec.max_fraction_bits
    w = sel.rmmec_width
    pad = w - fb
    out = []
    for ca, cb in zip(unpack_word(word_a, sel), unpack_word(word_b, sel)):
        da = decode(ca, spec)
        db = decode(cb, spec)
        # zero detection gates the multiplier even when the other operand
        # is NaR; NaR still wins the product class
        gated = NumClass.ZERO in (da.num_class, db.num_class)
        if da.num_class is NumClass.NAR or db.num_class is NumClass.NAR:
            out.append(LaneProduct(NumClass.NAR, operand_gated=gated))
            continue
        if gated:
            out.append(LaneProduct(NumClass.ZERO, operand_gated=True))
            continue
        fa = da.fraction - (1 << fb)
        fbx = db.fraction - (1 << fb)
        grid = mul_array.composed_mul(fa << pad, fbx << pad)
        prod = (1 << (2 * fb)) + ((fa + fbx) << fb) + (grid >> (2 * pad))
        sig = Fraction(prod, 1 << (2 * fb))
        scale = da.scale + db.scale
        if sig >= 2:
            sig /= 2
            scale += 1
        out.append(LaneProduct(NumClass.FINITE, da.sign * db.sign, scale, sig))
    return out


# ---------------------------------------------------------------------------
# quire


def quire_frac_bits(spec: FormatSpec) -> int:
    """Fixed-point fraction position: lowest product bit the quire can hold."""
    return 2 * spec.max_fraction_bits + 2 * spec.max_scale


def quire_width(spec: FormatSpec, k_max: int) -> int:
    """Total quire bits: sign + carry headroom + full product span."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    return 1 + (k_max - 1).bit_length() + 4 * spec.max_scale \
        + 2 * spec.max_fraction_bits + 2


def quire_limb_count(spec: FormatSpec, k_max: int) -> int:
    """32-bit limb slots for the kernel accumulators (one spare for carries)."""
    return -(-quire_width(spec, k_max) // 32) + 1


@dataclass
class Quire:
    """Exact fixed-point accumulator sized for k_max accumulations."""

    format: FormatSpec
    k_max: int
    frac_bits: int
    width: int
    value: int = 0
    nar_flag: bool = False
    count: int = field(default=0, repr=False)

    @property
    def exact(self) -> Fraction:
        return Fraction(self.value, 1 << self.frac_bits)


def quire_init(spec: FormatSpec, k_max: int) -> Quire:
    """Zero quire wide enough for k_max exact product accumulations."""
    return Quire(spec, k_max, quire_frac_bits(spec), quire_width(spec, k_max))


def quire_add(q: Quire, p: LaneProduct) -> Quire:
    """Accumulate one lane product exactly (in place; returns q)."""
    if q.count >= q.k_max:
        raise NumericContractViolation(
            f"quire sized for k_max={q.k_max} accumulations, got more")
    q.count += 1
    if p.num_class is NumClass.NAR:
        q.nar_flag = True
        return q
    if p.num_class is NumClass.ZERO:
        return q
    num, den = p.significand.numerator, p.significand.denominator
    shift = p.scale + q.frac_bits - (den.bit_length() - 1)
    if shift < 0:
        raise NumericContractViolation(
            f"product scale {p.scale} underflows quire fraction position")
    q.value += p.sign * (num << shift)
    if not -(1 << (q.width - 1)) <= q.value < (1 << (q.width - 1)):
        raise NumericContractViolation(
            f"quire overflow beyond {q.width} bits after {q.count} adds")
    return q


def quire_round(q: Quire, spec: FormatSpec | None = None) -> int:
    """Terminal rounding: encode the exact quire value once."""
    spec = spec or q.format
    if q.nar_flag:
        return spec.nar_pattern
    return encode(q.exact, spec)


# ---------------------------------------------------------------------------
# bulk tables and fused dot


@lru_cache(maxsize=None)
def mac_tables(spec: FormatSpec):
    """Kernel LUTs for a format: (nar, sign, scale, sig, nzd, shift_bias, cells).

    nzd counts nonzero 2-bit digits of the zero-padded fraction field, the
    per-MAC fired-cell count of the composed multiplier grid.
    """
    sel = PrecSel.for_format(spec)
    nar, sign, scale, sig = decode_tables(spec)
    fb = spec.max_fraction_bits
    w = sel.rmmec_width
    pad = w - fb
    nzd = np.zeros(1 << spec.n, dtype=np.int8)
    for code in range(1 << spec.n):
        if sign[code] == 0:
            continue
        f = (int(sig[code]) - (1 << fb)) << pad
        nzd[code] = sum(1 for d in range(w // 2) if (f >> (2 * d)) & 3)
    nzd.setflags(write=False)
    cells = (w // 2) ** 2
    return nar, sign, scale, sig, nzd, 2 * spec.max_scale, cells


def _limbs_to_int(limbs) -> int:
    acc = 0
    for i, v in enumerate(limbs.tolist()):
        acc += v << (32 * i)
    return acc


def dot(a_codes, b_codes, sel: PrecSel, k_max: int | None = None):
    """Fused dot product of two element-code vectors; one terminal rounding.

    Returns (result_bits, stats) where stats counts MAC ops, operand-gated
    MACs, and composed-grid cell activity.  The exact sum of all lane
    products is accumulated in quire precision and rounded once.
    """
    spec = sel.element_format
    a = np.asarray(a_codes, dtype=np.uint16).reshape(1, -1)
    b = np.asarray(b_codes, dtype=np.uint16).reshape(-1, 1)
    if a.shape[1] != b.shape[0]:
        raise ValueError("dot requires equal-length vectors")
    k = a.shape[1]
    if k_max is None:
        k_max = max(k, 1)
    if k > k_max:
        raise NumericContractViolation(f"length {k} exceeds k_max {k_max}")
    if int(a.max(initial=0)) >= 1 << spec.n or int(b.max(initial=0)) >= 1 << spec.n:
        raise ValueError(f"codes do not fit {spec.name}")
    nar, sign, scale, sig, nzd, shift_bias, cells = mac_tables(spec)
    limbs, nar_out, st = backend.kernels().gemm_limbs(
        a, b, sign, scale, sig, nar, nzd, shift_bias, cells,
        quire_limb_count(spec, k_max))
    if nar_out[0, 0]:
        bits = spec.nar_pattern
    else:
        bits = encode(Fraction(_limbs_to_int(limbs[0, 0]),
                               1 << quire_frac_bits(spec)), spec)
    stats = {
        "mac_ops": k,
        "operand_gated": int(st[0]),
        "rmmec_cells_fired": int(st[1]),
        "rmmec_cells_gated": int(st[2]),
    }
    return bits, stats
