"""Bit-exact codecs for the engine's element formats.

Supported formats: Posit(4,1), Posit(8,0), Posit(16,1) (standard type-III
posits: sign, run-length regime, ``es`` exponent bits, hidden-one fraction),
a 4-bit E2M1 float ("fp4": 1 sign / 2 exponent / 1 mantissa, bias 1,
subnormals, no Inf/NaN, saturating at +-6), and IEEE reference reals used
for full-precision tensors and size accounting.

Every bit pattern decodes to an exact rational value (or Zero / NaR), and
``encode`` rounds an exact value to the nearest representable pattern with
ties to the even pattern.  Posits saturate at +-maxpos and never round a
nonzero value to zero (magnitudes below minpos go to +-minpos); fp4
saturates at +-6.  All scalar paths run on Python integers / ``Fraction``
so they are exact; ``encode_array`` / ``values_array`` are the vectorized
counterparts used by tensor quantization (exact as well: every
representable value and every neighbor midpoint of these formats fits a
float64 without rounding).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "Kind",
    "NumClass",
    "FormatSpec",
    "DecodedNumber",
    "POSIT4_1",
    "POSIT8_0",
    "POSIT16_1",
    "FP4",
    "REAL32",
    "REAL64",
    "FORMATS_BY_NAME",
    "decode",
    "encode",
    "enumerate_format",
    "conformance_rows",
    "values_array",
    "encode_array",
    "decode_tables",
]


class Kind(Enum):
    POSIT = "posit"
    FP4 = "fp4"
    REAL = "real"


class NumClass(Enum):
    ZERO = "zero"
    NAR = "nar"
    FINITE = "finite"


_POSIT_SIZES = {(4, 1), (8, 0), (16, 1)}


@dataclass(frozen=True)
class FormatSpec:
    """Identifies an element format and carries its derived constants."""

    kind: Kind
    n: int
    es: int = 0

    def __post_init__(self) -> None:
        if self.kind is Kind.POSIT:
            if (self.n, self.es) not in _POSIT_SIZES:
                raise ValueError(f"unsupported posit size ({self.n},{self.es})")
        elif self.kind is Kind.FP4:
            if self.n != 4 or self.es != 0:
                raise ValueError("fp4 is fixed at n=4")
        elif self.kind is Kind.REAL:
            if self.n not in (32, 64) or self.es != 0:
                raise ValueError("real formats are 32- or 64-bit")

    @property
    def name(self) -> str:
        if self.kind is Kind.POSIT:
            return f"posit{self.n}_{self.es}"
        if self.kind is Kind.FP4:
            return "fp4"
        return f"real{self.n}"

    @property
    def element_bits(self) -> int:
        return self.n

    @property
    def useed(self) -> int:
        if self.kind is not Kind.POSIT:
            raise ValueError("useed is posit-only")
        return 1 << (1 << self.es)

    @property
    def max_scale(self) -> int:
        """Largest power-of-two scale of a finite value."""
        if self.kind is Kind.POSIT:
            return (self.n - 2) << self.es
        if self.kind is Kind.FP4:
            return 2
        raise ValueError("max_scale undefined for real formats")

    @property
    def min_scale(self) -> int:
        if self.kind is Kind.POSIT:
            return -self.max_scale
        if self.kind is Kind.FP4:
            return -1
        raise ValueError("min_scale undefined for real formats")

    @property
    def max_fraction_bits(self) -> int:
        if self.kind is Kind.POSIT:
            return max(self.n - 3 - self.es, 0)
        if self.kind is Kind.FP4:
            return 1
        raise ValueError("max_fraction_bits undefined for real formats")

    @property
    def maxpos(self) -> Fraction:
        if self.kind is Kind.POSIT:
            return Fraction(1 << self.max_scale)
        if self.kind is Kind.FP4:
            return Fraction(6)
        raise ValueError("maxpos undefined for real formats")

    @property
    def minpos(self) -> Fraction:
        if self.kind is Kind.POSIT:
            return Fraction(1, 1 << self.max_scale)
        if self.kind is Kind.FP4:
            return Fraction(1, 2)
        raise ValueError("minpos undefined for real formats")

    @property
    def nar_pattern(self) -> int:
        if self.kind is not Kind.POSIT:
            raise ValueError("only posits have a NaR pattern")
        return 1 << (self.n - 1)

    def __str__(self) -> str:
        return self.name


POSIT4_1 = FormatSpec(Kind.POSIT, 4, 1)
POSIT8_0 = FormatSpec(Kind.POSIT, 8, 0)
POSIT16_1 = FormatSpec(Kind.POSIT, 16, 1)
FP4 = FormatSpec(Kind.FP4, 4)
REAL32 = FormatSpec(Kind.REAL, 32)
REAL64 = FormatSpec(Kind.REAL, 64)

FORMATS_BY_NAME = {
    f.name: f for f in (POSIT4_1, POSIT8_0, POSIT16_1, FP4, REAL32, REAL64)
}


@dataclass(frozen=True)
class DecodedNumber:
    """Unpacked value: class, sign, power-of-two scale, normalized significand.

    For a finite number the value is ``sign * 2**scale * fraction / 2**frac_bits``
    with the significand normalized so ``2**frac_bits <= fraction < 2**(frac_bits+1)``.
    Zero and NaR carry canonical zero fields.
    """

    num_class: NumClass
    sign: int = 1
    scale: int = 0
    fraction: int = 0
    frac_bits: int = 0

    def __post_init__(self) -> None:
        if self.num_class is NumClass.FINITE:
            if self.sign not in (-1, 1):
                raise ValueError("finite sign must be +-1")
            if not (1 << self.frac_bits) <= self.fraction < (2 << self.frac_bits):
                raise ValueError("finite significand must be normalized")
        elif (self.sign, self.scale, self.fraction, self.frac_bits) != (1, 0, 0, 0):
            raise ValueError("non-finite numbers carry canonical zero fields")

    @staticmethod
    def zero() -> "DecodedNumber":
        return DecodedNumber(NumClass.ZERO)

    @staticmethod
    def nar() -> "DecodedNumber":
        return DecodedNumber(NumClass.NAR)

    @property
    def value(self):
        """Exact value as a Fraction; None for NaR."""
        if self.num_class is NumClass.NAR:
            return None
        if self.num_class is NumClass.ZERO:
            return Fraction(0)
        v = Fraction(self.fraction, 1 << self.frac_bits)
        v = v * (1 << self.scale) if self.scale >= 0 else v / (1 << -self.scale)
        return v if self.sign > 0 else -v


def _floor_log2(a: Fraction) -> int:
    """Largest t with 2**t <= a, for a > 0, exactly."""
    num, den = a.numerator, a.denominator
    t = num.bit_length() - den.bit_length()
    if t >= 0:
        if num < den << t:
            t -= 1
    elif num << -t < den:
        t -= 1
    return t


# ---------------------------------------------------------------------------
# decode


def _check_bits(bits: int, spec: FormatSpec) -> int:
    if not isinstance(bits, (int, np.integer)):
        raise TypeError("bit patterns must be integers")
    bits = int(bits)
    if not 0 <= bits < (1 << spec.n):
        raise ValueError(f"pattern 0x{bits:x} does not fit {spec.name}")
    return bits


def _decode_posit(bits: int, spec: FormatSpec) -> DecodedNumber:
    n, es = spec.n, spec.es
    if bits == 0:
        return DecodedNumber.zero()
    if bits == 1 << (n - 1):
        return DecodedNumber.nar()
    sign = 1
    mag = bits
    if bits >> (n - 1):
        sign = -1
        mag = (-bits) & ((1 << n) - 1)
    # Regime: run of identical bits below the sign, m ones -> k = m-1,
    # m zeros -> k = -m; the terminating opposite bit (if present) is consumed.
    first = (mag >> (n - 2)) & 1
    m = 1
    while m < n - 1 and ((mag >> (n - 2 - m)) & 1) == first:
        m += 1
    k = m - 1 if first else -m
    rem_len = n - 2 - m if m < n - 1 else 0
    rem = mag & ((1 << rem_len) - 1)
    if rem_len >= es:
        e = rem >> (rem_len - es)
        fb = rem_len - es
        frac = rem & ((1 << fb) - 1)
    else:
        e = rem << (es - rem_len)  # truncated low exponent bits read as 0
        fb = 0
        frac = 0
    scale = (k << es) + e
    cap = spec.max_fraction_bits
    sig = ((1 << fb) | frac) << (cap - fb)
    return DecodedNumber(NumClass.FINITE, sign, scale, sig, cap)


def _decode_fp4(bits: int) -> DecodedNumber:
    sign = -1 if bits & 0x8 else 1
    exp = (bits >> 1) & 0x3
    man = bits & 0x1
    if exp == 0:
        if man == 0:
            return DecodedNumber.zero()  # -0 pattern decodes to canonical zero
        return DecodedNumber(NumClass.FINITE, sign, -1, 0b10, 1)  # subnormal 0.5
    return DecodedNumber(NumClass.FINITE, sign, exp - 1, 0b10 | man, 1)


def _decode_real(bits: int, spec: FormatSpec) -> DecodedNumber:
    if spec.n == 64:
        f = struct.unpack("<d", bits.to_bytes(8, "little"))[0]
    else:
        f = struct.unpack("<f", bits.to_bytes(4, "little"))[0]
    if f != f or f in (float("inf"), float("-inf")):
        return DecodedNumber.nar()
    if f == 0.0:
        return DecodedNumber.zero()
    x = Fraction(f)
    sign = 1 if x > 0 else -1
    a = abs(x)
    t = _floor_log2(a)
    sig = a / (1 << t) if t >= 0 else a * (1 << -t)
    fb = (sig.denominator - 1).bit_length()
    return DecodedNumber(NumClass.FINITE, sign, t, int(sig * (1 << fb)), fb)


def decode(bits: int, spec: FormatSpec) -> DecodedNumber:
    """Decode a bit pattern to its exact unpacked value.

    Every pattern of a format is valid: posit all-zeros is Zero, the posit
    sign-only pattern is NaR, everything else is finite.
    """
    bits = _check_bits(bits, spec)
    if spec.kind is Kind.POSIT:
        return _decode_posit(bits, spec)
    if spec.kind is Kind.FP4:
        return _decode_fp4(bits)
    return _decode_real(bits, spec)


# ---------------------------------------------------------------------------
# encode

_FP4_MAGNITUDES = [Fraction(0), Fraction(1, 2), Fraction(1), Fraction(3, 2),
                   Fraction(2), Fraction(3), Fraction(4), Fraction(6)]


def _encode_posit(x: Fraction, spec: FormatSpec) -> int:
    n, es = spec.n, spec.es
    mask = (1 << n) - 1
    negative = x < 0
    a = -x if negative else x
    if a >= spec.maxpos:
        u = (1 << (n - 1)) - 1
    elif a <= spec.minpos:
        u = 1  # nonzero magnitudes never round to zero
    else:
        t = _floor_log2(a)
        k = t >> es
        e = t - (k << es)
        if k >= 0:
            regime = ((1 << (k + 1)) - 1) << 1  # k+1 ones, 0 terminator
            regime_len = k + 2
        else:
            regime = 1  # -k zeros, 1 terminator
            regime_len = 1 - k
        prefix = (regime << es) | e
        prefix_len = regime_len + es
        body_len = n - 1
        # truncate the unbounded expansion: positive patterns are value-ordered,
        # so u is the largest pattern whose value <= a
        if prefix_len >= body_len:
            u = prefix >> (prefix_len - body_len)
        else:
            fb = body_len - prefix_len
            sig = a / (1 << t) if t >= 0 else a * (1 << -t)
            u = (prefix << fb) | int((sig - 1) * (1 << fb))
        # nearest by value (pattern-space midpoints are wrong once regime or
        # exponent bits are truncated); tie to the even pattern
        d = 2 * a - _decode_posit(u, spec).value - _decode_posit(u + 1, spec).value
        if d > 0 or (d == 0 and u & 1):
            u += 1
    return (-u) & mask if negative else u


def _encode_fp4(x: Fraction) -> int:
    negative = x < 0
    a = -x if negative else x
    if a >= 6:
        code = 7
    else:
        hi = 1
        while _FP4_MAGNITUDES[hi] < a:
            hi += 1
        lo = hi - 1
        d_lo = a - _FP4_MAGNITUDES[lo]
        d_hi = _FP4_MAGNITUDES[hi] - a
        if d_lo < d_hi:
            code = lo
        elif d_hi < d_lo:
            code = hi
        else:
            code = lo if lo % 2 == 0 else hi  # tie to the even code
    if code == 0:
        return 0
    return code | (8 if negative else 0)


def _coerce_exact(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        f = float(value)
        if f != f or f in (float("inf"), float("-inf")):
            raise ValueError("non-finite float; pass DecodedNumber.nar() explicitly")
        return Fraction(f)
    raise TypeError(f"cannot encode value of type {type(value).__name__}")


def encode(value, spec: FormatSpec) -> int:
    """Round an exact value to the nearest representable bit pattern.

    Accepts a DecodedNumber or an exact real (int / float / Fraction).
    Round-to-nearest, ties to the even pattern; posits saturate at +-maxpos
    and round magnitudes in (0, minpos] to +-minpos; fp4 saturates at +-6.
    """
    if isinstance(value, DecodedNumber):
        if value.num_class is NumClass.NAR:
            if spec.kind is Kind.POSIT:
                return spec.nar_pattern
            if spec.kind is Kind.REAL:
                return _encode_real_bits(float("nan"), spec)
            raise ValueError("fp4 has no NaR encoding")
        x = value.value
    else:
        x = _coerce_exact(value)
    if spec.kind is Kind.REAL:
        return _encode_real_bits(x, spec)
    if x == 0:
        return 0
    if spec.kind is Kind.POSIT:
        return _encode_posit(x, spec)
    return _encode_fp4(x)


def _encode_real_bits(x, spec: FormatSpec) -> int:
    if spec.n == 64:
        f = float(x)  # Fraction -> float is correctly rounded
        return int.from_bytes(struct.pack("<d", f), "little")
    f = np.float32(float(x))
    return int.from_bytes(struct.pack("<f", f), "little")


# ---------------------------------------------------------------------------
# enumeration / conformance


@lru_cache(maxsize=None)
def _enumerate_cached(spec: FormatSpec):
    if spec.kind is Kind.REAL:
        raise ValueError("enumeration is limited to n <= 16 element formats")
    out = []
    if spec.kind is Kind.POSIT:
        half = 1 << (spec.n - 1)
        order = [s & ((1 << spec.n) - 1) for s in range(-half, half)]
    else:
        order = range(1 << spec.n)
    for bits in order:
        out.append((bits, decode(bits, spec).value))
    return tuple(out)


def enumerate_format(spec: FormatSpec):
    """All 2**n patterns with exact values; NaR carries value None.

    Posit entries are ordered by signed two's-complement pattern (strictly
    increasing value except the leading NaR); fp4 entries are in plain
    pattern order.
    """
    return list(_enumerate_cached(spec))


def conformance_rows(spec: FormatSpec):
    """Rows for the codec conformance table (hex pattern, class, exact, float)."""
    hexw = (spec.n + 3) // 4
    rows = []
    for bits, val in enumerate_format(spec):
        d = decode(bits, spec)
        rows.append((
            f"0x{bits:0{hexw}x}",
            d.num_class.value,
            "nar" if val is None else str(val),
            "nan" if val is None else repr(float(val)),
        ))
    return rows


# ---------------------------------------------------------------------------
# vectorized tables (shared by tensors and the MAC kernels)


@lru_cache(maxsize=None)
def decode_tables(spec: FormatSpec):
    """Per-pattern decode LUTs: (is_nar, sign, scale, significand).

    sign is 0 for zero/NaR, scale is 0 there, significand 0; finite entries
    carry the significand normalized to spec.max_fraction_bits.
    """
    if spec.kind is Kind.REAL:
        raise ValueError("decode tables are limited to n <= 16 element formats")
    count = 1 << spec.n
    nar = np.zeros(count, dtype=np.bool_)
    sign = np.zeros(count, dtype=np.int8)
    scale = np.zeros(count, dtype=np.int16)
    sig = np.zeros(count, dtype=np.int64)
    for bits in range(count):
        d = decode(bits, spec)
        if d.num_class is NumClass.NAR:
            nar[bits] = True
        elif d.num_class is NumClass.FINITE:
            sign[bits] = d.sign
            scale[bits] = d.scale
            sig[bits] = d.fraction
    nar.setflags(write=False)
    sign.setflags(write=False)
    scale.setflags(write=False)
    sig.setflags(write=False)
    return nar, sign, scale, sig


@lru_cache(maxsize=None)
def values_array(spec: FormatSpec) -> np.ndarray:
    """Exact float64 value per pattern (NaR -> nan)."""
    count = 1 << spec.n
    vals = np.empty(count, dtype=np.float64)
    for bits in range(count):
        v = decode(bits, spec).value
        vals[bits] = np.nan if v is None else float(v)
    vals.setflags(write=False)
    return vals


@lru_cache(maxsize=None)
def _rounding_lattice(spec: FormatSpec):
    """(sorted finite values, parallel patterns, neighbor midpoints), float64-exact."""
    entries = [(float(v), bits) for bits, v in enumerate_format(spec) if v is not None]
    entries.sort()
    # fp4 has a redundant negative-zero pattern; keep only the canonical zero
    # so the lattice is strictly increasing
    dedup = [entries[0]]
    for e in entries[1:]:
        if e[0] != dedup[-1][0]:
            dedup.append(e)
    vals = np.array([v for v, _ in dedup], dtype=np.float64)
    pats = np.array([b for _, b in dedup], dtype=np.int64)
    mids = (vals[:-1] + vals[1:]) / 2.0  # exact: neighbors share short significands
    for a in (vals, pats, mids):
        a.setflags(write=False)
    return vals, pats, mids


def encode_array(values: np.ndarray, spec: FormatSpec) -> np.ndarray:
    """Vectorized encode of a float64 array; bit-identical to scalar encode.

    NaN maps to NaR for posits and raises for fp4; +-inf saturates for fp4
    and maps to NaR for posits.
    """
    x = np.asarray(values, dtype=np.float64)
    if spec.kind is Kind.REAL:
        if spec.n == 64:
            return x.view(np.uint64).reshape(x.shape).copy()
        return x.astype(np.float32).view(np.uint32).reshape(x.shape).copy()
    bad = ~np.isfinite(x)
    if bad.any():
        if spec.kind is Kind.FP4 and np.isnan(x[bad]).any():
            raise ValueError("fp4 cannot encode NaN")
        x = np.where(np.isnan(x), 0.0, x)  # placeholder, fixed up below
        x = np.clip(x, -1e300, 1e300)
    _, pats, mids = _rounding_lattice(spec)
    idx = np.searchsorted(mids, x, side="left")
    tie_at = np.minimum(idx, len(mids) - 1)
    tie = (idx < len(mids)) & (x == mids[tie_at]) & (pats[idx] & 1 == 1)
    idx = idx + tie
    out = pats[idx]
    if spec.kind is Kind.POSIT:
        # posits never round a nonzero value to zero
        under = (out == 0) & (x != 0)
        if under.any():
            out = np.where(under & (x > 0), 1, out)
            out = np.where(under & (x < 0), (1 << spec.n) - 1, out)
        if bad.any():
            out = np.where(bad, spec.nar_pattern, out)
    dtype = np.uint16 if spec.n == 16 else np.uint8
    return out.astype(dtype)
