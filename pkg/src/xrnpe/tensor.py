"""Tensors of format bit patterns and the XTEN binary container.

A Tensor pairs a FormatSpec with an ndarray of element bit patterns
(uint8/uint16 for the 4/8/16-bit formats, uint64 for real64).  XTEN is the
on-disk container:

    magic  "XTEN"            4 bytes
    version u16 LE           currently 1
    dtype   u8               0=real64 1=posit16_1 2=posit8_0 3=posit4_1 4=fp4
    rank    u8
    dims    rank x u32 LE
    payload element bits packed little-endian; 4-bit elements two per
            byte, low nibble first; final pad nibble is zero

Parse-then-serialize is byte-identical for every valid container.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from xrnpe.errors import DataError
from xrnpe.formats import (
    FP4,
    POSIT4_1,
    POSIT8_0,
    POSIT16_1,
    REAL64,
    FormatSpec,
    Kind,
    encode_array,
    values_array,
)

__all__ = ["Tensor", "DTYPE_CODES", "dumps", "loads", "write_xten", "read_xten"]

XTEN_MAGIC = b"XTEN"
XTEN_VERSION = 1

DTYPE_CODES = {
    REAL64: 0,
    POSIT16_1: 1,
    POSIT8_0: 2,
    POSIT4_1: 3,
    FP4: 4,
}
_SPEC_BY_CODE = {v: k for k, v in DTYPE_CODES.items()}

_ARRAY_DTYPES = {
    REAL64: np.uint64,
    POSIT16_1: np.uint16,
    POSIT8_0: np.uint8,
    POSIT4_1: np.uint8,
    FP4: np.uint8,
}


@dataclass(frozen=True)
class Tensor:
    """An ndarray of bit patterns in one element format."""

    spec: FormatSpec
    codes: np.ndarray

    def __post_init__(self) -> None:
        if self.spec not in DTYPE_CODES:
            raise DataError(f"unsupported tensor format {self.spec.name}")
        want = _ARRAY_DTYPES[self.spec]
        codes = np.ascontiguousarray(self.codes, dtype=want)
        if self.spec.n < 8 and codes.size and int(codes.max()) >= 1 << self.spec.n:
            raise DataError(f"codes exceed {self.spec.n}-bit patterns")
        object.__setattr__(self, "codes", codes)

    @property
    def shape(self):
        return self.codes.shape

    @property
    def size(self) -> int:
        return int(self.codes.size)

    @staticmethod
    def from_values(values, spec: FormatSpec) -> "Tensor":
        """Encode real values into the format (vectorized exact rounding)."""
        return Tensor(spec, encode_array(np.asarray(values, dtype=np.float64), spec))

    def values(self) -> np.ndarray:
        """Decode to float64 (exact for element formats; NaR becomes nan)."""
        if self.spec.kind is Kind.REAL:
            return self.codes.view(np.float64).reshape(self.shape).copy()
        return values_array(self.spec)[self.codes]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Tensor) and self.spec == other.spec
                and self.shape == other.shape
                and bool(np.array_equal(self.codes, other.codes)))

    __hash__ = None  # array payload; tensors are not hashable


def _payload_nbytes(spec: FormatSpec, count: int) -> int:
    return (count * spec.n + 7) // 8


def dumps(t: Tensor) -> bytes:
    """Serialize a tensor to XTEN bytes."""
    if t.codes.ndim > 255:
        raise DataError("rank exceeds container limit")
    head = XTEN_MAGIC + struct.pack("<HBB", XTEN_VERSION, DTYPE_CODES[t.spec],
                                    t.codes.ndim)
    head += b"".join(struct.pack("<I", d) for d in t.shape)
    flat = t.codes.reshape(-1)
    if t.spec.n == 4:
        if flat.size % 2:
            flat = np.concatenate([flat, np.zeros(1, np.uint8)])
        payload = (flat[0::2] | (flat[1::2] << 4)).astype(np.uint8).tobytes()
    else:
        payload = flat.astype(flat.dtype.newbyteorder("<")).tobytes()
    return head + payload


def loads(raw: bytes) -> Tensor:
    """Parse XTEN bytes; raises DataError on any malformation."""
    if len(raw) < 8:
        raise DataError("container shorter than the fixed header")
    if raw[:4] != XTEN_MAGIC:
        raise DataError("bad magic; not an XTEN container")
    version, dtype_code, rank = struct.unpack("<HBB", raw[4:8])
    if version != XTEN_VERSION:
        raise DataError(f"unsupported XTEN version {version}")
    if dtype_code not in _SPEC_BY_CODE:
        raise DataError(f"unknown dtype code {dtype_code}")
    spec = _SPEC_BY_CODE[dtype_code]
    off = 8 + 4 * rank
    if len(raw) < off:
        raise DataError("truncated dimension list")
    dims = struct.unpack("<" + "I" * rank, raw[8:off])
    count = 1
    for d in dims:
        count *= d
    want = _payload_nbytes(spec, count)
    payload = raw[off:]
    if len(payload) < want:
        raise DataError(f"payload truncated: {len(payload)} < {want} bytes")
    if len(payload) > want:
        raise DataError(f"{len(payload) - want} trailing bytes after payload")
    if spec.n == 4:
        packed = np.frombuffer(payload, dtype=np.uint8)
        flat = np.empty(packed.size * 2, dtype=np.uint8)
        flat[0::2] = packed & 0xF
        flat[1::2] = packed >> 4
        if count % 2 and flat.size and flat[count]:
            raise DataError("nonzero pad nibble")
        flat = flat[:count]
    else:
        dt = np.dtype(_ARRAY_DTYPES[spec]).newbyteorder("<")
        flat = np.frombuffer(payload, dtype=dt).astype(_ARRAY_DTYPES[spec])
    try:
        return Tensor(spec, flat.reshape(dims))
    except DataError:
        raise
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def write_xten(path, t: Tensor) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(t))


def read_xten(path) -> Tensor:
    with open(path, "rb") as fh:
        return loads(fh.read())
