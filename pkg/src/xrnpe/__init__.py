"""xrnpe: bit-accurate mixed-precision SIMD MAC engine model.

A software model of a morphable matrix-multiply engine whose lanes run
Posit(4,1)/FP4, Posit(8,0), or Posit(16,1) elements over exact quire
accumulation, plus the layer-adaptive quantization toolkit that drives it.
"""

from xrnpe.errors import DataError, NumericContractViolation, XrnpeError
from xrnpe.formats import (
    FP4,
    POSIT4_1,
    POSIT8_0,
    POSIT16_1,
    REAL32,
    REAL64,
    DecodedNumber,
    FormatSpec,
    Kind,
    NumClass,
    decode,
    encode,
    encode_array,
    enumerate_format,
    values_array,
)
from xrnpe.morph_array import ArrayConfig, RunStats, gemm, merge_stats, traffic_model
from xrnpe.quantizer import (
    PrecisionMap,
    QuantConfig,
    SensitivityReport,
    assign_precisions,
    code_entropy,
    dequantize,
    fake_quantize,
    model_size_bytes,
    pact,
    pact_quantize,
    quantize,
    scale_k,
    sensitivity_report,
)
from xrnpe.simd_mac import PrecSel, dot, quire_width
from xrnpe.tensor import Tensor, read_xten, write_xten

__version__ = "0.1.0"

__all__ = [
    "FP4",
    "POSIT4_1",
    "POSIT8_0",
    "POSIT16_1",
    "REAL32",
    "REAL64",
    "ArrayConfig",
    "DataError",
    "DecodedNumber",
    "FormatSpec",
    "Kind",
    "NumClass",
    "NumericContractViolation",
    "PrecSel",
    "PrecisionMap",
    "QuantConfig",
    "RunStats",
    "SensitivityReport",
    "Tensor",
    "XrnpeError",
    "assign_precisions",
    "code_entropy",
    "decode",
    "dequantize",
    "dot",
    "encode",
    "encode_array",
    "enumerate_format",
    "fake_quantize",
    "gemm",
    "merge_stats",
    "model_size_bytes",
    "pact",
    "pact_quantize",
    "quantize",
    "quire_width",
    "read_xten",
    "scale_k",
    "sensitivity_report",
    "traffic_model",
    "values_array",
    "write_xten",
    "__version__",
]
