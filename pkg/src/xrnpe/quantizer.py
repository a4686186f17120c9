"""Layer-adaptive quantization: scaling, clipping, sensitivity, assignment.

Two quantization paths coexist:

* the integer-code path: per-layer scale k = mean(|W|) * (2^n-1)/2^(n-1),
  thresholds (W_l, W_h) aligned to the scaled weight distribution, codes
  round((clip(W/k, W_l, W_h) - W_l) * (2^n-1)/(W_h-W_l)); dequantize
  reconstructs the clipped W/k domain.
* the value-lattice path for engine formats: weights map to the nearest
  representable Posit/FP4 value (fake quantization), which is what the MAC
  array executes.

Activation clipping is PACT: pact(x, a) = 0.5(|x| - |x-a| + a) = clip(x,0,a)
with a uniform n-bit grid on [0, a].  Layer sensitivity is first-order:
s = (||Q_cur(w)-w|| - ||Q_cand(w)-w||) * ||grad|| / n_l with L2 norms, and
s_l = max(s_8, s_4).  Precision assignment walks layers by ascending s_l,
demoting to 8 bits and then to 4 bits until the parameter-weighted average
bit-width meets the budget (exact rational comparison); remaining layers
stay at Posit(16,1).  All rounding is ties-to-even.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from xrnpe.formats import (
    FP4,
    POSIT4_1,
    POSIT8_0,
    POSIT16_1,
    REAL32,
    REAL64,
    FormatSpec,
    Kind,
    encode_array,
    values_array,
)

__all__ = [
    "LayerTensor",
    "QuantConfig",
    "PrecisionMap",
    "SensitivityReport",
    "scale_k",
    "quantize",
    "dequantize",
    "code_entropy",
    "pact",
    "pact_quantize",
    "fake_quantize",
    "layer_sensitivity",
    "layer_score",
    "assign_precisions",
    "model_size_bytes",
    "SCALE_METADATA_BYTES",
]

SCALE_METADATA_BYTES = 4  # one 32-bit scale stored per layer


@dataclass
class LayerTensor:
    """One layer's weights and (optionally) its loss gradient."""

    layer_id: str
    weights: np.ndarray
    gradient: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.gradient is not None:
            self.gradient = np.asarray(self.gradient, dtype=np.float64)
            if self.gradient.shape != self.weights.shape:
                raise ValueError("gradient shape must match weights")

    @property
    def n_params(self) -> int:
        return int(self.weights.size)


@dataclass(frozen=True)
class QuantConfig:
    """Integer-code quantization parameters for one tensor."""

    n: int
    w_low: float
    w_high: float
    k: float

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("bit-width must be at least 2")
        if not self.w_low < self.w_high:
            raise ValueError("thresholds must satisfy w_low < w_high")

    @property
    def levels(self) -> int:
        return (1 << self.n) - 1

    @property
    def step(self) -> float:
        return (self.w_high - self.w_low) / self.levels

    @staticmethod
    def from_weights(weights, n: int, symmetric: bool = False) -> "QuantConfig":
        """Scale by mean magnitude; thresholds track the scaled distribution.

        Default thresholds are the 0.1/99.9 percentiles of W/k (distribution
        aligned); symmetric=True forces [-1, 1].  Degenerate distributions
        (k = 0 or a collapsed percentile range) fall back to [-1, 1].
        """
        w = np.asarray(weights, dtype=np.float64)
        k = scale_k(w, n)
        if symmetric or k == 0.0:
            return QuantConfig(n, -1.0, 1.0, k)
        scaled = w / k
        lo, hi = np.percentile(scaled, [0.1, 99.9])
        if not lo < hi:
            return QuantConfig(n, -1.0, 1.0, k)
        return QuantConfig(n, float(lo), float(hi), k)


def scale_k(weights, n: int) -> float:
    """Mean-magnitude scale: mean(|W|) * (2^n - 1) / 2^(n-1).

    A zero result marks a degenerate all-zero tensor; the caller stores
    all-zero codes instead of dividing by k.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise ValueError("cannot scale an empty tensor")
    if n < 2:
        raise ValueError("bit-width must be at least 2")
    return float(np.mean(np.abs(w)) * ((1 << n) - 1) / (1 << (n - 1)))


def quantize(weights, cfg: QuantConfig) -> np.ndarray:
    """Integer codes in [0, 2^n - 1]; rounding is ties-to-even."""
    if cfg.k <= 0:
        raise ValueError("quantize requires a positive scale k")
    w = np.asarray(weights, dtype=np.float64)
    y = np.clip(w / cfg.k, cfg.w_low, cfg.w_high)
    codes = np.rint((y - cfg.w_low) * cfg.levels / (cfg.w_high - cfg.w_low))
    return codes.astype(np.int64)


def dequantize(codes, cfg: QuantConfig) -> np.ndarray:
    """Reconstruct the clipped W/k domain from integer codes."""
    c = np.asarray(codes)
    if c.size and (c.min() < 0 or c.max() > cfg.levels):
        raise ValueError(f"codes out of range [0, {cfg.levels}]")
    return c.astype(np.float64) * (cfg.w_high - cfg.w_low) / cfg.levels + cfg.w_low


def code_entropy(codes, n: int) -> float:
    """Shannon entropy (bits/symbol) of the code histogram, as a diagnostic."""
    c = np.asarray(codes).reshape(-1)
    if c.size == 0:
        return 0.0
    counts = np.bincount(c.astype(np.int64), minlength=1 << n)
    p = counts[counts > 0] / c.size
    return float(-(p * np.log2(p)).sum())


def pact(x, alpha: float):
    """Parameterized activation clipping.

    Computes 0.5(|x| - |x - alpha| + alpha), whose closed form is
    clip(x, 0, alpha); the clip form is used so the endpoints are exact
    (the three-term form cancels catastrophically for |x| >> alpha).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=np.float64)
    out = np.clip(x, 0.0, alpha)
    return out if out.ndim else float(out)


def pact_quantize(x, alpha: float, n: int):
    """PACT then uniform n-bit quantization of [0, alpha] (ties-to-even)."""
    if n < 2:
        raise ValueError("bit-width must be at least 2")
    levels = (1 << n) - 1
    y = np.asarray(pact(x, alpha), dtype=np.float64)
    out = np.rint(y * levels / alpha) * alpha / levels
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# precision maps and sensitivity


def _four_bit_format(kind: FormatSpec | None) -> FormatSpec:
    if kind is None or kind == POSIT4_1:
        return POSIT4_1
    if kind == FP4:
        return FP4
    raise ValueError("the 4-bit candidate must be posit4_1 or fp4")


@dataclass
class PrecisionMap:
    """Per-layer weight and activation format assignment."""

    weights: dict[str, FormatSpec] = field(default_factory=dict)
    activations: dict[str, FormatSpec] = field(default_factory=dict)

    def set(self, layer_id: str, spec: FormatSpec, act: FormatSpec | None = None):
        self.weights[layer_id] = spec
        self.activations[layer_id] = act if act is not None else spec

    def weight_format(self, layer_id: str) -> FormatSpec:
        return self.weights[layer_id]

    def activation_format(self, layer_id: str) -> FormatSpec:
        return self.activations[layer_id]

    @staticmethod
    def uniform(layer_ids, spec: FormatSpec) -> "PrecisionMap":
        pm = PrecisionMap()
        for lid in layer_ids:
            pm.set(lid, spec)
        return pm

    def validate_complete(self, layer_ids) -> None:
        missing = [l for l in layer_ids if l not in self.weights]
        if missing:
            raise ValueError(f"precision map misses layers: {missing}")

    def as_dict(self) -> dict:
        return {
            "weights": {k: v.name for k, v in sorted(self.weights.items())},
            "activations": {k: v.name for k, v in sorted(self.activations.items())},
        }

    @staticmethod
    def from_dict(d: dict) -> "PrecisionMap":
        from xrnpe.formats import FORMATS_BY_NAME

        pm = PrecisionMap()
        for lid, name in d["weights"].items():
            act = d.get("activations", {}).get(lid, name)
            pm.set(lid, FORMATS_BY_NAME[name], FORMATS_BY_NAME[act])
        return pm


def fake_quantize(weights, spec: FormatSpec) -> np.ndarray:
    """Round-trip through the format's value lattice (identity for reals)."""
    w = np.asarray(weights, dtype=np.float64)
    if spec.kind is Kind.REAL:
        return w.astype(np.float32).astype(np.float64) if spec.n == 32 else w.copy()
    return values_array(spec)[encode_array(w, spec)].reshape(w.shape)


def layer_sensitivity(layer: LayerTensor, current: FormatSpec,
                      candidate_bits: int,
                      four_bit: FormatSpec | None = None) -> float:
    """First-order demotion score for re-quantizing one layer.

    s = (||Q_cur(w) - w||_2 - ||Q_cand(w) - w||_2) * ||grad||_2 / n_l, so a
    candidate with larger quantization error scores lower (more negative).
    """
    if layer.gradient is None:
        raise ValueError(f"layer {layer.layer_id} has no gradient; "
                         "compute gradients before sensitivity analysis")
    if candidate_bits == 8:
        cand = POSIT8_0
    elif candidate_bits == 4:
        cand = _four_bit_format(four_bit)
    else:
        raise ValueError("candidate_bits must be 4 or 8")
    w = layer.weights
    err_cur = float(np.linalg.norm(fake_quantize(w, current) - w))
    err_cand = float(np.linalg.norm(fake_quantize(w, cand) - w))
    grad_norm = float(np.linalg.norm(layer.gradient))
    return (err_cur - err_cand) * grad_norm / layer.n_params


def layer_score(s8: float, s4: float) -> float:
    """Combined layer score: the larger of the two candidate sensitivities."""
    return max(s8, s4)


@dataclass
class SensitivityReport:
    """Per-layer candidate sensitivities and the demotion ranking."""

    s8: dict[str, float]
    s4: dict[str, float]

    @property
    def scores(self) -> dict[str, float]:
        return {lid: layer_score(self.s8[lid], self.s4[lid]) for lid in self.s8}

    @property
    def ranking(self) -> list[str]:
        return [lid for lid, _ in sorted(self.scores.items(),
                                         key=lambda kv: (kv[1], kv[0]))]

    def as_dict(self) -> dict:
        return {
            "s8": {k: self.s8[k] for k in sorted(self.s8)},
            "s4": {k: self.s4[k] for k in sorted(self.s4)},
            "score": {k: v for k, v in sorted(self.scores.items())},
            "ranking": self.ranking,
        }


def sensitivity_report(layers, current: PrecisionMap,
                       four_bit: FormatSpec | None = None) -> SensitivityReport:
    """Eq-style sensitivities for every layer against 8- and 4-bit demotion."""
    s8, s4 = {}, {}
    for layer in layers:
        cur = current.weight_format(layer.layer_id)
        s8[layer.layer_id] = layer_sensitivity(layer, cur, 8)
        s4[layer.layer_id] = layer_sensitivity(layer, cur, 4, four_bit)
    return SensitivityReport(s8, s4)


def _as_fraction(budget) -> Fraction:
    if isinstance(budget, str):
        return Fraction(budget)
    if isinstance(budget, float):
        return Fraction(budget).limit_denominator(10**9)
    return Fraction(budget)


def assign_precisions(layer_params: dict[str, int], scores: dict[str, float],
                      budget, four_bit: FormatSpec | None = None) -> PrecisionMap:
    """Greedy demotion to meet a parameter-weighted average bit budget.

    Layers walk in ascending score order (ties by layer id): a first pass
    demotes Posit(16,1) layers to Posit(8,0), a second demotes those to the
    4-bit format, stopping as soon as the exact average bit-width is at or
    below the budget.  budget=16 keeps everything at Posit(16,1); budget=4
    ends fully 4-bit.  Budgets below 4 bits are infeasible.
    """
    if set(layer_params) != set(scores):
        raise ValueError("scores must cover exactly the model's layers")
    budget = _as_fraction(budget)
    if budget < 4:
        raise ValueError(f"budget {budget} is infeasible (minimum 4 bits/param)")
    if budget > 16:
        raise ValueError(f"budget {budget} exceeds the widest engine format")
    total = sum(layer_params.values())
    if total == 0:
        raise ValueError("model has no parameters")
    four = _four_bit_format(four_bit)
    order = sorted(layer_params, key=lambda lid: (scores[lid], lid))
    bits = {lid: 16 for lid in layer_params}
    weighted = 16 * total

    def satisfied():
        return Fraction(weighted, total) <= budget

    for target in (8, 4):
        if satisfied():
            break
        for lid in order:
            if satisfied():
                break
            weighted -= (bits[lid] - target) * layer_params[lid]
            bits[lid] = target
    pm = PrecisionMap()
    fmt = {16: POSIT16_1, 8: POSIT8_0, 4: four}
    for lid in layer_params:
        pm.set(lid, fmt[bits[lid]])
    return pm


_SIZE_BITS = {REAL64: 64, REAL32: 32, POSIT16_1: 16, POSIT8_0: 8,
              POSIT4_1: 4, FP4: 4}


def model_size_bytes(layer_params: dict[str, int], pmap: PrecisionMap) -> dict:
    """Exact storage: weight payload plus one 32-bit scale per layer."""
    pmap.validate_complete(layer_params)
    weight_bits = 0
    for lid, n in layer_params.items():
        spec = pmap.weight_format(lid)
        if spec not in _SIZE_BITS:
            raise ValueError(f"no storage width for format {spec.name}")
        weight_bits += n * _SIZE_BITS[spec]
    weight_bytes = Fraction(weight_bits, 8)
    meta = SCALE_METADATA_BYTES * len(layer_params)
    avg_bits = Fraction(weight_bits, sum(layer_params.values()))
    return {
        "weight_bytes": weight_bytes,
        "metadata_bytes": meta,
        "total_bytes": weight_bytes + meta,
        "avg_bits_per_param": avg_bits,
    }
