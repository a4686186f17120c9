"""Desk-scale neural network evaluation on the mixed-precision engine.

A small float64 reference stack (dense and im2col convolution layers, ReLU
and PACT activations, cross-entropy or MSE loss, plain SGD) with two extra
execution paths:

* quantization-aware training: weights and layer inputs are round-tripped
  through the assigned format's value lattice during the forward pass
  (with per-tensor max-magnitude scaling), and gradients pass through the
  rounding as identity (straight-through estimator);
* quantized inference: every layer GEMM runs bit-accurately on the MAC
  array model in the layer's assigned format, with activations re-encoded
  between layers, and returns aggregated hardware counters.

Scaling convention: before encoding, a tensor is multiplied by a
power-of-two scale chosen per tensor (per output channel for weights) to
minimize lattice reconstruction error, anchored so the max magnitude lands
near the format's calibration point; the product is rescaled by
1/(s_a * s_w) after the GEMM.  Power-of-two scales make the rescaling
shift-only and exactly invertible in float64.  Biases and the rescaling
stay outside the array datapath.  Weight and activation formats must agree
per layer, since the array multiplies same-format operands.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from xrnpe.errors import DataError, NumericContractViolation
from xrnpe.formats import (
    FormatSpec,
    Kind,
    encode_array,
    values_array,
)
from xrnpe.morph_array import ArrayConfig, RunStats, gemm, merge_stats
from xrnpe.quantizer import PrecisionMap, pact
from xrnpe.simd_mac import PrecSel
from xrnpe.tensor import Tensor

__all__ = [
    "Dense",
    "Conv",
    "Flatten",
    "Network",
    "train_sgd",
    "qat_train",
    "forward_quantized",
    "evaluate",
    "finite_diff_check",
    "fake_quant_scaled",
    "calibration_point",
    "synth_clusters",
    "save_csv",
    "load_csv",
]


# ---------------------------------------------------------------------------
# scaled lattice fake quantization

_CALIBRATION = {
    "posit16_1": 8.0,
    "posit8_0": 8.0,
    "posit4_1": 4.0,
    "fp4": 6.0,
}


def calibration_point(spec: FormatSpec) -> float:
    """Anchor max magnitude after scaling, per format."""
    return _CALIBRATION[spec.name]


# octave offsets searched around the anchor exponent for minimum squared
# reconstruction error (outlier-robust, deterministic).  Scales are exact
# powers of two: rescaling is shift-only, and v * s / s round-trips exactly
# in float64, so the float mirror of the datapath matches the array bit for
# bit.
_EXP_OFFSETS = range(-3, 6)


def _lattice_trip(a: np.ndarray, spec: FormatSpec, s) -> np.ndarray:
    """Encode a * s on the lattice and map back; s may broadcast over a."""
    lattice = values_array(spec)
    scaled = a * s
    return lattice[encode_array(scaled, spec)].reshape(scaled.shape) / s


def _anchor_exponent(amax: float, spec: FormatSpec) -> int:
    return int(np.round(np.log2(calibration_point(spec) / amax)))


def _scale_for(a: np.ndarray, spec: FormatSpec) -> float:
    """Power-of-two scale minimizing lattice reconstruction error of a * s.

    The anchor exponent maps max magnitude near the format's calibration
    point; nearby octaves are searched for the least sum of squared errors.
    """
    amax = float(np.max(np.abs(a))) if a.size else 0.0
    if amax == 0.0 or not np.isfinite(amax):
        return 1.0
    anchor = _anchor_exponent(amax, spec)
    best_s, best_err = None, None
    for off in _EXP_OFFSETS:
        s = 2.0 ** (anchor + off)
        err = float(np.sum((_lattice_trip(a, spec, s) - a) ** 2))
        if best_err is None or err < best_err:
            best_s, best_err = s, err
    return best_s


def fake_quant_scaled(a: np.ndarray, spec: FormatSpec) -> np.ndarray:
    """Scaled round trip through the format lattice (identity for reals)."""
    if spec.kind is Kind.REAL:
        return a
    return _lattice_trip(a, spec, _scale_for(a, spec))


def _fq_pair(a: np.ndarray, spec: FormatSpec):
    """(lattice round trip, scale); identity with scale 1 for reals."""
    if spec.kind is Kind.REAL:
        return a, 1.0
    s = _scale_for(a, spec)
    return _lattice_trip(a, spec, s), s


def _channel_scales(w: np.ndarray, spec: FormatSpec) -> np.ndarray:
    """Per-output-channel scales for a (out, fan_in) weight matrix.

    Each output channel accumulates in its own column of the array, so its
    readout can carry an independent dequantization scale; per-channel
    search sharply reduces 4-bit weight error.
    """
    amax = np.max(np.abs(w), axis=1)
    safe = np.where(amax > 0, amax, 1.0)
    anchor = np.round(np.log2(calibration_point(spec) / safe))
    base = np.where(amax > 0, 2.0 ** anchor, 1.0)
    best_s = base.copy()
    best_err = np.full(w.shape[0], np.inf)
    for off in _EXP_OFFSETS:
        s = base * 2.0 ** off
        err = ((_lattice_trip(w, spec, s[:, None]) - w) ** 2).sum(axis=1)
        better = err < best_err
        best_s[better] = s[better]
        best_err[better] = err[better]
    best_s[amax == 0] = 1.0
    return best_s


def _fq_weights(w: np.ndarray, spec: FormatSpec):
    """(per-channel lattice round trip, per-channel scale vector)."""
    if spec.kind is Kind.REAL:
        return w, np.ones(w.shape[0])
    s = _channel_scales(w, spec)
    return _lattice_trip(w, spec, s[:, None]), s


# ---------------------------------------------------------------------------
# layers


def _he_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)


@dataclass
class Dense:
    """Fully connected layer: y = act(x @ W.T + b)."""

    in_dim: int
    out_dim: int
    activation: str | None = None
    name: str = ""
    alpha: float = 6.0
    W: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)

    def init_params(self, rng: np.random.Generator) -> None:
        self.W = _he_init(rng, self.in_dim, (self.out_dim, self.in_dim))
        self.b = np.zeros(self.out_dim)

    def forward(self, x, in_spec: FormatSpec | None = None):
        w = self.W
        if in_spec is not None and in_spec.kind is not Kind.REAL:
            # mirror the array: encode input and weights, multiply, and
            # round the accumulated output once on the same lattice
            x, s_a = _fq_pair(x, in_spec)
            w, s_w = _fq_weights(w, in_spec)
            z = _lattice_trip(x @ w.T, in_spec, s_a * s_w[None, :]) + self.b
        else:
            z = x @ w.T + self.b
        return _activate(z, self.activation, self.alpha), (x, z, w)

    def backward(self, dy, cache):
        x, z, w = cache
        dz, dalpha = _activation_grad(dy, z, self.activation, self.alpha)
        grads = {"W": dz.T @ x, "b": dz.sum(axis=0)}
        if dalpha is not None:
            grads["alpha"] = dalpha
        return dz @ w, grads


@dataclass
class Conv:
    """2D convolution (valid padding) realized as an im2col GEMM."""

    in_ch: int
    out_ch: int
    ksize: int
    stride: int = 1
    activation: str | None = None
    name: str = ""
    alpha: float = 6.0
    W: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)

    def init_params(self, rng: np.random.Generator) -> None:
        fan_in = self.in_ch * self.ksize * self.ksize
        self.W = _he_init(rng, fan_in, (self.out_ch, fan_in))
        self.b = np.zeros(self.out_ch)

    def _cols(self, x):
        n, c, h, w = x.shape
        k, st = self.ksize, self.stride
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        win = win[:, :, ::st, ::st]  # (n, c, oh, ow, k, k)
        oh, ow = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
        return cols, oh, ow

    def forward(self, x, in_spec: FormatSpec | None = None):
        w = self.W
        cols, oh, ow = self._cols(x)
        if in_spec is not None and in_spec.kind is not Kind.REAL:
            # quantize the unrolled patch matrix (the operand the array sees)
            cols, s_a = _fq_pair(cols, in_spec)
            w, s_w = _fq_weights(w, in_spec)
            z2 = _lattice_trip(cols @ w.T, in_spec, s_a * s_w[None, :]) + self.b
        else:
            z2 = cols @ w.T + self.b
        n = x.shape[0]
        z = z2.reshape(n, oh, ow, self.out_ch).transpose(0, 3, 1, 2)
        return _activate(z, self.activation, self.alpha), (x, cols, z, w)

    def backward(self, dy, cache):
        x, cols, z, w = cache
        dz, dalpha = _activation_grad(dy, z, self.activation, self.alpha)
        n, oc, oh, ow = dz.shape
        dz2 = dz.transpose(0, 2, 3, 1).reshape(n * oh * ow, oc)
        grads = {"W": dz2.T @ cols, "b": dz2.sum(axis=0)}
        if dalpha is not None:
            grads["alpha"] = dalpha
        dcols = dz2 @ w
        dx = self._col2im(dcols, x.shape, oh, ow)
        return dx, grads

    def _col2im(self, dcols, xshape, oh, ow):
        n, c, h, w = xshape
        k, st = self.ksize, self.stride
        dwin = dcols.reshape(n, oh, ow, c, k, k)
        dx = np.zeros(xshape)
        for ki in range(k):
            for kj in range(k):
                dx[:, :, ki:ki + oh * st:st, kj:kj + ow * st:st] += (
                    dwin[:, :, :, :, ki, kj].transpose(0, 3, 1, 2))
        return dx


@dataclass
class Flatten:
    """Reshape (N, C, H, W) feature maps to (N, C*H*W) vectors."""

    name: str = ""

    def forward(self, x, in_spec: FormatSpec | None = None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}


def _activate(z, activation, alpha):
    if activation is None:
        return z
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "pact":
        return pact(z, alpha)
    raise ValueError(f"unknown activation {activation!r}")


def _activation_grad(dy, z, activation, alpha):
    if activation is None:
        return dy, None
    if activation == "relu":
        return dy * (z > 0), None
    if activation == "pact":
        dz = dy * ((z > 0) & (z < alpha))
        dalpha = float(dy[z >= alpha].sum())
        return dz, dalpha
    raise ValueError(f"unknown activation {activation!r}")


# ---------------------------------------------------------------------------
# network


def _is_trainable(layer) -> bool:
    return isinstance(layer, (Dense, Conv))


def _layer_spec(pmap: PrecisionMap | None, layer) -> FormatSpec | None:
    """The element format a layer runs in, or None for the reference path."""
    if pmap is None or not _is_trainable(layer):
        return None
    wspec = pmap.weight_format(layer.name)
    aspec = pmap.activation_format(layer.name)
    if aspec != wspec:
        raise DataError(
            f"layer {layer.name}: the array multiplies same-format operands, "
            f"got weights {wspec.name} vs activations {aspec.name}")
    return wspec


class Network:
    """An ordered layer stack with a cross-entropy or MSE head."""

    def __init__(self, layers, loss: str = "xent"):
        if loss not in ("xent", "mse"):
            raise ValueError("loss must be 'xent' or 'mse'")
        self.layers = list(layers)
        self.loss = loss
        for i, layer in enumerate(self.layers):
            if not layer.name:
                layer.name = f"l{i}"
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate layer names: {names}")

    def init_params(self, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            if _is_trainable(layer):
                layer.init_params(rng)

    def trainable(self):
        return [l for l in self.layers if _is_trainable(l)]

    @property
    def layer_params(self) -> dict[str, int]:
        return {l.name: l.W.size for l in self.trainable()}

    def forward(self, x, act_quant: PrecisionMap | None = None):
        for layer in self.layers:
            x, _ = layer.forward(x, _layer_spec(act_quant, layer))
        return x

    def loss_value(self, out, targets) -> float:
        if self.loss == "xent":
            m = out.max(axis=1, keepdims=True)
            lse = m + np.log(np.exp(out - m).sum(axis=1, keepdims=True))
            return float(np.mean(lse[:, 0] - out[np.arange(len(targets)), targets]))
        diff = out - targets
        return float(np.mean(diff * diff))

    def _loss_grad(self, out, targets):
        if self.loss == "xent":
            m = out.max(axis=1, keepdims=True)
            p = np.exp(out - m)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(len(targets)), targets] -= 1.0
            return p / len(targets)
        return 2.0 * (out - targets) / out.size

    def loss_and_grads(self, x, targets, act_quant: PrecisionMap | None = None):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, _layer_spec(act_quant, layer))
            caches.append(cache)
        loss = self.loss_value(x, targets)
        dy = self._loss_grad(x, targets)
        grads = {}
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy, g = layer.backward(dy, cache)
            if g:
                grads[layer.name] = g
        return loss, grads


# ---------------------------------------------------------------------------
# training


def _sgd_step(net: Network, grads: dict, lr: float) -> None:
    for layer in net.trainable():
        g = grads.get(layer.name)
        if g is None:
            continue
        layer.W -= lr * g["W"]
        layer.b -= lr * g["b"]
        if "alpha" in g:
            layer.alpha = max(1e-3, layer.alpha - lr * g["alpha"])


def _run_epochs(net, x, y, epochs, lr, batch_size, seed, pmap):
    n = len(x)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            xb, yb = x[idx], y[idx]
            loss, grads = net.loss_and_grads(xb, yb, act_quant=pmap)
            if not np.isfinite(loss):
                raise NumericContractViolation(
                    f"training diverged: loss={loss} at epoch {epoch}, "
                    f"batch starting at sample {start}")
            _sgd_step(net, grads, lr)
            losses.append(loss)
        history.append({"epoch": epoch, "loss": float(np.mean(losses))})
    return history


def train_sgd(net: Network, x, y, epochs: int, lr: float,
              batch_size: int = 32, seed: int = 0):
    """Plain minibatch SGD at full precision; returns per-epoch mean losses."""
    return _run_epochs(net, x, y, epochs, lr, batch_size, seed, None)


def qat_train(net: Network, x, y, pmap: PrecisionMap, epochs: int, lr: float,
              batch_size: int = 32, seed: int = 0):
    """Quantization-aware fine-tuning against a precision map."""
    pmap.validate_complete(net.layer_params)
    return _run_epochs(net, x, y, epochs, lr, batch_size, seed, pmap)


# ---------------------------------------------------------------------------
# quantized inference on the MAC array


def _engine_matmul(a: np.ndarray, w: np.ndarray, spec: FormatSpec, rows: int):
    """a @ w.T on the array; returns (float64 result, RunStats).

    The activation matrix carries one scale; each weight column (output
    channel) carries its own, applied at readout of its quire column.
    """
    sel = PrecSel.for_format(spec)
    cfg = ArrayConfig(rows, rows, sel)
    s_a = _scale_for(a, spec)
    s_w = _channel_scales(w, spec)
    at = Tensor(spec, encode_array(a * s_a, spec))
    wt = Tensor(spec, encode_array(w.T * s_w[None, :], spec))
    ct, stats = gemm(at, wt, cfg)
    return ct.values() / (s_a * s_w[None, :]), stats


def forward_quantized(net: Network, x, pmap: PrecisionMap, rows: int = 8):
    """Bit-accurate inference; every trainable layer's GEMM runs on the array."""
    pmap.validate_complete(net.layer_params)
    runs = []
    for layer in net.layers:
        spec = _layer_spec(pmap, layer)
        if spec is None or spec.kind is Kind.REAL:
            x, _ = layer.forward(x)
            continue
        if isinstance(layer, Dense):
            c, stats = _engine_matmul(x, layer.W, spec, rows)
            z = c + layer.b
        else:
            cols, oh, ow = layer._cols(x)
            c, stats = _engine_matmul(cols, layer.W, spec, rows)
            z = (c + layer.b).reshape(x.shape[0], oh, ow, layer.out_ch)
            z = z.transpose(0, 3, 1, 2)
        runs.append(stats)
        x = _activate(z, layer.activation, layer.alpha)
    return x, merge_stats(runs)


def evaluate(net: Network, x, y, pmap: PrecisionMap | None = None,
             rows: int = 8):
    """Loss (plus accuracy for classifiers) on the chosen execution path."""
    stats: RunStats | None = None
    if pmap is None:
        out = net.forward(x)
    else:
        out, stats = forward_quantized(net, x, pmap, rows)
    result = {"loss": net.loss_value(out, y)}
    if net.loss == "xent":
        result["accuracy"] = float(np.mean(out.argmax(axis=1) == y))
    if stats is not None:
        result["stats"] = stats
    return result


# ---------------------------------------------------------------------------
# gradient verification


def finite_diff_check(net: Network, x, y, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    _, grads = net.loss_and_grads(x, y)

    def loss_at():
        return net.loss_value(net.forward(x), y)

    worst = 0.0
    for layer in net.trainable():
        params = {"W": layer.W, "b": layer.b}
        if layer.activation == "pact":
            params["alpha"] = None
        for key in params:
            if key == "alpha":
                old = layer.alpha
                layer.alpha = old + eps
                up = loss_at()
                layer.alpha = old - eps
                down = loss_at()
                layer.alpha = old
                num = (up - down) / (2 * eps)
                ana = grads[layer.name]["alpha"]
                worst = max(worst, abs(ana - num) / max(1.0, abs(ana), abs(num)))
                continue
            arr = params[key]
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                ix = it.multi_index
                old = arr[ix]
                arr[ix] = old + eps
                up = loss_at()
                arr[ix] = old - eps
                down = loss_at()
                arr[ix] = old
                num = (up - down) / (2 * eps)
                ana = grads[layer.name][key][ix]
                worst = max(worst, abs(ana - num) / max(1.0, abs(ana), abs(num)))
    return worst


# ---------------------------------------------------------------------------
# datasets


def synth_clusters(n: int, dim: int, classes: int, sep: float, seed: int):
    """Balanced isotropic Gaussian clusters with centers sep apart from 0."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, (classes, dim))
    centers *= sep / np.linalg.norm(centers, axis=1, keepdims=True)
    y = rng.permutation(np.arange(n) % classes)
    x = centers[y] + rng.normal(0.0, 1.0, (n, dim))
    return x, y.astype(np.int64)


def save_csv(path, x, y) -> None:
    """Feature columns f0..f{d-1} plus an integer `label` column."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    header = ",".join([f"f{i}" for i in range(x.shape[1])] + ["label"])
    body = np.column_stack([x, y.astype(np.float64)])
    np.savetxt(path, body, delimiter=",", header=header, comments="",
               fmt="%.17g")


def load_csv(path):
    """Read a dataset saved by save_csv; the label column is found by name."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise DataError(f"{path}: empty dataset file")
        names = [c.strip() for c in header.split(",")]
        if "label" not in names:
            raise DataError(f"{path}: no `label` column in header {names}")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # empty body handled below
                body = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DataError(f"{path}: malformed csv body: {exc}") from None
    if body.size == 0:
        raise DataError(f"{path}: dataset has a header but no rows")
    if body.shape[1] != len(names):
        raise DataError(f"{path}: row width {body.shape[1]} does not match "
                        f"header width {len(names)}")
    li = names.index("label")
    y = body[:, li].astype(np.int64)
    x = np.delete(body, li, axis=1)
    return x, y
