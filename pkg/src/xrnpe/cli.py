"""Command-line surface: codec tables, engine runs, quantization, NN flows.

Every run writes a manifest JSON capturing the command, arguments, seed,
tool version, and SHA-256 digests of all file inputs and outputs, so any
result can be traced back to exact bytes.  Exit codes: 0 success, 2 usage
error, 3 data error (malformed files, shape/format mismatches), 4 numeric
contract violation (e.g. accumulation bound exceeded, divergence).

Model checkpoints are JSON manifests describing the layer stack, with
per-layer weight/bias/gradient tensors stored as XTEN containers next to
the manifest; datasets are CSV files with feature columns and an integer
`label` column.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from xrnpe import __version__, backend
from xrnpe.errors import DataError, NumericContractViolation
from xrnpe.formats import (
    FORMATS_BY_NAME,
    FP4,
    POSIT4_1,
    POSIT8_0,
    POSIT16_1,
    REAL32,
    REAL64,
    FormatSpec,
    Kind,
    conformance_rows,
    encode_array,
)
from xrnpe.morph_array import ArrayConfig, gemm
from xrnpe.nn_eval import Conv, Dense, Flatten, Network, evaluate, load_csv, qat_train
from xrnpe.quantizer import (
    LayerTensor,
    PrecisionMap,
    QuantConfig,
    assign_precisions,
    code_entropy,
    dequantize,
    model_size_bytes,
    quantize,
    sensitivity_report,
)
from xrnpe.simd_mac import PrecSel, dot
from xrnpe.tensor import Tensor, read_xten, write_xten

ENGINE_FORMAT_NAMES = ("posit16_1", "posit8_0", "posit4_1", "fp4")

_MAP_TOKENS = {
    "all_fp32": REAL32,
    "all_real64": REAL64,
    "all_posit16_1": POSIT16_1,
    "all_posit8_0": POSIT8_0,
    "all_posit4_1": POSIT4_1,
    "all_fp4": FP4,
}


# ---------------------------------------------------------------------------
# plumbing


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_json(path, obj) -> None:
    Path(path).write_text(_dump_json(obj), encoding="utf-8")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from None


def _emit_manifest(args, command: str, inputs, outputs,
                   formats=(), seed=None) -> None:
    path = args.manifest
    if path is None:
        path = f"{outputs[0]}.manifest.json" if outputs else "xrnpe.manifest.json"
    manifest = {
        "command": command,
        "argv": list(args._argv),
        "tool_version": __version__,
        "seed": seed,
        "threads": args._threads,
        "backend": backend.backend_name(),
        "formats": sorted(set(formats)),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    _write_json(path, manifest)


def _spec_by_name(name: str) -> FormatSpec:
    if name not in FORMATS_BY_NAME:
        raise DataError(f"unknown format {name!r}; "
                        f"choose from {sorted(FORMATS_BY_NAME)}")
    return FORMATS_BY_NAME[name]


def _read_engine_tensor(path) -> Tensor:
    t = read_xten(path)
    if t.spec.kind is Kind.REAL:
        raise DataError(f"{path}: expected an engine-format tensor, got "
                        f"{t.spec.name}")
    return t


def _check_mode(requested: str | None, spec: FormatSpec) -> PrecSel:
    sel = PrecSel.for_format(spec)
    if requested is not None and sel.mode.value != requested:
        raise DataError(
            f"--mode {requested} does not match operand format {spec.name} "
            f"(which runs in mode {sel.mode.value})")
    return sel


# ---------------------------------------------------------------------------
# model checkpoints


def _load_model(path):
    """Build a Network from a checkpoint manifest; returns (net, grads, raw)."""
    man = _read_json(path)
    base = Path(path).parent
    if "layers" not in man or not isinstance(man["layers"], list):
        raise DataError(f"{path}: checkpoint manifest needs a `layers` list")
    layers = []
    for i, ld in enumerate(man["layers"]):
        kind = ld.get("kind")
        name = ld.get("name", f"l{i}")
        act = ld.get("activation")
        if kind == "dense":
            layers.append(Dense(int(ld["in_dim"]), int(ld["out_dim"]), act,
                                name=name, alpha=float(ld.get("alpha", 6.0))))
        elif kind == "conv":
            layers.append(Conv(int(ld["in_ch"]), int(ld["out_ch"]),
                               int(ld["ksize"]), int(ld.get("stride", 1)),
                               act, name=name,
                               alpha=float(ld.get("alpha", 6.0))))
        elif kind == "flatten":
            layers.append(Flatten(name=name))
        else:
            raise DataError(f"{path}: layer {i} has unknown kind {kind!r}")
    try:
        net = Network(layers, man.get("loss", "xent"))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    net.init_params(int(man.get("seed", 0)))
    grads: dict[str, np.ndarray] = {}
    read_paths = [Path(path)]
    for layer, ld in zip(net.layers, man["layers"]):
        if not isinstance(layer, (Dense, Conv)):
            continue
        for key, target in (("weights", "W"), ("bias", "b")):
            if key not in ld:
                continue
            p = base / ld[key]
            t = read_xten(p)
            read_paths.append(p)
            if t.spec != REAL64:
                raise DataError(f"{p}: checkpoint tensors must be real64")
            arr = t.values()
            want = getattr(layer, target).shape
            if arr.shape != want:
                raise DataError(f"{p}: shape {arr.shape} does not match "
                                f"layer {layer.name} {target} {want}")
            setattr(layer, target, arr)
        if "gradient" in ld:
            p = base / ld["gradient"]
            t = read_xten(p)
            read_paths.append(p)
            if t.values().shape != layer.W.shape:
                raise DataError(f"{p}: gradient shape does not match weights")
            grads[layer.name] = t.values()
    return net, grads, man, read_paths


def _save_model(net: Network, man: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    new_layers = []
    written = []
    for layer, ld in zip(net.layers, man["layers"]):
        entry = dict(ld)
        if isinstance(layer, (Dense, Conv)):
            wp = out_dir / f"{layer.name}_w.xten"
            bp = out_dir / f"{layer.name}_b.xten"
            write_xten(wp, Tensor.from_values(layer.W, REAL64))
            write_xten(bp, Tensor.from_values(layer.b, REAL64))
            entry["weights"] = wp.name
            entry["bias"] = bp.name
            entry["alpha"] = float(layer.alpha)
            entry.pop("gradient", None)
            written += [wp, bp]
        new_layers.append(entry)
    man_out = dict(man)
    man_out["layers"] = new_layers
    mp = out_dir / "model.json"
    _write_json(mp, man_out)
    return written + [mp]


def _load_map(arg: str, layer_params) -> PrecisionMap:
    if arg in _MAP_TOKENS:
        return PrecisionMap.uniform(layer_params, _MAP_TOKENS[arg])
    d = _read_json(arg)
    if "weights" not in d:
        raise DataError(f"{arg}: precision map JSON needs a `weights` object")
    try:
        pm = PrecisionMap.from_dict(d)
    except KeyError as exc:
        raise DataError(f"{arg}: unknown format name {exc}") from None
    return pm


def _load_dataset(path, man):
    """Dataset CSV as (x, y), reshaped when the checkpoint names an input shape."""
    x, y = load_csv(path)
    if "input_shape" in man:
        shape = tuple(int(d) for d in man["input_shape"])
        if int(np.prod(shape)) != x.shape[1]:
            raise DataError(f"{path}: {x.shape[1]} features do not fill "
                            f"input_shape {list(shape)}")
        x = x.reshape((len(x), *shape))
    return x, y


def _gradients_for(net, grads, args, man):
    """LayerTensor list with gradients, computing them from data if asked."""
    missing = [l.name for l in net.trainable() if l.name not in grads]
    if missing:
        if not (args.compute_grads and args.data):
            raise DataError(
                f"layers {missing} have no stored gradients; re-run with "
                f"--compute-grads --data <csv> to derive them from a dataset")
        if net.loss != "xent":
            raise DataError("--compute-grads needs a cross-entropy model; "
                            "store gradient tensors in the checkpoint instead")
        x, y = _load_dataset(args.data, man)
        _, g = net.loss_and_grads(x, y)
        for name in missing:
            grads[name] = g[name]["W"]
    return [LayerTensor(l.name, l.W, grads[l.name]) for l in net.trainable()]


def _scores_sources(args, net, grads, man):
    if args.sens:
        rep = _read_json(args.sens)
        if "score" not in rep:
            raise DataError(f"{args.sens}: not a sensitivity report "
                            "(missing `score`)")
        return {k: float(v) for k, v in rep["score"].items()}, [Path(args.sens)]
    layers = _gradients_for(net, grads, args, man)
    current = PrecisionMap.uniform([l.layer_id for l in layers], POSIT16_1)
    rep = sensitivity_report(layers, current,
                             four_bit=_spec_by_name(args.four_bit))
    return rep.scores, []


# ---------------------------------------------------------------------------
# commands


def cmd_codec(args) -> int:
    spec = _spec_by_name(args.format)
    if spec.kind is Kind.REAL:
        raise DataError("codec tables exist for the engine formats only")
    lines = ["pattern,class,exact,float"]
    lines += [",".join(row) for row in conformance_rows(spec)]
    text = "\n".join(lines) + "\n"
    outputs = []
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        outputs.append(args.out)
    else:
        sys.stdout.write(text)
    _emit_manifest(args, "codec", [], outputs, formats=[spec.name])
    return 0


def cmd_dot(args) -> int:
    a = _read_engine_tensor(args.a)
    b = _read_engine_tensor(args.b)
    if a.spec != b.spec:
        raise DataError(f"operand formats differ: {a.spec.name} vs "
                        f"{b.spec.name}")
    if a.codes.ndim != 1 or b.codes.ndim != 1:
        raise DataError("dot expects rank-1 tensors")
    if a.shape != b.shape:
        raise DataError(f"lengths differ: {a.shape[0]} vs {b.shape[0]}")
    sel = _check_mode(args.mode, a.spec)
    bits, stats = dot(a.codes, b.codes, sel, k_max=args.k_max)
    result = Tensor(a.spec, np.array(bits, dtype=np.int64))
    write_xten(args.out, result)
    value = result.values().item()
    report = {
        "format": a.spec.name,
        "mode": sel.mode.value,
        "k": int(a.shape[0]),
        "result_pattern": f"0x{bits:0{(a.spec.n + 3) // 4}x}",
        "result_value": value if np.isfinite(value) else None,
        "stats": stats,
    }
    outputs = [args.out]
    if args.stats:
        _write_json(args.stats, report)
        outputs.append(args.stats)
    _emit_manifest(args, "dot", [args.a, args.b], outputs,
                   formats=[a.spec.name])
    return 0


def cmd_gemm(args) -> int:
    a = _read_engine_tensor(args.a)
    b = _read_engine_tensor(args.b)
    if a.spec != b.spec:
        raise DataError(f"operand formats differ: {a.spec.name} vs "
                        f"{b.spec.name}")
    sel = _check_mode(args.mode, a.spec)
    cfg = ArrayConfig(args.array, args.array, sel, args.k_max)
    c, stats = gemm(a, b, cfg)
    write_xten(args.out, c)
    report = {
        "format": a.spec.name,
        "mode": sel.mode.value,
        "array": args.array,
        "shape": {"m": a.shape[0], "k": a.shape[1], "n": b.shape[1]},
        "stats": stats.as_dict(),
    }
    outputs = [args.out]
    if args.stats:
        _write_json(args.stats, report)
        outputs.append(args.stats)
    _emit_manifest(args, "gemm", [args.a, args.b], outputs,
                   formats=[a.spec.name])
    return 0


def cmd_quantize(args) -> int:
    t = read_xten(args.weights)
    if t.spec.kind is not Kind.REAL:
        raise DataError(f"{args.weights}: quantize expects real64 weights")
    w = t.values().reshape(-1)
    outputs = []
    if args.target_format:
        spec = _spec_by_name(args.target_format)
        if spec.kind is Kind.REAL:
            raise DataError("--target-format must be an engine format")
        codes = encode_array(w, spec)
        out_t = Tensor(spec, codes.reshape(t.shape))
        write_xten(args.out, out_t)
        outputs.append(args.out)
        err = out_t.values().reshape(-1) - w
        report = {
            "path": "value-lattice",
            "format": spec.name,
            "elements": int(w.size),
            "mse": float(np.mean(err * err)),
            "code_entropy_bits": code_entropy(codes, spec.n),
        }
    else:
        cfg = QuantConfig.from_weights(w, args.bits, symmetric=args.symmetric)
        if cfg.k == 0.0:
            codes = np.zeros(w.size, dtype=np.int64)
            degenerate = True
        else:
            codes = quantize(w, cfg)
            degenerate = False
        report = {
            "path": "integer-codes",
            "bits": args.bits,
            "k": cfg.k,
            "w_low": cfg.w_low,
            "w_high": cfg.w_high,
            "step": cfg.step,
            "degenerate_all_zero": degenerate,
            "elements": int(w.size),
            "code_entropy_bits": code_entropy(codes, args.bits),
        }
        if not degenerate:
            recon = dequantize(codes, cfg)
            scaled = np.clip(w / cfg.k, cfg.w_low, cfg.w_high)
            report["max_roundtrip_error"] = float(np.max(np.abs(recon - scaled)))
        if args.out:
            np.savetxt(args.out, codes, fmt="%d")
            outputs.append(args.out)
    _write_json(args.report, report)
    outputs.append(args.report)
    _emit_manifest(args, "quantize", [args.weights], outputs)
    return 0


def cmd_sens(args) -> int:
    net, grads, man, read_paths = _load_model(args.model)
    layers = _gradients_for(net, grads, args, man)
    current = _load_map(args.map, [l.layer_id for l in layers])
    current.validate_complete([l.layer_id for l in layers])
    rep = sensitivity_report(layers, current,
                             four_bit=_spec_by_name(args.four_bit))
    out = rep.as_dict()
    out["four_bit_format"] = args.four_bit
    out["current_map"] = current.as_dict()["weights"]
    _write_json(args.out, out)
    inputs = read_paths + ([Path(args.data)] if args.compute_grads and args.data else [])
    _emit_manifest(args, "sens", inputs, [args.out])
    return 0


def cmd_assign(args) -> int:
    net, grads, man, read_paths = _load_model(args.model)
    scores, extra_inputs = _scores_sources(args, net, grads, man)
    params = net.layer_params
    if set(scores) != set(params):
        raise DataError(
            f"sensitivity scores cover {sorted(scores)} but the model has "
            f"layers {sorted(params)}")
    pm = assign_precisions(params, scores, args.budget,
                           four_bit=_spec_by_name(args.four_bit))
    sizes = model_size_bytes(params, pm)
    out = pm.as_dict()
    out["budget_bits"] = args.budget
    out["avg_bits_per_param"] = float(sizes["avg_bits_per_param"])
    out["avg_bits_per_param_exact"] = str(sizes["avg_bits_per_param"])
    out["total_bytes"] = float(sizes["total_bytes"])
    _write_json(args.out, out)
    _emit_manifest(args, "assign", read_paths + extra_inputs, [args.out])
    return 0


def cmd_size(args) -> int:
    net, _, _, read_paths = _load_model(args.model)
    params = net.layer_params
    pm = _load_map(args.map, params)
    pm.validate_complete(params)
    sizes = model_size_bytes(params, pm)
    out = {
        "layers": len(params),
        "parameters": int(sum(params.values())),
        "weight_bytes": float(sizes["weight_bytes"]),
        "weight_bytes_exact": str(sizes["weight_bytes"]),
        "weight_mib": float(sizes["weight_bytes"] / (1 << 20)),
        "metadata_bytes": sizes["metadata_bytes"],
        "total_bytes": float(sizes["total_bytes"]),
        "total_bytes_exact": str(sizes["total_bytes"]),
        "total_mib": float(sizes["total_bytes"] / (1 << 20)),
        "avg_bits_per_param": float(sizes["avg_bits_per_param"]),
        "avg_bits_per_param_exact": str(sizes["avg_bits_per_param"]),
        "map": pm.as_dict()["weights"],
    }
    _write_json(args.out, out)
    inputs = read_paths + ([Path(args.map)] if args.map not in _MAP_TOKENS else [])
    _emit_manifest(args, "size", inputs, [args.out])
    return 0


def cmd_qat(args) -> int:
    net, _, man, read_paths = _load_model(args.model)
    x, y = _load_dataset(args.data, man)
    pm = _load_map(args.map, net.layer_params)
    history = qat_train(net, x, y, pm, args.epochs, args.lr,
                        batch_size=args.batch_size, seed=args.seed)
    saved = _save_model(net, man, args.save_model)
    result = evaluate(net, x, y, pm, rows=args.array)
    report = {
        "history": history,
        "epochs": args.epochs,
        "lr": args.lr,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "train_loss_quantized": result["loss"],
        "saved_model": str(Path(args.save_model) / "model.json"),
    }
    if "accuracy" in result:
        report["train_accuracy_quantized"] = result["accuracy"]
    _write_json(args.report, report)
    inputs = read_paths + [Path(args.data)]
    if args.map not in _MAP_TOKENS:
        inputs.append(Path(args.map))
    _emit_manifest(args, "qat", inputs, saved + [args.report],
                   seed=args.seed)
    return 0


def cmd_eval(args) -> int:
    net, _, man, read_paths = _load_model(args.model)
    x, y = _load_dataset(args.data, man)
    pm = _load_map(args.map, net.layer_params) if args.map else None
    result = evaluate(net, x, y, pm, rows=args.array)
    report = {"loss": result["loss"], "samples": int(len(x))}
    if "accuracy" in result:
        report["accuracy"] = result["accuracy"]
    if "stats" in result:
        report["stats"] = result["stats"].as_dict()
        report["map"] = pm.as_dict()["weights"]
    _write_json(args.out, report)
    inputs = read_paths + [Path(args.data)]
    if args.map and args.map not in _MAP_TOKENS:
        inputs.append(Path(args.map))
    _emit_manifest(args, "eval", inputs, [args.out])
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="xrnpe",
        description="Bit-accurate mixed-precision SIMD engine model: codecs, "
                    "exact dot/GEMM runs, quantization analysis, and "
                    "desk-scale network evaluation.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker thread cap (default: XRNPE_THREADS or all cores)")
    p.add_argument("--manifest", default=None,
                   help="run manifest path (default: <first output>.manifest.json)")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("codec", help="emit a format conformance table (CSV)")
    c.add_argument("--format", required=True, choices=ENGINE_FORMAT_NAMES)
    c.add_argument("--out", default=None, help="CSV path (default stdout)")
    c.set_defaults(func=cmd_codec)

    d = sub.add_parser("dot", help="fused dot product of two XTEN vectors")
    d.add_argument("--a", required=True)
    d.add_argument("--b", required=True)
    d.add_argument("--mode", choices=("x4_4bit", "x2_posit8", "x1_posit16"))
    d.add_argument("--k-max", type=int, default=None)
    d.add_argument("--out", required=True, help="result XTEN path")
    d.add_argument("--stats", default=None, help="stats JSON path")
    d.set_defaults(func=cmd_dot)

    g = sub.add_parser("gemm", help="run C = A @ B on the MAC array model")
    g.add_argument("--a", required=True)
    g.add_argument("--b", required=True)
    g.add_argument("--mode", choices=("x4_4bit", "x2_posit8", "x1_posit16"))
    g.add_argument("--array", type=int, default=8, choices=(8, 16))
    g.add_argument("--k-max", type=int, default=None)
    g.add_argument("--out", required=True, help="result XTEN path")
    g.add_argument("--stats", default=None, help="stats JSON path")
    g.set_defaults(func=cmd_gemm)

    q = sub.add_parser("quantize", help="quantize a real64 weight tensor")
    q.add_argument("--weights", required=True, help="real64 XTEN path")
    q.add_argument("--bits", type=int, default=8)
    q.add_argument("--symmetric", action="store_true")
    q.add_argument("--target-format", choices=ENGINE_FORMAT_NAMES,
                   help="write lattice codes instead of integer codes")
    q.add_argument("--out", default=None,
                   help="codes output (XTEN for --target-format, else text)")
    q.add_argument("--report", required=True, help="report JSON path")
    q.set_defaults(func=cmd_quantize)

    s = sub.add_parser("sens", help="per-layer demotion sensitivity report")
    s.add_argument("--model", required=True, help="checkpoint manifest JSON")
    s.add_argument("--map", default="all_posit16_1",
                   help="current precision map (JSON path or all_* token)")
    s.add_argument("--four-bit", default="posit4_1",
                   choices=("posit4_1", "fp4"))
    s.add_argument("--compute-grads", action="store_true")
    s.add_argument("--data", default=None, help="dataset CSV for gradients")
    s.add_argument("--out", required=True, help="report JSON path")
    s.set_defaults(func=cmd_sens)

    a = sub.add_parser("assign", help="budgeted precision assignment")
    a.add_argument("--model", required=True)
    a.add_argument("--budget", required=True,
                   help="average bits per parameter (decimal, e.g. 5.74)")
    a.add_argument("--sens", default=None, help="sensitivity report JSON")
    a.add_argument("--four-bit", default="posit4_1",
                   choices=("posit4_1", "fp4"))
    a.add_argument("--compute-grads", action="store_true")
    a.add_argument("--data", default=None)
    a.add_argument("--out", required=True, help="precision map JSON path")
    a.set_defaults(func=cmd_assign)

    z = sub.add_parser("size", help="model storage accounting for a map")
    z.add_argument("--model", required=True)
    z.add_argument("--map", required=True,
                   help="precision map JSON path or token (e.g. all_fp32)")
    z.add_argument("--out", required=True, help="report JSON path")
    z.set_defaults(func=cmd_size)

    t = sub.add_parser("qat", help="quantization-aware fine-tuning")
    t.add_argument("--model", required=True)
    t.add_argument("--data", required=True, help="training CSV")
    t.add_argument("--map", required=True)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--lr", type=float, default=0.02)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--array", type=int, default=8, choices=(8, 16))
    t.add_argument("--save-model", required=True, help="output model directory")
    t.add_argument("--report", required=True, help="report JSON path")
    t.set_defaults(func=cmd_qat)

    e = sub.add_parser("eval", help="evaluate a model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--map", default=None,
                   help="run on the array with this precision map")
    e.add_argument("--array", type=int, default=8, choices=(8, 16))
    e.add_argument("--out", required=True, help="report JSON path")
    e.set_defaults(func=cmd_eval)

    # accept the global flags after the subcommand too; SUPPRESS keeps an
    # absent flag from clobbering a value parsed before the subcommand
    for sp in sub.choices.values():
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help=argparse.SUPPRESS)
        sp.add_argument("--manifest", default=argparse.SUPPRESS,
                        help=argparse.SUPPRESS)

    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    args._argv = argv
    args._threads = backend.set_thread_count(args.threads)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"xrnpe: data error: {exc}", file=sys.stderr)
        return 3
    except NumericContractViolation as exc:
        print(f"xrnpe: numeric contract violation: {exc}", file=sys.stderr)
        return 4
    except (ValueError, KeyError) as exc:
        print(f"xrnpe: usage error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"xrnpe: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
