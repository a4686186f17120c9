"""Quantization pipeline: scaling, codes, PACT, sensitivity, assignment."""

import math
from fractions import Fraction

import numpy as np
import pytest

from xrnpe.formats import (
    FP4,
    POSIT4_1,
    POSIT8_0,
    POSIT16_1,
    REAL32,
    REAL64,
    enumerate_format,
)
from xrnpe.quantizer import (
    LayerTensor,
    PrecisionMap,
    QuantConfig,
    assign_precisions,
    code_entropy,
    dequantize,
    fake_quantize,
    layer_score,
    layer_sensitivity,
    model_size_bytes,
    pact,
    pact_quantize,
    quantize,
    scale_k,
    sensitivity_report,
)

# ---------------------------------------------------------------------------
# scale factor


def test_scale_k_mean_magnitude_example():
    assert scale_k([1.0, 1.0, 1.0, 1.0], 4) == pytest.approx(15 / 8)


def test_scale_k_two_bit_example():
    assert scale_k([-2.0, 2.0], 2) == pytest.approx(3.0)


def test_scale_k_all_zero_is_degenerate_zero():
    assert scale_k(np.zeros(17), 8) == 0.0


def test_scale_k_rejects_empty_and_tiny_widths():
    with pytest.raises(ValueError):
        scale_k([], 4)
    with pytest.raises(ValueError):
        scale_k([1.0], 1)


# ---------------------------------------------------------------------------
# integer codes


def _cfg(n=4, lo=-1.0, hi=1.0, k=1.0):
    return QuantConfig(n, lo, hi, k)


def test_quantize_midrange_example():
    codes = quantize(np.array([0.5]), _cfg())
    assert codes.tolist() == [11]


def test_quantize_endpoints_hit_extreme_codes():
    cfg = _cfg()
    assert quantize(np.array([-1.0]), cfg).tolist() == [0]
    assert quantize(np.array([1.0]), cfg).tolist() == [15]
    # clipping pulls out-of-range values onto the endpoints
    assert quantize(np.array([-7.0, 9.0]), cfg).tolist() == [0, 15]


def test_quantize_rounds_ties_to_even():
    cfg = QuantConfig(4, 0.0, 15.0, 1.0)  # code == rint(W)
    codes = quantize(np.array([0.5, 1.5, 2.5, 3.5]), cfg)
    assert codes.tolist() == [0, 2, 2, 4]


def test_quantize_requires_positive_scale():
    with pytest.raises(ValueError):
        quantize(np.array([1.0]), _cfg(k=0.0))


def test_dequantize_code_zero_and_top():
    cfg = _cfg(n=5, lo=-0.8, hi=1.3)
    assert dequantize(np.array([0]), cfg)[0] == pytest.approx(-0.8)
    assert dequantize(np.array([31]), cfg)[0] == pytest.approx(1.3)


def test_dequantize_rejects_out_of_range_codes():
    with pytest.raises(ValueError):
        dequantize(np.array([16]), _cfg())
    with pytest.raises(ValueError):
        dequantize(np.array([-1]), _cfg())


def test_roundtrip_error_within_half_step():
    rng = np.random.default_rng(7)
    w = rng.normal(0.0, 1.0, 4096)
    cfg = QuantConfig.from_weights(w, 6)
    scaled = np.clip(w / cfg.k, cfg.w_low, cfg.w_high)
    err = np.abs(dequantize(quantize(w, cfg), cfg) - scaled)
    assert err.max() <= cfg.step / 2 + 1e-12


def test_quantize_is_idempotent_on_reconstruction():
    rng = np.random.default_rng(8)
    w = rng.normal(0.0, 0.5, 1024)
    cfg = QuantConfig.from_weights(w, 4)
    codes = quantize(w, cfg)
    again = quantize(dequantize(codes, cfg) * cfg.k, cfg)
    assert np.array_equal(codes, again)


def test_quantize_codes_monotone_in_input():
    w = np.linspace(-2.0, 2.0, 501)
    codes = quantize(w, _cfg())
    assert (np.diff(codes) >= 0).all()


def test_from_weights_percentile_thresholds():
    rng = np.random.default_rng(9)
    w = rng.normal(0.0, 1.0, 100_000)
    cfg = QuantConfig.from_weights(w, 8)
    lo, hi = np.percentile(w / cfg.k, [0.1, 99.9])
    assert cfg.w_low == pytest.approx(lo)
    assert cfg.w_high == pytest.approx(hi)
    assert cfg.k == pytest.approx(scale_k(w, 8))


def test_from_weights_symmetric_flag():
    cfg = QuantConfig.from_weights(np.array([0.5, -2.0, 3.0]), 4, symmetric=True)
    assert (cfg.w_low, cfg.w_high) == (-1.0, 1.0)


def test_from_weights_degenerate_falls_back_symmetric():
    cfg = QuantConfig.from_weights(np.zeros(32), 4)
    assert cfg.k == 0.0 and (cfg.w_low, cfg.w_high) == (-1.0, 1.0)
    cfg = QuantConfig.from_weights(np.full(32, 2.5), 4)
    assert cfg.w_low < cfg.w_high


def test_config_validation():
    with pytest.raises(ValueError):
        QuantConfig(1, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        QuantConfig(4, 1.0, 1.0, 1.0)


def test_code_entropy_uniform_and_constant():
    assert code_entropy(np.arange(16), 4) == pytest.approx(4.0)
    assert code_entropy(np.full(100, 3), 4) == 0.0
    assert code_entropy(np.array([], dtype=np.int64), 4) == 0.0
    assert code_entropy(np.array([0, 0, 5, 5]), 4) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# PACT


def test_pact_worked_examples():
    assert pact(-2.0, 6.0) == 0.0
    assert pact(3.0, 6.0) == 3.0
    assert pact(10.0, 6.0) == 6.0


def test_pact_equals_clip_everywhere():
    rng = np.random.default_rng(10)
    x = rng.uniform(-20, 20, 10_000)
    for alpha in (0.5, 1.0, 6.0, 11.25):
        assert np.array_equal(pact(x, alpha), np.clip(x, 0.0, alpha))


def test_pact_matches_three_term_form():
    rng = np.random.default_rng(101)
    x = rng.uniform(-20, 20, 10_000)
    for alpha in (0.5, 6.0):
        direct = 0.5 * (np.abs(x) - np.abs(x - alpha) + alpha)
        assert np.allclose(pact(x, alpha), direct, atol=1e-12)


def test_pact_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        pact(1.0, 0.0)
    with pytest.raises(ValueError):
        pact(1.0, -3.0)


def test_pact_quantize_worked_example():
    # 3 * 15/6 = 7.5 rounds to the even code 8; 8 * 6/15 = 3.2
    assert pact_quantize(3.0, 6.0, 4) == pytest.approx(3.2)


def test_pact_quantize_outputs_on_grid():
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 9, 5000)
    alpha, n = 6.0, 4
    y = pact_quantize(x, alpha, n)
    codes = y * ((1 << n) - 1) / alpha
    assert np.allclose(codes, np.rint(codes), atol=1e-9)
    assert y.min() >= 0.0 and y.max() <= alpha


def test_pact_quantize_endpoints_and_monotone():
    assert pact_quantize(0.0, 6.0, 4) == 0.0
    assert pact_quantize(6.0, 6.0, 4) == 6.0
    assert pact_quantize(100.0, 6.0, 4) == 6.0
    x = np.linspace(-2, 8, 401)
    y = pact_quantize(x, 6.0, 4)
    assert (np.diff(y) >= -1e-12).all()


# ---------------------------------------------------------------------------
# lattice fake quantization


def test_fake_quantize_real64_is_identity():
    w = np.random.default_rng(12).normal(0, 1, 64)
    assert np.array_equal(fake_quantize(w, REAL64), w)


def test_fake_quantize_real32_rounds_to_single():
    w = np.array([0.1])
    assert fake_quantize(w, REAL32)[0] == np.float32(0.1)


def test_fake_quantize_posit16_relative_error_bound():
    rng = np.random.default_rng(13)
    w = rng.normal(0, 1, 2048)
    w = w[np.abs(w) > 1e-3]
    q = fake_quantize(w, POSIT16_1)
    # |w| in (1e-3, ~5): at least 9 fraction bits everywhere in that range
    assert np.max(np.abs(q - w) / np.abs(w)) < 2.0**-9


def test_fake_quantize_fp4_hits_lattice():
    w = np.array([0.2, 0.7, 1.2, 2.4, 5.0, 100.0, -0.3])
    q = fake_quantize(w, FP4)
    lattice = {float(v) for _, v in enumerate_format(FP4)}
    assert all(float(x) in lattice for x in q)
    assert q[5] == 6.0  # saturation


def _nearest_lattice(x: float, spec) -> float:
    """Independent nearest-value search over the enumerated lattice."""
    best = None
    for idx, (pattern, value) in enumerate(enumerate_format(spec)):
        if value is None:
            continue
        if spec.kind.value == "posit" and value == 0 and x != 0.0:
            continue  # nonzero reals never round to zero
        d = abs(Fraction(x) - value)
        key = (d, idx % 2, idx)
        if best is None or key < best[0]:
            best = (key, float(value))
    return best[1]


def test_fake_quantize_matches_bruteforce_nearest():
    rng = np.random.default_rng(14)
    for spec in (POSIT4_1, POSIT8_0, FP4):
        xs = rng.normal(0, 2, 200)
        q = fake_quantize(xs, spec)
        for x, got in zip(xs, q):
            assert got == _nearest_lattice(float(x), spec), (spec.name, x)


# ---------------------------------------------------------------------------
# sensitivity


def _toy_layer(lid, w, g):
    return LayerTensor(lid, np.asarray(w, float), np.asarray(g, float))


def test_sensitivity_requires_gradient():
    with pytest.raises(ValueError):
        layer_sensitivity(LayerTensor("l", np.ones(4)), POSIT16_1, 8)


def test_sensitivity_zero_gradient_scores_zero():
    layer = _toy_layer("l", [0.3, -0.7], [0.0, 0.0])
    assert layer_sensitivity(layer, POSIT16_1, 4) == 0.0


def test_sensitivity_full_precision_current_is_nonpositive():
    rng = np.random.default_rng(15)
    layer = _toy_layer("l", rng.normal(0, 1, 128), rng.normal(0, 1, 128))
    assert layer_sensitivity(layer, REAL64, 8) <= 0.0
    assert layer_sensitivity(layer, REAL64, 4) <= 0.0


def test_sensitivity_matches_stepwise_evaluation():
    """Three layers, hand-set tensors, against an independent recomputation."""
    layers = [
        _toy_layer("a", [0.30, -1.20, 0.05, 2.00], [0.10, 0.20, -0.30, 0.40]),
        _toy_layer("b", [1.00, 1.00, -1.00], [1.00, -1.00, 1.00]),
        _toy_layer("c", [0.001, 7.5], [2.0, 0.5]),
    ]
    for layer in layers:
        for bits, cand in ((8, POSIT8_0), (4, POSIT4_1)):
            got = layer_sensitivity(layer, POSIT16_1, bits)
            e_cur = math.sqrt(sum(
                (_nearest_lattice(float(w), POSIT16_1) - float(w)) ** 2
                for w in layer.weights))
            e_cand = math.sqrt(sum(
                (_nearest_lattice(float(w), cand) - float(w)) ** 2
                for w in layer.weights))
            g = math.sqrt(sum(float(x) ** 2 for x in layer.gradient))
            want = (e_cur - e_cand) * g / layer.weights.size
            assert got == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_layer_score_takes_max():
    assert layer_score(-0.5, -0.2) == -0.2
    assert layer_score(0.1, -3.0) == 0.1


def test_sensitivity_report_ranking_ascends():
    rng = np.random.default_rng(16)
    layers = [_toy_layer(f"l{i}", rng.normal(0, s, 64), rng.normal(0, 1, 64))
              for i, s in enumerate([0.1, 1.0, 3.0])]
    pm = PrecisionMap.uniform([l.layer_id for l in layers], POSIT16_1)
    rep = sensitivity_report(layers, pm)
    scores = rep.scores
    assert rep.ranking == sorted(scores, key=lambda k: (scores[k], k))
    d = rep.as_dict()
    assert set(d) == {"s8", "s4", "score", "ranking"}


# ---------------------------------------------------------------------------
# precision assignment


def _profile(sizes):
    return {f"layer{i:02d}": n for i, n in enumerate(sizes)}


def _flat_scores(params):
    return {lid: float(i) for i, lid in enumerate(sorted(params))}


def test_assign_budget_16_keeps_everything_wide():
    params = _profile([100, 200, 300])
    pm = assign_precisions(params, _flat_scores(params), 16)
    assert all(pm.weight_format(l) == POSIT16_1 for l in params)


def test_assign_budget_4_goes_fully_narrow():
    params = _profile([100, 200, 300])
    pm = assign_precisions(params, _flat_scores(params), 4)
    assert all(pm.weight_format(l) == POSIT4_1 for l in params)


def test_assign_budget_4_with_fp4_candidate():
    params = _profile([10, 10])
    pm = assign_precisions(params, _flat_scores(params), 4, four_bit=FP4)
    assert all(pm.weight_format(l) == FP4 for l in params)


def test_assign_infeasible_budgets_rejected():
    params = _profile([10])
    with pytest.raises(ValueError):
        assign_precisions(params, _flat_scores(params), 3.9)
    with pytest.raises(ValueError):
        assign_precisions(params, _flat_scores(params), 17)


def test_assign_score_cover_mismatch_rejected():
    with pytest.raises(ValueError):
        assign_precisions(_profile([10, 10]), {"layer00": 0.0}, 8)


def test_assign_stops_exactly_at_budget():
    params = {"a": 1, "b": 1}
    pm = assign_precisions(params, {"a": 0.0, "b": 1.0}, 12)
    assert pm.weight_format("a") == POSIT8_0
    assert pm.weight_format("b") == POSIT16_1


def test_assign_demotes_in_ascending_score_order():
    params = _profile([1000] * 6)
    scores = {lid: s for lid, s in zip(sorted(params),
                                       [-0.5, -0.1, -0.9, 0.2, -0.3, 0.0])}
    pm = assign_precisions(params, scores, 10)
    # avg 10 needs 4.5 demotions worth; walk order by ascending score:
    # layer02(-0.9), layer00(-0.5), layer04(-0.3), layer01(-0.1), layer05(0.0)
    demoted = {l for l in params if pm.weight_format(l) == POSIT8_0}
    assert demoted == {"layer02", "layer00", "layer04", "layer01", "layer05"}
    assert pm.weight_format("layer03") == POSIT16_1


def test_assign_tie_breaks_by_layer_id():
    params = _profile([10, 10, 10, 10])
    scores = {lid: 0.0 for lid in params}
    pm = assign_precisions(params, scores, 14)
    # one demotion suffices (avg 14); the lexicographically first layer moves
    assert pm.weight_format("layer00") == POSIT8_0
    assert all(pm.weight_format(l) == POSIT16_1
               for l in ("layer01", "layer02", "layer03"))


def test_assign_two_stage_structure():
    """Below-8 budgets demote everything to 8 first, then the lowest scores to 4."""
    params = _profile([100] * 8)
    scores = _flat_scores(params)
    pm = assign_precisions(params, scores, 6)
    fmts = [pm.weight_format(f"layer{i:02d}").name for i in range(8)]
    # avg 6 = half at 4, half at 8, in ascending-score order
    assert fmts == ["posit4_1"] * 4 + ["posit8_0"] * 4


def test_assign_deterministic_across_calls():
    rng = np.random.default_rng(17)
    params = _profile(rng.integers(1, 1000, 20).tolist())
    scores = {lid: float(rng.normal()) for lid in sorted(params)}
    a = assign_precisions(params, scores, 9.3).as_dict()
    b = assign_precisions(params, scores, 9.3).as_dict()
    assert a == b


def test_assign_meets_budget_exactly_rationally():
    params = _profile([65536] * 54)
    scores = _flat_scores(params)
    pm = assign_precisions(params, scores, "5.74")
    sizes = model_size_bytes(params, pm)
    assert sizes["avg_bits_per_param"] <= Fraction("5.74")
    # removing the last demotion would exceed the budget: greedy minimality
    n4 = sum(1 for l in params if pm.weight_format(l) == POSIT4_1)
    total = sum(params.values())
    assert Fraction(8 * total - 4 * 65536 * (n4 - 1), total) > Fraction("5.74")


# ---------------------------------------------------------------------------
# model size


def test_size_fp32_baseline_exact():
    params = {"l0": 3_538_944}
    sizes = model_size_bytes(params, PrecisionMap.uniform(params, REAL32))
    assert sizes["weight_bytes"] == Fraction(13.5 * 2**20)
    assert sizes["total_bytes"] == Fraction(13.5 * 2**20) + 4


def test_size_uniform_8bit_exact():
    params = {"l0": 3_538_944}
    sizes = model_size_bytes(params, PrecisionMap.uniform(params, POSIT8_0))
    assert sizes["weight_bytes"] == Fraction(3.375 * 2**20)


def test_size_mixed_map_counts_each_layer():
    params = {"a": 16, "b": 8, "c": 4}
    pm = PrecisionMap()
    pm.set("a", POSIT16_1)
    pm.set("b", POSIT8_0)
    pm.set("c", FP4)
    sizes = model_size_bytes(params, pm)
    assert sizes["weight_bytes"] == Fraction(16 * 16 + 8 * 8 + 4 * 4, 8)
    assert sizes["metadata_bytes"] == 12
    assert sizes["avg_bits_per_param"] == Fraction(16 * 16 + 8 * 8 + 4 * 4, 28)


def test_size_reference_profile_budget_574():
    """54 x 65536 params at budget 5.74 lands within 2% of 2.42 MiB."""
    params = _profile([65536] * 54)
    pm = assign_precisions(params, _flat_scores(params), "5.74")
    total = float(model_size_bytes(params, pm)["total_bytes"])
    assert abs(total - 2.42 * 2**20) / (2.42 * 2**20) < 0.02


def test_size_requires_complete_map():
    with pytest.raises(ValueError):
        model_size_bytes({"a": 4, "b": 4},
                         PrecisionMap.uniform(["a"], POSIT16_1))


# ---------------------------------------------------------------------------
# precision map plumbing


def test_precision_map_roundtrips_through_dict():
    pm = PrecisionMap()
    pm.set("fc1", POSIT16_1, FP4)
    pm.set("fc2", POSIT4_1)
    again = PrecisionMap.from_dict(pm.as_dict())
    assert again.weight_format("fc1") == POSIT16_1
    assert again.activation_format("fc1") == FP4
    assert again.activation_format("fc2") == POSIT4_1


def test_precision_map_activation_defaults_to_weight_format():
    pm = PrecisionMap.uniform(["x"], POSIT8_0)
    assert pm.activation_format("x") == POSIT8_0
