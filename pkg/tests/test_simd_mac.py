"""MAC engine tests: lane semantics, quire exactness, fused dot oracle."""

from fractions import Fraction

import numpy as np
import pytest

from xrnpe.errors import NumericContractViolation
from xrnpe.formats import (
    FP4,
    POSIT4_1,
    POSIT8_0,
    POSIT16_1,
    NumClass,
    decode,
    encode,
)
from xrnpe.rmmec import MulBlockArray
from xrnpe.simd_mac import (
    FourBitKind,
    LaneProduct,
    Mode,
    PrecSel,
    dot,
    lane_multiply,
    pack_word,
    quire_add,
    quire_frac_bits,
    quire_init,
    quire_round,
    quire_width,
    unpack_word,
)

SEL_P16 = PrecSel(Mode.X1_POSIT16)
SEL_P8 = PrecSel(Mode.X2_POSIT8)
SEL_P4 = PrecSel(Mode.X4_4BIT, FourBitKind.POSIT4)
SEL_FP4 = PrecSel(Mode.X4_4BIT, FourBitKind.FP4)
ALL_SELS = [SEL_P16, SEL_P8, SEL_P4, SEL_FP4]


def _sel_id(sel):
    return sel.element_format.name


def _exact_dot(a_codes, b_codes, spec):
    """Rational-arithmetic oracle: exact sum of decoded products, or NaR."""
    acc = Fraction(0)
    for ca, cb in zip(a_codes, b_codes):
        va = decode(int(ca), spec).value
        vb = decode(int(cb), spec).value
        if va is None or vb is None:
            return None
        acc += va * vb
    return acc


class TestPrecSel:
    def test_lane_geometry(self):
        assert (SEL_P16.lane_count, SEL_P16.lane_width) == (1, 16)
        assert (SEL_P8.lane_count, SEL_P8.lane_width) == (2, 8)
        assert (SEL_P4.lane_count, SEL_P4.lane_width) == (4, 4)

    def test_element_formats(self):
        assert SEL_P16.element_format == POSIT16_1
        assert SEL_P8.element_format == POSIT8_0
        assert SEL_P4.element_format == POSIT4_1
        assert SEL_FP4.element_format == FP4

    def test_rmmec_widths(self):
        assert SEL_P16.rmmec_width == 12
        assert SEL_P8.rmmec_width == 6
        assert SEL_P4.rmmec_width == 2

    def test_for_format_roundtrip(self):
        for sel in ALL_SELS:
            assert PrecSel.for_format(sel.element_format) == sel


class TestWordPacking:
    @pytest.mark.parametrize("sel", ALL_SELS, ids=_sel_id)
    def test_roundtrip(self, sel):
        rng = np.random.default_rng(2)
        for _ in range(50):
            codes = rng.integers(0, 1 << sel.lane_width, sel.lane_count)
            word = pack_word(codes.tolist(), sel)
            assert unpack_word(word, sel) == tuple(codes.tolist())
            assert 0 <= word < (1 << 16)

    def test_lane0_least_significant(self):
        word = pack_word([0x1, 0x2, 0x3, 0x4], SEL_P4)
        assert word == 0x4321

    def test_pack_validates(self):
        with pytest.raises(ValueError):
            pack_word([0x100, 0], SEL_P8)
        with pytest.raises(ValueError):
            pack_word([0, 0, 0], SEL_P8)


class TestLaneMultiply:
    def test_posit16_identity(self):
        one = encode(1, POSIT16_1)
        (p,) = lane_multiply(one, one, SEL_P16)
        assert p.num_class is NumClass.FINITE
        assert (p.sign, p.scale, p.significand) == (1, 0, Fraction(1))

    def test_four_lanes_two_times_half(self):
        two = encode(2, POSIT4_1)
        half = encode(Fraction(1, 2), POSIT4_1)
        wa = pack_word([two] * 4, SEL_P4)
        wb = pack_word([half] * 4, SEL_P4)
        for p in lane_multiply(wa, wb, SEL_P4):
            assert p.value == 1

    def test_zero_operand_gates(self):
        one = encode(1, POSIT8_0)
        wa = pack_word([0, one], SEL_P8)
        wb = pack_word([one, one], SEL_P8)
        p0, p1 = lane_multiply(wa, wb, SEL_P8)
        assert p0.num_class is NumClass.ZERO and p0.operand_gated
        assert p1.value == 1 and not p1.operand_gated

    def test_nar_propagates(self):
        nar = POSIT8_0.nar_pattern
        one = encode(1, POSIT8_0)
        wa = pack_word([nar, one], SEL_P8)
        wb = pack_word([one, one], SEL_P8)
        p0, p1 = lane_multiply(wa, wb, SEL_P8)
        assert p0.num_class is NumClass.NAR
        assert p1.num_class is NumClass.FINITE

    @pytest.mark.parametrize("sel", ALL_SELS, ids=_sel_id)
    def test_products_match_exact_values(self, sel):
        spec = sel.element_format
        rng = np.random.default_rng(31 + sel.lane_count)
        for _ in range(300):
            ca = rng.integers(0, 1 << spec.n, sel.lane_count)
            cb = rng.integers(0, 1 << spec.n, sel.lane_count)
            wa = pack_word(ca.tolist(), sel)
            wb = pack_word(cb.tolist(), sel)
            for lane, p in enumerate(lane_multiply(wa, wb, sel)):
                va = decode(int(ca[lane]), spec).value
                vb = decode(int(cb[lane]), spec).value
                if va is None or vb is None:
                    assert p.num_class is NumClass.NAR
                elif va == 0 or vb == 0:
                    assert p.num_class is NumClass.ZERO and p.operand_gated
                else:
                    assert p.value == va * vb

    def test_lane_isolation(self):
        rng = np.random.default_rng(8)
        ca = rng.integers(0, 16, 4).tolist()
        cb = rng.integers(0, 16, 4).tolist()
        base = lane_multiply(pack_word(ca, SEL_P4), pack_word(cb, SEL_P4), SEL_P4)
        for lane in range(4):
            mutated = list(ca)
            mutated[lane] = (mutated[lane] + 3) % 16
            got = lane_multiply(pack_word(mutated, SEL_P4),
                                pack_word(cb, SEL_P4), SEL_P4)
            for other in range(4):
                if other != lane:
                    assert got[other] == base[other]

    def test_shared_mul_array_accumulates(self):
        arr = MulBlockArray(12)
        one = encode(1, POSIT16_1)
        lane_multiply(one, one, SEL_P16, mul_array=arr)
        first = arr.fired_count + arr.gated_count
        lane_multiply(one, one, SEL_P16, mul_array=arr)
        assert arr.fired_count + arr.gated_count == 2 * first
        with pytest.raises(ValueError):
            lane_multiply(one, one, SEL_P8, mul_array=arr)


class TestQuire:
    def test_width_formula_p16(self):
        assert quire_width(POSIT16_1, 1 << 20) == 159

    def test_frac_bits_p8(self):
        assert quire_frac_bits(POSIT8_0) == 22

    def test_init_rejects_zero_kmax(self):
        with pytest.raises(ValueError):
            quire_init(POSIT16_1, 0)

    def test_single_add_exact(self):
        q = quire_init(POSIT8_0, 4)
        quire_add(q, LaneProduct(NumClass.FINITE, 1, 0, Fraction(1)))
        assert q.exact == 1

    def test_cancellation_exact(self):
        rng = np.random.default_rng(12)
        for code in rng.integers(1, 256, 30).tolist():
            if code == 0x80:
                continue
            q = quire_init(POSIT8_0, 2)
            d = decode(code, POSIT8_0)
            quire_add(q, LaneProduct(NumClass.FINITE, d.sign, d.scale,
                                     Fraction(d.fraction, 1 << d.frac_bits)))
            quire_add(q, LaneProduct(NumClass.FINITE, -d.sign, d.scale,
                                     Fraction(d.fraction, 1 << d.frac_bits)))
            assert q.value == 0

    def test_64_minpos_squares(self):
        q = quire_init(POSIT8_0, 64)
        minpos_sq = LaneProduct(NumClass.FINITE, 1, -12, Fraction(1))
        for _ in range(64):
            quire_add(q, minpos_sq)
        assert q.exact == Fraction(1, 64)

    def test_zero_add_is_noop(self):
        q = quire_init(POSIT16_1, 4)
        quire_add(q, LaneProduct(NumClass.ZERO, operand_gated=True))
        assert q.value == 0 and q.count == 1

    def test_nar_flag(self):
        q = quire_init(POSIT16_1, 4)
        quire_add(q, LaneProduct(NumClass.NAR))
        assert q.nar_flag
        assert quire_round(q) == POSIT16_1.nar_pattern

    def test_kmax_enforced(self):
        q = quire_init(POSIT8_0, 1)
        quire_add(q, LaneProduct(NumClass.ZERO))
        with pytest.raises(NumericContractViolation):
            quire_add(q, LaneProduct(NumClass.ZERO))

    def test_round_examples(self):
        q = quire_init(POSIT8_0, 4)
        quire_add(q, LaneProduct(NumClass.FINITE, 1, 1, Fraction(1)))
        assert quire_round(q) == 0x60
        assert quire_round(quire_init(POSIT8_0, 1)) == 0
        q = quire_init(POSIT8_0, 40)
        for _ in range(40):
            quire_add(q, LaneProduct(NumClass.FINITE, 1, 12, Fraction(3, 2)))
        assert quire_round(q) == 0x7F

    def test_fp4_exact_for_four_terms(self):
        # worst-case fp4 dot: 4 * (6*6) = 144, far inside the quire range
        q = quire_init(FP4, 4)
        p = LaneProduct(NumClass.FINITE, 1, 5, Fraction(9, 8))
        for _ in range(4):
            quire_add(q, p)
        assert q.exact == 144


class TestDot:
    def test_spec_example_p8(self):
        a = [encode(1, POSIT8_0), encode(2, POSIT8_0)]
        b = [encode(1, POSIT8_0), encode(Fraction(1, 2), POSIT8_0)]
        bits, stats = dot(a, b, SEL_P8)
        assert bits == 0x60
        assert stats["mac_ops"] == 2
        assert stats["operand_gated"] == 0

    def test_all_zero_operand_gating(self):
        rng = np.random.default_rng(4)
        b = rng.integers(0, 256, 32)
        bits, stats = dot(np.zeros(32, np.uint16), b, SEL_P8)
        assert bits == 0
        assert stats["operand_gated"] == 32
        assert stats["rmmec_cells_fired"] == 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dot([0, 0], [0], SEL_P8)

    def test_kmax_contract(self):
        with pytest.raises(NumericContractViolation):
            dot([0x40] * 3, [0x40] * 3, SEL_P8, k_max=2)

    def test_empty_dot_is_zero(self):
        bits, stats = dot([], [], SEL_P16)
        assert bits == 0 and stats["mac_ops"] == 0

    @pytest.mark.parametrize("sel", ALL_SELS, ids=_sel_id)
    def test_fused_exactness_oracle(self, sel):
        spec = sel.element_format
        rng = np.random.default_rng(1000 + spec.n + spec.es)
        for _ in range(250):
            k = int(rng.integers(1, 65))
            a = rng.integers(0, 1 << spec.n, k)
            b = rng.integers(0, 1 << spec.n, k)
            bits, _ = dot(a, b, sel)
            exact = _exact_dot(a, b, spec)
            if exact is None:
                assert bits == spec.nar_pattern
            else:
                assert bits == encode(exact, spec)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(77)
        a = rng.integers(0, 1 << 16, 48)
        b = rng.integers(0, 1 << 16, 48)
        ref, ref_stats = dot(a, b, SEL_P16)
        for _ in range(25):
            perm = rng.permutation(48)
            bits, stats = dot(a[perm], b[perm], SEL_P16)
            assert bits == ref
            assert stats == ref_stats

    def test_nar_absorbs(self):
        a = [encode(1, POSIT16_1), POSIT16_1.nar_pattern]
        b = [encode(1, POSIT16_1), encode(1, POSIT16_1)]
        bits, _ = dot(a, b, SEL_P16)
        assert bits == POSIT16_1.nar_pattern

    @pytest.mark.parametrize("sel", ALL_SELS, ids=_sel_id)
    def test_matches_scalar_quire_path(self, sel):
        spec = sel.element_format
        rng = np.random.default_rng(5000 + spec.n + spec.es)
        width = sel.rmmec_width
        for _ in range(40):
            k = int(rng.integers(1, 33))
            a = rng.integers(0, 1 << spec.n, k).tolist()
            b = rng.integers(0, 1 << spec.n, k).tolist()
            q = quire_init(spec, k)
            arr = MulBlockArray(width)
            gated = 0
            for ca, cb in zip(a, b):
                (p,) = lane_multiply(
                    pack_word([ca] + [0] * (sel.lane_count - 1), sel),
                    pack_word([cb] + [0] * (sel.lane_count - 1), sel),
                    sel, mul_array=arr)[:1]
                gated += p.operand_gated
                quire_add(q, p)
            bits, stats = dot(a, b, sel)
            assert quire_round(q) == bits
            assert stats["operand_gated"] == gated

    def test_backend_parity(self, monkeypatch):
        rng = np.random.default_rng(99)
        results = {}
        for backend_name in ("numpy", "numba"):
            monkeypatch.setenv("XRNPE_BACKEND", backend_name)
            rng2 = np.random.default_rng(99)
            out = []
            for _ in range(30):
                k = int(rng2.integers(1, 50))
                a = rng2.integers(0, 1 << 16, k)
                b = rng2.integers(0, 1 << 16, k)
                out.append(dot(a, b, SEL_P16))
            results[backend_name] = out
        assert results["numpy"] == results["numba"]
