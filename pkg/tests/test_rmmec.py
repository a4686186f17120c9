"""Composed multiplier tests: exactness, gating soundness, commutativity."""

import numpy as np
import pytest

from xrnpe.rmmec import WIDTHS, MulBlockArray, composed_mul_bulk


class TestMul2:
    def test_exact_products(self):
        arr = MulBlockArray(2)
        assert arr.mul2(3, 3) == 9
        assert arr.mul2(2, 3) == 6
        assert arr.mul2(1, 2) == 2

    def test_zero_operand_gates(self):
        arr = MulBlockArray(2)
        assert arr.mul2(0, 2) == 0
        assert arr.gated_count == 1
        assert arr.fired_count == 0

    def test_rejects_wide_operands(self):
        arr = MulBlockArray(2)
        with pytest.raises(ValueError):
            arr.mul2(4, 1)


class TestComposedMul:
    def test_cell_counts(self):
        assert MulBlockArray(2).cells == 1
        assert MulBlockArray(6).cells == 9
        assert MulBlockArray(12).cells == 36

    def test_rejects_bad_width(self):
        with pytest.raises(ValueError):
            MulBlockArray(8)

    def test_width6_max(self):
        arr = MulBlockArray(6)
        assert arr.composed_mul(63, 63) == 3969

    def test_zero_operand_all_gated(self):
        arr = MulBlockArray(12)
        assert arr.composed_mul(0, 4095) == 0
        assert arr.gated_count == 36
        assert arr.fired_count == 0

    def test_exhaustive_width2(self):
        arr = MulBlockArray(2)
        for a in range(4):
            for b in range(4):
                assert arr.composed_mul(a, b) == a * b

    def test_exhaustive_width6(self):
        arr = MulBlockArray(6)
        for a in range(64):
            for b in range(64):
                assert arr.composed_mul(a, b) == a * b

    def test_width12_random_and_boundaries(self):
        arr = MulBlockArray(12)
        rng = np.random.default_rng(42)
        pairs = rng.integers(0, 1 << 12, size=(20_000, 2))
        for a, b in pairs.tolist():
            assert arr.composed_mul(a, b) == a * b
        for a in (0, 1, 4095):
            for b in (0, 1, 4095):
                assert arr.composed_mul(a, b) == a * b

    def test_gating_soundness(self):
        # a cell is gated iff its digit pair contains a zero digit
        arr = MulBlockArray(6)
        rng = np.random.default_rng(3)
        for a, b in rng.integers(0, 64, size=(500, 2)).tolist():
            arr.reset()
            arr.composed_mul(a, b)
            nzd_a = sum((a >> (2 * i)) & 3 != 0 for i in range(3))
            nzd_b = sum((b >> (2 * i)) & 3 != 0 for i in range(3))
            assert arr.fired_count == nzd_a * nzd_b
            assert arr.fired_count + arr.gated_count == 9

    def test_commutativity_with_counts(self):
        rng = np.random.default_rng(9)
        for a, b in rng.integers(0, 1 << 12, size=(300, 2)).tolist():
            x, y = MulBlockArray(12), MulBlockArray(12)
            assert x.composed_mul(a, b) == y.composed_mul(b, a)
            assert x.fired_count == y.fired_count
            assert x.gated_count == y.gated_count


class TestGatingStats:
    def test_dense_operands_all_fire(self):
        arr = MulBlockArray(12)
        arr.composed_mul(0b010101010101, 0b111111111111)
        stats = arr.gating_stats()
        assert stats == {"total_cells_fired": 36, "gated_cells": 0,
                         "utilization": 1.0}

    def test_zero_stream_utilization(self):
        arr = MulBlockArray(6)
        rng = np.random.default_rng(5)
        for b in rng.integers(0, 64, size=50).tolist():
            arr.composed_mul(0, b)
        assert arr.gating_stats()["utilization"] == 0.0

    def test_counters_accumulate_until_reset(self):
        arr = MulBlockArray(2)
        arr.composed_mul(3, 2)
        arr.composed_mul(1, 1)
        assert arr.fired_count == 2
        arr.reset()
        assert arr.gating_stats()["total_cells_fired"] == 0
        assert arr.gating_stats()["utilization"] == 0.0


class TestBulk:
    @pytest.mark.parametrize("width", WIDTHS)
    def test_matches_scalar_and_direct(self, width):
        rng = np.random.default_rng(width)
        a = rng.integers(0, 1 << width, size=4000)
        b = rng.integers(0, 1 << width, size=4000)
        prod, fired, gated = composed_mul_bulk(width, a, b)
        assert np.array_equal(prod, a * b)
        arr = MulBlockArray(width)
        for x, y in zip(a.tolist()[:200], b.tolist()[:200]):
            arr.composed_mul(x, y)
        ps, f2, g2 = composed_mul_bulk(width, a[:200], b[:200])
        assert (f2, g2) == (arr.fired_count, arr.gated_count)

    def test_width12_million_pairs(self):
        rng = np.random.default_rng(1_000_003)
        a = rng.integers(0, 1 << 12, size=1_000_000)
        b = rng.integers(0, 1 << 12, size=1_000_000)
        prod, fired, gated = composed_mul_bulk(12, a, b)
        assert np.array_equal(prod, a * b)
        assert fired + gated == 36 * a.size

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            composed_mul_bulk(6, np.array([64]), np.array([0]))
