"""Tests for the extended-integer matrix core."""

import itertools

import numpy as np
import pytest

from bdmp.matrix_core import (
    INF,
    MAX_MAGNITUDE,
    BDWitness,
    FiniteOverflowError,
    FormatError,
    PreconditionError,
    bool_matmul,
    check_bd,
    checked_add,
    format_matrix,
    minplus_identity,
    naive_minplus,
    pad_to_multiple,
    parse_matrix,
    small_entry_minplus,
)
from helpers import triple_loop_minplus


def rand_matrix(rng, rows, cols, lo=-9, hi=9, inf_frac=0.2):
    m = rng.integers(lo, hi + 1, size=(rows, cols)).astype(np.int64)
    m[rng.random((rows, cols)) < inf_frac] = INF
    return m


class TestNaiveMinplus:
    def test_hand_checked_2x2(self):
        a = [[0, 1], [1, 2]]
        b = [[0, 1], [1, 0]]
        got = naive_minplus(a, b)
        assert got.tolist() == [[0, 1], [1, 2]]
        assert np.array_equal(got, triple_loop_minplus(a, b))

    def test_absorbing_infinity(self):
        assert naive_minplus([[INF]], [[5]]).tolist() == [[INF]]

    def test_all_zeros(self):
        z = np.zeros((6, 6), dtype=np.int64)
        assert np.array_equal(naive_minplus(z, z), z)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_triple_loop(self, seed):
        rng = np.random.default_rng(seed)
        a = rand_matrix(rng, 7, 5)
        b = rand_matrix(rng, 5, 9)
        assert np.array_equal(naive_minplus(a, b), triple_loop_minplus(a, b))

    def test_identity(self):
        rng = np.random.default_rng(3)
        a = rand_matrix(rng, 6, 6)
        assert np.array_equal(naive_minplus(a, minplus_identity(6)), a)
        assert np.array_equal(naive_minplus(minplus_identity(6), a), a)

    @pytest.mark.parametrize("seed", range(5))
    def test_associative(self, seed):
        rng = np.random.default_rng(100 + seed)
        a = rand_matrix(rng, 4, 5)
        b = rand_matrix(rng, 5, 3)
        c = rand_matrix(rng, 3, 6)
        left = naive_minplus(naive_minplus(a, b), c)
        right = naive_minplus(a, naive_minplus(b, c))
        assert np.array_equal(left, right)

    def test_dimension_mismatch(self):
        with pytest.raises(PreconditionError):
            naive_minplus(np.zeros((2, 3), np.int64), np.zeros((2, 3), np.int64))

    def test_magnitude_validation(self):
        big = np.full((2, 2), MAX_MAGNITUDE + 1, dtype=np.int64)
        with pytest.raises(FiniteOverflowError):
            naive_minplus(big, big)

    def test_checked_add(self):
        assert checked_add(INF, 5) == INF
        assert checked_add(3, 4) == 7
        with pytest.raises(FiniteOverflowError):
            checked_add(MAX_MAGNITUDE, MAX_MAGNITUDE + 5)


class TestSmallEntryMinplus:
    def test_hand_checked_m1(self):
        # oracle-derived values for the M=1 pair
        a = [[0, 1], [1, 0]]
        b = [[1, 0], [0, 1]]
        want = triple_loop_minplus(a, b)
        assert want.tolist() == [[1, 0], [0, 1]]
        assert np.array_equal(small_entry_minplus(a, b, 1), want)

    def test_zero_bound_all_zero(self):
        z = np.zeros((4, 4), dtype=np.int64)
        assert np.array_equal(small_entry_minplus(z, z, 0), z)

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_naive_16(self, seed):
        rng = np.random.default_rng(seed)
        a = rand_matrix(rng, 16, 16, -3, 3)
        b = rand_matrix(rng, 16, 16, -3, 3)
        want = naive_minplus(a, b)
        assert np.array_equal(small_entry_minplus(a, b, 3), want)

    def test_exhaustive_2x2(self):
        vals = [-1, 0, 1, INF]
        mats = [
            np.array(m, dtype=np.int64).reshape(2, 2)
            for m in itertools.product(vals, repeat=4)
        ]
        # batch the oracle over all ordered pairs
        A = np.stack(mats)
        amask = A == INF
        a3 = np.where(amask, 0, A)
        for b in mats:
            bmask = b == INF
            b0 = np.where(bmask, 0, b)
            sums = a3[:, :, :, None] + b0[None, None, :, :]
            bad = amask[:, :, :, None] | bmask[None, None, :, :]
            sums = np.where(bad, INF, sums)
            want = sums.min(axis=2)
            for idx, a in enumerate(mats):
                got = small_entry_minplus(a, b, 1)
                assert np.array_equal(got, want[idx])

    @pytest.mark.parametrize("seed,size", [(s, n) for s in range(6) for n in (8, 33, 64)])
    def test_decompose_strategy_matches(self, seed, size):
        rng = np.random.default_rng(1000 + seed)
        a = rand_matrix(rng, size, size, -4, 4)
        b = rand_matrix(rng, size, size, -4, 4)
        want = naive_minplus(a, b)
        assert np.array_equal(small_entry_minplus(a, b, 4, strategy="decompose"), want)

    def test_decompose_above_cutoff(self):
        rng = np.random.default_rng(77)
        a = rand_matrix(rng, 70, 70, -2, 2)
        b = rand_matrix(rng, 70, 70, -2, 2)
        want = naive_minplus(a, b)
        assert np.array_equal(small_entry_minplus(a, b, 2, strategy="decompose"), want)
        assert np.array_equal(small_entry_minplus(a, b, 2), want)

    def test_entry_outside_bound(self):
        a = np.array([[0, 5], [0, 0]], dtype=np.int64)
        with pytest.raises(PreconditionError):
            small_entry_minplus(a, a, 3)

    def test_bool_matmul_kernel(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.random((13, 31)) < 0.3
            b = rng.random((31, 70)) < 0.3
            assert np.array_equal(bool_matmul(a, b), (a @ b) > 0)


class TestCheckBD:
    def test_within_cap(self):
        assert check_bd([[0, 1], [1, 2]], 1) == BDWitness(True, 1, None)

    def test_row_violation_witness(self):
        wit = check_bd([[0, 2], [0, 0]], 1)
        assert not wit.is_bd
        assert wit.width == 2
        assert wit.violation == ("row", 0, 0)

    def test_col_violation_witness(self):
        wit = check_bd([[0, 1], [9, 1]], 3)
        assert wit.violation == ("col", 0, 0)

    def test_infinity_never_bd(self):
        wit = check_bd([[0, INF], [0, 0]], 10**9)
        assert not wit.is_bd
        assert wit.width is None
        assert wit.violation == ("inf", 0, 1)

    @pytest.mark.parametrize("seed", range(10))
    def test_transpose_invariant(self, seed):
        rng = np.random.default_rng(seed)
        m = np.cumsum(rng.integers(-2, 3, size=(9, 9)), axis=0).astype(np.int64)
        for cap in (0, 1, 2, 5, 20):
            assert check_bd(m, cap).is_bd == check_bd(m.T, cap).is_bd

    def test_smallest_width_reported(self):
        m = [[0, 3], [1, 5]]
        wit = check_bd(m, 100)
        assert wit.is_bd and wit.width == 4


class TestPadding:
    def test_replicates_last_row_col(self):
        m = np.arange(9, dtype=np.int64).reshape(3, 3)
        padded, rec = pad_to_multiple(m, 2)
        assert padded.shape == (4, 4)
        assert np.array_equal(padded[3, :3], m[2])
        assert np.array_equal(padded[:3, 3], m[:, 2])
        assert padded[3, 3] == m[2, 2]
        assert rec.padded

    def test_identity_when_multiple(self):
        m = np.zeros((4, 4), dtype=np.int64)
        padded, rec = pad_to_multiple(m, 2)
        assert padded is m
        assert not rec.padded

    def test_preserves_bd_width(self):
        rng = np.random.default_rng(8)
        m = np.cumsum(np.cumsum(rng.integers(0, 2, (5, 5)), 0), 1).astype(np.int64)
        w = check_bd(m, 10**9).width
        padded, _ = pad_to_multiple(m, 4)
        assert check_bd(padded, w).is_bd

    @pytest.mark.parametrize("seed", range(5))
    def test_cropped_product_matches(self, seed):
        rng = np.random.default_rng(40 + seed)
        a = rand_matrix(rng, 5, 5, inf_frac=0.1)
        b = rand_matrix(rng, 5, 5, inf_frac=0.1)
        pa, rec = pad_to_multiple(a, 4)
        pb, _ = pad_to_multiple(b, 4)
        full = naive_minplus(pa, pb)
        assert np.array_equal(full[:5, :5], naive_minplus(a, b))

    def test_bad_delta(self):
        with pytest.raises(PreconditionError):
            pad_to_multiple(np.zeros((2, 2), np.int64), 0)


class TestTextFormat:
    def test_round_trip(self):
        rng = np.random.default_rng(2)
        m = rand_matrix(rng, 4, 7)
        assert np.array_equal(parse_matrix(format_matrix(m)), m)

    def test_parse_infinity(self):
        m = parse_matrix("1 2\n3 inf\n")
        assert m.tolist() == [[3, INF]]

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "2\n1 2\n",
            "1 2\n1\n",
            "1 2\n1 2\n3 4\n",
            "1 1\nx\n",
            "1 1\n1.5\n",
        ],
    )
    def test_rejects_malformed(self, text):
        with pytest.raises(FormatError):
            parse_matrix(text)
