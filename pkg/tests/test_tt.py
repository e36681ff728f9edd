import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttsfv.errors import ShapeError
from ttsfv.tt import (
    TensorTrain,
    TruncationPolicy,
    add,
    coefficient_count,
    constant,
    contract_weights,
    dump,
    element,
    evaluate,
    hadamard,
    norm_frobenius,
    rank_one,
    round_tt,
    scale,
    sub,
    to_dense,
    tt_from_dense,
    zeros,
)

from conftest import random_tt

EXACT = TruncationPolicy(0.0)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestConstruction:
    def test_boundary_ranks_checked(self):
        with pytest.raises(ShapeError):
            TensorTrain([np.ones((2, 3, 1))])
        with pytest.raises(ShapeError):
            TensorTrain([np.ones((1, 3, 2)), np.ones((3, 3, 1))])

    def test_cores_are_read_only(self, rng):
        A = random_tt(rng, (3, 4), (2,))
        with pytest.raises(ValueError):
            A.cores[0][0, 0, 0] = 1.0

    def test_separable_tensor_is_rank_one(self, rng):
        a, b, c = (rng.uniform(0.5, 2.0, n) for n in (4, 5, 6))
        T = np.einsum("i,j,k->ijk", a, b, c)
        A = tt_from_dense(T, TruncationPolicy(1e-12))
        assert A.ranks == (1, 1, 1, 1)
        assert rel(to_dense(A), T) < 1e-13

    def test_zero_tensor(self):
        A = tt_from_dense(np.zeros((4, 4, 4)))
        assert A.ranks == (1, 1, 1, 1)
        assert all(not c.any() for c in A.cores)

    def test_exact_rank_recovery(self, rng):
        B = random_tt(rng, (6, 6, 6), (3, 2))
        T = to_dense(B)
        A = tt_from_dense(T, EXACT)
        assert rel(to_dense(A), T) <= 1e-12
        A = tt_from_dense(T, TruncationPolicy(1e-10))
        assert A.ranks == (1, 3, 2, 1)

    @pytest.mark.parametrize("shape", [(5,), (3, 7), (4, 3, 5), (8, 8, 8, 8)])
    def test_round_trip(self, rng, shape):
        T = rng.standard_normal(shape)
        A = tt_from_dense(T, EXACT)
        assert rel(to_dense(A), T) <= 1e-12

    def test_truncated_error_bound(self, rng):
        T = rng.standard_normal((6, 5, 7, 4))
        for eps in (0.5, 0.1, 0.01):
            A = tt_from_dense(T, TruncationPolicy(eps))
            assert rel(to_dense(A), T) <= eps * np.sqrt(3)

    def test_rank_cap(self, rng):
        T = rng.standard_normal((6, 6, 6))
        A = tt_from_dense(T, TruncationPolicy(0.0, rank_cap=2))
        assert max(A.ranks) <= 2


class TestEvaluation:
    def test_constant(self):
        A = constant((2, 2), 3.0)
        np.testing.assert_array_equal(to_dense(A), np.full((2, 2), 3.0))
        assert element(A, (1, 0)) == 3.0

    def test_order_one(self):
        A = rank_one([np.array([1.0, 2.0, 3.0])])
        np.testing.assert_array_equal(to_dense(A), [1.0, 2.0, 3.0])

    def test_separable_element(self):
        a, b = np.array([1.0, -2.0]), np.array([0.5, 3.0, 4.0])
        A = rank_one([a, b])
        for i, j in itertools.product(range(2), range(3)):
            assert element(A, (i, j)) == a[i] * b[j]

    def test_element_matches_dense(self, rng):
        A = random_tt(rng, (3, 4, 2, 3), (2, 3, 2))
        D = to_dense(A)
        for idx in itertools.product(*map(range, A.shape)):
            assert abs(element(A, idx) - D[idx]) <= 1e-14 * max(1.0, abs(D[idx]))

    def test_batched_evaluate(self, rng):
        A = random_tt(rng, (5, 4, 6), (3, 2))
        D = to_dense(A)
        idx = np.array(list(itertools.product(*map(range, A.shape))))
        np.testing.assert_allclose(evaluate(A, idx), D.ravel(), rtol=0, atol=1e-13)

    def test_out_of_bounds(self, rng):
        A = random_tt(rng, (3, 3), (2,))
        with pytest.raises(IndexError):
            element(A, (3, 0))
        with pytest.raises(IndexError):
            element(A, (0,))


class TestAlgebra:
    def test_additive_identity_and_inverse(self, rng):
        A = random_tt(rng, (4, 5, 3), (2, 2))
        np.testing.assert_allclose(to_dense(add(A, zeros(A.shape))), to_dense(A), atol=0)
        assert np.abs(to_dense(add(A, scale(A, -1.0)))).max() <= 1e-14

    def test_add_dense_oracle(self, rng):
        A = random_tt(rng, (4, 5, 3), (2, 2))
        B = random_tt(rng, (4, 5, 3), (2, 2))
        C = add(A, B)
        assert C.ranks == (1, 4, 4, 1)
        np.testing.assert_allclose(to_dense(C), to_dense(A) + to_dense(B), rtol=0, atol=1e-13)

    def test_shape_mismatch(self, rng):
        A = random_tt(rng, (4, 5), (2,))
        B = random_tt(rng, (4, 4), (2,))
        with pytest.raises(ShapeError):
            add(A, B)
        with pytest.raises(ShapeError):
            hadamard(A, B)

    def test_hadamard(self, rng):
        A = random_tt(rng, (4, 3, 5), (2, 3))
        B = random_tt(rng, (4, 3, 5), (3, 2))
        C = hadamard(A, B)
        assert C.ranks == (1, 6, 6, 1)
        np.testing.assert_allclose(to_dense(C), to_dense(A) * to_dense(B), rtol=0, atol=1e-13)
        np.testing.assert_allclose(to_dense(hadamard(A, constant(A.shape, 1.0))), to_dense(A),
                                   rtol=0, atol=1e-14)
        idx = (1, 2, 3)
        assert np.isclose(element(hadamard(A, A), idx), element(A, idx) ** 2, rtol=1e-14)

    def test_scale(self, rng):
        A = random_tt(rng, (4, 3, 5), (2, 3))
        np.testing.assert_array_equal(to_dense(scale(A, 1.0)), to_dense(A))
        assert not to_dense(scale(A, 0.0)).any()
        np.testing.assert_allclose(to_dense(scale(A, -2.0)), -2.0 * to_dense(A), rtol=1e-14)
        assert scale(A, -2.0).ranks == A.ranks

    def test_operators(self, rng):
        A = random_tt(rng, (3, 3), (2,))
        B = random_tt(rng, (3, 3), (2,))
        np.testing.assert_allclose(to_dense(A - B), to_dense(sub(A, B)))
        np.testing.assert_allclose(to_dense(2.0 * A), 2.0 * to_dense(A))
        np.testing.assert_allclose(to_dense(A * B), to_dense(A) * to_dense(B))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 4), s=st.floats(-5, 5))
    def test_algebra_equivalence(self, seed, m, s):
        rng = np.random.default_rng(seed)
        shape = tuple(rng.integers(1, 5, size=m))
        A = random_tt(rng, shape, tuple(rng.integers(1, 4, size=m - 1)))
        B = random_tt(rng, shape, tuple(rng.integers(1, 4, size=m - 1)))
        dA, dB = to_dense(A), to_dense(B)
        tol = 1e-12 * max(1.0, np.abs(dA).max(), np.abs(dB).max()) ** 2
        assert np.abs(to_dense(add(A, B)) - (dA + dB)).max() <= tol
        assert np.abs(to_dense(hadamard(A, B)) - dA * dB).max() <= tol
        assert np.abs(to_dense(scale(A, s)) - s * dA).max() <= tol * max(1.0, abs(s))


class TestRounding:
    def test_round_of_doubled_tt(self, rng):
        A = random_tt(rng, (5, 6, 4, 5), (3, 3, 3))
        R = round_tt(add(A, A), TruncationPolicy(1e-12))
        assert R.ranks == A.ranks
        np.testing.assert_allclose(to_dense(R), 2 * to_dense(A), rtol=0,
                                   atol=1e-12 * np.abs(to_dense(A)).max())

    def test_rank_one_unchanged(self):
        A = rank_one([np.arange(1.0, 4.0), np.array([2.0, -1.0]), np.ones(3)])
        R = round_tt(A, TruncationPolicy(1e-8))
        assert R.ranks == (1, 1, 1, 1)
        np.testing.assert_allclose(to_dense(R), to_dense(A), rtol=1e-14)

    def test_rank_cap_matches_svd_energy(self, rng):
        A = random_tt(rng, (6, 7), (2,))
        D = to_dense(A)
        R = round_tt(A, TruncationPolicy(0.0, rank_cap=1))
        assert R.ranks == (1, 1, 1)
        s = np.linalg.svd(D, compute_uv=False)
        discarded = np.sqrt(np.sum(s[1:] ** 2))
        err = np.linalg.norm(to_dense(R) - D)
        assert abs(err - discarded) <= 0.1 * discarded

    def test_rank_cap_three_modes(self, rng):
        A = random_tt(rng, (5, 5, 5), (3, 3))
        R = round_tt(A, TruncationPolicy(0.0, rank_cap=2))
        assert max(R.ranks) <= 2

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_error_bound_many(self, m):
        rng = np.random.default_rng(m)
        for trial in range(100):
            shape = tuple(rng.integers(2, 6, size=m))
            A = random_tt(rng, shape, tuple(rng.integers(1, 5, size=m - 1)))
            eps = 10.0 ** rng.uniform(-6, -0.5)
            R = round_tt(A, TruncationPolicy(eps))
            dA = to_dense(A)
            assert np.linalg.norm(to_dense(R) - dA) <= eps * np.sqrt(m - 1) * np.linalg.norm(dA) * (1 + 1e-10)
            assert all(r <= q for r, q in zip(R.ranks, A.ranks))

    def test_idempotent_ranks(self, rng):
        A = random_tt(rng, (6, 6, 6), (4, 4))
        pol = TruncationPolicy(0.05)
        R1 = round_tt(A, pol)
        R2 = round_tt(R1, pol)
        assert R2.ranks == R1.ranks

    def test_zero(self):
        Z = round_tt(sub(constant((3, 3), 1.0), constant((3, 3), 1.0)))
        assert Z.ranks == (1, 1, 1)
        assert np.abs(to_dense(Z)).max() <= 1e-15


class TestReductions:
    def test_contract_constant(self):
        A = constant((3, 4, 5), 2.5)
        w = [np.full(n, 1.0 / n) for n in A.shape]
        assert np.isclose(contract_weights(A, w), 2.5, rtol=1e-15)

    def test_contract_ones_is_sum(self, rng):
        A = random_tt(rng, (4, 5, 3), (2, 3))
        assert np.isclose(contract_weights(A, [np.ones(n) for n in A.shape]),
                          to_dense(A).sum(), rtol=1e-12)

    def test_contract_zero_weight(self, rng):
        A = random_tt(rng, (4, 5, 3), (2, 3))
        w = [np.ones(4), np.zeros(5), np.ones(3)]
        assert contract_weights(A, w) == 0.0

    def test_contract_length_mismatch(self, rng):
        A = random_tt(rng, (4, 5), (2,))
        with pytest.raises(ShapeError):
            contract_weights(A, [np.ones(4), np.ones(4)])

    def test_contract_never_densifies(self):
        # 20**40 entries would never fit; the core-by-core path is still instant
        A = constant((20,) * 40, 1.0)
        w = [np.full(20, 0.05)] * 40
        assert np.isclose(contract_weights(A, w), 1.0, rtol=1e-12)

    @pytest.mark.parametrize("shape", [(6,), (6, 6), (2, 6, 3), (6, 6, 6)])
    def test_contract_dense_oracle(self, rng, shape):
        A = random_tt(rng, shape, (3,) * (len(shape) - 1))
        w = [rng.standard_normal(n) for n in shape]
        dense = to_dense(A)
        for wl in reversed(w):
            dense = dense @ wl
        assert abs(contract_weights(A, w) - dense) <= 1e-12 * max(1.0, abs(dense))

    def test_norm(self, rng):
        assert norm_frobenius(zeros((3, 3))) == 0.0
        assert np.isclose(norm_frobenius(constant((3, 3), 2.0)), 6.0, rtol=1e-15)
        A = random_tt(rng, (5, 4, 6), (3, 2))
        assert abs(norm_frobenius(A) / np.linalg.norm(to_dense(A)) - 1) <= 1e-12

    def test_coefficient_count(self, rng):
        A = random_tt(rng, (20, 20, 20), (5, 5))
        assert coefficient_count(A) == 700
        assert coefficient_count(constant((7,) * 6, 1.0)) == 42
        B = random_tt(rng, (20,) * 8, (5,) * 7)
        assert coefficient_count(B) == 3200


def test_dump_format(rng):
    A = rank_one([np.array([1.0, 0.1]), np.array([3.0])])
    text = dump(A)
    assert text.splitlines()[:3] == ["TensorTrain", "shape 2 1", "ranks 1 1 1"]
    assert "0.10000000000000001" in text
