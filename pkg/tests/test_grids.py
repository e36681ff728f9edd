import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttsfv.errors import ShapeError
from ttsfv.grids import (
    Density,
    SpatialGrid,
    StochasticGrid,
    expectation,
    field_statistics,
    variance,
    weight_vectors,
)
from ttsfv.tt import TruncationPolicy, constant, rank_one, to_dense

from conftest import random_tt


def dense_weights(g):
    W = np.ones(g.shape)
    for ax, w in enumerate(weight_vectors(g)):
        shape = [1] * g.m
        shape[ax] = -1
        W = W * w.reshape(shape)
    return W


class TestGrids:
    def test_spatial(self):
        g = SpatialGrid(-1.0, 1.0, 20)
        assert g.dx == 0.1
        np.testing.assert_allclose(g.centers[:2], [-0.95, -0.85])
        assert len(g.faces) == 21

    @pytest.mark.parametrize("nx", [0, 1, 2])
    def test_too_few_cells(self, nx):
        with pytest.raises(ValueError):
            SpatialGrid(0.0, 1.0, nx)

    def test_empty_domain(self):
        with pytest.raises(ValueError):
            SpatialGrid(1.0, 1.0, 10)

    def test_nodes_inside(self):
        g = StochasticGrid(2, 7)
        assert np.all((g.nodes > 0) & (g.nodes < 1))
        assert g.shape == (7, 7) and g.size == 49

    def test_unknown_density(self):
        with pytest.raises(ValueError):
            Density("gaussian")

    @pytest.mark.parametrize("nxi,w", [(4, 0.25), (20, 0.05)])
    def test_uniform_weights(self, nxi, w):
        for v in weight_vectors(StochasticGrid(3, nxi)):
            np.testing.assert_allclose(v, w, rtol=1e-15)

    def test_weights_sum_to_one(self):
        for nxi in range(1, 101):
            assert abs(weight_vectors(StochasticGrid(1, nxi))[0].sum() - 1.0) <= 1e-12


class TestStatistics:
    def test_constant(self):
        g = StochasticGrid(3, 5)
        assert expectation(constant(g.shape, 2.5), g) == pytest.approx(2.5, abs=1e-14)
        assert variance(constant(g.shape, 2.5), g) == 0.0

    def test_linear_is_exact(self):
        g = StochasticGrid(2, 9)
        A = rank_one([g.nodes, np.ones(9)])
        assert abs(expectation(A, g) - 0.5) <= 1e-15

    def test_midpoint_variance(self):
        g = StochasticGrid(1, 20)
        A = rank_one([g.nodes])
        # sum xi_j^2 dxi = 1/3 - dxi^2/12
        assert variance(A, g, TruncationPolicy(1e-14)) == pytest.approx(0.0831250, abs=1e-13)

    @pytest.mark.parametrize("seed", range(4))
    def test_random_vs_dense(self, seed):
        rng = np.random.default_rng(seed)
        g = StochasticGrid(3, 6)
        A = random_tt(rng, g.shape, (3, 2))
        D, W = to_dense(A), dense_weights(g)
        assert abs(expectation(A, g) - (D * W).sum()) <= 1e-12
        dense_var = (D * D * W).sum() - (D * W).sum() ** 2
        assert abs(variance(A, g, TruncationPolicy(1e-14)) - dense_var) <= 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            expectation(constant((4, 4), 1.0), StochasticGrid(2, 5))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=4),
           st.integers(1, 12))
    def test_multilinear_exact(self, coeffs, nxi):
        # product of per-dimension affine functions: midpoint rule is exact
        g = StochasticGrid(len(coeffs), nxi)
        A = rank_one([a + b * g.nodes for a, b in coeffs])
        exact = np.prod([a + 0.5 * b for a, b in coeffs])
        assert abs(expectation(A, g) - exact) <= 1e-12 * max(1.0, abs(exact))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([1e-8, 1e-10, 1e-12]))
    def test_variance_nonnegative(self, seed, eps):
        rng = np.random.default_rng(seed)
        g = StochasticGrid(3, 5)
        A = random_tt(rng, g.shape, (2, 2))
        assert variance(A, g, TruncationPolicy(eps)) >= 0.0

    def test_contraction_cost_is_linear(self, monkeypatch):
        # weights are applied one mode at a time, so the work is one pass over the cores
        import ttsfv.tt as tt

        g = StochasticGrid(4, 10)
        A = random_tt(np.random.default_rng(0), g.shape, (3, 4, 2))
        cost = []
        real = np.tensordot

        def counting(a, b, axes):
            out = real(a, b, axes)
            cost.append(np.size(a) + np.size(out))  # contraction plus the rank-vector product
            return out

        monkeypatch.setattr(tt.np, "tensordot", counting)
        expectation(A, g)
        assert len(cost) == A.order
        assert sum(cost) <= 4 * sum(c.size for c in A.cores)


class TestFieldStatistics:
    def test_uniform_constant(self):
        g = StochasticGrid(2, 4)
        cells = [[constant(g.shape, 3.0) for _ in range(5)]]
        mean, var = field_statistics(cells, g)
        np.testing.assert_allclose(mean, 3.0, rtol=1e-14)
        assert np.all(var == 0.0)

    def test_single_cell(self):
        g = StochasticGrid(1, 4)
        mean, var = field_statistics([[rank_one([g.nodes])]], g)
        assert mean.shape == var.shape == (1, 1)

    def test_matches_dense_run(self):
        from ttsfv.hybrid import SolverConfig, run
        from ttsfv.models import Burgers, ic_burgers
        from ttsfv.reference import dense_sfv_reference

        grid, g = SpatialGrid(-1, 1, 10), StochasticGrid(2, 4)
        ic = ic_burgers([0.1, -0.1], [0.1, 0.05])
        cfg = SolverConfig(policy=TruncationPolicy(1e-12), t_final=0.35)
        F, _ = run(Burgers(), ic, grid, g, cfg)
        D = dense_sfv_reference(Burgers(), ic, grid, g, cfg)[0]
        W = dense_weights(g)
        mean, var = field_statistics(F, g, TruncationPolicy(1e-14))
        dmean = (D * W).sum(axis=(1, 2))
        dvar = (D * D * W).sum(axis=(1, 2)) - dmean ** 2
        np.testing.assert_allclose(mean[0], dmean, atol=1e-10)
        np.testing.assert_allclose(var[0], dvar, atol=1e-10)
