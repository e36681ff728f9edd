"""Midpoint grids in space and in the stochastic parameters, and TT statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tt import TensorTrain, TruncationPolicy, contract_weights, hadamard, round_tt

__all__ = [
    "SpatialGrid",
    "StochasticGrid",
    "Density",
    "weight_vectors",
    "expectation",
    "variance",
    "field_statistics",
    "VARIANCE_CLAMP",
]

#: negative variances down to this size are roundoff and reported as zero
VARIANCE_CLAMP = 1e-12


@dataclass(frozen=True)
class SpatialGrid:
    a: float
    b: float
    nx: int

    def __post_init__(self):
        if self.nx < 3:
            # the MUSCL stencil reaches one cell either side
            raise ValueError(f"need at least three cells, got nx={self.nx}")
        if not self.b > self.a:
            raise ValueError(f"empty domain ({self.a}, {self.b})")

    @property
    def dx(self) -> float:
        return (self.b - self.a) / self.nx

    @property
    def centers(self) -> np.ndarray:
        return self.a + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return self.a + np.arange(self.nx + 1) * self.dx


@dataclass(frozen=True)
class Density:
    """Per-dimension probability density; only U(0, 1) is shipped."""

    kind: str = "uniform01"

    def __post_init__(self):
        if self.kind != "uniform01":
            raise ValueError(f"unsupported density {self.kind!r}")

    def pdf(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=np.float64)
        return ((xi >= 0) & (xi <= 1)).astype(np.float64)


@dataclass(frozen=True)
class StochasticGrid:
    m: int
    nxi: int
    density: Density = field(default_factory=Density)

    def __post_init__(self):
        if self.m < 1 or self.nxi < 1:
            raise ValueError(f"need m >= 1 and nxi >= 1, got m={self.m}, nxi={self.nxi}")

    @property
    def dxi(self) -> float:
        return 1.0 / self.nxi

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.nxi) + 0.5) * self.dxi

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nxi,) * self.m

    @property
    def size(self) -> int:
        return self.nxi ** self.m


def weight_vectors(g: StochasticGrid) -> list[np.ndarray]:
    """Midpoint weights ``pdf(xi_j) * dxi`` for each dimension."""
    w = g.density.pdf(g.nodes) * g.dxi
    return [w] * g.m


def _check(A: TensorTrain, g: StochasticGrid):
    if A.shape != g.shape:
        raise ShapeError(f"tensor train of shape {A.shape} on a grid of shape {g.shape}")


def expectation(A: TensorTrain, g: StochasticGrid) -> float:
    _check(A, g)
    return contract_weights(A, weight_vectors(g))


def variance(A: TensorTrain, g: StochasticGrid, policy: TruncationPolicy = TruncationPolicy()) -> float:
    """``E[A^2] - E[A]^2`` with the square formed and rounded in TT format."""
    _check(A, g)
    second = expectation(round_tt(hadamard(A, A), policy), g)
    mean = expectation(A, g)
    var = second - mean * mean
    if -VARIANCE_CLAMP <= var < 0.0:
        var = 0.0
    return var


def field_statistics(F, g: StochasticGrid, policy: TruncationPolicy = TruncationPolicy()):
    """Per-cell expectation and variance of a hybrid field.

    ``F`` is a :class:`~ttsfv.hybrid.HybridField` or a ``(p, nx)`` nested
    list of TTs.  Returns two arrays of shape ``(p, nx)``.
    """
    cells = getattr(F, "cells", F)
    p = len(cells)
    nx = len(cells[0])
    mean = np.empty((p, nx))
    var = np.empty((p, nx))
    for k in range(p):
        for i in range(nx):
            mean[k, i] = expectation(cells[k][i], g)
            var[k, i] = variance(cells[k][i], g, policy)
    return mean, var
