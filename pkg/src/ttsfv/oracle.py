"""Exact statistics of the stochastic Burgers shock and error metrics.

For shock data ``u_L(xi) = 1 + vL.xi`` and ``u_R(xi) = -1 + vR.xi`` the
entropy solution is a single shock moving with ``s(xi) = v.xi`` where
``v = (vL + vR) / 2``.  Splitting ``xi = (xi_hat, xi_m)``, the shock passes
``x`` at time ``t`` when ``xi_m = c = (x/t - v_hat.xi_hat) / v_m``, so the
innermost integral over ``xi_m`` is done in closed form on ``[0, a]`` and
``[a, 1]`` with ``a = clamp(c, 0, 1)``.  The remaining ``m - 1`` integrals
use nested adaptive Simpson quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .grids import SpatialGrid

__all__ = [
    "ShockOracleParams",
    "adaptive_simpson",
    "exact_pointwise",
    "clamp_a",
    "exact_moments",
    "exact_expectation",
    "exact_second_moment",
    "exact_variance",
    "cell_averages",
    "exact_cell_statistics",
    "l1_relative_error",
    "observed_order",
]


def adaptive_simpson(f: Callable[[float], np.ndarray], a: float, b: float, tol: float = 1e-8,
                     max_depth: int = 50, min_depth: int = 2) -> np.ndarray:
    """Adaptive Simpson quadrature of a scalar or vector valued ``f``.

    Intervals are split until the Richardson error estimate is below the
    share of ``tol`` assigned to them (max norm for vectors).  The first
    ``min_depth`` levels are always split so that narrow features between
    the initial sample points are not missed.
    """
    fa, fm, fb = np.asarray(f(a), float), np.asarray(f(0.5 * (a + b)), float), np.asarray(f(b), float)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = np.zeros_like(whole)
    # explicit stack keeps deep refinement off the Python call stack
    stack = [(a, b, fa, fm, fb, whole, tol, max_depth)]
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        flm = np.asarray(f(0.5 * (a + m)), float)
        frm = np.asarray(f(0.5 * (m + b)), float)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        converged = np.max(np.abs(err)) <= 15.0 * eps and max_depth - depth >= min_depth
        if depth <= 0 or converged:
            total = total + left + right + err / 15.0
        else:
            stack.append((m, b, fm, frm, fb, right, 0.5 * eps, depth - 1))
            stack.append((a, m, fa, flm, fm, left, 0.5 * eps, depth - 1))
    return total


@dataclass(frozen=True)
class ShockOracleParams:
    vL: tuple
    vR: tuple
    tol: float = 1e-8
    max_depth: int = 50

    def __post_init__(self):
        object.__setattr__(self, "vL", tuple(float(v) for v in self.vL))
        object.__setattr__(self, "vR", tuple(float(v) for v in self.vR))
        if len(self.vL) != len(self.vR) or not self.vL:
            raise ConfigurationError("vL and vR must be nonempty and of equal length")

    @property
    def m(self) -> int:
        return len(self.vL)

    @property
    def v(self) -> np.ndarray:
        return 0.5 * (np.array(self.vL) + np.array(self.vR))

    @property
    def deterministic(self) -> bool:
        return not any(self.vL) and not any(self.vR)


def exact_pointwise(t: float, x: float, xi: Sequence[float], params: ShockOracleParams) -> float:
    """Entropy solution at one parameter value; the shock itself takes the left state."""
    xi = np.asarray(xi, dtype=float)
    uL = 1.0 + float(np.dot(params.vL, xi))
    uR = -1.0 + float(np.dot(params.vR, xi))
    s = 0.5 * (uL + uR)
    return uL if x <= s * t else uR


def clamp_a(t: float, x: float, xi_hat: Sequence[float], params: ShockOracleParams) -> float:
    if not t > 0:
        raise ValueError("t must be positive")
    v = params.v
    vm = v[-1]
    if vm == 0:
        raise ConfigurationError("last shock-speed coefficient v_m must be nonzero")
    c = (x / t - float(np.dot(v[:-1], xi_hat))) / vm
    return min(1.0, max(0.0, c))


def _inner(t, x, xi_hat, params):
    """``(E, E2)`` integrated over ``xi_m`` for fixed ``xi_hat``."""
    vL, vR = params.vL, params.vR
    AL = 1.0 + sum(a * b for a, b in zip(vL[:-1], xi_hat))
    AR = -1.0 + sum(a * b for a, b in zip(vR[:-1], xi_hat))
    bL, bR = vL[-1], vR[-1]
    a = clamp_a(t, x, xi_hat, params)

    def lo(A, b):
        # integrals of (A + b s) and its square over s in [0, a]
        return A * a + 0.5 * b * a * a, A * A * a + A * b * a * a + b * b * a ** 3 / 3.0

    def full(A, b):
        return A + 0.5 * b, A * A + A * b + b * b / 3.0

    if params.v[-1] > 0:
        # right state below xi_m = a, left state above
        r1, r2 = lo(AR, bR)
        l1, l2 = lo(AL, bL)
        f1, f2 = full(AL, bL)
        return np.array([r1 + f1 - l1, r2 + f2 - l2])
    l1, l2 = lo(AL, bL)
    r1, r2 = lo(AR, bR)
    f1, f2 = full(AR, bR)
    return np.array([l1 + f1 - r1, l2 + f2 - r2])


def _uniform_moments(c0, coef):
    """Moments of ``c0 + coef.xi`` for independent U(0, 1) parameters."""
    coef = np.asarray(coef)
    mean = c0 + 0.5 * coef.sum()
    return np.array([mean, mean * mean + (coef * coef).sum() / 12.0])


def exact_moments(t: float, x: float, params: ShockOracleParams) -> np.ndarray:
    """``(E[u], E[u^2])`` at ``(t, x)``."""
    if not t > 0:
        raise ValueError("t must be positive")
    v = params.v
    if x <= t * np.minimum(v, 0).sum():
        return _uniform_moments(1.0, params.vL)
    if x > t * np.maximum(v, 0).sum():
        return _uniform_moments(-1.0, params.vR)
    if params.m == 1:
        return _inner(t, x, (), params)

    def level(prefix):
        if len(prefix) == params.m - 1:
            return _inner(t, x, prefix, params)
        return adaptive_simpson(lambda s: level(prefix + (s,)), 0.0, 1.0, params.tol, params.max_depth)

    return level(())


def exact_expectation(t: float, x: float, params: ShockOracleParams) -> float:
    if params.deterministic:
        return 1.0 if x <= 0 else -1.0
    return float(exact_moments(t, x, params)[0])


def exact_second_moment(t: float, x: float, params: ShockOracleParams) -> float:
    if params.deterministic:
        return 1.0
    return float(exact_moments(t, x, params)[1])


def exact_variance(t: float, x: float, params: ShockOracleParams) -> float:
    if params.deterministic:
        return 0.0
    e1, e2 = exact_moments(t, x, params)
    var = float(e2 - e1 * e1)
    return 0.0 if -1e-12 <= var < 0 else var


def cell_averages(fn: Callable[[float], float], grid: SpatialGrid, tol: float = 1e-9) -> np.ndarray:
    """Cell means of ``fn`` to absolute accuracy ``tol``; vector ``fn`` gives ``(nx, k)``."""
    faces = grid.faces
    return np.array([adaptive_simpson(fn, a, b, tol * (b - a)) / (b - a)
                     for a, b in zip(faces[:-1], faces[1:])])


def exact_cell_statistics(t: float, grid: SpatialGrid, params: ShockOracleParams,
                          tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Cell averages of the exact expectation and variance."""

    def fn(x):
        e1, e2 = exact_moments(t, x, params)
        return np.array([e1, e2 - e1 * e1])

    if params.deterministic:
        return cell_averages(lambda x: exact_expectation(t, x, params), grid, tol), np.zeros(grid.nx)
    avg = cell_averages(fn, grid, tol)
    return avg[:, 0], avg[:, 1]


def l1_relative_error(approx: np.ndarray, exact_fn: Callable[[float], float], grid: SpatialGrid,
                      tol: float = 1e-9, exact: np.ndarray | None = None) -> float:
    """``sum |approx_i - avg_i| / sum |avg_i|`` with exact cell averages ``avg_i``.

    Pass precomputed averages as ``exact`` to skip the quadrature.
    """
    if exact is None:
        exact = cell_averages(exact_fn, grid, tol)
    den = np.abs(exact).sum()
    if den == 0:
        raise ValueError("exact solution has zero L1 norm")
    return float(np.abs(np.asarray(approx) - exact).sum() / den)


def observed_order(dx: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log err`` against ``log dx``."""
    return float(np.polyfit(np.log(dx), np.log(err), 1)[0])
