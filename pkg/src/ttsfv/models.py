r"""Conservation laws and stochastic initial data.

State arrays have shape ``(p, K)``: ``p`` conserved components for ``K``
points (stochastic nodes, samples or TT entries).

Burgers: :math:`u_t + (u^2/2)_x = 0`.

Euler, perfect gas: conserved ``(rho, rho u, rho E)`` with
:math:`p = (\gamma - 1)(\rho E - \rho u^2 / 2)`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AdmissibilityError, ConfigurationError

GAMMA = 1.4


# {{{ Burgers

def burgers_flux(u):
    return 0.5 * np.square(u)


def burgers_speed(u):
    return np.abs(u)


# }}}


# {{{ Euler

def euler_pressure(rho, rhou, rhoE, gamma=GAMMA):
    return (gamma - 1.0) * (rhoE - 0.5 * rhou * rhou / rho)


def _first_bad(mask):
    return (int(np.argmax(np.ravel(mask))),)


def check_admissible(rho, p):
    rho = np.asarray(rho)
    p = np.asarray(p)
    bad = ~(rho > 0)
    if bad.any():
        k = _first_bad(bad)
        raise AdmissibilityError(f"nonpositive density {np.ravel(rho)[k[0]]:.6g}", index=k)
    bad = ~(p > 0)
    if bad.any():
        k = _first_bad(bad)
        raise AdmissibilityError(f"nonpositive pressure {np.ravel(p)[k[0]]:.6g}", index=k)


def euler_sound_speed(rho, rhou, rhoE, gamma=GAMMA):
    p = euler_pressure(rho, rhou, rhoE, gamma)
    check_admissible(rho, p)
    return np.sqrt(gamma * p / rho)


def euler_eigenvalues(rho, rhou, rhoE, gamma=GAMMA):
    """``(u - c, u, u + c)``."""
    u = rhou / rho
    c = euler_sound_speed(rho, rhou, rhoE, gamma)
    return u - c, u, u + c


def euler_flux(rho, rhou, rhoE, gamma=GAMMA):
    if np.any(~(np.asarray(rho) > 0)):
        check_admissible(rho, np.ones_like(rho))
    u = rhou / rho
    p = euler_pressure(rho, rhou, rhoE, gamma)
    return np.stack(np.broadcast_arrays(rhou, rhou * u + p, (rhoE + p) * u))


def primitive_to_conserved(W, gamma=GAMMA):
    rho, u, p = W
    return np.stack(np.broadcast_arrays(rho, rho * u, p / (gamma - 1.0) + 0.5 * rho * u * u))


def conserved_to_primitive(U, gamma=GAMMA):
    rho, rhou, rhoE = U
    u = rhou / rho
    return np.stack(np.broadcast_arrays(rho, u, euler_pressure(rho, rhou, rhoE, gamma)))


@dataclass(frozen=True)
class EulerState:
    """One gas state held in conserved variables."""

    rho: float
    rhou: float
    rhoE: float
    gamma: float = GAMMA

    @classmethod
    def from_primitive(cls, rho, u, p, gamma=GAMMA):
        c = primitive_to_conserved(np.array([rho, u, p], dtype=float), gamma)
        return cls(float(c[0]), float(c[1]), float(c[2]), gamma)

    @property
    def velocity(self):
        return self.rhou / self.rho

    @property
    def pressure(self):
        return float(euler_pressure(self.rho, self.rhou, self.rhoE, self.gamma))

    @property
    def sound_speed(self):
        return float(euler_sound_speed(self.rho, self.rhou, self.rhoE, self.gamma))

    def flux(self):
        return euler_flux(self.rho, self.rhou, self.rhoE, self.gamma)

    def eigenvalues(self):
        return tuple(float(v) for v in euler_eigenvalues(self.rho, self.rhou, self.rhoE, self.gamma))


# }}}


# {{{ flux models

class FluxModel:
    """A conservation law: flux, largest wave speed and output variables."""

    name: str
    n_components: int
    component_names: tuple[str, ...]
    primitive_names: tuple[str, ...]

    def flux(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def max_abs_wavespeed(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def primitive(self, U: np.ndarray) -> np.ndarray:
        return U

    def check(self, U: np.ndarray) -> None:
        """Raise :class:`AdmissibilityError` if any state is not physical."""

    def admissible(self, U: np.ndarray) -> np.ndarray:
        """Boolean mask over the ``K`` states."""
        return np.all(np.isfinite(U), axis=0)


class Burgers(FluxModel):
    name = "burgers"
    n_components = 1
    component_names = ("u",)
    primitive_names = ("u",)

    def flux(self, U):
        return burgers_flux(U)

    def max_abs_wavespeed(self, U):
        return burgers_speed(U[0])


class Euler(FluxModel):
    name = "euler"
    n_components = 3
    component_names = ("rho", "rhou", "rhoE")
    primitive_names = ("rho", "u", "p")

    def __init__(self, gamma=GAMMA):
        self.gamma = gamma

    def flux(self, U):
        return euler_flux(U[0], U[1], U[2], self.gamma)

    def max_abs_wavespeed(self, U):
        u = U[1] / U[0]
        return np.abs(u) + euler_sound_speed(U[0], U[1], U[2], self.gamma)

    def primitive(self, U):
        return conserved_to_primitive(U, self.gamma)

    def check(self, U):
        check_admissible(U[0], euler_pressure(U[0], U[1], U[2], self.gamma))

    def admissible(self, U):
        with np.errstate(all="ignore"):
            p = euler_pressure(U[0], U[1], U[2], self.gamma)
            return (U[0] > 0) & (p > 0) & np.all(np.isfinite(U), axis=0)


def get_model(name: str, **kwargs) -> FluxModel:
    if name == "burgers":
        return Burgers()
    if name == "euler":
        return Euler(**kwargs)
    raise ConfigurationError(f"unknown model {name!r}")


# }}}


# {{{ initial conditions

@dataclass(frozen=True)
class StochasticIC:
    """Stochastic initial data ``(x, xi) -> state``.

    ``evaluator(x, xi)`` takes a scalar position and an ``(K, m)`` array of
    parameters and returns primitive variables of shape ``(p, K)``.
    """

    m: int
    evaluator: Callable[[float, np.ndarray], np.ndarray]
    to_conserved: Callable[[np.ndarray], np.ndarray] = field(default=lambda W: W)
    description: str = ""
    params: dict = field(default_factory=dict)

    def primitive(self, x: float, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
        return self.evaluator(float(x), xi)

    def conserved(self, x: float, xi: np.ndarray) -> np.ndarray:
        return self.to_conserved(self.primitive(x, xi))


def ic_burgers(vL: Sequence[float], vR: Sequence[float], x0: float = 0.0) -> StochasticIC:
    """``1 + vL . xi`` left of ``x0``, ``-1 + vR . xi`` right of it.

    The data must form a shock (left value above right value) for every
    ``xi`` in the unit cube.
    """
    vL = np.asarray(vL, dtype=np.float64)
    vR = np.asarray(vR, dtype=np.float64)
    if vL.shape != vR.shape or vL.ndim != 1:
        raise ConfigurationError("vL and vR must be vectors of equal length")
    # min over [0,1]^m of u_L - u_R = 2 + sum(vL - vR) xi
    gap = 2.0 + np.minimum(vL - vR, 0.0).sum()
    if not gap > 0:
        raise ConfigurationError(
            f"shock condition u_L > u_R fails somewhere in [0,1]^{vL.size} (min gap {gap:.3g})")

    def evaluator(x, xi):
        if x < x0:
            return (1.0 + xi @ vL)[None, :]
        return (-1.0 + xi @ vR)[None, :]

    return StochasticIC(vL.size, evaluator, description="burgers shock",
                        params={"vL": vL.tolist(), "vR": vR.tolist(), "x0": x0})


SOD_LEFT = np.array([[1.0, 0.1, 0.1, 0.05],
                     [0.0, -0.01, 0.05, 0.01],
                     [1.0, 0.1, -0.01, 0.01]])
SOD_RIGHT = np.array([[0.125, 0.05, -0.05, 0.01],
                      [0.0, 0.05, -0.01, 0.0],
                      [0.1, 0.01, 0.05, -0.01]])


def ic_sod(gamma: float = GAMMA) -> StochasticIC:
    """Sod tube on (0, 1) with three uniform parameters; rows are rho, u, p."""

    def evaluator(x, xi):
        coef = SOD_LEFT if x < 0.5 else SOD_RIGHT
        return coef[:, :1] + coef[:, 1:] @ xi.T

    return StochasticIC(3, evaluator, lambda W: primitive_to_conserved(W, gamma), "sod")


def ic_shu_osher(gamma: float = GAMMA) -> StochasticIC:
    """Shock/sine-wave interaction on (0, 1) with two uniform parameters."""

    def evaluator(x, xi):
        xi1, xi2 = xi[:, 0], xi[:, 1]
        if x < 0.125:
            return np.stack([3.857143 + 0.1 * xi1, 2.629369 + 0.1 * xi1, 10.33333 + xi1])
        rho = 1.0 + 0.2 * (1.0 + xi2) * np.sin(16.0 * np.pi * x)
        return np.stack([rho, np.zeros_like(xi2), 1.0 + 0.1 * xi2])

    return StochasticIC(2, evaluator, lambda W: primitive_to_conserved(W, gamma), "shu_osher")


# }}}
