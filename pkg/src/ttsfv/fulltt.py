"""MUSCL finite volumes on a single tensor train per component.

The first mode of each tensor train is the spatial cell index, the
remaining modes are the stochastic grid.  Neighbour access is a shift
matrix applied to the spatial core only, so the stencil never unfolds the
train.  The outflow variants of the shift matrices repeat the boundary row
instead of inserting zeros; this reproduces the ghost-cell treatment of the
hybrid solver, with one exception handled explicitly: the flux through the
left boundary face, which the left shift of the interface fluxes cannot
produce.  It is computed from the first spatial row and embedded with a
unit spatial core.
"""

from __future__ import annotations

import logging
import time

import numpy as np

from .cross import cross_interpolate
from .errors import ConfigurationError, ShapeError
from .grids import SpatialGrid, StochasticGrid
from .hybrid import (
    RunDiagnostics,
    SolverConfig,
    _cross,
    _located,
    _max_speed,
    local_speed,
    minmod,
    numerical_flux,
)
from .models import Burgers, FluxModel, StochasticIC
from .tt import TensorTrain, add, coefficient_count, hadamard, round_tt, scale, sub, to_dense

__all__ = [
    "FullTTField",
    "shift_matrix",
    "shift_spatial",
    "spatial_row",
    "embed_row",
    "init_fulltt",
    "reconstruct_fulltt",
    "numerical_flux_fulltt",
    "step_fulltt",
    "run_fulltt",
]

log = logging.getLogger(__name__)


class FullTTField:
    __slots__ = ("grid", "sgrid", "comps")

    def __init__(self, grid: SpatialGrid, sgrid: StochasticGrid, comps):
        comps = tuple(comps)
        shape = (grid.nx,) + sgrid.shape
        for A in comps:
            if A.shape != shape:
                raise ShapeError(f"component of shape {A.shape}, expected {shape}")
        self.grid, self.sgrid, self.comps = grid, sgrid, comps

    @property
    def components(self) -> int:
        return len(self.comps)

    def max_ranks(self) -> np.ndarray:
        return np.array([A.max_rank for A in self.comps])

    def coefficient_count(self) -> int:
        return sum(coefficient_count(A) for A in self.comps)

    def to_dense(self) -> np.ndarray:
        """Array of shape ``(p, nx, N, ..., N)``."""
        return np.stack([to_dense(A) for A in self.comps])

    def cell(self, k: int, i: int) -> TensorTrain:
        return spatial_row(self.comps[k], i)


def shift_matrix(nx: int, direction: str, boundary: str = "zero") -> np.ndarray:
    """``L`` (``(Lv)_i = v_{i-1}``) or ``R`` (``(Rv)_i = v_{i+1}``).

    ``boundary`` fills the row that has no neighbour: ``zero`` leaves it
    empty, ``outflow`` repeats the boundary value, ``periodic`` wraps.
    """
    if direction == "left":
        M, edge, wrap = np.eye(nx, k=-1), 0, nx - 1
    elif direction == "right":
        M, edge, wrap = np.eye(nx, k=1), nx - 1, 0
    else:
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    if boundary == "outflow":
        M[edge, edge] = 1.0
    elif boundary == "periodic":
        M[edge, wrap] = 1.0
    elif boundary != "zero":
        raise ValueError(f"unknown boundary {boundary!r}")
    return M


def _with_core0(A: TensorTrain, G0: np.ndarray) -> TensorTrain:
    return TensorTrain._trusted((G0,) + tuple(A.cores[1:]))


def shift_spatial(A: TensorTrain, direction: str, boundary: str = "zero") -> TensorTrain:
    """Apply a shift matrix to the spatial core; ranks are unchanged."""
    M = shift_matrix(A.shape[0], direction, boundary)
    return _with_core0(A, np.einsum("ij,ajb->aib", M, A.cores[0]))


def spatial_row(A: TensorTrain, i: int) -> TensorTrain:
    """The stochastic tensor train of spatial cell ``i``."""
    g = A.cores[0][:, i, :]  # (1, r0)
    first = np.einsum("ab,bjc->ajc", g, A.cores[1])
    return TensorTrain._trusted((first,) + tuple(A.cores[2:]))


def embed_row(B: TensorTrain, nx: int, i: int) -> TensorTrain:
    """Spatial indicator of cell ``i`` times ``B``."""
    e = np.zeros((1, nx, 1))
    e[0, i, 0] = 1.0
    return TensorTrain._trusted((e,) + tuple(B.cores))


# {{{ initial data

def init_fulltt(ic: StochasticIC, grid: SpatialGrid, sgrid: StochasticGrid,
                cfg: SolverConfig = SolverConfig(), model: FluxModel | None = None,
                diag: RunDiagnostics | None = None) -> FullTTField:
    if ic.m != sgrid.m:
        raise ConfigurationError(f"initial condition has m={ic.m}, grid has m={sgrid.m}")
    centers, nodes = grid.centers, sgrid.nodes
    p = ic.conserved(centers[0], nodes[np.zeros((1, sgrid.m), dtype=int)]).shape[0]
    if model is not None and p != model.n_components:
        raise ConfigurationError(
            f"initial data has {p} components, model {model.name} expects {model.n_components}")

    def oracle(idx, k):
        out = np.empty(len(idx))
        for i in np.unique(idx[:, 0]):
            sel = idx[:, 0] == i
            out[sel] = ic.conserved(centers[i], nodes[idx[sel, 1:]])[k]
        return out

    comps = []
    for k in range(p):
        with _located("initial data"):
            res = cross_interpolate(lambda idx, k=k: oracle(idx, k), (grid.nx,) + sgrid.shape,
                                    cfg.cross_config)
        if diag is not None:
            diag.record_cross(res)
        comps.append(round_tt(res.tt, cfg.policy))
    return FullTTField(grid, sgrid, comps)


# }}}


# {{{ one step

def reconstruct_fulltt(F: FullTTField, cfg: SolverConfig = SolverConfig(),
                       diag: RunDiagnostics | None = None):
    """Face states ``(east, west)`` per component: ``U +- dx/2 * slope``.

    ``east`` is the state at the right face of each cell, ``west`` at the
    left face.
    """
    dx = F.grid.dx
    bnd = cfg.boundary
    east, west = [], []
    for k, A in enumerate(F.comps):
        AL, AR = shift_spatial(A, "left", bnd), shift_spatial(A, "right", bnd)
        with _located(f"slope, component {k}"):
            s = round_tt(_cross(lambda a, l, r: minmod(a - l, r - a) / dx, [A, AL, AR], cfg, diag),
                         cfg.policy)
        east.append(round_tt(add(A, scale(s, 0.5 * dx)), cfg.policy))
        west.append(round_tt(add(A, scale(s, -0.5 * dx)), cfg.policy))
    return east, west


def numerical_flux_fulltt(model: FluxModel, F: FullTTField, east, west,
                          cfg: SolverConfig = SolverConfig(), diag: RunDiagnostics | None = None):
    """Fluxes through the left and right face of every cell, ``(H_L, H_R)``."""
    bnd = cfg.boundary
    Um = list(east)
    Up = [shift_spatial(W, "right", bnd) for W in west]
    with _located("interfaces"):
        a = local_speed(model, Up, Um, cfg, diag)
        HR = numerical_flux(model, Up, Um, a, cfg, diag)
    if bnd == "periodic":
        HL = [shift_spatial(H, "left", "periodic") for H in HR]
        return HL, HR

    # left boundary face: ghost equals cell 0 and cell 0 has zero slope
    nx = F.grid.nx
    U0 = [spatial_row(A, 0) for A in F.comps]
    with _located("interface 0"):
        if isinstance(model, Burgers):
            fb = [scale(round_tt(hadamard(U0[0], U0[0]), cfg.policy), 0.5)]
        else:
            fb = [round_tt(_cross(lambda *v, k=k: model.flux(np.stack(v))[k], U0, cfg, diag), cfg.policy)
                  for k in range(model.n_components)]
    HL = [round_tt(add(shift_spatial(H, "left", "zero"), embed_row(b, nx, 0)), cfg.policy)
          for H, b in zip(HR, fb)]
    return HL, HR


def step_fulltt(F: FullTTField, model: FluxModel, cfg: SolverConfig, dt: float,
                diag: RunDiagnostics | None = None) -> FullTTField:
    east, west = reconstruct_fulltt(F, cfg, diag)
    HL, HR = numerical_flux_fulltt(model, F, east, west, cfg, diag)
    lam = dt / F.grid.dx
    comps = [round_tt(add(A, scale(sub(hr, hl), -lam)), cfg.policy)
             for A, hl, hr in zip(F.comps, HL, HR)]
    return FullTTField(F.grid, F.sgrid, comps)


def cfl_timestep_fulltt(F: FullTTField, model: FluxModel, cfg: SolverConfig = SolverConfig(),
                        diag: RunDiagnostics | None = None) -> float:
    cols = [tuple(F.cell(k, i) for k in range(F.components)) for i in range(F.grid.nx)]
    S = _max_speed(model, cols, cfg, diag)
    if S <= 0:
        return cfg.t_final
    return cfg.cfl_alpha * F.grid.dx / (cfg.safety * S)


# }}}


def run_fulltt(model: FluxModel, ic: StochasticIC, grid: SpatialGrid, sgrid: StochasticGrid,
               cfg: SolverConfig = SolverConfig()):
    """Integrate to ``cfg.t_final``; returns ``(field, diagnostics)``."""
    t0 = time.perf_counter()
    diag = RunDiagnostics()
    F = init_fulltt(ic, grid, sgrid, cfg, model, diag)
    dt_fixed = cfl_timestep_fulltt(F, model, cfg, diag) if cfg.cfl_mode == "fixed_initial" else None
    t, n = 0.0, 0
    T = cfg.t_final
    while T - t > 1e-14 * T:
        if n >= cfg.max_steps:
            raise ConfigurationError(f"max_steps={cfg.max_steps} reached at t={t}")
        with _located(f"step {n}"):
            dt = dt_fixed if dt_fixed is not None else cfl_timestep_fulltt(F, model, cfg, diag)
            dt = min(dt, T - t)
            F = step_fulltt(F, model, cfg, dt, diag)
        t = T if T - t - dt <= 1e-14 * T else t + dt
        n += 1
        diag.dt_history.append(dt)
        diag.max_rank_history.append(int(F.max_ranks().max()))
        diag.coefficient_history.append(F.coefficient_count())
    diag.steps, diag.t = n, t
    diag.final_max_ranks = F.max_ranks()
    diag.final_coefficients = F.coefficient_count()
    diag.wall_time = time.perf_counter() - t0
    return F, diag
