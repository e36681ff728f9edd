"""MUSCL finite volumes in the hybrid format.

Space is indexed explicitly; every cell holds one tensor train per conserved
component over the stochastic grid.  A step is

* minmod slopes from neighbouring cell averages (cross),
* linear reconstruction at both faces of each cell (algebra + rounding),
* local speed at each interface (cross) and the local Lax-Friedrichs flux
  (algebra for Burgers, cross for Euler),
* forward Euler update, rounded.

Identity of tensor-train objects is used as a cheap exactness test: a zero
slope is represented by ``None`` and leaves the face states equal to the
cell average object, fluxes are cached by the identity of their arguments,
and a cell whose two fluxes are the same object is carried over unchanged.
In regions where the solution is locally constant in space this skips all
work without changing the result.
"""

from __future__ import annotations

import contextlib
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cross import DENSE_MAX_ENTRIES, CrossConfig, apply_elementwise, cross_interpolate, tt_max_abs
from .errors import AdmissibilityError, ConfigurationError, ShapeError
from .grids import SpatialGrid, StochasticGrid
from .models import Burgers, FluxModel, StochasticIC
from .tt import (
    TensorTrain,
    TruncationPolicy,
    add,
    coefficient_count,
    hadamard,
    round_tt,
    scale,
    sub,
    to_dense,
    zeros,
)

__all__ = [
    "SolverConfig",
    "HybridField",
    "RunDiagnostics",
    "minmod",
    "init_field",
    "minmod_slopes",
    "reconstruct",
    "local_speed",
    "numerical_flux",
    "cfl_timestep",
    "step",
    "run",
]

log = logging.getLogger(__name__)

BOUNDARIES = ("outflow", "periodic")
CFL_MODES = ("fixed_initial", "per_step")


def minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


@dataclass(frozen=True)
class SolverConfig:
    policy: TruncationPolicy = TruncationPolicy(1e-3, 5)
    cross: CrossConfig | None = None
    cfl_alpha: float = 0.45
    t_final: float = 0.35
    boundary: str = "outflow"
    cfl_mode: str = "fixed_initial"
    safety: float = 1.05
    max_steps: int = 1_000_000

    def __post_init__(self):
        bad = []
        if not 0 < self.cfl_alpha < 1:
            bad.append(f"cfl_alpha must lie in (0, 1), got {self.cfl_alpha}")
        if not self.t_final > 0:
            bad.append(f"t_final must be positive, got {self.t_final}")
        if self.boundary not in BOUNDARIES:
            bad.append(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.cfl_mode not in CFL_MODES:
            bad.append(f"cfl_mode must be one of {CFL_MODES}, got {self.cfl_mode!r}")
        if not self.safety >= 1:
            bad.append(f"safety must be >= 1, got {self.safety}")
        if self.max_steps < 1:
            bad.append("max_steps must be >= 1")
        if bad:
            raise ConfigurationError(bad)

    @property
    def cross_config(self) -> CrossConfig:
        if self.cross is not None:
            return self.cross
        return CrossConfig(epsilon=self.policy.epsilon, rank_cap=self.policy.rank_cap)


@dataclass(frozen=True)
class HybridField:
    grid: SpatialGrid
    sgrid: StochasticGrid
    cells: tuple  # cells[k][i]: TensorTrain

    def __post_init__(self):
        if len(self.cells) < 1:
            raise ShapeError("field needs at least one component")
        for row in self.cells:
            if len(row) != self.grid.nx:
                raise ShapeError(f"expected {self.grid.nx} cells, got {len(row)}")
            for A in row:
                if A.shape != self.sgrid.shape:
                    raise ShapeError(f"cell of shape {A.shape} on a grid of shape {self.sgrid.shape}")

    @property
    def components(self) -> int:
        return len(self.cells)

    def max_ranks(self) -> np.ndarray:
        return np.array([[A.max_rank for A in row] for row in self.cells])

    def coefficient_count(self) -> int:
        return sum(coefficient_count(A) for row in self.cells for A in row)

    def to_dense(self) -> np.ndarray:
        """Array of shape ``(p, nx, N, ..., N)``."""
        return np.stack([np.stack([to_dense(A) for A in row]) for row in self.cells])


@dataclass
class RunDiagnostics:
    steps: int = 0
    t: float = 0.0
    dt_history: list = field(default_factory=list)
    max_rank_history: list = field(default_factory=list)
    coefficient_history: list = field(default_factory=list)
    cross_calls: int = 0
    cross_nonconverged: int = 0
    final_max_ranks: np.ndarray | None = None
    final_coefficients: int = 0
    wall_time: float = 0.0

    def record_cross(self, res):
        self.cross_calls += 1
        if not res.converged:
            self.cross_nonconverged += 1
        return res.tt


def _same(A: TensorTrain, B: TensorTrain) -> bool:
    if A is B:
        return True
    if A.ranks != B.ranks:
        return False
    return all(np.array_equal(a, b) for a, b in zip(A.cores, B.cores))


@contextlib.contextmanager
def _located(where: str):
    try:
        yield
    except AdmissibilityError as e:
        loc = where if e.location is None else f"{e.location}, {where}"
        raise AdmissibilityError(e.args[0] if e.args else str(e), index=e.index, location=loc) from e


def _cross(f, args, cfg: SolverConfig, diag: RunDiagnostics | None):
    res = apply_elementwise(f, args, cfg.cross_config)
    if diag is not None:
        return diag.record_cross(res)
    return res.tt


# {{{ initial data

def init_field(ic: StochasticIC, grid: SpatialGrid, sgrid: StochasticGrid,
               cfg: SolverConfig = SolverConfig(), model: FluxModel | None = None,
               diag: RunDiagnostics | None = None) -> HybridField:
    """Cross-approximate the initial data at every cell centre."""
    if ic.m != sgrid.m:
        raise ConfigurationError(f"initial condition has m={ic.m}, grid has m={sgrid.m}")
    nodes = sgrid.nodes
    p = ic.conserved(grid.centers[0], nodes[np.zeros((1, sgrid.m), dtype=int)]).shape[0]
    if model is not None and p != model.n_components:
        raise ConfigurationError(
            f"initial data has {p} components, model {model.name} expects {model.n_components}")
    cells = [[] for _ in range(p)]
    for i, x in enumerate(grid.centers):
        for k in range(p):
            with _located(f"initial data, cell {i}"):
                res = cross_interpolate(lambda idx, x=x, k=k: ic.conserved(x, nodes[idx])[k],
                                        sgrid.shape, cfg.cross_config)
            if diag is not None:
                diag.record_cross(res)
            A = round_tt(res.tt, cfg.policy)
            # neighbours with identical data share one object
            if i > 0 and _same(A, cells[k][-1]):
                A = cells[k][-1]
            cells[k].append(A)
    return HybridField(grid, sgrid, tuple(tuple(row) for row in cells))


# }}}


# {{{ one step

def _ghost(row, i, boundary):
    nx = len(row)
    if boundary == "periodic":
        return row[i % nx]
    return row[min(max(i, 0), nx - 1)]


def minmod_slopes(F: HybridField, cfg: SolverConfig = SolverConfig(),
                  diag: RunDiagnostics | None = None) -> list:
    """Limited slopes per component and cell; ``None`` marks an exact zero."""
    dx = F.grid.dx
    out = []
    for k, row in enumerate(F.cells):
        srow = []
        for i, U in enumerate(row):
            Um, Up = _ghost(row, i - 1, cfg.boundary), _ghost(row, i + 1, cfg.boundary)
            if _same(Um, U) or _same(Up, U):
                srow.append(None)
                continue
            with _located(f"slope, component {k}, cell {i}"):
                s = _cross(lambda a, b, c: minmod(b - a, c - b) / dx, [Um, U, Up], cfg, diag)
            srow.append(round_tt(s, cfg.policy))
        out.append(srow)
    return out


def _faces(F: HybridField, slopes, cfg: SolverConfig):
    """West and east face states of every cell."""
    half = 0.5 * F.grid.dx
    west, east = [], []
    for row, srow in zip(F.cells, slopes):
        w, e = [], []
        for U, s in zip(row, srow):
            if s is None:
                w.append(U)
                e.append(U)
            else:
                w.append(round_tt(add(U, scale(s, -half)), cfg.policy))
                e.append(round_tt(add(U, scale(s, half)), cfg.policy))
        west.append(w)
        east.append(e)
    return west, east


def reconstruct(F: HybridField, slopes, cfg: SolverConfig = SolverConfig()):
    """Interface states ``(U_plus, U_minus)``, each indexed ``[k][j]``.

    Interface ``j`` (``0..nx``) separates cells ``j-1`` and ``j``;
    ``U_minus`` comes from the left cell, ``U_plus`` from the right one.
    Boundary interfaces use the ghost cells.
    """
    nx = F.grid.nx
    west, east = _faces(F, slopes, cfg)
    Uplus, Uminus = [], []
    for k in range(F.components):
        if cfg.boundary == "periodic":
            left_ghost, right_ghost = east[k][nx - 1], west[k][0]
        else:
            # ghost cells copy their neighbour, so their slope is zero
            left_ghost, right_ghost = F.cells[k][0], F.cells[k][nx - 1]
        Uminus.append([left_ghost] + east[k])
        Uplus.append(west[k] + [right_ghost])
    return Uplus, Uminus


def local_speed(model: FluxModel, Up: Sequence[TensorTrain], Um: Sequence[TensorTrain],
                cfg: SolverConfig = SolverConfig(), diag: RunDiagnostics | None = None) -> TensorTrain:
    """``max(lambda(U+), lambda(U-))`` entrywise; ``Up``/``Um`` hold one TT per component."""
    p = model.n_components

    def f(*v):
        return np.maximum(model.max_abs_wavespeed(np.stack(v[:p])),
                          model.max_abs_wavespeed(np.stack(v[p:])))

    return _cross(f, list(Up) + list(Um), cfg, diag)


def numerical_flux(model: FluxModel, Up: Sequence[TensorTrain], Um: Sequence[TensorTrain],
                   a: TensorTrain, cfg: SolverConfig = SolverConfig(),
                   diag: RunDiagnostics | None = None) -> list:
    """Local Lax-Friedrichs flux, one TT per component."""
    pol = cfg.policy
    if isinstance(model, Burgers):
        P, M = Up[0], Um[0]
        fp = scale(round_tt(hadamard(P, P), pol), 0.5)
        fm = fp if M is P else scale(round_tt(hadamard(M, M), pol), 0.5)
        central = scale(add(fp, fm), 0.5)
        if M is P:
            return [round_tt(central, pol)]
        diss = scale(round_tt(hadamard(a, round_tt(sub(P, M), pol)), pol), 0.5)
        return [round_tt(sub(central, diss), pol)]

    p = model.n_components
    out = []
    for k in range(p):
        def f(*v, k=k):
            P, M, s = np.stack(v[:p]), np.stack(v[p:2 * p]), v[2 * p]
            return 0.5 * (model.flux(P)[k] + model.flux(M)[k]) - 0.5 * s * (P[k] - M[k])

        out.append(round_tt(_cross(f, list(Up) + list(Um) + [a], cfg, diag), pol))
    return out


def _max_speed(model: FluxModel, cols, cfg: SolverConfig, diag=None) -> float:
    """Largest wave speed over a list of per-cell component tuples."""
    S = 0.0
    seen = set()
    for i, col in enumerate(cols):
        key = tuple(id(A) for A in col)
        if key in seen:
            continue
        seen.add(key)
        with _located(f"cell {i}"):
            size = math.prod(col[0].shape)
            if isinstance(model, Burgers):
                s = tt_max_abs(col[0], cfg.cross_config)
            elif size <= DENSE_MAX_ENTRIES:
                U = np.stack([to_dense(A).reshape(-1) for A in col])
                s = float(np.max(model.max_abs_wavespeed(U)))
            else:
                T = _cross(lambda *v: model.max_abs_wavespeed(np.stack(v)), list(col), cfg, diag)
                s = tt_max_abs(T, cfg.cross_config)
        S = max(S, s)
    return S


def cfl_timestep(F: HybridField, model: FluxModel, cfg: SolverConfig = SolverConfig(),
                 diag: RunDiagnostics | None = None) -> float:
    """``alpha * dx / (safety * S)`` with ``S`` the largest wave speed of ``F``.

    Returns ``t_final`` when the field carries no waves.
    """
    cols = list(zip(*F.cells))
    S = _max_speed(model, cols, cfg, diag)
    if S <= 0:
        return cfg.t_final
    return cfg.cfl_alpha * F.grid.dx / (cfg.safety * S)


def step(F: HybridField, model: FluxModel, cfg: SolverConfig, dt: float,
         diag: RunDiagnostics | None = None) -> HybridField:
    """One forward Euler step of size ``dt``."""
    p, nx = F.components, F.grid.nx
    slopes = minmod_slopes(F, cfg, diag)
    Uplus, Uminus = reconstruct(F, slopes, cfg)

    cache: dict = {}
    H = [[None] * (nx + 1) for _ in range(p)]
    for j in range(nx + 1):
        Up = [Uplus[k][j] for k in range(p)]
        Um = [Uminus[k][j] for k in range(p)]
        key = tuple(id(A) for A in Up + Um)
        if key not in cache:
            with _located(f"interface {j}"):
                if all(a is b for a, b in zip(Up, Um)):
                    # H(U, U) = f(U): the dissipation term vanishes exactly
                    a = None if isinstance(model, Burgers) else zeros(F.sgrid.shape)
                else:
                    a = local_speed(model, Up, Um, cfg, diag)
                cache[key] = numerical_flux(model, Up, Um, a, cfg, diag)
        for k in range(p):
            H[k][j] = cache[key][k]

    lam = dt / F.grid.dx
    cells = []
    for k in range(p):
        row = []
        for i in range(nx):
            U, Hl, Hr = F.cells[k][i], H[k][i], H[k][i + 1]
            if Hl is Hr:
                row.append(U)
            else:
                row.append(round_tt(add(U, scale(sub(Hr, Hl), -lam)), cfg.policy))
        cells.append(tuple(row))
    return HybridField(F.grid, F.sgrid, tuple(cells))


# }}}


def run(model: FluxModel, ic: StochasticIC, grid: SpatialGrid, sgrid: StochasticGrid,
        cfg: SolverConfig = SolverConfig()):
    """Integrate from the initial data to ``cfg.t_final``.

    Returns ``(field, diagnostics)``.
    """
    t0 = time.perf_counter()
    diag = RunDiagnostics()
    F = init_field(ic, grid, sgrid, cfg, model, diag)
    dt_fixed = cfl_timestep(F, model, cfg, diag) if cfg.cfl_mode == "fixed_initial" else None
    t, n = 0.0, 0
    while cfg.t_final - t > 1e-14 * cfg.t_final:
        if n >= cfg.max_steps:
            raise ConfigurationError(f"max_steps={cfg.max_steps} reached at t={t}")
        with _located(f"step {n}"):
            dt = dt_fixed if dt_fixed is not None else cfl_timestep(F, model, cfg, diag)
            dt = min(dt, cfg.t_final - t)
            F = step(F, model, cfg, dt, diag)
        t = cfg.t_final if cfg.t_final - t - dt <= 1e-14 * cfg.t_final else t + dt
        n += 1
        ranks = F.max_ranks()
        diag.dt_history.append(dt)
        diag.max_rank_history.append(int(ranks.max()))
        diag.coefficient_history.append(F.coefficient_count())
        log.debug("step %d t=%.6g dt=%.3g max rank %d", n, t, dt, ranks.max())
    diag.steps, diag.t = n, t
    diag.final_max_ranks = F.max_ranks()
    diag.final_coefficients = F.coefficient_count()
    diag.wall_time = time.perf_counter() - t0
    return F, diag
