"""Uncompressed MUSCL solvers used as references.

:func:`muscl_batch` advances a batch of independent deterministic problems
stored as an array of shape ``(p, nx, S)``.  The dense SFV reference runs it
on every stochastic node with one shared time step; the Monte Carlo sampler
runs it on random parameter draws, each sample with its own time step.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, ResourceError
from .grids import SpatialGrid, StochasticGrid
from .hybrid import SolverConfig, minmod
from .models import FluxModel, StochasticIC

__all__ = ["muscl_batch", "initial_batch", "dense_sfv_reference", "MCResult", "mc_reference",
           "DENSE_MAX_ENTRIES"]

#: memory guard for the dense reference, in stored doubles
DENSE_MAX_ENTRIES = 50_000_000


def initial_batch(ic: StochasticIC, grid: SpatialGrid, xi: np.ndarray) -> np.ndarray:
    """Conserved initial cell values ``(p, nx, S)`` for parameter rows ``xi``."""
    return np.stack([ic.conserved(x, xi) for x in grid.centers], axis=1)


def _speed(model, U):
    p, nx, S = U.shape
    return model.max_abs_wavespeed(U.reshape(p, nx * S)).reshape(nx, S)


def _flux(model, U):
    p, n, S = U.shape
    return model.flux(U.reshape(p, n * S)).reshape(p, n, S)


def _rhs(model, U, dx, boundary):
    """Flux differences ``H_{i+1/2} - H_{i-1/2}`` for every cell."""
    if boundary == "periodic":
        Um, Up = np.roll(U, 1, axis=1), np.roll(U, -1, axis=1)
    else:
        Um = np.concatenate([U[:, :1], U[:, :-1]], axis=1)
        Up = np.concatenate([U[:, 1:], U[:, -1:]], axis=1)
    s = minmod(U - Um, Up - U) / dx
    west, east = U - 0.5 * dx * s, U + 0.5 * dx * s
    if boundary == "periodic":
        M = np.concatenate([east[:, -1:], east], axis=1)
        P = np.concatenate([west, west[:, :1]], axis=1)
    else:
        M = np.concatenate([U[:, :1], east], axis=1)
        P = np.concatenate([west, U[:, -1:]], axis=1)
    a = np.maximum(_speed(model, P), _speed(model, M))
    H = 0.5 * (_flux(model, P) + _flux(model, M)) - 0.5 * a[None] * (P - M)
    return H[:, 1:] - H[:, :-1]


def muscl_batch(model: FluxModel, U0: np.ndarray, grid: SpatialGrid, cfg: SolverConfig,
                dt_mode: str = "global", on_bad=None, speed_bound: float | None = None):
    """Advance every column of ``U0`` to ``cfg.t_final``.

    ``dt_mode`` is ``"global"`` (one step size for the whole batch, as in the
    SFV scheme) or ``"per_sample"``.  With ``on_bad`` given, samples that
    become inadmissible are dropped: ``on_bad(columns)`` receives their
    original column numbers.  Otherwise an :class:`AdmissibilityError` is
    raised.  ``speed_bound`` replaces the initial wave speed in the
    ``fixed_initial`` mode, so that a batch split into chunks keeps one
    step size.  Returns ``(U, kept_columns, steps)``.
    """
    U = np.array(U0, dtype=np.float64)
    dx, T = grid.dx, cfg.t_final
    keep = np.arange(U.shape[2])

    def screen(U, keep, n):
        ok = model.admissible(U.reshape(U.shape[0], -1)).reshape(U.shape[1:]).all(axis=0)
        if ok.all():
            return U, keep
        if on_bad is None:
            col = int(np.argmin(ok))
            cell = int(np.argmin(model.admissible(U[:, :, col])))
            raise AdmissibilityError("inadmissible state", index=(col,),
                                     location=f"step {n}, cell {cell}")
        on_bad(keep[~ok])
        return U[:, :, ok], keep[ok]

    def speeds(U):
        if U.shape[2] == 0:
            return np.zeros(0)
        return _speed(model, U).max(axis=0)

    U, keep = screen(U, keep, 0)
    t = np.zeros(U.shape[2]) if dt_mode == "per_sample" else 0.0
    fixed = None
    if cfg.cfl_mode == "fixed_initial":
        if speed_bound is not None:
            fixed = speed_bound
        else:
            fixed = speeds(U) if dt_mode == "per_sample" else speeds(U).max(initial=0.0)
    n = 0
    while np.any(T - t > 1e-14 * T):
        S = fixed if fixed is not None else (
            speeds(U) if dt_mode == "per_sample" else speeds(U).max(initial=0.0))
        with np.errstate(divide="ignore"):
            dt = np.where(S > 0, cfg.cfl_alpha * dx / (cfg.safety * np.where(S > 0, S, 1.0)), T)
        dt = np.minimum(dt, T - t)
        dt = np.where(T - t > 1e-14 * T, dt, 0.0)
        U = U - (dt / dx) * _rhs(model, U, dx, cfg.boundary) if dt_mode == "global" else \
            U - (dt / dx)[None, None, :] * _rhs(model, U, dx, cfg.boundary)
        t = np.where(T - t - dt <= 1e-14 * T, T, t + dt)
        if dt_mode == "global":
            t = float(t)
        n += 1
        if n > cfg.max_steps:
            raise ResourceError(f"max_steps={cfg.max_steps} exceeded")
        U, kept = screen(U, keep, n)
        if dt_mode == "per_sample" and kept.size != keep.size:
            mask = np.isin(keep, kept)
            t = t[mask]
            if fixed is not None:
                fixed = fixed[mask]
        keep = kept
        if U.shape[2] == 0:
            break
    return U, keep, n


def dense_sfv_reference(model: FluxModel, ic: StochasticIC, grid: SpatialGrid, sgrid: StochasticGrid,
                        cfg: SolverConfig, max_entries: int = DENSE_MAX_ENTRIES) -> np.ndarray:
    """Full-tensor SFV solution of shape ``(p, nx, N, ..., N)``."""
    entries = model.n_components * grid.nx * sgrid.size
    if entries > max_entries:
        raise ResourceError(f"dense reference needs {entries} values, guard is {max_entries}")
    idx = np.array(list(itertools.product(range(sgrid.nxi), repeat=sgrid.m)), dtype=int)
    U0 = initial_batch(ic, grid, sgrid.nodes[idx])
    U, _, _ = muscl_batch(model, U0, grid, cfg, dt_mode="global")
    return U.reshape(U.shape[:2] + sgrid.shape)


@dataclass(frozen=True)
class MCResult:
    mean: np.ndarray  # (p, nx)
    var: np.ndarray  # (p, nx), unbiased
    stderr_mean: np.ndarray
    stderr_var: np.ndarray
    n_used: int
    n_failed: int
    failed_samples: tuple


def _draws(m: int, seed: int, start: int, stop: int) -> np.ndarray:
    return np.array([np.random.default_rng([seed, k]).random(m) for k in range(start, stop)])


def mc_reference(model: FluxModel, ic: StochasticIC, n_samples: int, seed: int, grid: SpatialGrid,
                 cfg: SolverConfig, primitive: bool = False, batch: int = 1000) -> MCResult:
    """Monte Carlo statistics from the deterministic solver.

    Sample ``k`` uses ``default_rng([seed, k])``, so results do not depend on
    batching.  Inadmissible samples are skipped and counted.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    failed: list[int] = []
    chunks = []
    for start in range(0, n_samples, batch):
        stop = min(start + batch, n_samples)
        U0 = initial_batch(ic, grid, _draws(ic.m, seed, start, stop))
        U, kept, _ = muscl_batch(model, U0, grid, cfg, dt_mode="per_sample",
                                 on_bad=lambda cols, s=start: failed.extend(int(c) + s for c in cols))
        if primitive:
            p, nx, S = U.shape
            U = model.primitive(U.reshape(p, nx * S)).reshape(p, nx, S)
        chunks.append(U)
    X = np.concatenate(chunks, axis=2) if chunks else np.zeros((model.n_components, grid.nx, 0))
    n = X.shape[2]
    if n == 0:
        raise AdmissibilityError(f"all {n_samples} samples failed")
    mean = X.mean(axis=2)
    # shifting by the first sample makes identical samples give exactly zero
    D = X - X[:, :, :1]
    var = D.var(axis=2, ddof=1) if n > 1 else np.zeros_like(mean)
    se_mean = np.sqrt(var / n)
    m4 = ((X - mean[..., None]) ** 4).mean(axis=2)
    se_var = np.sqrt(np.maximum(m4 - var ** 2, 0.0) / n)
    return MCResult(mean, var, se_mean, se_var, n, len(failed), tuple(sorted(failed)))
