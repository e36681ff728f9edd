"""Cross approximation: building tensor trains from entry evaluations.

The sweep scheme is the one-site alternating cross with maxvol pivots.  Each
pass evaluates the oracle on the fibres ``I_{l-1} x [N_l] x J_l``, truncates
the fibre matrix with an SVD (which is where ranks adapt), and picks the next
nested index set with :func:`maxvol`.  Between passes the index sets are
enriched with the validation sample of largest error plus ``kick`` seeded
random samples.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import AdmissibilityError, DegeneracyError, EvaluationError, ShapeError
from .tt import TensorTrain, TruncationPolicy, _trunc_rank, evaluate, to_dense, tt_from_dense

__all__ = [
    "CrossConfig",
    "CrossResult",
    "maxvol",
    "cross_interpolate",
    "apply_elementwise",
    "tt_max_abs",
]

log = logging.getLogger(__name__)

SEED = 0x5EED
#: tensors up to this many entries are scanned exhaustively by :func:`tt_max_abs`
DENSE_MAX_ENTRIES = 2**20


@dataclass(frozen=True)
class CrossConfig:
    epsilon: float = 1e-6
    rank_cap: int | None = None
    max_sweeps: int = 10
    validation_samples: int = 1000
    seed: int = SEED
    kick: int = 1
    maxvol_tol: float = 0.05

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.validation_samples < 1:
            raise ValueError("validation_samples must be >= 1")
        if self.rank_cap is not None and self.rank_cap < 1:
            raise ValueError("rank_cap must be >= 1")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")

    @property
    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.epsilon, self.rank_cap)


@dataclass(frozen=True)
class CrossResult:
    tt: TensorTrain
    converged: bool
    sweeps_used: int
    est_error: float


def maxvol(M: np.ndarray, tol: float = 0.05, max_iters: int = 200) -> np.ndarray:
    """Row indices of a quasi-dominant ``r x r`` submatrix of the tall ``M``.

    On return every entry of ``M @ inv(M[rows])`` is at most ``1 + tol`` in
    modulus (unless ``max_iters`` swaps were not enough).
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ShapeError("maxvol expects a matrix")
    n, r = M.shape
    if n < r:
        raise ShapeError(f"maxvol needs at least as many rows as columns, got {M.shape}")
    if r == 0:
        return np.zeros(0, dtype=np.intp)
    _, R, perm = scipy.linalg.qr(M.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0 or diag[r - 1] <= max(n, r) * np.finfo(float).eps * diag[0]:
        raise DegeneracyError("matrix is rank deficient")
    piv = np.array(perm[:r], dtype=np.intp)
    B = scipy.linalg.solve(M[piv].T, M.T).T
    for _ in range(max_iters):
        k = int(np.argmax(np.abs(B)))
        i, j = divmod(k, r)
        if abs(B[i, j]) <= 1.0 + tol:
            break
        piv[j] = i
        col = B[:, j].copy()
        row = B[i, :].copy()
        row[j] -= 1.0
        B -= np.outer(col, row) / col[i]
    return piv


# {{{ index-set helpers

def _expand_left(I: np.ndarray, n: int) -> np.ndarray:
    # prefix slow, new index fast: matches reshape (r, n) of a core's left unfolding
    r = I.shape[0]
    out = np.empty((r * n, I.shape[1] + 1), dtype=np.intp)
    out[:, :-1] = np.repeat(I, n, axis=0)
    out[:, -1] = np.tile(np.arange(n), r)
    return out


def _expand_right(n: int, J: np.ndarray) -> np.ndarray:
    # new index slow, suffix fast: matches reshape (n, r) of a core's right unfolding
    r = J.shape[0]
    out = np.empty((n * r, J.shape[1] + 1), dtype=np.intp)
    out[:, 0] = np.repeat(np.arange(n), r)
    out[:, 1:] = np.tile(J, (n, 1))
    return out


def _combine(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    R, C = rows.shape[0], cols.shape[0]
    out = np.empty((R * C, rows.shape[1] + cols.shape[1]), dtype=np.intp)
    out[:, : rows.shape[1]] = np.repeat(rows, C, axis=0)
    out[:, rows.shape[1]:] = np.tile(cols, (R, 1))
    return out


def _union(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if b.shape[0] == 0:
        return a
    both = np.concatenate([a, b], axis=0)
    _, first = np.unique(both, axis=0, return_index=True)
    return both[np.sort(first)]


# }}}


def _checked(oracle: Callable, vectorized: bool) -> Callable[[np.ndarray], np.ndarray]:
    def f(idx):
        if vectorized:
            try:
                vals = np.asarray(oracle(idx), dtype=np.float64).reshape(-1)
            except AdmissibilityError as e:
                if e.index is not None and len(e.index) == 1:
                    # models report the position within the batch
                    raise AdmissibilityError(str(e), index=idx[e.index[0]]) from e
                raise
        else:
            vals = np.array([oracle(tuple(int(i) for i in row)) for row in idx], dtype=np.float64)
        if vals.shape[0] != idx.shape[0]:
            raise ShapeError(f"oracle returned {vals.shape[0]} values for {idx.shape[0]} indices")
        bad = ~np.isfinite(vals)
        if bad.any():
            k = int(np.argmax(bad))
            raise EvaluationError(f"oracle returned {vals[k]} at index {tuple(idx[k])}", index=idx[k])
        return vals

    return f


def _fit_rank(C: np.ndarray, delta_rel: float, cap: float):
    u, s, vt = np.linalg.svd(C, full_matrices=False)
    if s[0] == 0.0:
        return u[:, :1], s, 1
    r = _trunc_rank(s, delta_rel * float(np.linalg.norm(s)), cap)
    # drop directions at roundoff level; maxvol needs a well-conditioned basis
    r = max(1, min(r, int(np.count_nonzero(s > 1e-14 * s[0]))))
    return u[:, :r], s, r


def _interpolant(U: np.ndarray, tol: float):
    piv = maxvol(U, tol)
    return scipy.linalg.solve(U[piv].T, U.T).T, piv


def cross_interpolate(
    oracle: Callable,
    mode_sizes: Sequence[int],
    cfg: CrossConfig = CrossConfig(),
    *,
    vectorized: bool = True,
) -> CrossResult:
    """Approximate the tensor ``idx -> oracle(idx)`` as a tensor train.

    ``oracle`` receives an integer array of shape ``(K, m)`` and returns ``K``
    values; pass ``vectorized=False`` for a function of a single index tuple.
    Tensors with no more entries than ``cfg.validation_samples`` are evaluated
    in full and compressed by TT-SVD, since validating a cross would already
    touch that many entries.  Non-convergence is reported, not raised.
    """
    N = tuple(int(n) for n in mode_sizes)
    if not N or min(N) < 1:
        raise ShapeError(f"invalid mode sizes {mode_sizes}")
    m = len(N)
    f = _checked(oracle, vectorized)
    total = math.prod(N)
    eps = cfg.epsilon

    if total <= cfg.validation_samples or m == 1:
        idx = np.indices(N).reshape(m, -1).T
        vals = f(idx).reshape(N)
        tt = tt_from_dense(vals, cfg.policy)
        nrm = float(np.linalg.norm(vals))
        diff = float(np.linalg.norm(to_dense(tt) - vals))
        err = diff / nrm if nrm > 0 else diff
        return CrossResult(tt, err <= eps, 1, err)

    rng = np.random.default_rng(cfg.seed)
    val_idx = rng.integers(0, N, size=(cfg.validation_samples, m))
    val = f(val_idx)
    vnorm = float(np.linalg.norm(val))
    cap = math.inf if cfg.rank_cap is None else cfg.rank_cap
    delta = eps / math.sqrt(m - 1)

    start = val_idx[np.argsort(-np.abs(val), kind="stable")[:2]]
    I = [np.zeros((1, 0), dtype=np.intp)] + [None] * m
    J = [None] * m + [np.zeros((1, 0), dtype=np.intp)]
    for l in range(1, m):
        J[l] = _union(start[:1, l:], start[1:, l:])
    extra = np.zeros((0, m), dtype=np.intp)

    cores = [None] * m
    tt, err, converged, sweep = None, math.inf, False, 0
    for sweep in range(1, cfg.max_sweeps + 1):
        if sweep % 2 == 1:
            for l in range(m - 1):
                rows = _expand_left(I[l], N[l])
                cols = _union(J[l + 1], extra[:, l + 1:])
                C = f(_combine(rows, cols)).reshape(rows.shape[0], cols.shape[0])
                U, _, r = _fit_rank(C, delta, cap)
                core, piv = _interpolant(U, cfg.maxvol_tol)
                cores[l] = core.reshape(I[l].shape[0], N[l], r)
                I[l + 1] = rows[piv]
            rows = _expand_left(I[m - 1], N[m - 1])
            cores[m - 1] = f(rows).reshape(I[m - 1].shape[0], N[m - 1], 1)
        else:
            for l in range(m - 1, 0, -1):
                cols = _expand_right(N[l], J[l + 1])
                rows = _union(I[l], extra[:, :l])
                C = f(_combine(rows, cols)).reshape(rows.shape[0], cols.shape[0])
                U, _, r = _fit_rank(C.T, delta, cap)
                core, piv = _interpolant(U, cfg.maxvol_tol)
                cores[l] = core.T.reshape(r, N[l], J[l + 1].shape[0])
                J[l] = cols[piv]
            cols = _expand_right(N[0], J[1])
            cores[0] = f(cols).reshape(1, N[0], J[1].shape[0])
        tt = TensorTrain._trusted([np.ascontiguousarray(c) for c in cores])
        resid = evaluate(tt, val_idx) - val
        rnorm = float(np.linalg.norm(resid))
        err = rnorm / vnorm if vnorm > 0 else rnorm
        if err <= eps:
            converged = True
            break
        worst = val_idx[int(np.argmax(np.abs(resid)))][None, :]
        extra = np.concatenate([worst, rng.integers(0, N, size=(cfg.kick, m))], axis=0)

    if not converged:
        log.debug("cross did not converge: est_error=%.3g after %d sweeps", err, sweep)
    return CrossResult(tt, converged, sweep, err)


def apply_elementwise(
    f: Callable[..., np.ndarray],
    args: Sequence[TensorTrain],
    cfg: CrossConfig = CrossConfig(),
) -> CrossResult:
    """Cross approximation of ``idx -> f(A_1[idx], ..., A_k[idx])``.

    ``f`` works on arrays of entries, one array per argument.
    """
    args = list(args)
    if not args:
        raise ShapeError("need at least one tensor train")
    shape = args[0].shape
    for A in args[1:]:
        if A.shape != shape:
            raise ShapeError(f"mode sizes differ: {shape} vs {A.shape}")

    def oracle(idx):
        return f(*(evaluate(A, idx) for A in args))

    return cross_interpolate(oracle, shape, cfg)


# {{{ extrema

def _pivot_candidates(A: TensorTrain, tol: float) -> np.ndarray:
    # maxvol sweep over the left interfaces of A; returns full multi-indices
    I = np.zeros((1, 0), dtype=np.intp)
    left = np.ones((1, 1))
    for c in A.cores[:-1]:
        r0, n, r1 = c.shape
        M = np.einsum("pa,aib->pib", left, c).reshape(-1, r1)
        rows = _expand_left(I, n)
        u, s, _ = np.linalg.svd(M, full_matrices=False)
        k = int(np.count_nonzero(s > 1e-12 * s[0])) if s.size and s[0] > 0 else 0
        if k == 0:
            piv = np.array([0], dtype=np.intp)
        else:
            piv = maxvol(u[:, :k], tol)
        I = rows[piv]
        left = M[piv]
    return _expand_left(I, A.shape[-1])


def tt_max_abs(A: TensorTrain, cfg: CrossConfig = CrossConfig()) -> float:
    """Estimate ``max |A|``, always attained at a concrete entry of ``A``.

    Small tensors (up to ``DENSE_MAX_ENTRIES``) are scanned exhaustively, so
    the value is exact there.  Larger ones start from maxvol pivots of the
    cores and seeded random entries, then climb one coordinate at a time.
    """
    shape = A.shape
    if math.prod(shape) <= DENSE_MAX_ENTRIES:
        return float(np.abs(to_dense(A)).max())
    m = len(shape)
    rng = np.random.default_rng(cfg.seed)
    cands = np.concatenate([
        _pivot_candidates(A, cfg.maxvol_tol),
        rng.integers(0, shape, size=(256, m)),
    ])
    vals = np.abs(evaluate(A, cands))
    best = float(vals.max())
    for k in np.argsort(-vals, kind="stable")[:4]:
        idx = cands[k].copy()
        cur = float(vals[k])
        improved = True
        while improved:
            improved = False
            for l in range(m):
                fibre = np.repeat(idx[None, :], shape[l], axis=0)
                fibre[:, l] = np.arange(shape[l])
                fv = np.abs(evaluate(A, fibre))
                j = int(np.argmax(fv))
                if fv[j] > cur:
                    cur = float(fv[j])
                    idx[l] = j
                    improved = True
        best = max(best, cur)
    return best


# }}}
