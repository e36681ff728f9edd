"""Tensor trains: construction, exact algebra, rounding and contraction.

A tensor train of order ``m`` stores an ``N_1 x ... x N_m`` array as a chain
of 3-way cores ``G_l`` of shape ``(r_{l-1}, N_l, r_l)`` with ``r_0 = r_m = 1``.
All operations return new objects; cores are stored read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeError

__all__ = [
    "TensorTrain",
    "TruncationPolicy",
    "tt_from_dense",
    "to_dense",
    "element",
    "evaluate",
    "add",
    "sub",
    "hadamard",
    "scale",
    "round_tt",
    "contract_weights",
    "norm_frobenius",
    "coefficient_count",
    "zeros",
    "constant",
    "rank_one",
    "dump",
]


@dataclass(frozen=True)
class TruncationPolicy:
    """Relative Frobenius tolerance plus a hard cap on every TT rank."""

    epsilon: float = 1e-12
    rank_cap: int | None = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.rank_cap is not None and self.rank_cap < 1:
            raise ValueError(f"rank_cap must be >= 1, got {self.rank_cap}")

    @property
    def cap(self) -> float:
        return math.inf if self.rank_cap is None else self.rank_cap


class TensorTrain:
    """Immutable tensor train.

    Parameters
    ----------
    cores : sequence of ndarray
        Core ``l`` has shape ``(r_{l-1}, N_l, r_l)``; neighbouring ranks must
        agree and the boundary ranks must be 1.
    """

    __slots__ = ("cores",)

    def __init__(self, cores: Sequence[np.ndarray]):
        cores = [np.array(c, dtype=np.float64) for c in cores]
        if not cores:
            raise ShapeError("a tensor train needs at least one core")
        for c in cores:
            if c.ndim != 3:
                raise ShapeError(f"cores must be 3-way arrays, got shape {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ShapeError("boundary ranks must be 1")
        for a, b in zip(cores[:-1], cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ShapeError(f"rank mismatch between cores {a.shape} and {b.shape}")
        for c in cores:
            c.flags.writeable = False
        self.cores = tuple(cores)

    @classmethod
    def _trusted(cls, cores):
        # skip validation/copies for cores built inside this module
        obj = cls.__new__(cls)
        for c in cores:
            c.flags.writeable = False
        obj.cores = tuple(cores)
        return obj

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    def __repr__(self):
        return f"TensorTrain(shape={self.shape}, ranks={self.ranks})"

    def __getitem__(self, idx):
        return element(self, idx)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, TensorTrain):
            return hadamard(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


# {{{ constructors

def zeros(shape: Sequence[int]) -> TensorTrain:
    return TensorTrain._trusted([np.zeros((1, n, 1)) for n in shape])


def constant(shape: Sequence[int], value: float) -> TensorTrain:
    cores = [np.ones((1, n, 1)) for n in shape]
    cores[0] = cores[0] * value
    return TensorTrain._trusted(cores)


def rank_one(vectors: Sequence[np.ndarray]) -> TensorTrain:
    """Outer product of one vector per mode."""
    return TensorTrain._trusted(
        [np.asarray(v, dtype=np.float64).reshape(1, -1, 1).copy() for v in vectors])


def _trunc_rank(s: np.ndarray, delta: float, cap: float) -> int:
    """Smallest r with ||s[r:]|| <= delta, at least 1 and at most cap."""
    if s.size == 0:
        return 1
    tail = np.sqrt(np.cumsum((s * s)[::-1]))[::-1]
    # tail[k] = ||s[k:]||; find first k with tail[k] <= delta
    ok = np.nonzero(tail <= delta)[0]
    r = int(ok[0]) if ok.size else s.size
    r = max(r, 1)
    return int(min(r, cap))


def tt_from_dense(T: np.ndarray, policy: TruncationPolicy = TruncationPolicy()) -> TensorTrain:
    """TT-SVD of a dense array.

    Each of the ``m - 1`` unfoldings is truncated to absolute accuracy
    ``epsilon * ||T|| / sqrt(m - 1)`` so the total relative error stays below
    ``epsilon`` when the rank cap is not active.
    """
    T = np.asarray(T, dtype=np.float64)
    if T.size == 0:
        raise ShapeError("cannot decompose an empty tensor")
    if T.ndim == 0:
        raise ShapeError("need at least one mode")
    shape = T.shape
    m = len(shape)
    nrm = float(np.linalg.norm(T))
    if nrm == 0.0:
        return zeros(shape)
    if m == 1:
        return TensorTrain._trusted([T.reshape(1, shape[0], 1).copy()])
    delta = policy.epsilon * nrm / math.sqrt(m - 1)
    cores = []
    rest = T.reshape(1, -1)
    r_prev = 1
    for n in shape[:-1]:
        mat = rest.reshape(r_prev * n, -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        r = _trunc_rank(s, delta, policy.cap)
        cores.append(u[:, :r].reshape(r_prev, n, r))
        rest = s[:r, None] * vt[:r]
        r_prev = r
    cores.append(rest.reshape(r_prev, shape[-1], 1))
    return TensorTrain._trusted(cores)


# }}}


# {{{ evaluation

def to_dense(A: TensorTrain) -> np.ndarray:
    res = A.cores[0].reshape(A.cores[0].shape[1], -1)
    for c in A.cores[1:]:
        res = res @ c.reshape(c.shape[0], -1)
        res = res.reshape(-1, c.shape[2])
    return res.reshape(A.shape)


def element(A: TensorTrain, idx: Sequence[int]) -> float:
    idx = tuple(int(i) for i in idx)
    if len(idx) != A.order:
        raise IndexError(f"expected {A.order} indices, got {len(idx)}")
    for i, n in zip(idx, A.shape):
        if not 0 <= i < n:
            raise IndexError(f"index {idx} out of bounds for shape {A.shape}")
    v = A.cores[0][:, idx[0], :]
    for c, i in zip(A.cores[1:], idx[1:]):
        v = v @ c[:, i, :]
    return float(v[0, 0])


def evaluate(A: TensorTrain, idx: np.ndarray) -> np.ndarray:
    """Entries at a batch of multi-indices, ``idx`` of shape ``(K, m)``."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 2 or idx.shape[1] != A.order:
        raise ShapeError(f"index batch must have shape (K, {A.order}), got {idx.shape}")
    res = A.cores[0][0, idx[:, 0], :]
    for l in range(1, A.order):
        g = A.cores[l][:, idx[:, l], :]
        res = np.einsum("ka,akb->kb", res, g)
    return res[:, 0]


# }}}


# {{{ algebra

def _check_same_shape(A, B):
    if A.shape != B.shape:
        raise ShapeError(f"mode sizes differ: {A.shape} vs {B.shape}")


def add(A: TensorTrain, B: TensorTrain) -> TensorTrain:
    """Entrywise sum via block-diagonal cores; ranks add, no rounding."""
    _check_same_shape(A, B)
    m = A.order
    if m == 1:
        return TensorTrain._trusted([A.cores[0] + B.cores[0]])
    cores = []
    for l, (a, b) in enumerate(zip(A.cores, B.cores)):
        ra0, n, ra1 = a.shape
        rb0, _, rb1 = b.shape
        if l == 0:
            c = np.concatenate([a, b], axis=2)
        elif l == m - 1:
            c = np.concatenate([a, b], axis=0)
        else:
            c = np.zeros((ra0 + rb0, n, ra1 + rb1))
            c[:ra0, :, :ra1] = a
            c[ra0:, :, ra1:] = b
        cores.append(c)
    return TensorTrain._trusted(cores)


def scale(A: TensorTrain, s: float) -> TensorTrain:
    cores = list(A.cores)
    cores[0] = cores[0] * float(s)
    return TensorTrain._trusted(cores)


def sub(A: TensorTrain, B: TensorTrain) -> TensorTrain:
    return add(A, scale(B, -1.0))


def hadamard(A: TensorTrain, B: TensorTrain) -> TensorTrain:
    """Entrywise product via Kronecker products of core slices."""
    _check_same_shape(A, B)
    cores = []
    for a, b in zip(A.cores, B.cores):
        ra0, n, ra1 = a.shape
        rb0, _, rb1 = b.shape
        c = np.einsum("aib,cid->acibd", a, b).reshape(ra0 * rb0, n, ra1 * rb1)
        cores.append(c)
    return TensorTrain._trusted(cores)


def round_tt(A: TensorTrain, policy: TruncationPolicy = TruncationPolicy()) -> TensorTrain:
    """Recompress ``A``: right-to-left QR sweep, then left-to-right truncated SVDs."""
    m = A.order
    cores = list(A.cores)
    if m == 1:
        return A
    for l in range(m - 1, 0, -1):
        r0, n, r1 = cores[l].shape
        q, r = np.linalg.qr(cores[l].reshape(r0, n * r1).T)
        k = q.shape[1]
        cores[l] = q.T.reshape(k, n, r1)
        cores[l - 1] = np.tensordot(cores[l - 1], r.T, axes=(2, 0))
    nrm = float(np.linalg.norm(cores[0]))
    if nrm == 0.0:
        return zeros(A.shape)
    delta = policy.epsilon * nrm / math.sqrt(m - 1)
    cap = policy.cap
    for l in range(m - 1):
        r0, n, r1 = cores[l].shape
        u, s, vt = np.linalg.svd(cores[l].reshape(r0 * n, r1), full_matrices=False)
        r = _trunc_rank(s, delta, cap)
        cores[l] = u[:, :r].reshape(r0, n, r)
        cores[l + 1] = np.tensordot(s[:r, None] * vt[:r], cores[l + 1], axes=(1, 0))
    return TensorTrain._trusted(cores)


# }}}


# {{{ reductions

def contract_weights(A: TensorTrain, weights: Sequence[np.ndarray]) -> float:
    """``sum_idx A(idx) * prod_l w_l(idx_l)``, one core at a time."""
    if len(weights) != A.order:
        raise ShapeError(f"need {A.order} weight vectors, got {len(weights)}")
    v = np.ones(1)
    for c, w in zip(A.cores, weights):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (c.shape[1],):
            raise ShapeError(f"weight vector of length {w.size} for mode of size {c.shape[1]}")
        v = v @ np.tensordot(c, w, axes=(1, 0))
    return float(v[0])


def norm_frobenius(A: TensorTrain) -> float:
    # left-to-right QR sweep; the norm ends up in the last carried factor
    carry = np.ones((1, 1))
    for c in A.cores[:-1]:
        c = np.tensordot(carry, c, axes=(1, 0))
        r0, n, r1 = c.shape
        _, carry = np.linalg.qr(c.reshape(r0 * n, r1))
    last = np.tensordot(carry, A.cores[-1], axes=(1, 0))
    return float(np.linalg.norm(last))


def coefficient_count(A: TensorTrain) -> int:
    return int(sum(c.size for c in A.cores))


# }}}


def dump(A: TensorTrain) -> str:
    """Text block with shape, ranks and row-major core entries (17 digits)."""
    lines = [
        "TensorTrain",
        "shape " + " ".join(str(n) for n in A.shape),
        "ranks " + " ".join(str(r) for r in A.ranks),
    ]
    for l, c in enumerate(A.cores):
        lines.append(f"core {l} " + " ".join(str(n) for n in c.shape))
        lines.append(" ".join(f"{v:.17g}" for v in c.ravel()))
    return "\n".join(lines) + "\n"
