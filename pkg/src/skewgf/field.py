"""Paired-point geometry and the covariances of the base and skew fields.

A point of the product space R^D x R^D is stored as two length-D halves.  The
skew-symmetric field f(x) = u(x) - u(flip(x)) is parametrised directly by its
covariance

    k_f(x, y) = 2 (h(||x - y||^2) - h(||x - flip(y)||^2)),

with all means identically zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError, NotOrthogonalError

__all__ = [
    "PairedPoint",
    "ExpansionPoint",
    "as_pair",
    "flip",
    "cov_base",
    "cov_skew",
    "gram_skew",
    "apply_block_orthogonal",
    "random_orthogonal",
]


@dataclass(frozen=True)
class PairedPoint:
    first: np.ndarray
    second: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.first, dtype=float))
        b = np.atleast_1d(np.asarray(self.second, dtype=float))
        if a.ndim != 1 or a.shape != b.shape or a.size == 0:
            raise DimensionMismatchError(
                f"paired point halves must be equal-length vectors, got {a.shape} and {b.shape}"
            )
        object.__setattr__(self, "first", a)
        object.__setattr__(self, "second", b)

    @property
    def dim(self):
        return self.first.size

    @property
    def is_matched(self):
        return bool(np.array_equal(self.first, self.second))

    def flat(self):
        return np.concatenate([self.first, self.second])

    @classmethod
    def from_flat(cls, values, dim=None):
        v = np.asarray(values, dtype=float).ravel()
        if dim is None:
            dim = v.size // 2
        if v.size != 2 * dim:
            raise DimensionMismatchError(f"flat point of length {v.size} does not match dim={dim}")
        return cls(v[:dim], v[dim:])

    def to_record(self):
        return {"dim": self.dim, "x": self.flat().tolist()}

    @classmethod
    def from_record(cls, rec):
        return cls.from_flat(rec["x"], int(rec["dim"]))

    def __eq__(self, other):
        if not isinstance(other, PairedPoint):
            return NotImplemented
        return np.array_equal(self.first, other.first) and np.array_equal(self.second, other.second)

    def __hash__(self):
        return hash((self.first.tobytes(), self.second.tobytes()))


@dataclass(frozen=True)
class ExpansionPoint:
    """The matched point z = (z*, z*) about which the quadratic model is taken."""

    zstar: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.zstar, dtype=float))
        if z.ndim != 1 or z.size == 0:
            raise DimensionMismatchError("zstar must be a non-empty vector")
        object.__setattr__(self, "zstar", z)

    @property
    def dim(self):
        return self.zstar.size

    def as_pair(self):
        return PairedPoint(self.zstar, self.zstar)


def as_pair(x):
    """Coerce a PairedPoint, a ``(first, second)`` tuple or a flat array."""
    if isinstance(x, PairedPoint):
        return x
    if isinstance(x, ExpansionPoint):
        return x.as_pair()
    if isinstance(x, (tuple, list)) and len(x) == 2 and np.ndim(x[0]) <= 1 and np.ndim(x[1]) <= 1:
        if np.size(x[0]) == np.size(x[1]):
            return PairedPoint(x[0], x[1])
    return PairedPoint.from_flat(x)


def as_expansion(z, dim=None):
    if isinstance(z, ExpansionPoint):
        out = z
    elif z is None:
        if dim is None:
            raise DimensionMismatchError("expansion point needs a dimension")
        out = ExpansionPoint(np.zeros(dim))
    else:
        out = ExpansionPoint(z)
    if dim is not None and out.dim != dim:
        raise DimensionMismatchError(f"expansion point has dim {out.dim}, expected {dim}")
    return out


def _check_dims(*points):
    dims = {p.dim for p in points}
    if len(dims) != 1:
        raise DimensionMismatchError(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


def flip(x):
    x = as_pair(x)
    return PairedPoint(x.second.copy(), x.first.copy())


def _sqdist(x, y):
    return float(np.sum((x.first - y.first) ** 2) + np.sum((x.second - y.second) ** 2))


def _sqdist_flip(x, y):
    return float(np.sum((x.first - y.second) ** 2) + np.sum((x.second - y.first) ** 2))


def cov_base(kernel, x, y):
    """Base-field covariance h(||x - y||^2) over the concatenated 2D-vector."""
    x, y = as_pair(x), as_pair(y)
    _check_dims(x, y)
    return kernel.eval(_sqdist(x, y), 0)


def cov_skew(kernel, x, y):
    """Skew-field covariance 2 (k_u(x, y) - k_u(x, flip(y)))."""
    x, y = as_pair(x), as_pair(y)
    _check_dims(x, y)
    return 2.0 * (kernel.eval(_sqdist(x, y), 0) - kernel.eval(_sqdist_flip(x, y), 0))


def gram_skew(kernel, points):
    """Gram matrix of ``cov_skew`` over a list of paired points."""
    pts = [as_pair(p) for p in points]
    n = len(pts)
    if n == 0:
        return np.zeros((0, 0))
    _check_dims(*pts)
    a = np.stack([p.first for p in pts])
    b = np.stack([p.second for p in pts])
    d_same = (
        np.sum((a[:, None, :] - a[None, :, :]) ** 2, axis=-1)
        + np.sum((b[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    )
    d_flip = (
        np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        + np.sum((b[:, None, :] - a[None, :, :]) ** 2, axis=-1)
    )
    K = 2.0 * (kernel.eval(d_same, 0) - kernel.eval(d_flip, 0))
    # matched points give exact zeros only up to roundoff in the distances
    matched = np.array([p.is_matched for p in pts])
    K[matched, :] = 0.0
    K[:, matched] = 0.0
    return 0.5 * (K + K.T)


def _check_orthogonal(Q, tol=1e-10):
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise NotOrthogonalError(f"expected a square matrix, got shape {Q.shape}")
    err = np.max(np.abs(Q.T @ Q - np.eye(Q.shape[0])))
    if err > tol:
        raise NotOrthogonalError(f"Q^T Q deviates from identity by {err:.3g}")
    return Q


def apply_block_orthogonal(Q, x):
    """Map both halves of ``x`` by the same orthogonal matrix ``Q``."""
    Q = _check_orthogonal(Q)
    x = as_pair(x)
    if Q.shape[0] != x.dim:
        raise DimensionMismatchError(f"Q is {Q.shape[0]}x{Q.shape[0]} but point has dim {x.dim}")
    return PairedPoint(Q @ x.first, Q @ x.second)


def random_orthogonal(dim, rng):
    """Haar-distributed orthogonal matrix via QR with sign correction."""
    A = rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))
