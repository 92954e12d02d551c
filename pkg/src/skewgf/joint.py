"""Exact joint sampling of field values and Taylor coefficients.

The joint vector is laid out as::

    [ f(x_1) .. f(x_n) | g (D) | vech(H11) (D(D+1)/2) | strict-upper(H12) (D(D-1)/2) ]

Field/derivative cross blocks come from differentiating k_f at the matched
point z; with q = ||y - z||^2 and a = z* - y1, b = z* - y2:

    Cov(g_i,   f(y)) = 4 h'(q)  (a_i - b_i)
    Cov(H11_ij, f(y)) = 8 h''(q) (a_i a_j - b_i b_j)
    Cov(H12_ij, f(y)) = 8 h''(q) (a_i b_j - b_i a_j)

Random numbers are generated in fixed-size row blocks, each seeded from
``(seed, block index)``, so row ``i`` depends only on ``(seed, i)`` whatever
the number of worker threads.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .exceptions import DimensionMismatchError, IllConditionedGramError
from .field import as_expansion, as_pair, gram_skew
from .quadratic import QuadraticModel, derivative_scales

log = logging.getLogger(__name__)

__all__ = [
    "BLOCK_ROWS",
    "JointGram",
    "cross_cov_derivatives",
    "build_joint_gram",
    "sample_joint",
    "block_normals",
    "taylor_design",
    "models_from_draws",
]

BLOCK_ROWS = 4096
JITTER_START = 1e-12
JITTER_MAX = 1e-6


def cross_cov_derivatives(kernel, z, y):
    """Covariances of ``(g, H11, H12)`` at the matched point with ``f(y)``.

    Returns a length-D vector and two DxD matrices (the H12 one is
    skew-symmetric, the H11 one symmetric).
    """
    y = as_pair(y)
    z = as_expansion(z, y.dim)
    a = z.zstar - y.first
    b = z.zstar - y.second
    q = float(a @ a + b @ b)
    d1 = kernel.eval(q, 1)
    d2 = kernel.eval(q, 2)
    cg = 4.0 * d1 * (a - b)
    c11 = 8.0 * d2 * (np.outer(a, a) - np.outer(b, b))
    c12 = 8.0 * d2 * (np.outer(a, b) - np.outer(b, a))
    return cg, c11, c12


def _layout(n, D):
    sizes = [("f", n), ("g", D), ("H11", D * (D + 1) // 2), ("H12", D * (D - 1) // 2)]
    out, start = {}, 0
    for name, size in sizes:
        out[name] = slice(start, start + size)
        start += size
    return out


@dataclass
class JointGram:
    """Joint covariance of field values and derivative coefficients.

    ``factor`` is the lower Cholesky factor of the (jittered) matrix restricted
    to ``active`` coordinates, taken in ``order`` (derivatives first).  Rows
    that are identically zero are left out and reinserted as exact zeros.
    """

    layout: dict
    matrix: np.ndarray
    jitter_used: float
    dim: int
    zstar: np.ndarray
    points: list
    factor: np.ndarray = field(repr=False, default=None)
    order: np.ndarray = field(repr=False, default=None)

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def n_points(self):
        return self.layout["f"].stop

    def half_indices(self):
        D = self.dim
        return np.triu_indices(D), np.triu_indices(D, 1)


def _derivative_variances(kernel, D):
    sg, sh = derivative_scales(kernel)
    iu, ju = np.triu_indices(D)
    return np.concatenate(
        [
            np.full(D, sg),
            np.where(iu == ju, 2.0 * sh, sh),
            np.full(D * (D - 1) // 2, sh),
        ]
    )


def build_joint_gram(kernel, z, points, factorize=True):
    """Assemble the joint Gram for ``points`` about the expansion point ``z``."""
    pts = [as_pair(p) for p in points]
    zz = as_expansion(z, pts[0].dim if pts else None)
    D = zz.dim
    for p in pts:
        if p.dim != D:
            raise DimensionMismatchError(f"point of dim {p.dim} with expansion point of dim {D}")
    n = len(pts)
    lay = _layout(n, D)
    m = lay["H12"].stop
    G = np.zeros((m, m))

    G[lay["f"], lay["f"]] = gram_skew(kernel, pts)
    dvar = _derivative_variances(kernel, D)
    G[n:, n:] = np.diag(dvar)

    iu, ju = np.triu_indices(D)
    iu1, ju1 = np.triu_indices(D, 1)
    for k, p in enumerate(pts):
        if p.is_matched:
            continue
        cg, c11, c12 = cross_cov_derivatives(kernel, zz, p)
        row = np.concatenate([cg, c11[iu, ju], c12[iu1, ju1]])
        G[k, n:] = row
        G[n:, k] = row

    gram = JointGram(lay, G, 0.0, D, zz.zstar, pts)
    if factorize:
        _factorize(gram)
    return gram


def _factorize(gram):
    G = gram.matrix
    m = G.shape[0]
    n = gram.n_points
    nonzero = np.any(G != 0.0, axis=1)
    # derivatives first: their block is diagonal and well conditioned
    order = np.concatenate([np.arange(n, m), np.arange(n)])
    order = order[nonzero[order]]
    A = G[np.ix_(order, order)]
    k = A.shape[0]
    if k == 0:
        gram.factor, gram.order = np.zeros((0, 0)), order
        return gram
    scale = np.trace(A) / k
    jitters = [0.0]
    j = JITTER_START
    while j <= JITTER_MAX * (1 + 1e-9):
        jitters.append(j)
        j *= 10.0
    info = 0
    for rel in jitters:
        L, info = lapack.dpotrf(A + rel * scale * np.eye(k), lower=1, clean=1)
        if info == 0:
            gram.factor = L
            gram.order = order
            gram.jitter_used = rel * scale
            if rel:
                log.debug("joint gram needed jitter %.3g", rel * scale)
            return gram
    pivot = int(order[info - 1]) if info > 0 else None
    raise IllConditionedGramError(
        f"Cholesky failed at pivot {pivot} even with jitter {JITTER_MAX * scale:.3g}",
        pivot=pivot,
        jitter=JITTER_MAX * scale,
    )


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        raise TypeError("pass an integer seed (or SeedSequence); rows are seeded per block")
    return np.random.SeedSequence(int(seed))


def block_normals(seed, block, rows, width):
    """Standard normals for one row block; deterministic in ``(seed, block)``."""
    ss = _seed_sequence(seed)
    child = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (int(block),))
    return np.random.default_rng(child).standard_normal((rows, width))


def _blockwise(seed, count, width, fn, out, threads):
    nblocks = -(-count // BLOCK_ROWS)

    def work(b):
        lo = b * BLOCK_ROWS
        hi = min(count, lo + BLOCK_ROWS)
        out[lo:hi] = fn(block_normals(seed, b, hi - lo, width))

    if threads and threads > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, range(nblocks)))
    else:
        for b in range(nblocks):
            work(b)
    return out


def sample_joint(gram, seed, count, threads=1):
    """Draw ``count`` iid rows with covariance ``gram.matrix`` (up to jitter).

    Returns an array of shape ``(count, gram.size)``.  Coordinates that are
    identically zero in the Gram are exactly zero in every row.
    """
    if gram.factor is None:
        _factorize(gram)
    count = int(count)
    m = gram.size
    out = np.zeros((count, m))
    if count == 0 or gram.order.size == 0:
        return out
    L = gram.factor
    order = gram.order
    k = order.size

    # BLAS matmul may round differently with the number of rows; a row-wise
    # reduction keeps each output row a function of its own normals only.
    chunk = max(1, 4_000_000 // max(1, k * k))

    def transform(Z):
        rows = np.zeros((Z.shape[0], m))
        for lo in range(0, Z.shape[0], chunk):
            z = Z[lo : lo + chunk]
            rows[lo : lo + chunk, order] = np.sum(z[:, None, :] * L[None, :, :], axis=2)
        return rows

    return _blockwise(seed, count, k, transform, out, threads)


def taylor_design(points, z):
    """Rows ``a(x)`` with f~(x) = a(x) . (g, vech H11, strict-upper H12)."""
    pts = [as_pair(p) for p in points]
    zz = as_expansion(z, pts[0].dim if pts else None)
    D = zz.dim
    iu, ju = np.triu_indices(D)
    iu1, ju1 = np.triu_indices(D, 1)
    rows = []
    for p in pts:
        d1 = p.first - zz.zstar
        d2 = p.second - zz.zstar
        sq = np.outer(d1, d1) - np.outer(d2, d2)
        # off-diagonal H11 entries appear twice in the symmetric quadratic form
        w11 = np.where(iu == ju, 0.5, 1.0) * sq[iu, ju]
        cr = np.outer(d1, d2)
        w12 = cr[iu1, ju1] - cr[ju1, iu1]
        rows.append(np.concatenate([d1 - d2, w11, w12]))
    return np.array(rows).reshape(len(pts), -1)


def models_from_draws(gram, draws, kernel):
    """Expand the derivative columns of joint draws into a batched model."""
    lay = gram.layout
    D = gram.dim
    draws = np.atleast_2d(draws)
    N = draws.shape[0]
    (iu, ju), (iu1, ju1) = gram.half_indices()
    H11 = np.zeros((N, D, D))
    H11[:, iu, ju] = draws[:, lay["H11"]]
    H11[:, ju, iu] = draws[:, lay["H11"]]
    H12 = np.zeros((N, D, D))
    H12[:, iu1, ju1] = draws[:, lay["H12"]]
    H12[:, ju1, iu1] = -draws[:, lay["H12"]]
    sg, sh = derivative_scales(kernel)
    return QuadraticModel(gram.zstar, draws[:, lay["g"]].copy(), H11, H12, sg, sh)
