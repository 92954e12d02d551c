"""Random quadratic approximation of a skew field at a matched point.

At z = (z*, z*) the second-order Taylor model of f reduces to

    f~(x) = g.(dx1 - dx2) + 1/2 (dx1' H11 dx1 - dx2' H11 dx2) + dx1' H12 dx2,

with dx_i = x_i - z*.  For a block isotropic field the coefficients are
mutually independent with

    g_i            ~ N(0, -4 h'(0))
    H11_ii         ~ N(0, 16 h''(0)),   H11_ij (i<j) ~ N(0, 8 h''(0))
    H12_ij (i<j)   ~ N(0,  8 h''(0)),   H12 = -H12^T

i.e. a scaled standard normal vector, GOE matrix and skew-symmetric ensemble.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateKernelError, DimensionMismatchError
from .field import as_expansion, as_pair

__all__ = [
    "QuadraticModel",
    "derivative_scales",
    "sample_model",
    "sample_models",
    "eval_model",
    "cov_model",
    "cov_model_decoupled",
]


@dataclass(frozen=True)
class QuadraticModel:
    """Coefficients of a quadratic model; arrays may carry a leading batch axis.

    ``g`` has shape ``(..., D)`` and ``H11``/``H12`` shape ``(..., D, D)``.
    """

    zstar: np.ndarray
    g: np.ndarray
    H11: np.ndarray
    H12: np.ndarray
    sigma_g_sq: float
    sigma_h_sq: float

    @property
    def dim(self):
        return self.zstar.size

    @property
    def batch_shape(self):
        return self.g.shape[:-1]

    def __len__(self):
        if not self.batch_shape:
            raise TypeError("unbatched QuadraticModel has no length")
        return self.batch_shape[0]

    def __getitem__(self, idx):
        return QuadraticModel(
            self.zstar, self.g[idx], self.H11[idx], self.H12[idx], self.sigma_g_sq, self.sigma_h_sq
        )

    def to_record(self):
        """Flat record: H11 upper triangle incl. diagonal, H12 strict upper triangle."""
        if self.batch_shape:
            raise TypeError("only single models serialise to a record")
        D = self.dim
        iu, ju = np.triu_indices(D)
        iu1, ju1 = np.triu_indices(D, 1)
        return {
            "dim": D,
            "zstar": self.zstar.tolist(),
            "g": self.g.tolist(),
            "H11": self.H11[iu, ju].tolist(),
            "H12": self.H12[iu1, ju1].tolist(),
            "sigma_g_sq": self.sigma_g_sq,
            "sigma_h_sq": self.sigma_h_sq,
        }

    @classmethod
    def from_record(cls, rec):
        D = int(rec["dim"])
        H11 = np.zeros((D, D))
        H11[np.triu_indices(D)] = rec["H11"]
        H11 = H11 + np.triu(H11, 1).T
        H12 = np.zeros((D, D))
        H12[np.triu_indices(D, 1)] = rec["H12"]
        H12 = H12 - H12.T
        return cls(
            np.asarray(rec["zstar"], dtype=float),
            np.asarray(rec["g"], dtype=float),
            H11,
            H12,
            float(rec["sigma_g_sq"]),
            float(rec["sigma_h_sq"]),
        )


def derivative_scales(kernel):
    """Return ``(-4 h'(0), 8 h''(0))``, the gradient and Hessian entry scales."""
    sg = -4.0 * kernel.dh0
    sh = 8.0 * kernel.d2h0
    if not sg > 0 or not sh > 0:
        raise DegenerateKernelError(
            f"need h'(0) < 0 and h''(0) > 0, got h'(0)={kernel.dh0!r}, h''(0)={kernel.d2h0!r}"
        )
    return sg, sh


def sample_models(kernel, dim, zstar, rng, count):
    """Draw ``count`` independent models, entrywise, as one batched model."""
    sg, sh = derivative_scales(kernel)
    z = as_expansion(zstar, dim).zstar
    D = int(dim)
    n = int(count)
    iu, ju = np.triu_indices(D)
    iu1, ju1 = np.triu_indices(D, 1)

    g = np.sqrt(sg) * rng.standard_normal((n, D))

    upper = rng.standard_normal((n, iu.size))
    upper *= np.sqrt(np.where(iu == ju, 2.0 * sh, sh))
    H11 = np.zeros((n, D, D))
    H11[:, iu, ju] = upper
    H11[:, ju, iu] = upper

    strict = np.sqrt(sh) * rng.standard_normal((n, iu1.size))
    H12 = np.zeros((n, D, D))
    H12[:, iu1, ju1] = strict
    H12[:, ju1, iu1] = -strict
    return QuadraticModel(z, g, H11, H12, sg, sh)


def sample_model(kernel, dim, zstar, rng):
    """Draw a single model; ``rng`` is a ``numpy.random.Generator``."""
    return sample_models(kernel, dim, zstar, rng, 1)[0]


def eval_model(model, x):
    """Evaluate the quadratic model at ``x`` (broadcast over model batches)."""
    x = as_pair(x)
    if x.dim != model.dim:
        raise DimensionMismatchError(f"point has dim {x.dim}, model has dim {model.dim}")
    d1 = x.first - model.zstar
    d2 = x.second - model.zstar
    lin = model.g @ (d1 - d2)
    quad = 0.5 * (d1 @ model.H11 @ d1 - d2 @ model.H11 @ d2)
    cross = d1 @ model.H12 @ d2
    return lin + quad + cross


def _inner_terms(x, y, z):
    x, y = as_pair(x), as_pair(y)
    if x.dim != y.dim or x.dim != z.dim:
        raise DimensionMismatchError(f"dims differ: {x.dim}, {y.dim}, {z.dim}")
    dx1, dx2 = x.first - z.zstar, x.second - z.zstar
    dy1, dy2 = y.first - z.zstar, y.second - z.zstar
    same = dx1 @ dy1 + dx2 @ dy2
    flipped = dx1 @ dy2 + dx2 @ dy1
    return same, flipped


def cov_model(kernel, x, y, z=None):
    """Closed-form covariance of the quadratic model at ``x`` and ``y``."""
    x = as_pair(x)
    z = as_expansion(z, x.dim)
    same, flipped = _inner_terms(x, y, z)
    return -4.0 * kernel.dh0 * (same - flipped) + 4.0 * kernel.d2h0 * (same**2 - flipped**2)


def cov_model_decoupled(kernel, x, y, z=None):
    """Same covariance assembled term by term from the matrix inner products.

    Gradient, diagonal-block and off-diagonal-block contributions are formed
    separately as Frobenius products of the rank-one displacement matrices;
    used as an independent cross-check of :func:`cov_model`.
    """
    x, y = as_pair(x), as_pair(y)
    z = as_expansion(z, x.dim)
    dx1, dx2 = x.first - z.zstar, x.second - z.zstar
    dy1, dy2 = y.first - z.zstar, y.second - z.zstar
    grad = -4.0 * kernel.dh0 * np.dot(dx1 - dx2, dy1 - dy2)
    Sx = np.outer(dx1, dx1) - np.outer(dx2, dx2)
    Sy = np.outer(dy1, dy1) - np.outer(dy2, dy2)
    diag_block = 4.0 * kernel.d2h0 * np.sum(Sx * Sy)
    Ax = np.outer(dx1, dx2) - np.outer(dx2, dx1)
    Ay = np.outer(dy1, dy2) - np.outer(dy2, dy1)
    off_block = 4.0 * kernel.d2h0 * np.sum(Ax * Ay)
    return grad + diag_block + off_block
