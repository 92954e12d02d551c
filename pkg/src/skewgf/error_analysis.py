"""Error process E = f~ - f: covariances, pointwise variance and bounds.

All positions enter as displacements from the expansion point z*.  With
P = <dx, dy> - <dx, flip(dy)> and S = <dx, dy>^2 - <dx, flip(dy)>^2,

    Cov(f(x), f~(y)) = -4 h'(|dx|^2) P + 4 h''(|dx|^2) S
    k_E(x, y) = k_f~(x, y) - Cov(f(x), f~(y)) - Cov(f(y), f~(x)) + k_f(x, y)

Worst-case bounds over a disc of squared radius R^2 use the regime split
given by the critical radii of h' and h''.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri

from .exceptions import (
    DegenerateKernelError,
    DimensionMismatchError,
    InconsistentVarianceError,
    NoCriticalRadiusError,
)
from .field import as_expansion, as_pair, cov_skew
from .quadratic import cov_model

__all__ = [
    "Regime",
    "CriticalRadii",
    "BoundConfig",
    "BoundReport",
    "ErrorCovariance",
    "cov_cross",
    "cov_error",
    "cov_error_detail",
    "cov_error_merged",
    "var_pointwise",
    "var_pointwise_arrays",
    "var_polar",
    "pointwise_bound",
    "critical_radii",
    "phi",
    "psi",
    "region_bound",
    "uniform_bound",
    "asymptotics",
    "NEGATIVE_VARIANCE_TOL",
]

NEGATIVE_VARIANCE_TOL = 1e-10
COMPOSITION_RTOL = 1e-8


class Regime(str, enum.Enum):
    LOCAL = "Local"
    FAR_OR_TRANSITIONAL = "FarOrTransitional"


def _displacements(x, y, z):
    x, y = as_pair(x), as_pair(y)
    z = as_expansion(z, x.dim)
    if y.dim != x.dim:
        raise DimensionMismatchError(f"dims differ: {x.dim} vs {y.dim}")
    return (x.first - z.zstar, x.second - z.zstar), (y.first - z.zstar, y.second - z.zstar), z


def _pq(dx, dy):
    same = dx[0] @ dy[0] + dx[1] @ dy[1]
    flipped = dx[0] @ dy[1] + dx[1] @ dy[0]
    return same - flipped, same**2 - flipped**2


def cov_cross(kernel, x, y, z=None):
    """Cov(f(x), f~(y)): field value at ``x`` against the model at ``y``."""
    dx, dy, _ = _displacements(x, y, z)
    P, S = _pq(dx, dy)
    q = float(dx[0] @ dx[0] + dx[1] @ dx[1])
    return -4.0 * kernel.eval(q, 1) * P + 4.0 * kernel.eval(q, 2) * S


def cov_error_merged(kernel, x, y, z=None):
    """The single merged closed form of k_E (kept as a diagnostic)."""
    dx, dy, z = _displacements(x, y, z)
    P, S = _pq(dx, dy)
    qx = float(dx[0] @ dx[0] + dx[1] @ dx[1])
    qy = float(dy[0] @ dy[0] + dy[1] @ dy[1])
    h1 = kernel.eval(qx, 1) + kernel.eval(qy, 1) - kernel.dh0
    h2 = kernel.eval(qx, 2) + kernel.eval(qy, 2) - kernel.d2h0
    return cov_skew(kernel, x, y) + 4.0 * h1 * P - 4.0 * h2 * S


@dataclass(frozen=True)
class ErrorCovariance:
    value: float
    merged: float
    model_term: float
    cross_xy: float
    cross_yx: float
    field_term: float
    warning: str | None = None

    @property
    def discrepancy(self):
        return abs(self.value - self.merged)


def cov_error_detail(kernel, x, y, z=None):
    """k_E by composition, with the merged form and its discrepancy attached."""
    x, y = as_pair(x), as_pair(y)
    z = as_expansion(z, x.dim)
    kt = cov_model(kernel, x, y, z)
    cxy = cov_cross(kernel, x, y, z)
    cyx = cov_cross(kernel, y, x, z)
    kf = cov_skew(kernel, x, y)
    value = kt - cxy - cyx + kf
    merged = cov_error_merged(kernel, x, y, z)
    scale = abs(kt) + abs(kf) + 1.0
    msg = None
    if abs(value - merged) > COMPOSITION_RTOL * scale:
        msg = (
            f"merged k_E differs from composition by {abs(value - merged):.3g} "
            f"(scale {scale:.3g})"
        )
    return ErrorCovariance(value, merged, kt, cxy, cyx, kf, msg)


def cov_error(kernel, x, y, z=None):
    """Covariance of the error process at ``x`` and ``y``."""
    det = cov_error_detail(kernel, x, y, z)
    if det.warning:
        warnings.warn(det.warning, RuntimeWarning, stacklevel=2)
    return det.value


def _clamp(v):
    v = np.asarray(v, dtype=float)
    if np.any(v < -NEGATIVE_VARIANCE_TOL):
        raise InconsistentVarianceError(f"negative error variance {v.min():.3g}")
    return np.maximum(v, 0.0)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS
SMALL_ARGUMENT = 0.1  # in units of lengthscale^2


def _remainders(kernel, t):
    """Taylor remainders of h and h' at 0, with C(s) = h''(s) - h''(0).

    B(t) = int_0^t C,  A(t) = int_0^t (t - s) C(s) ds,  evaluated by
    Gauss-Legendre after s = t w^2 (which also smooths a sqrt(s) term in C).
    """
    t = np.asarray(t, dtype=float)[..., None]
    w, wt = _GL_NODES, _GL_WEIGHTS
    C = kernel.eval(t * w**2, 2) - kernel.d2h0
    B = 2.0 * t[..., 0] * np.sum(wt * w * C, axis=-1)
    A = 2.0 * t[..., 0] ** 2 * np.sum(wt * (1.0 - w**2) * w * C, axis=-1)
    return A, B


def _var_invariants(kernel, diff, tot, summ):
    """Error variance from |d1-d2|^2, |d1|^2+|d2|^2 and |d1+d2|^2."""
    diff, tot, summ = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (diff, tot, summ)))
    h0, dh0, d2h0 = kernel.h0, kernel.dh0, kernel.d2h0
    v = (
        2.0 * (h0 - kernel.eval(2.0 * diff, 0))
        + 4.0 * (-dh0 + 2.0 * kernel.eval(tot, 1)) * diff
        + 4.0 * (d2h0 - 2.0 * kernel.eval(tot, 2)) * diff * summ
    )
    # Near z* the leading orders cancel exactly (diff + summ = 2 tot); the
    # remainder form keeps the O(|d|^6) value instead of rounding noise.
    small = np.maximum(2.0 * diff, tot) <= SMALL_ARGUMENT * kernel.lengthscale**2
    if np.any(small):
        d, t, s = diff[small], tot[small], summ[small]
        A2u, _ = _remainders(kernel, 2.0 * d)
        _, BT = _remainders(kernel, t)
        CT = kernel.eval(t, 2) - d2h0
        v = np.array(v, dtype=float)
        v[small] = -2.0 * A2u + 8.0 * d * BT - 8.0 * d * s * CT
    return _clamp(v)


def var_pointwise_arrays(kernel, d1, d2):
    """Vectorised pointwise error variance for displacement arrays ``(..., D)``."""
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    diff = np.sum((d1 - d2) ** 2, axis=-1)
    tot = np.sum(d1**2, axis=-1) + np.sum(d2**2, axis=-1)
    summ = np.sum((d1 + d2) ** 2, axis=-1)
    return _var_invariants(kernel, diff, tot, summ)


def var_pointwise(kernel, x, z=None):
    """Pointwise variance of the error at ``x``; zero on matched inputs."""
    x = as_pair(x)
    z = as_expansion(z, x.dim)
    if x.is_matched:
        return 0.0
    return float(var_pointwise_arrays(kernel, x.first - z.zstar, x.second - z.zstar))


def var_polar(kernel, r1, r2, theta):
    """Error variance in terms of the two radii and their relative angle."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if np.any(r1 < 0) or np.any(r2 < 0):
        raise ValueError("radii must be non-negative")
    cross = 2.0 * r1 * r2 * np.cos(theta)
    tot = r1**2 + r2**2
    out = _var_invariants(kernel, tot - cross, tot, tot + cross)
    return float(out) if out.ndim == 0 else out


def pointwise_bound(kernel, x, z=None, p=0.95):
    """p-quantile of the error at ``x``: sigma_E(x) * Phi^-1(p)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    return math.sqrt(var_pointwise(kernel, x, z)) * float(ndtri(p))


@dataclass(frozen=True)
class CriticalRadii:
    """Squared critical radii: roots of -h'(0) + 2h'(t) and h''(0) - 2h''(t)."""

    rc1_sq: float
    rc2_sq: float

    @property
    def min_sq(self):
        return min(self.rc1_sq, self.rc2_sq)

    @property
    def max_sq(self):
        return max(self.rc1_sq, self.rc2_sq)


def _root(fn, scale, t_max):
    hi = scale
    while fn(hi) <= 0.0:
        hi *= 2.0
        if hi > t_max:
            raise NoCriticalRadiusError(f"no sign change found on [0, {t_max:.3g}]")
    return brentq(fn, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def critical_radii(kernel, t_max=None):
    dh0, d2h0 = kernel.dh0, kernel.d2h0
    if not dh0 < 0 or not d2h0 > 0:
        raise DegenerateKernelError("critical radii need h'(0) < 0 and h''(0) > 0")
    l2 = kernel.lengthscale**2
    if t_max is None:
        t_max = 1e8 * l2
    rc1 = _root(lambda t: -dh0 + 2.0 * kernel.eval(t, 1), l2, t_max)
    rc2 = _root(lambda t: d2h0 - 2.0 * kernel.eval(t, 2), l2, t_max)
    return CriticalRadii(rc1, rc2)


def phi(kernel, R):
    """Local-regime variance bound 2 (h(0) - h(8 R^2))."""
    R = np.asarray(R, dtype=float)
    return 2.0 * (kernel.h0 - kernel.eval(8.0 * R**2, 0))


def psi(kernel, R):
    """Far-regime variance bound as a function of the radius R."""
    R = np.asarray(R, dtype=float)
    R2 = R**2
    return (
        2.0 * (kernel.h0 - kernel.eval(8.0 * R2, 0))
        + 4.0 * (-kernel.dh0 + 2.0 * kernel.eval(2.0 * R2, 1)) * 4.0 * R2
        + 4.0 * (kernel.d2h0 - 2.0 * kernel.eval(2.0 * R2, 2)) * 4.0 * R2**2
    )


def _psi_clamped(kernel, R2):
    # In the transitional band one of the bracketed factors is still negative;
    # its term is bounded above by zero there, so clamp instead of subtracting.
    a = max(0.0, -kernel.dh0 + 2.0 * kernel.eval(2.0 * R2, 1))
    b = max(0.0, kernel.d2h0 - 2.0 * kernel.eval(2.0 * R2, 2))
    return 2.0 * (kernel.h0 - kernel.eval(8.0 * R2, 0)) + 16.0 * a * R2 + 16.0 * b * R2**2


def region_bound(kernel, r_region_sq, radii=None):
    """Upper bound on the error variance over a disc of squared radius ``r_region_sq``.

    Returns ``(regime, variance_bound)``.
    """
    if not r_region_sq > 0:
        raise ValueError("r_region_sq must be positive")
    radii = radii or critical_radii(kernel)
    if 2.0 * r_region_sq <= radii.min_sq:
        r2 = min(radii.rc1_sq, radii.rc2_sq, r_region_sq)
        return Regime.LOCAL, float(2.0 * (kernel.h0 - kernel.eval(8.0 * r2, 0)))
    return Regime.FAR_OR_TRANSITIONAL, float(_psi_clamped(kernel, r_region_sq))


@dataclass(frozen=True)
class BoundConfig:
    """Confidence levels and input covariance spectrum for the uniform bound.

    ``r_region_sq`` may be given directly, bypassing the chi-squared radius.
    """

    p: float
    pprime: float
    sigma_eigs: tuple = ()
    D: int = 0
    r_region_sq: float | None = None

    def __post_init__(self):
        if not 0.5 <= self.p < 1.0:
            raise ValueError(f"p must lie in [0.5, 1), got {self.p!r}")
        if not 0.0 < self.pprime < 1.0:
            raise ValueError(f"pprime must lie in (0, 1), got {self.pprime!r}")
        eigs = tuple(float(e) for e in self.sigma_eigs)
        if any(e <= 0 for e in eigs):
            raise ValueError("sigma_eigs must be positive")
        eigs = tuple(sorted(eigs, reverse=True))
        object.__setattr__(self, "sigma_eigs", eigs)
        D = int(self.D) if self.D else len(eigs)
        if eigs and len(eigs) not in (1, D):
            raise ValueError(f"got {len(eigs)} eigenvalues for D={D}")
        if eigs and len(eigs) == 1 and D > 1:
            object.__setattr__(self, "sigma_eigs", eigs * D)
        object.__setattr__(self, "D", D)
        if self.r_region_sq is None:
            if D < 1 or not eigs:
                raise ValueError("need sigma_eigs (and D) or an explicit r_region_sq")
        elif not self.r_region_sq > 0:
            raise ValueError("r_region_sq must be positive")

    @property
    def delta(self):
        return self.p * self.pprime

    @property
    def lambda1(self):
        return self.sigma_eigs[0] if self.sigma_eigs else None


@dataclass
class BoundReport:
    r_region_sq: float
    regime: Regime
    variance_bound: float
    b_uniform: float
    paper_literal_b: float
    critical: CriticalRadii
    p: float
    pprime: float
    delta: float
    quantile_p: float
    chi2_radius: float | None = None
    extra: dict = field(default_factory=dict)

    def to_record(self):
        return {
            "r_region_sq": self.r_region_sq,
            "regime": self.regime.value,
            "variance_bound": self.variance_bound,
            "b_uniform": self.b_uniform,
            "paper_literal_b": self.paper_literal_b,
            "rc1_sq": self.critical.rc1_sq,
            "rc2_sq": self.critical.rc2_sq,
            "p": self.p,
            "pprime": self.pprime,
            "delta": self.delta,
            "quantile_p": self.quantile_p,
            "chi2_radius": self.chi2_radius,
        }


def uniform_bound(kernel, config, radii=None):
    """High-probability bound on the error for Gaussian inputs about z*.

    ``b_uniform`` multiplies the normal quantile by the square root of the
    variance bound; ``paper_literal_b`` multiplies by the variance bound
    itself and is kept only for comparison.
    """
    from .dimension import chi2_quantile

    radii = radii or critical_radii(kernel)
    chi2_r = None
    if config.r_region_sq is not None:
        r2 = float(config.r_region_sq)
    else:
        chi2_r = chi2_quantile(config.D, math.sqrt(config.pprime))
        r2 = config.lambda1 * chi2_r
    regime, vb = region_bound(kernel, r2, radii)
    qp = float(ndtri(config.p))
    return BoundReport(
        r_region_sq=r2,
        regime=regime,
        variance_bound=vb,
        b_uniform=qp * math.sqrt(vb),
        paper_literal_b=qp * vb,
        critical=radii,
        p=config.p,
        pprime=config.pprime,
        delta=config.delta,
        quantile_p=qp,
        chi2_radius=chi2_r,
    )


def asymptotics(kernel):
    """Small-R decay coefficient and large-R quartic profile of the bounds.

    Returns ``(-16 h'(0), (2 h(0), -16 h'(0), 16 h''(0)))``.
    """
    decay = -16.0 * kernel.dh0
    return decay, (2.0 * kernel.h0, -16.0 * kernel.dh0, 16.0 * kernel.d2h0)
