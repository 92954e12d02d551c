"""Chi-squared quantiles and the dimension scaling of the admissible region.

The exact quantile inverts the regularised incomplete gamma function, which is
evaluated by its power series below ``x < a + 1`` and by a Lentz continued
fraction above.  Fisher's closed form

    chi2_D(p) ~ 1/2 (Phi^-1(p) + sqrt(2D - 1))^2

is provided alongside for the scaling study.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "QuantileQuery",
    "gamma_p",
    "gamma_q",
    "chi2_cdf",
    "chi2_sf",
    "chi2_quantile",
    "fisher_quantile",
    "ScalingScan",
    "lambda1_scaling_scan",
]

_EPS = 1e-16
_TINY = 1e-300
_MAXITER = 100000


@dataclass(frozen=True)
class QuantileQuery:
    dof: int
    prob: float

    def __post_init__(self):
        if int(self.dof) != self.dof or self.dof < 1:
            raise ValueError(f"dof must be a positive integer, got {self.dof!r}")
        if not 0.0 < self.prob < 1.0:
            raise ValueError(f"prob must lie in (0, 1), got {self.prob!r}")


def _log_prefactor(a, x):
    return a * math.log(x) - x - math.lgamma(a)


def _series_p(a, x):
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAXITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _cf_q(a, x):
    # modified Lentz for the continued fraction of Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAXITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(_log_prefactor(a, x)) * h


def gamma_p(a, x):
    """Regularised lower incomplete gamma P(a, x)."""
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        return _series_p(a, x)
    return 1.0 - _cf_q(a, x)


def gamma_q(a, x):
    """Regularised upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _series_p(a, x)
    return _cf_q(a, x)


def chi2_cdf(x, dof):
    return gamma_p(0.5 * dof, 0.5 * x)


def chi2_sf(x, dof):
    return gamma_q(0.5 * dof, 0.5 * x)


def _chi2_logpdf(x, dof):
    k = 0.5 * dof
    return (k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k)


def _wilson_hilferty(dof, prob):
    z = float(ndtri(prob))
    c = 2.0 / (9.0 * dof)
    return max(dof * (1.0 - c + z * math.sqrt(c)) ** 3, 1e-8)


def chi2_quantile(dof, prob, tol=1e-13):
    """Inverse chi-squared CDF, accurate to ``tol`` in absolute CDF error.

    Bracketing bisection from a Wilson-Hilferty start, then safeguarded Newton
    steps.  The upper tail is used when ``prob > 1/2`` to keep precision.
    """
    q = QuantileQuery(dof, prob)
    dof, prob = q.dof, q.prob
    upper = prob > 0.5

    def resid(x):
        # increasing in x in both branches
        return (1.0 - prob) - chi2_sf(x, dof) if upper else chi2_cdf(x, dof) - prob

    x0 = _wilson_hilferty(dof, prob)
    lo, hi = x0, x0
    while resid(lo) > 0.0:
        lo *= 0.5
        if lo < 1e-300:
            return 0.0
    while resid(hi) < 0.0:
        hi *= 2.0

    # coarse bisection to a few digits, then Newton within the bracket
    for _ in range(200):
        if hi - lo <= 1e-3 * hi:
            break
        mid = 0.5 * (lo + hi)
        if resid(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(100):
        r = resid(x)
        if abs(r) < tol:
            return x
        if r < 0.0:
            lo = x
        else:
            hi = x
        step = r / math.exp(_chi2_logpdf(x, dof))
        xn = x - step
        if not lo < xn < hi:
            xn = 0.5 * (lo + hi)
        if xn == x:
            return x
        x = xn
    return x


def fisher_quantile(dof, prob):
    q = QuantileQuery(dof, prob)
    return 0.5 * (float(ndtri(q.prob)) + math.sqrt(2.0 * q.dof - 1.0)) ** 2


@dataclass
class ScalingScan:
    dims: np.ndarray
    lambda1_exact: np.ndarray
    lambda1_fisher: np.ndarray
    slope_exact: float
    slope_fisher: float
    pprime: float
    target_r_sq: float

    def rows(self):
        return list(zip(self.dims.tolist(), self.lambda1_exact.tolist(), self.lambda1_fisher.tolist()))


def _loglog_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def lambda1_scaling_scan(pprime, target_r_sq, dims):
    """Largest input-covariance eigenvalue keeping the region radius fixed.

    For each D, lambda1 = target_r_sq / chi2_D(sqrt(pprime)); the log-log
    least-squares slope summarises the decay rate in D.
    """
    if not 0.0 < pprime < 1.0:
        raise ValueError("pprime must lie in (0, 1)")
    if not target_r_sq > 0:
        raise ValueError("target_r_sq must be positive")
    d = np.asarray(sorted(int(x) for x in dims))
    if d.size == 0 or d[0] < 1:
        raise ValueError("dims must be positive integers")
    prob = math.sqrt(pprime)
    exact = np.array([target_r_sq / chi2_quantile(int(k), prob) for k in d])
    fisher = np.array([target_r_sq / fisher_quantile(int(k), prob) for k in d])
    slope_e = _loglog_slope(d, exact) if d.size > 1 else float("nan")
    slope_f = _loglog_slope(d, fisher) if d.size > 1 else float("nan")
    return ScalingScan(d, exact, fisher, slope_e, slope_f, pprime, target_r_sq)
