"""Radial functions h generating isotropic base covariances.

The base covariance is k_u(x, y) = h(||x - y||^2), so every kernel here is
parametrised by the *squared* distance ``tau``.  Each kernel exposes h and its
first two derivatives with respect to ``tau``; nothing above order two is ever
needed downstream.

Supported families::

    se        h(tau) = exp(-tau / l^2)
    rq        h(tau) = (1 + tau / (2 alpha l^2))^(-alpha)
    matern52  h(tau) = (1 + s + s^2/3) exp(-s),   s = sqrt(5 tau) / l
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .exceptions import KernelError

__all__ = [
    "Family",
    "RadialKernel",
    "MonotonicityReport",
    "monotonicity_check",
    "MATERN_SERIES_THRESHOLD",
]

# Matern 5/2 switches to its small-tau expansion below this multiple of l^2.
MATERN_SERIES_THRESHOLD = 1e-8


class Family(str, enum.Enum):
    SE = "se"
    RQ = "rq"
    MATERN52 = "matern52"


_ALIASES = {
    "se": Family.SE,
    "squaredexponential": Family.SE,
    "squared_exponential": Family.SE,
    "rbf": Family.SE,
    "rq": Family.RQ,
    "rationalquadratic": Family.RQ,
    "rational_quadratic": Family.RQ,
    "matern52": Family.MATERN52,
    "matern": Family.MATERN52,
}


@dataclass(frozen=True)
class RadialKernel:
    """Radial function h of one of the supported families.

    Parameters
    ----------
    family : Family or str
        ``"se"``, ``"rq"`` or ``"matern52"``.
    lengthscale : float
        Positive lengthscale ``l`` in input-space units.
    alpha : float, optional
        Positive shape parameter, used by ``rq`` only.
    """

    family: Family
    lengthscale: float = 1.0
    alpha: float = field(default=1.0)

    def __post_init__(self):
        fam = self.family
        if not isinstance(fam, Family):
            key = str(fam).lower().replace("-", "").replace(" ", "")
            if key not in _ALIASES:
                raise KernelError(f"unknown kernel family {fam!r}")
            object.__setattr__(self, "family", _ALIASES[key])
        if not np.isfinite(self.lengthscale) or self.lengthscale <= 0:
            raise KernelError(f"lengthscale must be positive, got {self.lengthscale!r}")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise KernelError(f"alpha must be positive, got {self.alpha!r}")
        object.__setattr__(self, "lengthscale", float(self.lengthscale))
        object.__setattr__(self, "alpha", float(self.alpha))

    # -- convenience constructors -------------------------------------------------

    @classmethod
    def se(cls, lengthscale=1.0):
        return cls(Family.SE, lengthscale)

    @classmethod
    def rq(cls, lengthscale=1.0, alpha=1.0):
        return cls(Family.RQ, lengthscale, alpha)

    @classmethod
    def matern52(cls, lengthscale=1.0):
        return cls(Family.MATERN52, lengthscale)

    @classmethod
    def from_dict(cls, spec):
        if not isinstance(spec, dict) or "family" not in spec:
            raise KernelError("kernel spec needs a 'family' entry")
        unknown = set(spec) - {"family", "lengthscale", "alpha"}
        if unknown:
            raise KernelError(f"unknown kernel keys: {sorted(unknown)}")
        return cls(
            spec["family"],
            float(spec.get("lengthscale", 1.0)),
            float(spec.get("alpha", 1.0)),
        )

    def to_dict(self):
        out = {"family": self.family.value, "lengthscale": self.lengthscale}
        if self.family is Family.RQ:
            out["alpha"] = self.alpha
        return out

    # -- evaluation ---------------------------------------------------------------

    def eval(self, tau, order=0):
        """Return h(tau), h'(tau) or h''(tau) for ``order`` 0, 1 or 2.

        ``tau`` may be a scalar or an array; scalars come back as floats.
        """
        if order not in (0, 1, 2):
            raise KernelError(f"unsupported derivative order {order!r}; only 0, 1, 2")
        t = np.asarray(tau, dtype=float)
        if np.any(t < 0):
            raise KernelError("tau must be non-negative")
        if self.family is Family.SE:
            out = _se(t, self.lengthscale, order)
        elif self.family is Family.RQ:
            out = _rq(t, self.lengthscale, self.alpha, order)
        else:
            out = _matern52(t, self.lengthscale, order)
        return float(out) if out.ndim == 0 else out

    def h(self, tau):
        return self.eval(tau, 0)

    def dh(self, tau):
        return self.eval(tau, 1)

    def d2h(self, tau):
        return self.eval(tau, 2)

    @property
    def h0(self):
        return self.eval(0.0, 0)

    @property
    def dh0(self):
        return self.eval(0.0, 1)

    @property
    def d2h0(self):
        return self.eval(0.0, 2)


def _se(t, l, order):
    l2 = l * l
    e = np.exp(-t / l2)
    if order == 0:
        return e
    if order == 1:
        return -e / l2
    return e / (l2 * l2)


def _rq(t, l, alpha, order):
    base = 1.0 + t / (2.0 * alpha * l * l)
    if order == 0:
        return base ** (-alpha)
    if order == 1:
        return -base ** (-alpha - 1.0) / (2.0 * l * l)
    return (alpha + 1.0) / (4.0 * alpha * l**4) * base ** (-alpha - 2.0)


def _matern52(t, l, order):
    s = np.sqrt(5.0 * t) / l
    small = t < MATERN_SERIES_THRESHOLD * l * l
    e = np.exp(-s)
    if order == 0:
        exact = (1.0 + s + s * s / 3.0) * e
        series = 1.0 - s**2 / 6.0 + s**4 / 24.0 - s**5 / 45.0
    elif order == 1:
        c = -5.0 / (6.0 * l * l)
        exact = c * (1.0 + s) * e
        series = c * (1.0 - s**2 / 2.0 + s**3 / 3.0 - s**4 / 8.0)
    else:
        c = 25.0 / (12.0 * l**4)
        exact = c * e
        series = c * (1.0 - s + s**2 / 2.0 - s**3 / 6.0)
    return np.where(small, series, exact)


@dataclass
class MonotonicityReport:
    """Per-condition pass/fail with the first violating grid point (or None)."""

    conditions: dict
    first_violation: dict

    @property
    def passed(self):
        return all(self.conditions.values())

    def __str__(self):
        lines = []
        for name, ok in self.conditions.items():
            where = self.first_violation[name]
            suffix = "" if ok else f" (first violation at tau={where:.6g})"
            lines.append(f"{name}: {'pass' if ok else 'FAIL'}{suffix}")
        return "\n".join(lines)


def monotonicity_check(kernel, grid_max=10.0, grid_points=1000):
    """Check the sign and monotonicity assumptions on h over ``[0, grid_max]``.

    Conditions checked: h >= 0, h' <= 0 and non-decreasing, h'' >= 0 and
    non-increasing.  Violations are reported, never raised.  Any object with
    an ``eval(tau, order)`` method can be checked.
    """
    if grid_points < 2 or grid_max <= 0:
        raise ValueError("need grid_points >= 2 and grid_max > 0")
    tau = np.linspace(0.0, grid_max, int(grid_points))
    h = np.asarray(kernel.eval(tau, 0), dtype=float)
    dh = np.asarray(kernel.eval(tau, 1), dtype=float)
    d2h = np.asarray(kernel.eval(tau, 2), dtype=float)

    # roundoff slack for the monotone-direction checks
    slack1 = 1e-13 * max(abs(dh[0]), 1e-300)
    slack2 = 1e-13 * max(abs(d2h[0]), 1e-300)
    checks = {
        "h_nonnegative": (h >= 0, tau),
        "dh_nonpositive": (dh <= 0, tau),
        "d2h_nonnegative": (d2h >= 0, tau),
        "dh_nondecreasing": (np.diff(dh) >= -slack1, tau[1:]),
        "d2h_nonincreasing": (np.diff(d2h) <= slack2, tau[1:]),
    }
    conditions, first = {}, {}
    for name, (ok, where) in checks.items():
        bad = np.flatnonzero(~ok)
        conditions[name] = bad.size == 0
        first[name] = None if bad.size == 0 else float(where[bad[0]])
    return MonotonicityReport(conditions, first)
