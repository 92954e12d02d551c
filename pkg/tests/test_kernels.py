import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skewgf.exceptions import KernelError
from skewgf.kernels import Family, RadialKernel, monotonicity_check

KERNELS = [
    RadialKernel.se(1.0),
    RadialKernel.se(0.5),
    RadialKernel.rq(1.0, 1.0),
    RadialKernel.rq(2.0, 0.5),
    RadialKernel.matern52(1.0),
    RadialKernel.matern52(0.3),
]


@pytest.mark.parametrize("l", [0.5, 1.0, 2.0])
def test_se_values_at_zero(l):
    k = RadialKernel.se(l)
    assert k.eval(0.0, 0) == 1.0
    assert abs(k.eval(0.0, 1) + 1 / l**2) < 1e-14
    assert abs(k.eval(0.0, 2) - 1 / l**4) < 1e-14


def test_se_reference_values():
    assert abs(RadialKernel.se(2.0).eval(4.0) - math.exp(-1.0)) < 1e-15
    assert abs(RadialKernel.se(2.0).eval(4.0) - 0.3678794) < 1e-7


def test_rq_slope_at_zero_matches_finite_difference():
    k = RadialKernel.rq(1.0, 1.0)
    assert k.dh0 == pytest.approx(-0.5, abs=1e-15)
    s = 1e-5
    fd = (k.h(s) - k.h(0.0)) / s  # one-sided at the boundary
    assert fd == pytest.approx(-0.5, abs=1e-5)


@pytest.mark.parametrize("k", KERNELS, ids=str)
def test_variance_constant_positive(k):
    assert k.h0 > 0


@pytest.mark.parametrize("k", KERNELS, ids=str)
@pytest.mark.parametrize("order", [0, 1])
def test_finite_differences_match_next_order(k, order):
    step = 1e-5
    for tau in np.linspace(0.01, 10.0, 37):
        fd = (k.eval(tau + step, order) - k.eval(tau - step, order)) / (2 * step)
        exact = k.eval(tau, order + 1)
        assert abs(fd - exact) <= 1e-6 * max(abs(exact), 1e-3 * abs(k.eval(0.0, order + 1)))


@given(st.floats(0.0, 50.0), st.floats(0.2, 5.0))
def test_se_identities(tau, l):
    k = RadialKernel.se(l)
    h = k.h(tau)
    assert abs(k.dh(tau) + h / l**2) <= 1e-14 * max(1.0, abs(h / l**2))
    assert abs(k.d2h(tau) - h / l**4) <= 1e-14 * max(1.0, abs(h / l**4))


@pytest.mark.parametrize("k", KERNELS, ids=str)
def test_finite_on_wide_range(k):
    tau = np.concatenate([[0.0], np.geomspace(1e-14, 1e6, 400)])
    for order in (0, 1, 2):
        assert np.all(np.isfinite(k.eval(tau, order)))


def test_matern_series_branch_is_continuous():
    k = RadialKernel.matern52(1.0)
    thr = 1e-8
    for order in (0, 1, 2):
        below = k.eval(thr * (1 - 1e-9), order)
        above = k.eval(thr * (1 + 1e-9), order)
        assert abs(below - above) <= 1e-12 * max(1.0, abs(above))


def test_matern_constants_at_zero():
    l = 0.7
    k = RadialKernel.matern52(l)
    assert k.h0 == 1.0
    assert k.dh0 == pytest.approx(-5.0 / (6.0 * l**2), rel=1e-14)
    assert k.d2h0 == pytest.approx(25.0 / (12.0 * l**4), rel=1e-14)


def test_matern_matches_standard_radial_form():
    # k(r) = (1 + s + s^2/3) exp(-s), s = sqrt(5) r / l, written independently
    l = 1.3
    k = RadialKernel.matern52(l)
    for r in [0.0, 0.01, 0.3, 1.0, 2.5]:
        s = math.sqrt(5.0) * r / l
        assert k.h(r * r) == pytest.approx((1 + s + s * s / 3) * math.exp(-s), rel=1e-13, abs=1e-15)


def test_scalar_in_scalar_out_and_array_shape():
    k = RadialKernel.se()
    assert isinstance(k.eval(1.0), float)
    assert k.eval(np.zeros((2, 3)), 1).shape == (2, 3)


@pytest.mark.parametrize(
    "kwargs",
    [dict(family="se", lengthscale=0.0), dict(family="se", lengthscale=-1.0), dict(family="rq", alpha=0.0)],
)
def test_invalid_parameters_rejected(kwargs):
    with pytest.raises(KernelError):
        RadialKernel(**kwargs)


def test_unsupported_order_and_negative_tau():
    k = RadialKernel.se()
    with pytest.raises(KernelError):
        k.eval(1.0, 3)
    with pytest.raises(KernelError):
        k.eval(-1.0)


def test_dict_round_trip_and_aliases():
    for k in KERNELS:
        assert RadialKernel.from_dict(k.to_dict()) == k
    assert RadialKernel.from_dict({"family": "se"}).family is Family.SE
    with pytest.raises(KernelError):
        RadialKernel.from_dict({"family": "se", "ell": 1.0})
    with pytest.raises(KernelError):
        RadialKernel.from_dict({"family": "cubic"})


@pytest.mark.parametrize("k", [RadialKernel.se(1.0), RadialKernel.rq(1.0, 2.0), RadialKernel.matern52(1.0)], ids=str)
def test_monotonicity_passes_for_library_kernels(k):
    rep = monotonicity_check(k, 10.0, 1000)
    assert rep.passed, str(rep)


def test_monotonicity_reports_injected_violation():
    base = RadialKernel.se()

    class Broken:
        def eval(self, tau, order=0):
            if order == 2:
                return -np.ones_like(np.asarray(tau, dtype=float))
            return base.eval(tau, order)

    rep = monotonicity_check(Broken(), 10.0, 50)
    assert not rep.passed
    assert not rep.conditions["d2h_nonnegative"]
    assert rep.first_violation["d2h_nonnegative"] == 0.0
    assert rep.conditions["dh_nonpositive"]
    assert "FAIL" in str(rep)


def test_monotonicity_rejects_bad_grid():
    with pytest.raises(ValueError):
        monotonicity_check(RadialKernel.se(), 10.0, 1)
