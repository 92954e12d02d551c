import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from skewgf.dimension import (
    QuantileQuery,
    chi2_cdf,
    chi2_quantile,
    chi2_sf,
    fisher_quantile,
    gamma_p,
    gamma_q,
    lambda1_scaling_scan,
)


def test_quantile_examples():
    assert chi2_quantile(2, 1 - math.exp(-1)) == pytest.approx(2.0, rel=1e-12)
    assert chi2_quantile(30, 0.95) == pytest.approx(43.773, abs=1e-3)
    z = stats.norm.ppf(0.975)
    assert chi2_quantile(1, 0.95) == pytest.approx(z * z, rel=1e-11)
    assert chi2_quantile(1, 0.95) == pytest.approx(3.8415, abs=1e-4)


def test_fisher_examples():
    assert fisher_quantile(50, 0.5) == pytest.approx(49.5, rel=1e-14)
    assert fisher_quantile(30, 0.95) == pytest.approx(0.5 * (1.6448536269514722 + math.sqrt(59)) ** 2, rel=1e-14)
    assert fisher_quantile(30, 0.95) == pytest.approx(43.49, abs=0.01)
    assert abs(fisher_quantile(30, 0.95) / chi2_quantile(30, 0.95) - 1) < 0.01


@given(st.integers(1, 400), st.floats(1e-6, 1 - 1e-6))
def test_quantile_matches_scipy(dof, p):
    ref = stats.chi2.ppf(p, dof)
    assert chi2_quantile(dof, p) == pytest.approx(ref, rel=1e-9)


@given(st.floats(0.1, 200), st.floats(0.0, 400))
def test_incomplete_gamma_matches_scipy(a, x):
    from scipy.special import gammainc, gammaincc

    assert gamma_p(a, x) == pytest.approx(gammainc(a, x), abs=1e-13)
    assert gamma_q(a, x) == pytest.approx(gammaincc(a, x), abs=1e-13)


@given(st.integers(1, 300), st.floats(1e-4, 1 - 1e-4))
def test_round_trip(dof, p):
    q = chi2_quantile(dof, p)
    assert chi2_cdf(q, dof) == pytest.approx(p, abs=1e-10)
    assert chi2_sf(q, dof) == pytest.approx(1 - p, abs=1e-10)


def test_monotone_in_prob_and_dof():
    probs = np.linspace(0.01, 0.99, 40)
    for dof in (1, 3, 30, 300):
        q = [chi2_quantile(dof, p) for p in probs]
        assert np.all(np.diff(q) > 0)
    for p in (0.1, 0.5, 0.95):
        q = [chi2_quantile(d, p) for d in range(1, 60)]
        assert np.all(np.diff(q) > 0)


def test_fisher_ratio_tends_to_one():
    for p in (0.9, 0.95, 0.99):
        assert abs(fisher_quantile(1000, p) / chi2_quantile(1000, p) - 1) < 0.002


@pytest.mark.parametrize("dof,prob", [(0, 0.5), (2.5, 0.5), (3, 0.0), (3, 1.0), (3, -0.1)])
def test_invalid_queries(dof, prob):
    with pytest.raises(ValueError):
        QuantileQuery(dof, prob)
    with pytest.raises(ValueError):
        chi2_quantile(dof, prob)


def test_scan_defining_identity_and_backends():
    dims = [30, 60, 100, 300, 1000, 3000]
    scan = lambda1_scaling_scan(0.9025, 1.0, dims)
    for d, lam in zip(scan.dims, scan.lambda1_exact):
        assert lam * chi2_quantile(int(d), math.sqrt(0.9025)) == pytest.approx(1.0, rel=1e-14)
    assert np.all(np.abs(scan.lambda1_fisher / scan.lambda1_exact - 1) < 0.01)
    assert len(scan.rows()) == len(dims)
    assert scan.slope_exact < 0


def test_scan_input_validation():
    with pytest.raises(ValueError):
        lambda1_scaling_scan(1.0, 1.0, [30])
    with pytest.raises(ValueError):
        lambda1_scaling_scan(0.9, 0.0, [30])
    with pytest.raises(ValueError):
        lambda1_scaling_scan(0.9, 1.0, [0, 30])
