import math

import numpy as np
import pytest

from skewgf.error_analysis import BoundConfig
from skewgf.field import PairedPoint, flip
from skewgf.validation import (
    CheckRecord,
    ValidationReport,
    _check,
    run_bound_validation,
    run_covariance_validation,
    run_error_validation,
)


def _points(seed, n=4, d=2):
    rng = np.random.default_rng(seed)
    return [PairedPoint(rng.normal(size=d) * 0.7, rng.normal(size=d) * 0.7) for _ in range(n)]


def test_pass_rule_names_tolerance():
    c = _check("x", 1.0, 1.05, 0.01, rel_tol=0.03)
    assert not c.passed and "4*se" in c.rule and "0.03*|closed|" in c.rule
    assert _check("y", 1.0, 1.03, 0.01).passed
    assert _check("z", 0.0, 1e-3, 0.0, abs_tol=1e-2).passed


def test_covariance_campaign_passes(se1):
    rep = run_covariance_validation(se1, 2, _points(1), 200_000, 11)
    assert rep.passed, "\n".join(rep.lines())
    assert rep.statistically_valid and rep.wall_time > 0
    assert all(isinstance(c, CheckRecord) for c in rep.checks)


def test_matched_point_has_exact_zero_variance(se1):
    pts = _points(2, 2) + [PairedPoint([0.2, 0.2], [0.2, 0.2])]
    rep = run_covariance_validation(se1, 2, pts, 10_000, 3)
    zero = [c for c in rep.checks if c.name == "f[2,2] (matched)"]
    assert zero and zero[0].empirical_value == 0.0 and zero[0].passed


def test_standard_error_shrinks_with_n(se1):
    pts = _points(4, 2)
    a = run_covariance_validation(se1, 2, pts, 10_000, 5)
    b = run_covariance_validation(se1, 2, pts, 100_000, 5)
    sa = {c.name: c.mc_standard_error for c in a.checks if c.statistical}
    sb = {c.name: c.mc_standard_error for c in b.checks if c.statistical}
    ratios = [sa[k] / sb[k] for k in sa]
    assert np.median(ratios) == pytest.approx(math.sqrt(10), rel=0.1)


def test_reports_are_reproducible_and_thread_independent(se1):
    pts = _points(6, 2)
    a = run_covariance_validation(se1, 2, pts, 12_000, 9, threads=1)
    b = run_covariance_validation(se1, 2, pts, 12_000, 9, threads=3)
    assert [c.empirical_value for c in a.checks] == [c.empirical_value for c in b.checks]


def test_low_sample_count_warns_but_does_not_fail(se1):
    with pytest.warns(RuntimeWarning):
        rep = run_covariance_validation(se1, 2, _points(7), 100, 1)
    assert not rep.statistically_valid
    assert rep.passed
    assert rep.warnings


def test_statistical_failure_ignored_only_below_floor():
    bad = CheckRecord("c", 1.0, 2.0, 0.01, False, "rule")
    assert ValidationReport("t", 100, 0, [bad]).passed
    assert not ValidationReport("t", 20_000, 0, [bad]).passed
    exact = CheckRecord("e", 0.0, 1.0, 0.0, False, "rule", statistical=False)
    assert not ValidationReport("t", 100, 0, [exact]).passed


def test_error_campaign_hand_point(se1):
    x = PairedPoint([1.0], [-1.0])
    rep = run_error_validation(se1, 1, [x], 200_000, 17)
    assert rep.passed, "\n".join(rep.lines())
    var = next(c for c in rep.checks if c.name == "var_error[0]")
    assert var.closed_form_value == pytest.approx(13.66859, abs=2e-5)
    assert var.empirical_value == pytest.approx(13.67, rel=0.03)


def test_error_near_expansion_point_is_small(se1):
    x = PairedPoint([6e-4], [-8e-4])
    rep = run_error_validation(se1, 1, [x], 20_000, 19)
    var = next(c for c in rep.checks if c.name == "var_error[0]")
    assert var.empirical_value < 1e-4


def test_error_flip_consistency(se1):
    x = PairedPoint([0.7, -0.2], [0.1, 0.5])
    rep = run_error_validation(se1, 2, [x, flip(x)], 200_000, 23)
    a, b = (c for c in rep.checks if c.name.startswith("var_error"))
    assert abs(a.empirical_value - b.empirical_value) <= 4 * math.hypot(a.mc_standard_error, b.mc_standard_error)


def test_bound_campaign_coverage(se1):
    cfg = BoundConfig(0.95, 0.95, sigma_eigs=(0.05,), D=2)
    rep = run_bound_validation(se1, cfg, 20_000, 29)
    assert rep.passed, "\n".join(rep.lines())
    assert rep.summary["coverage"] >= 0.9025
    assert "coverage_paper_literal" in rep.summary
    names = [c.name for c in rep.checks]
    assert any(n.startswith("max var_pointwise inside region") for n in names)


def test_bound_campaign_median_level(se1):
    cfg = BoundConfig(0.5, 0.95, sigma_eigs=(0.05,), D=2)
    rep = run_bound_validation(se1, cfg, 20_000, 31)
    assert rep.summary["b_uniform"] == 0.0
    assert rep.summary["coverage"] == pytest.approx(0.5, abs=0.02)
    assert rep.checks[0].passed  # 0.5 >= 0.5 * 0.95


def test_bound_campaign_preconditions(se1):
    with pytest.raises(ValueError):
        run_bound_validation(se1, BoundConfig(0.9, 0.9, r_region_sq=1.0, D=2), 10_000, 1)
    with pytest.raises(ValueError):
        run_bound_validation(se1, BoundConfig(0.9, 0.9, sigma_eigs=(0.1,), D=5), 10_000, 1)
