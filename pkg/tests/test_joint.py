import math

import numpy as np
import pytest

from oracles import exact_error_cov_from_gram, fd_cross_derivatives
from skewgf.error_analysis import var_pointwise
from skewgf.exceptions import IllConditionedGramError
from skewgf.field import PairedPoint, cov_skew
from skewgf.joint import (
    BLOCK_ROWS,
    JointGram,
    _factorize,
    block_normals,
    build_joint_gram,
    cross_cov_derivatives,
    models_from_draws,
    sample_joint,
    taylor_design,
)
from skewgf.kernels import RadialKernel
from skewgf.quadratic import eval_model


def test_cross_cov_hand_values(se1):
    cg, c11, c12 = cross_cov_derivatives(se1, [0.0], PairedPoint([1.0], [2.0]))
    assert cg[0] == pytest.approx(-4 * math.exp(-5), rel=1e-14)
    assert cg[0] == pytest.approx(-0.0269518, abs=1e-7)
    assert c11[0, 0] == pytest.approx(-24 * math.exp(-5), rel=1e-14)
    assert c11[0, 0] == pytest.approx(-0.1617, abs=1e-4)
    assert c12[0, 0] == 0.0


def test_cross_cov_matched_point_is_zero(se1):
    cg, c11, c12 = cross_cov_derivatives(se1, [0.1, 0.2], PairedPoint([0.5, -1.0], [0.5, -1.0]))
    assert not cg.any() and not c11.any() and not c12.any()


@pytest.mark.parametrize("l", [0.8, 1.0, 1.7])
def test_cross_cov_matches_finite_differences(l, rng):
    k = RadialKernel.se(l)
    for _ in range(5):
        d = int(rng.integers(1, 4))
        z = rng.normal(size=d) * 0.5
        y1, y2 = z + rng.normal(size=d) * 0.8, z + rng.normal(size=d) * 0.8
        cg, c11, c12 = cross_cov_derivatives(k, z, PairedPoint(y1, y2))
        fg, f11, f12 = fd_cross_derivatives(z, y1, y2, l)
        assert np.allclose(cg, fg, atol=1e-7)
        assert np.allclose(c11, f11, atol=2e-6)
        assert np.allclose(c12, f12, atol=2e-6)


def test_empty_gram_blocks(se1):
    g = build_joint_gram(se1, np.zeros(2), [])
    assert np.array_equal(np.diag(g.matrix), [4, 4, 16, 8, 16, 8])
    assert np.count_nonzero(g.matrix - np.diag(np.diag(g.matrix))) == 0
    assert g.jitter_used == 0.0


def test_matched_point_row_is_zero_and_sampled_zero(se1, rng):
    pts = [PairedPoint(rng.normal(size=2), rng.normal(size=2)), PairedPoint([0.3, 0.3], [0.3, 0.3])]
    g = build_joint_gram(se1, np.zeros(2), pts)
    assert not g.matrix[1].any() and not g.matrix[:, 1].any()
    draws = sample_joint(g, 5, 1000)
    assert np.all(draws[:, 1] == 0.0)


def test_gram_symmetric_and_psd(rng):
    for k in (RadialKernel.se(1.0), RadialKernel.rq(1.0, 1.0), RadialKernel.matern52(1.0)):
        for _ in range(20):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(1, 6))
            z = rng.normal(size=d) * 0.3
            pts = [PairedPoint(z + rng.normal(size=d), z + rng.normal(size=d)) for _ in range(n)]
            g = build_joint_gram(k, z, pts)
            G = g.matrix
            assert np.max(np.abs(G - G.T)) <= 1e-12
            scale = np.trace(G) / G.shape[0]
            assert np.linalg.eigvalsh(G).min() >= -1e-9 * scale
            assert g.factor is not None


def test_field_block_matches_cov_skew(se1, rng):
    pts = [PairedPoint(rng.normal(size=2), rng.normal(size=2)) for _ in range(3)]
    g = build_joint_gram(se1, [0.1, -0.2], pts)
    for i in range(3):
        for j in range(3):
            assert g.matrix[i, j] == pytest.approx(cov_skew(se1, pts[i], pts[j]), abs=1e-15)


def test_error_variance_from_gram_matches_closed_form(rng):
    # exact Var(f~ - f) = M G M^T with no sampling, an independent assembly route
    for k in (RadialKernel.se(1.0), RadialKernel.rq(1.3, 0.7), RadialKernel.matern52(0.9)):
        for _ in range(30):
            d = int(rng.integers(1, 4))
            z = rng.normal(size=d)
            x = PairedPoint(z + rng.normal(size=d), z + rng.normal(size=d))
            g = build_joint_gram(k, z, [x], factorize=False)
            A = taylor_design([x], z)
            v = exact_error_cov_from_gram(g.matrix, A, 1)[0, 0]
            assert v == pytest.approx(var_pointwise(k, x, z), rel=1e-10, abs=1e-12)


def test_sampling_is_deterministic_and_prefix_stable(se1, rng):
    pts = [PairedPoint(rng.normal(size=2), rng.normal(size=2)) for _ in range(2)]
    g = build_joint_gram(se1, np.zeros(2), pts)
    a = sample_joint(g, 42, 1)
    b = sample_joint(g, 42, 1)
    assert np.array_equal(a, b)
    n = BLOCK_ROWS + 100
    full = sample_joint(g, 42, n)
    assert np.array_equal(full[:1], a)
    part = sample_joint(g, 42, BLOCK_ROWS + 7)
    assert np.array_equal(full[: BLOCK_ROWS + 7], part)
    threaded = sample_joint(g, 42, 3 * BLOCK_ROWS + 5, threads=3)
    serial = sample_joint(g, 42, 3 * BLOCK_ROWS + 5, threads=1)
    assert np.array_equal(threaded, serial)


def test_generator_seed_rejected(se1):
    g = build_joint_gram(se1, np.zeros(1), [])
    with pytest.raises(TypeError):
        sample_joint(g, np.random.default_rng(0), 3)


def test_zero_count_is_empty(se1):
    g = build_joint_gram(se1, np.zeros(2), [])
    assert sample_joint(g, 1, 0).shape == (0, 6)


def test_identity_gram_mean():
    G = np.eye(3)
    g = JointGram({"f": slice(0, 0)}, G, 0.0, 1, np.zeros(1), [])
    n = 50_000
    draws = sample_joint(g, 7, n)
    assert np.all(np.abs(draws.mean(axis=0)) <= 4 / math.sqrt(n))


def test_block_normals_depend_only_on_seed_and_block():
    a = block_normals(3, 2, 10, 4)
    b = block_normals(3, 2, 10, 4)
    c = block_normals(3, 1, 10, 4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_ill_conditioned_gram_reports_pivot():
    G = np.array([[1.0, 0.0], [0.0, -1.0]])
    g = JointGram({"f": slice(0, 0)}, G, 0.0, 1, np.zeros(1), [])
    with pytest.raises(IllConditionedGramError) as err:
        _factorize(g)
    assert err.value.pivot == 1
    assert err.value.jitter == pytest.approx(0.0)


def test_nearly_singular_gram_gets_jitter(se1):
    # two almost identical points make the field block rank deficient
    x = PairedPoint([0.4, -0.2], [1.0, 0.3])
    y = PairedPoint([0.4, -0.2], [1.0, 0.3 + 1e-9])
    g = build_joint_gram(se1, np.zeros(2), [x, y])
    assert g.jitter_used > 0


def test_design_reproduces_model_evaluation(se1, rng):
    z = rng.normal(size=3)
    pts = [PairedPoint(z + rng.normal(size=3), z + rng.normal(size=3)) for _ in range(4)]
    g = build_joint_gram(se1, z, pts)
    draws = sample_joint(g, 9, 16)
    models = models_from_draws(g, draws, se1)
    A = taylor_design(pts, z)
    via_design = draws[:, g.n_points :] @ A.T
    for j, p in enumerate(pts):
        assert np.allclose(eval_model(models, p), via_design[:, j], rtol=1e-12, atol=1e-12)


def test_local_exactness(se1):
    z = np.array([0.2, -0.1])
    x = PairedPoint(z + np.array([6e-4, -3e-4]), z + np.array([-5e-4, 7e-4]))
    g = build_joint_gram(se1, z, [x])
    draws = sample_joint(g, 13, 50_000)
    err = draws[:, 1:] @ taylor_design([x], z)[0] - draws[:, 0]
    assert np.var(err) <= 1e-4 * se1.h0


def test_joint_covariance_monte_carlo(se1, rng):
    pts = [PairedPoint(rng.normal(size=2) * 0.7, rng.normal(size=2) * 0.7) for _ in range(4)]
    g = build_joint_gram(se1, np.zeros(2), pts)
    n = 200_000
    draws = sample_joint(g, 77, n)
    m = g.size
    for a in range(m):
        for b in range(a, m):
            prod = draws[:, a] * draws[:, b]
            se = prod.std(ddof=1) / math.sqrt(n)
            assert abs(prod.mean() - g.matrix[a, b]) <= 4 * se + 1e-12
