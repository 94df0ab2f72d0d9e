import numpy as np
import pytest

from wbary import data as dat
from wbary.gaussian import (GaussianMoments, bw2_squared, empirical_moments,
                            fixed_point_residual, gaussian_barycenter,
                            sym_psd_sqrt, uvp)

# the three 2x2 marginal covariances used throughout the desk-scale runs
COVS_2X2 = [np.array([[0.5, 0.0], [0.0, 2.0]]),
            np.array([[2.0, 1.0], [1.0, 1.0]]),
            np.array([[2.0, -1.0], [-1.0, 1.0]])]


def test_sqrt_identity_and_diagonal():
    assert np.allclose(sym_psd_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(sym_psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_sqrt_reconstruction_random_spd():
    rng = np.random.default_rng(0)
    for d in (2, 5, 16, 32):
        a = dat.random_spd(d, rng)
        s = sym_psd_sqrt(a)
        assert np.linalg.norm(s @ s - a, "fro") / np.linalg.norm(a, "fro") < 1e-9
        assert np.allclose(s, s.T)


def test_sqrt_idempotent_on_products():
    rng = np.random.default_rng(1)
    s = sym_psd_sqrt(dat.random_spd(4, rng))
    assert np.linalg.norm(sym_psd_sqrt(s @ s) - s, "fro") < 1e-8


def test_sqrt_rejects_asymmetry():
    with pytest.raises(ValueError, match="symmetric"):
        sym_psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_bw2_identical_is_zero():
    p = GaussianMoments([0.3, -1.0], COVS_2X2[1])
    assert bw2_squared(p, p) == pytest.approx(0.0, abs=1e-12)


def test_bw2_equal_covariance_mean_shift():
    p = GaussianMoments([0.0, 0.0], np.eye(2))
    q = GaussianMoments([2.0, 0.0], np.eye(2))
    assert bw2_squared(p, q) == pytest.approx(2.0)


def test_bw2_one_dimensional():
    p = GaussianMoments([0.0], [[4.0]])
    q = GaussianMoments([0.0], [[1.0]])
    assert bw2_squared(p, q) == pytest.approx(0.5)  # 0.5*(2-1)^2


def test_bw2_symmetry():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = GaussianMoments(rng.standard_normal(3), dat.random_spd(3, rng))
        q = GaussianMoments(rng.standard_normal(3), dat.random_spd(3, rng))
        assert abs(bw2_squared(p, q) - bw2_squared(q, p)) < 1e-10


def test_bw2_dim_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        bw2_squared(GaussianMoments([0.0], [[1.0]]),
                    GaussianMoments([0.0, 0.0], np.eye(2)))


def test_barycenter_identical_marginals():
    m = GaussianMoments([1.0, -2.0], COVS_2X2[1])
    bary = gaussian_barycenter([m, m, m], [0.2, 0.3, 0.5])
    assert np.allclose(bary.mean, m.mean)
    assert np.linalg.norm(bary.cov - m.cov, "fro") < 1e-10


def test_barycenter_one_dimensional_scalar_fixed_point():
    # standard deviations average: sigma = 0.5*1 + 0.5*3 = 2, variance 4
    a = GaussianMoments([0.0], [[1.0]])
    b = GaussianMoments([0.0], [[9.0]])
    bary = gaussian_barycenter([a, b], [0.5, 0.5])
    assert bary.cov[0, 0] == pytest.approx(4.0, abs=1e-10)


def test_barycenter_three_covariance_instance():
    moments = [GaussianMoments(np.zeros(2), c) for c in COVS_2X2]
    w = np.full(3, 1.0 / 3.0)
    bary = gaussian_barycenter(moments, w)
    assert fixed_point_residual(bary, moments, w) < 1e-8
    assert np.allclose(bary.mean, 0.0)


def test_barycenter_weight_vertex_returns_marginal():
    moments = [GaussianMoments(np.zeros(2), c) for c in COVS_2X2]
    bary = gaussian_barycenter(moments, [0.0, 1.0, 0.0])
    assert np.linalg.norm(bary.cov - COVS_2X2[1], "fro") < 1e-8


def test_barycenter_weighted_mean():
    moments = [GaussianMoments([1.0, 0.0], np.eye(2)),
               GaussianMoments([-1.0, 2.0], np.eye(2))]
    bary = gaussian_barycenter(moments, [0.25, 0.75])
    assert np.allclose(bary.mean, [-0.5, 1.5])


def test_barycenter_random_instances_converge():
    rng = np.random.default_rng(3)
    for d in (2, 4, 16):
        moments = [GaussianMoments(rng.standard_normal(d), dat.random_spd(d, rng))
                   for _ in range(3)]
        w = dat.sample_simplex(3, rng)
        bary = gaussian_barycenter(moments, w)
        assert fixed_point_residual(bary, moments, w) < 1e-8


def test_barycenter_rejects_singular_marginal():
    sing = GaussianMoments([0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]])
    ok = GaussianMoments([0.0, 0.0], np.eye(2))
    with pytest.raises(ValueError, match="singular"):
        gaussian_barycenter([sing, ok], [0.5, 0.5])


def test_empirical_moments_two_points():
    m = empirical_moments(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.allclose(m.mean, [1.0, 0.0])
    assert np.allclose(m.cov, [[2.0, 0.0], [0.0, 0.0]])  # n-1 divisor


def test_empirical_moments_duplicated_batch():
    rng = np.random.default_rng(4)
    pts = rng.standard_normal((50, 3))
    a = empirical_moments(pts)
    b = empirical_moments(pts.copy())
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov)


def test_empirical_moments_needs_two_points():
    with pytest.raises(ValueError, match="at least 2"):
        empirical_moments(np.array([[1.0, 2.0]]))


def test_empirical_moments_monte_carlo():
    pts = dat.seed_stream(5).standard_normal((100_000, 2))
    m = empirical_moments(pts)
    assert np.linalg.norm(m.cov - np.eye(2), "fro") < 0.02


def test_uvp_exact_vs_exact_is_zero():
    t = GaussianMoments([0.5, 0.5], COVS_2X2[0])
    assert uvp(t, t).value == pytest.approx(0.0, abs=1e-10)


def test_uvp_worked_example():
    est = GaussianMoments([0.1, 0.0], np.eye(2))
    truth = GaussianMoments([0.0, 0.0], np.eye(2))
    score = uvp(est, truth)
    assert score.bw2sq == pytest.approx(0.005)
    assert score.value == pytest.approx(0.5)


def test_uvp_monte_carlo_floor():
    truth = GaussianMoments(np.zeros(2), COVS_2X2[1])
    pts = dat.sample(dat.Gaussian(truth.mean, truth.cov), 10_000, 6).points
    assert uvp(empirical_moments(pts), truth, 10_000).value < 0.5


def test_uvp_zero_variance_truth_rejected():
    t = GaussianMoments([0.0], [[0.0]])
    with pytest.raises(ValueError, match="variance"):
        uvp(t, t)


def test_moments_json_roundtrip():
    m = GaussianMoments([0.25, -1.5], COVS_2X2[2])
    back = GaussianMoments.from_json(m.to_json())
    assert np.array_equal(back.mean, m.mean) and np.array_equal(back.cov, m.cov)
