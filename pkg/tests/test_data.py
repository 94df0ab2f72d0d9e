import numpy as np
import pytest
from scipy import stats

from wbary import data as dat


def test_uniform_line_support():
    spec = dat.UniformLine([0.0, 0.0], [1.0, 0.0])
    pts = dat.sample(spec, 500, 0).points
    assert np.all(pts[:, 1] == 0.0)
    assert np.all((pts[:, 0] >= 0.0) & (pts[:, 0] <= 1.0))


def test_gaussian_moments_monte_carlo():
    spec = dat.Gaussian([0.0, 0.0], np.eye(2))
    pts = dat.sample(spec, 100_000, 1).points
    assert np.linalg.norm(pts.mean(axis=0)) < 0.02
    cov = np.cov(pts.T)
    assert np.linalg.norm(cov - np.eye(2), "fro") < 0.02


def test_gaussian_nonsingular_vs_near_singular_factor():
    # eigendecomposition fallback keeps semidefinite covariances usable
    spec = dat.Gaussian([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])
    pts = dat.sample(spec, 1000, 2).points
    assert np.allclose(pts[:, 0], pts[:, 1], atol=1e-10)


def test_mixture_degenerate_weight():
    far = dat.Mixture([1.0, 0.0],
                      [dat.Gaussian([10.0, 10.0], 0.01 * np.eye(2)),
                       dat.Gaussian([-10.0, -10.0], 0.01 * np.eye(2))])
    pts = dat.sample(far, 200, 3).points
    assert np.all(pts.mean(axis=1) > 5)


def test_mixture_weight_validation():
    with pytest.raises(ValueError, match="simplex"):
        dat.Mixture([0.7, 0.7], [dat.Gaussian([0.0], [[1.0]]),
                                 dat.Gaussian([1.0], [[1.0]])])


def test_ellipse_support():
    spec = dat.UniformEllipse([1.0, 2.0], [3.0, 0.5], angle=0.7)
    pts = dat.sample(spec, 2000, 4).points
    # points satisfy the ellipse equation after undoing rotation/translation
    c, s = np.cos(0.7), np.sin(0.7)
    rot = np.array([[c, -s], [s, c]])
    local = (pts - [1.0, 2.0]) @ rot
    r = (local[:, 0] / 3.0) ** 2 + (local[:, 1] / 0.5) ** 2
    assert np.allclose(r, 1.0, atol=1e-10)


def test_line_endpoints_must_differ():
    with pytest.raises(ValueError, match="coincide"):
        dat.UniformLine([1.0, 1.0], [1.0, 1.0])


def test_seed_determinism_bytes():
    spec = dat.Gaussian([0.0, 0.0], np.eye(2))
    a = dat.sample(spec, 256, (7, 3, 1)).points
    b = dat.sample(spec, 256, (7, 3, 1)).points
    c = dat.sample(spec, 256, (7, 3, 2)).points
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_sample_count_validation():
    with pytest.raises(ValueError, match=">= 1"):
        dat.sample(dat.Gaussian([0.0], [[1.0]]), 0, 0)


def test_simplex_basics():
    assert np.array_equal(dat.sample_simplex(1, 0), [1.0])
    a = dat.sample_simplex(5, dat.seed_stream(8))
    assert np.all(a >= 0)
    assert abs(a.sum() - 1.0) < 1e-12
    with pytest.raises(ValueError):
        dat.sample_simplex(0, 0)


def test_simplex_flat_dirichlet_mean():
    rng = dat.seed_stream(9)
    draws = np.array([dat.sample_simplex(3, rng) for _ in range(100_000)])
    assert np.all(np.abs(draws.mean(axis=0) - 1.0 / 3.0) < 0.01)


def test_statistical_sanity():
    # moment / distributional tests at the 1e-3 significance level
    n = 100_000
    g = dat.sample(dat.Gaussian([0.0, 0.0], np.eye(2)), n, 10).points
    z = np.abs(g.mean(axis=0)) * np.sqrt(n)
    assert np.all(z < stats.norm.ppf(1 - 1e-3 / 4))  # Bonferroni over 2 coords

    line = dat.sample(dat.UniformLine([0.0, 0.0], [1.0, 0.0]), n, 11).points
    assert stats.kstest(line[:, 0], "uniform").pvalue > 1e-3

    mix = dat.Mixture([0.25, 0.75], [dat.Gaussian([-5.0], [[0.1]]),
                                     dat.Gaussian([5.0], [[0.1]])])
    pts = dat.sample(mix, n, 12).points
    counts = np.array([(pts < 0).sum(), (pts > 0).sum()])
    assert stats.chisquare(counts, [0.25 * n, 0.75 * n]).pvalue > 1e-3

    ell = dat.sample(dat.UniformEllipse([0.0, 0.0], [1.0, 1.0]), n, 13).points
    angles = np.arctan2(ell[:, 1], ell[:, 0]) / (2 * np.pi) + 0.5
    assert stats.kstest(angles, "uniform").pvalue > 1e-3


def test_csv_roundtrip_exact(tmp_path):
    rng = dat.seed_stream(14)
    batch = dat.SampleBatch(rng.standard_normal((37, 3)) * 1e3)
    path = tmp_path / "points.csv"
    dat.save_points(path, batch)
    back = dat.load_points(path)
    assert back.points.tobytes() == batch.points.tobytes()


def test_csv_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        dat.load_points(path)


def test_csv_mixed_dimension_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("dim=2\n1.0,2.0\n3.0\n")
    with pytest.raises(ValueError, match=":3:"):
        dat.load_points(path)


def test_csv_malformed_number_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("dim=2\n1.0,2.0\n3.0,zap\n")
    with pytest.raises(ValueError, match=":3:"):
        dat.load_points(path)


def test_file_backed_marginal(tmp_path):
    pts = dat.seed_stream(15).standard_normal((40, 2))
    path = tmp_path / "cloud.csv"
    dat.save_points(path, pts)
    spec = dat.FileBacked(str(path))
    assert spec.dim == 2
    draws = dat.sample(spec, 500, 16).points
    # every draw is one of the stored rows
    match = (draws[:, None, :] == pts[None, :, :]).all(axis=2).any(axis=1)
    assert match.all()


def test_random_spd_condition_bound():
    rng = dat.seed_stream(17)
    for d in (2, 8, 16):
        for _ in range(10):
            c = dat.random_spd(d, rng)
            assert np.linalg.cond(c) < 10.0
            assert np.allclose(c, c.T)
