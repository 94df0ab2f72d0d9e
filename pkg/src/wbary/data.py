"""Seeded samplers for the marginal families, simplex weight sampling, and
point-cloud CSV I/O.

Reproducibility scheme: one master seed plus a tuple path (e.g. marginal
index, outer cycle) derives an independent stream via numpy's SeedSequence
spawn keys, so resampling per cycle and per marginal never aliases.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

from .gaussian import GaussianMoments


def seed_stream(master_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for (master seed, path...)."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass
class SampleBatch:
    """A point cloud with provenance."""

    points: np.ndarray          # [n, d]
    marginal: int = -1
    seed_path: tuple = ()

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2:
            raise ValueError(f"points must be [n, d], got shape {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("sample batch contains non-finite points")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


# ---------------------------------------------------------------------------
# Marginal specifications
# ---------------------------------------------------------------------------


@dataclass
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = GaussianMoments(self.mean, self.cov)  # validates
        self.mean, self.cov = m.mean, m.cov

    @property
    def dim(self):
        return self.mean.shape[0]

    def moments(self) -> GaussianMoments:
        return GaussianMoments(self.mean, self.cov)

    def draw(self, n, rng):
        return rng.standard_normal((n, self.dim)) @ _cov_factor(self.cov).T + self.mean


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor, falling back to an eigendecomposition square root
    when the covariance is only semidefinite."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass
class Mixture:
    weights: np.ndarray
    components: list

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or len(self.components) != self.weights.shape[0]:
            raise ValueError("mixture needs one weight per component")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must lie on the simplex, got {self.weights}")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError(f"mixture components have mixed dimensions {dims}")

    @property
    def dim(self):
        return self.components[0].dim

    def draw(self, n, rng):
        idx = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k, comp in enumerate(self.components):
            rows = np.nonzero(idx == k)[0]
            if rows.size:
                out[rows] = comp.draw(rows.size, rng)
        return out


@dataclass
class UniformLine:
    """Uniform distribution on a segment, via a uniform parameter."""

    p0: np.ndarray
    p1: np.ndarray

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=np.float64)
        self.p1 = np.asarray(self.p1, dtype=np.float64)
        if self.p0.shape != self.p1.shape or self.p0.ndim != 1:
            raise ValueError("line endpoints must be vectors of equal dimension")
        if np.allclose(self.p0, self.p1):
            raise ValueError("line endpoints coincide")

    @property
    def dim(self):
        return self.p0.shape[0]

    def draw(self, n, rng):
        t = rng.uniform(0.0, 1.0, size=(n, 1))
        return self.p0 + t * (self.p1 - self.p0)


@dataclass
class UniformEllipse:
    """Uniform parameter on an ellipse boundary curve in the plane."""

    center: np.ndarray
    axes: np.ndarray
    angle: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.axes = np.asarray(self.axes, dtype=np.float64)
        if self.center.shape != (2,) or self.axes.shape != (2,):
            raise ValueError("ellipse marginals are two-dimensional")
        if np.any(self.axes <= 0):
            raise ValueError(f"ellipse axes must be positive, got {self.axes}")

    @property
    def dim(self):
        return 2

    def draw(self, n, rng):
        t = rng.uniform(0.0, 2.0 * np.pi, size=n)
        xy = np.stack([self.axes[0] * np.cos(t), self.axes[1] * np.sin(t)], axis=1)
        c, s = np.cos(self.angle), np.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        return xy @ rot.T + self.center


@dataclass
class FileBacked:
    """Empirical distribution over the rows of a dataset file; sampling
    draws rows i.i.d. with replacement."""

    path: str
    _points: np.ndarray = field(default=None, repr=False)

    def _load(self):
        if self._points is None:
            self._points = load_points(self.path).points
        return self._points

    @property
    def dim(self):
        return self._load().shape[1]

    def draw(self, n, rng):
        pts = self._load()
        return pts[rng.integers(0, pts.shape[0], size=n)]


def sample(spec, n: int, seed, marginal: int = -1) -> SampleBatch:
    """n i.i.d. draws from a marginal spec; deterministic per seed.

    ``seed`` is either an int master seed or an (master, *path) tuple; an
    already-built Generator is also accepted.
    """
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    if isinstance(seed, np.random.Generator):
        rng, path = seed, ()
    elif isinstance(seed, tuple):
        rng, path = seed_stream(*seed), seed
    else:
        rng, path = seed_stream(int(seed)), (int(seed),)
    pts = spec.draw(n, rng)
    if pts.shape[0] != n:
        raise ValueError(f"marginal emitted {pts.shape[0]} samples, requested {n}")
    return SampleBatch(pts, marginal=marginal, seed_path=path)


def sample_simplex(n: int, rng) -> np.ndarray:
    """Uniform (flat Dirichlet) draw from the probability simplex via
    normalized standard exponentials."""
    if n < 1:
        raise ValueError(f"simplex dimension must be >= 1, got {n}")
    if not isinstance(rng, np.random.Generator):
        rng = seed_stream(int(rng))
    e = rng.standard_exponential(n)
    return e / e.sum()


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

_FMT = "%.17g"  # shortest form that round-trips float64 exactly


def save_points(path, batch) -> None:
    """CSV, one point per row, 17 significant digits, header with dimension."""
    pts = batch.points if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=np.float64)
    buf = io.StringIO()
    buf.write(f"dim={pts.shape[1]}\n")
    for row in pts:
        buf.write(",".join(_FMT % v for v in row))
        buf.write("\n")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(buf.getvalue())


def load_points(path) -> SampleBatch:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = lines[0].strip()
    if not header.startswith("dim="):
        raise ValueError(f"{path}:1: expected 'dim=<d>' header, got {header!r}")
    try:
        dim = int(header[4:])
    except ValueError:
        raise ValueError(f"{path}:1: malformed dimension header {header!r}") from None
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != dim:
            raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed number in row") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return SampleBatch(np.array(rows, dtype=np.float64))


# ---------------------------------------------------------------------------
# Random SPD covariances for desk-scale Gaussian runs
# ---------------------------------------------------------------------------


def random_spd(dim: int, rng, cond_max: float = 10.0) -> np.ndarray:
    """Random SPD matrix with condition number below cond_max: eigenvalues
    log-uniform within the allowed ratio, random orthogonal frame."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    lo, hi = 1.0, cond_max * 0.9
    vals = np.exp(rng.uniform(np.log(lo), np.log(hi), size=dim))
    out = (q * vals) @ q.T
    return 0.5 * (out + out.T)
