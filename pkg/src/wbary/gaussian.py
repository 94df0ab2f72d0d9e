"""Closed-form Gaussian machinery: PSD square roots, the exact squared
Bures-Wasserstein discrepancy, the barycenter covariance fixed point, and
the UVP percentage score used to grade trained models."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

SYM_TOL = 1e-10


@dataclass
class GaussianMoments:
    """Mean vector and symmetric PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (d, d):
            raise ValueError(f"inconsistent moment shapes: mean {self.mean.shape}, "
                             f"cov {self.cov.shape}")
        _require_symmetric(self.cov, "covariance")
        vals = np.linalg.eigvalsh(self.cov)
        if vals.min() < -1e-8:
            warnings.warn(f"covariance has eigenvalue {vals.min():.3e}; clamping to 0",
                          stacklevel=2)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(), "cov": self.cov.tolist()})

    @staticmethod
    def from_json(text: str) -> "GaussianMoments":
        obj = json.loads(text)
        return GaussianMoments(np.array(obj["mean"]), np.array(obj["cov"]))


@dataclass
class UvpScore:
    """Normalized Bures-Wasserstein discrepancy, in percent."""

    value: float
    n_samples: int
    bw2sq: float


def _require_symmetric(a: np.ndarray, what: str, tol: float = SYM_TOL) -> None:
    dev = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if dev > tol:
        raise ValueError(f"{what} is not symmetric: max asymmetry {dev:.3e} > {tol:.0e}")


def sym_psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Negative eigenvalues from round-off are clamped to 0; anything below
    -1e-8 triggers a warning since it signals a genuinely indefinite input.
    """
    a = np.asarray(a, dtype=np.float64)
    _require_symmetric(a, "matrix")
    vals, vecs = np.linalg.eigh(a)
    if vals.min() < -1e-8:
        warnings.warn(f"clamping eigenvalue {vals.min():.3e} to 0 in matrix sqrt",
                      stacklevel=2)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None)) @ vecs.T
    return 0.5 * (root + root.T)


def bw2_squared(p: GaussianMoments, q: GaussianMoments) -> float:
    """0.5*|m_p - m_q|^2 + [0.5 tr S_p + 0.5 tr S_q - tr(S_p^1/2 S_q S_p^1/2)^1/2].

    Clamped at 0 against negative round-off.
    """
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    half = sym_psd_sqrt(p.cov)
    cross = sym_psd_sqrt(half @ q.cov @ half)
    val = (0.5 * float(np.sum((p.mean - q.mean) ** 2))
           + 0.5 * float(np.trace(p.cov)) + 0.5 * float(np.trace(q.cov))
           - float(np.trace(cross)))
    return max(val, 0.0)


def gaussian_barycenter(moments: list[GaussianMoments], weights,
                        max_iter: int = 1000, rtol: float = 1e-12,
                        residual_tol: float = 1e-8) -> GaussianMoments:
    """Exact Gaussian barycenter: weighted mean plus the covariance fixed
    point S = sum_i a_i (S^1/2 S_i S^1/2)^1/2, solved by the iteration
    S_{k+1} = S_k^-1/2 (sum_i a_i (S_k^1/2 S_i S_k^1/2)^1/2)^2 S_k^-1/2
    started from the weighted covariance mean.
    """
    a = np.asarray(weights, dtype=np.float64)
    if len(moments) != a.shape[0]:
        raise ValueError(f"{len(moments)} marginals but {a.shape[0]} weights")
    if np.any(a < 0) or abs(float(a.sum()) - 1.0) > 1e-9:
        raise ValueError(f"weights must lie on the simplex, got {a}")
    d = moments[0].dim
    covs = []
    for m in moments:
        if m.dim != d:
            raise ValueError("marginals have mixed dimensions")
        vals = np.linalg.eigvalsh(m.cov)
        if vals.min() <= 1e-12:
            raise ValueError(f"marginal covariance is singular (min eigenvalue "
                             f"{vals.min():.3e}); the fixed point needs strictly PD inputs")
        covs.append(m.cov)

    mean = sum(w * m.mean for w, m in zip(a, moments))
    sigma = sum(w * c for w, c in zip(a, covs))
    for _ in range(max_iter):
        half = sym_psd_sqrt(sigma)
        inv_half = np.linalg.inv(half)
        mix = sum(w * sym_psd_sqrt(half @ c @ half) for w, c in zip(a, covs))
        nxt = inv_half @ mix @ mix @ inv_half
        nxt = 0.5 * (nxt + nxt.T)
        change = np.linalg.norm(nxt - sigma, "fro") / max(np.linalg.norm(sigma, "fro"), 1e-300)
        sigma = nxt
        if change < rtol:
            break
    residual = _fixed_point_residual(sigma, covs, a)
    if residual >= residual_tol:
        raise RuntimeError(f"barycenter fixed point did not converge in {max_iter} "
                           f"iterations: residual {residual:.3e}")
    return GaussianMoments(mean, sigma)


def _fixed_point_residual(sigma: np.ndarray, covs, weights) -> float:
    half = sym_psd_sqrt(sigma)
    mix = sum(w * sym_psd_sqrt(half @ c @ half) for w, c in zip(weights, covs))
    return float(np.linalg.norm(sigma - mix, "fro"))


def fixed_point_residual(bary: GaussianMoments, moments: list[GaussianMoments],
                         weights) -> float:
    """Frobenius residual of the barycenter covariance equation."""
    return _fixed_point_residual(bary.cov, [m.cov for m in moments],
                                 np.asarray(weights, dtype=np.float64))


def empirical_moments(points: np.ndarray) -> GaussianMoments:
    """Sample mean and unbiased (n-1) covariance, symmetrized."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError(f"need at least 2 points of shape [n, d], got {pts.shape}")
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / (pts.shape[0] - 1)
    return GaussianMoments(mean, 0.5 * (cov + cov.T))


def uvp(estimate: GaussianMoments, truth: GaussianMoments,
        n_samples: int = 0) -> UvpScore:
    """100 * bw2_squared(estimate, truth) / (0.5 * Var(truth)) percent,
    with Var taken as the total variance trace(cov)."""
    var = float(np.trace(truth.cov))
    if var <= 0:
        raise ValueError("truth has zero variance; UVP is undefined")
    b = bw2_squared(estimate, truth)
    return UvpScore(100.0 * b / (0.5 * var), n_samples, b)
