"""Executable checks on the quadratic-function-class reduction.

Restricting the players to h(z) = z + alpha, f_i(x) = 0.5|x|^2 + beta_i.x,
g_i(y) = 0.5|y|^2 + gamma_i.y collapses the min-max-min objective to

    L(alpha, beta, gamma) = sum_i a_i [ 0.5|gamma_i|^2
                                        + beta_i.(gamma_i + m_i - alpha) ],

with m_i the marginal means. Eliminating gamma_i = -beta_i and then
beta_i = m_i - alpha leaves a convex quadratic in alpha alone whose
minimizer is the weighted mean of the means. The reduced form implemented
here keeps the constant term produced by the eliminations,
0.5 * sum_i a_i |m_i|^2, so the staged values chain exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize


@dataclass
class QuadraticLandscape:
    """Marginal means, simplex weights, and the quadratic parameterization."""

    means: np.ndarray    # [n, d]
    weights: np.ndarray  # [n]

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.shape[0] != self.means.shape[0]:
            raise ValueError("need one weight per marginal mean")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must lie on the simplex, got {self.weights}")

    @property
    def n(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]


def three_level_value(ls: QuadraticLandscape, alpha, betas, gammas) -> float:
    """The full objective over (alpha, beta_i, gamma_i)."""
    alpha = _vec(ls, alpha)
    betas = _mat(ls, betas)
    gammas = _mat(ls, gammas)
    val = 0.0
    for a, m, b, g in zip(ls.weights, ls.means, betas, gammas):
        val += a * (0.5 * float(g @ g) + float(b @ (g + m - alpha)))
    return val


def middle_objective(ls: QuadraticLandscape, alpha, betas) -> float:
    """After the inner minimization gamma_i = -beta_i."""
    alpha = _vec(ls, alpha)
    betas = _mat(ls, betas)
    val = 0.0
    for a, m, b in zip(ls.weights, ls.means, betas):
        val += a * (-0.5 * float(b @ b) + float(b @ (m - alpha)))
    return val


def reduced_objective(ls: QuadraticLandscape, alpha) -> float:
    """0.5|alpha|^2 - alpha . sum_i a_i m_i + 0.5 sum_i a_i |m_i|^2."""
    alpha = _vec(ls, alpha)
    wm = ls.weights @ ls.means
    const = 0.5 * float(ls.weights @ np.sum(ls.means ** 2, axis=1))
    return 0.5 * float(alpha @ alpha) - float(alpha @ wm) + const


def reduced_gradient(ls: QuadraticLandscape, alpha) -> np.ndarray:
    return _vec(ls, alpha) - ls.weights @ ls.means


def closed_form_optimum(ls: QuadraticLandscape) -> np.ndarray:
    """The optimal generator shift: the weighted mean of the marginal means."""
    return ls.weights @ ls.means


def descend_reduced(ls: QuadraticLandscape, alpha0=None, lr: float = 0.2,
                    steps: int = 200) -> np.ndarray:
    """Plain gradient descent on the reduced objective."""
    alpha = np.zeros(ls.dim) if alpha0 is None else _vec(ls, alpha0).copy()
    for _ in range(steps):
        alpha = alpha - lr * reduced_gradient(ls, alpha)
    return alpha


@dataclass
class EliminationReport:
    gamma_value_dev: float   # numeric inner min vs gamma = -beta formula
    gamma_arg_dev: float
    beta_value_dev: float    # numeric inner max vs beta = m - alpha formula
    beta_arg_dev: float
    chain_dev: float         # three-level at both optima vs reduced value


def staged_elimination_check(ls: QuadraticLandscape, rng=None,
                             n_trials: int = 20) -> EliminationReport:
    """Verify both eliminations numerically on random (alpha, beta) draws.

    The independent route is scipy's BFGS on the raw objectives; formula
    values must match the numeric optima and the full chain must equal the
    reduced objective.
    """
    rng = rng or np.random.default_rng(0)
    n, d = ls.n, ls.dim
    hess = np.diag(np.repeat(ls.weights, d))
    gv = ga = bv = ba = cv = 0.0
    for _ in range(n_trials):
        alpha = rng.standard_normal(d)
        betas = rng.standard_normal((n, d))

        res = optimize.minimize(
            lambda g: three_level_value(ls, alpha, betas, g.reshape(n, d)),
            rng.standard_normal(n * d), method="trust-exact",
            jac=lambda g: (ls.weights[:, None] * (g.reshape(n, d) + betas)).ravel(),
            hess=lambda g: hess, options={"gtol": 1e-14})
        gv = max(gv, abs(res.fun - middle_objective(ls, alpha, betas)))
        ga = max(ga, float(np.max(np.abs(res.x.reshape(n, d) + betas))))

        best_b = ls.means - alpha
        res = optimize.minimize(
            lambda b: -middle_objective(ls, alpha, b.reshape(n, d)),
            rng.standard_normal(n * d), method="trust-exact",
            jac=lambda b: (ls.weights[:, None] * (b.reshape(n, d) - best_b)).ravel(),
            hess=lambda b: hess, options={"gtol": 1e-14})
        bv = max(bv, abs(-res.fun - middle_objective(ls, alpha, best_b)))
        ba = max(ba, float(np.max(np.abs(res.x.reshape(n, d) - best_b))))

        cv = max(cv, abs(three_level_value(ls, alpha, best_b, -best_b)
                         - reduced_objective(ls, alpha)))
    return EliminationReport(gv, ga, bv, ba, cv)


def _vec(ls, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (ls.dim,):
        raise ValueError(f"alpha must have shape ({ls.dim},), got {alpha.shape}")
    return alpha


def _mat(ls, arr) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape != (ls.n, ls.dim):
        raise ValueError(f"expected shape ({ls.n}, {ls.dim}), got {arr.shape}")
    return arr
