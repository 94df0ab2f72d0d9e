"""Barycenter recovery from a trained model and UVP scoring.

Two routes recover the barycenter: pushing latent noise through the
generator, and pushing marginal samples through the gradient of their
convex potential. The second can only re-map samples it is given, so the
output count always equals the input count. A third map, grad f composed
with the generator, sends latent noise back to a marginal.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import data as dat
from .data import SampleBatch
from .gaussian import empirical_moments, uvp
from .objectives import BarycenterProblem
from .training import ModelSet, oracle_truth


def _weight_node(graph, a):
    if a is None:
        return None
    from .networks import check_simplex
    return graph.constant(check_simplex(np.asarray(a, dtype=np.float64)))


def sample_generator(h, n: int, seed, a=None) -> SampleBatch:
    """n barycenter samples h(Z), Z ~ N(0, I_latent)."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else dat.seed_stream(int(seed))
    z = rng.standard_normal((n, h.latent_dim))
    graph = ad.Graph()
    out = h.bind(graph).forward(graph.leaf(z), _weight_node(graph, a))
    return SampleBatch(out.value)


def pushforward_marginal(g_net, batch, a=None) -> SampleBatch:
    """Map marginal samples through grad g; |output| == |input| always."""
    pts = batch.points if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=np.float64)
    graph = ad.Graph()
    y = graph.leaf(pts)
    vals = g_net.bind(graph).value(y, _weight_node(graph, a))
    out = ad.batch_input_grad(vals, y)
    marginal = batch.marginal if isinstance(batch, SampleBatch) else -1
    return SampleBatch(out.value, marginal=marginal)


def backward_to_marginal(f_net, h, n: int, seed, a=None) -> SampleBatch:
    """Latent noise to marginal samples via grad f(h(Z))."""
    gen = sample_generator(h, n, seed, a)
    graph = ad.Graph()
    x = graph.leaf(gen.points)
    vals = f_net.bind(graph).value(x, _weight_node(graph, a))
    out = ad.batch_input_grad(vals, x)
    return SampleBatch(out.value)


def score_run(models: ModelSet, problem: BarycenterProblem, n: int = 10000,
              seed: int = 424242, weights=None) -> dict:
    """UVP of both recovery routes against the exact Gaussian barycenter.

    Requires every marginal to be Gaussian with positive-definite
    covariance, since the oracle has no closed form otherwise. Evaluation
    seeds are decoupled from training seeds on purpose.
    """
    w = np.asarray(weights if weights is not None else problem.weights, dtype=np.float64)
    truth = oracle_truth(problem, w)
    a = w if models.mode == "nwbf" else None

    gen_pts = sample_generator(models.h, n, dat.seed_stream(seed, 0), a)
    gen_score = uvp(empirical_moments(gen_pts.points), truth, n)

    per_marginal = []
    weighted = 0.0
    for i, marg in enumerate(problem.marginals):
        ys = dat.sample(marg, n, dat.seed_stream(seed, 1 + i), marginal=i)
        pushed = pushforward_marginal(models.g[i], ys, a)
        score = uvp(empirical_moments(pushed.points), truth, n)
        per_marginal.append(score)
        weighted += float(w[i]) * score.value

    return {
        "generator": gen_score,
        "pushforward": weighted,
        "pushforward_per_marginal": per_marginal,
        "truth": truth,
    }
