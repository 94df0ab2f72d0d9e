"""Scalar training objectives for the fixed-weight and free-weight schemes.

Per marginal the batch term is
    J = mean_j [ f(grad g(Y_j)) - <Y_j, grad g(Y_j)> - f(h(Z_j)) ],
the g-networks carry the convexity penalty R, and the full objective is
    sum_i a_i (J_i + R_i) + 0.5 * mean_j |h(Z_j)|^2.
Constant moment terms of the underlying transport cost are dropped: they
do not depend on any trainable parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node
from .networks import check_simplex


@dataclass
class BarycenterProblem:
    """The task: marginals, mixing weights (None = free-weight mode),
    latent dimension of the generator input, and the penalty weight."""

    marginals: list
    weights: np.ndarray | None
    latent_dim: int
    penalty_weight: float = 0.1

    def __post_init__(self):
        if not self.marginals:
            raise ValueError("need at least one marginal")
        dims = {m.dim for m in self.marginals}
        if len(dims) != 1:
            raise ValueError(f"marginals have mixed dimensions {dims}")
        if self.weights is not None:
            self.weights = check_simplex(np.asarray(self.weights, dtype=np.float64))
            if self.weights.shape[0] != len(self.marginals):
                raise ValueError(f"{len(self.marginals)} marginals but "
                                 f"{self.weights.shape[0]} weights")
        if self.latent_dim < 1:
            raise ValueError("latent dimension must be >= 1")
        if self.penalty_weight < 0:
            raise ValueError("penalty weight must be >= 0")

    @property
    def n_marginals(self) -> int:
        return len(self.marginals)

    @property
    def dim(self) -> int:
        return self.marginals[0].dim

    @property
    def free_weights(self) -> bool:
        return self.weights is None


@dataclass
class ObjectiveValue:
    """Node-level breakdown of one recorded objective."""

    total: Node
    j_terms: list[Node]
    penalties: list[Node]
    gen_term: Node

    def floats(self) -> dict:
        return {
            "total": float(self.total.value),
            "j": [float(j.value) for j in self.j_terms],
            "r": [float(r.value) for r in self.penalties],
            "gen_term": float(self.gen_term.value),
        }


def _j_from_nodes(f_bound, g_bound, hz: Node, y: Node, a: Node | None = None) -> Node:
    """J for one marginal, differentiable through grad g (double backprop)."""
    gy = g_bound.value(y, a)
    t = ad.batch_input_grad(gy, y)
    fc = ad.mean_all(f_bound.value(t, a))
    cross = ad.mean_all(ad.rowwise_inner(y, t))
    fh = ad.mean_all(f_bound.value(hz, a))
    return ad.sub(ad.sub(fc, cross), fh)


def build_objective(graph: Graph, f_bounds, g_bounds, h_bound,
                    y_nodes, z_node: Node, weights: np.ndarray,
                    penalty_weight: float, a_node: Node | None = None) -> ObjectiveValue:
    """Assemble the full objective on an existing graph with bound networks.

    ``weights`` are the mixing coefficients (the sampled vector itself in
    free-weight mode); ``a_node`` is the network conditioning input, present
    only in free-weight mode.
    """
    if len(f_bounds) != len(g_bounds) or len(f_bounds) != len(y_nodes):
        raise ValueError("need one f, one g and one sample batch per marginal")
    m = z_node.value.shape[0]
    for y in y_nodes:
        if y.value.shape[0] != m:
            raise ValueError(f"batch size mismatch: marginal batch {y.value.shape[0]} "
                             f"vs latent batch {m}")
    if m < 1:
        raise ValueError("empty batch")

    hz = h_bound.forward(z_node, a_node)
    gen = ad.scale(ad.mean_all(ad.rowwise_inner(hz, hz)), 0.5)
    js, rs = [], []
    total = gen
    for fb, gb, y, w in zip(f_bounds, g_bounds, y_nodes, weights):
        j = _j_from_nodes(fb, gb, hz, y, a_node)
        r = gb.penalty(penalty_weight)
        js.append(j)
        rs.append(r)
        total = ad.add(total, ad.scale(ad.add(j, r), float(w)))
    return ObjectiveValue(total, js, rs, gen)


# ---------------------------------------------------------------------------
# Standalone entry points (tests, diagnostics)
# ---------------------------------------------------------------------------


def j_term(f, g, h, y_batch: np.ndarray, z_batch: np.ndarray) -> Node:
    """Build one marginal's J on a fresh graph from raw batches."""
    y_batch = np.asarray(y_batch, dtype=np.float64)
    z_batch = np.asarray(z_batch, dtype=np.float64)
    if y_batch.ndim != 2 or z_batch.ndim != 2 or y_batch.shape[0] != z_batch.shape[0]:
        raise ValueError(f"batches must be [m, d] with equal m, got "
                         f"{y_batch.shape} and {z_batch.shape}")
    if y_batch.shape[0] < 1:
        raise ValueError("empty batch")
    graph = Graph()
    hz = h.bind(graph).forward(graph.leaf(z_batch))
    return _j_from_nodes(f.bind(graph), g.bind(graph), hz, graph.leaf(y_batch))


def nwb_objective(problem: BarycenterProblem, fs, gs, h,
                  y_batches, z_batch: np.ndarray) -> ObjectiveValue:
    """Fixed-weight objective on a fresh graph from raw batches."""
    if problem.free_weights:
        raise ValueError("problem has free weights; use nwbf_objective")
    graph = Graph()
    f_bounds = [f.bind(graph) for f in fs]
    g_bounds = [g.bind(graph) for g in gs]
    y_nodes = [graph.leaf(np.asarray(y, dtype=np.float64)) for y in y_batches]
    z_node = graph.leaf(np.asarray(z_batch, dtype=np.float64))
    return build_objective(graph, f_bounds, g_bounds, h.bind(graph), y_nodes,
                           z_node, problem.weights, problem.penalty_weight)


def nwbf_objective(problem: BarycenterProblem, fs, gs, h,
                   y_batches, z_batch: np.ndarray, a: np.ndarray) -> ObjectiveValue:
    """Free-weight objective: every network call carries the sampled weights,
    which also mix the per-marginal terms."""
    a = check_simplex(a)
    for net in list(fs) + list(gs):
        if not hasattr(net, "context_dim"):
            raise ValueError("free-weight mode needs weight-conditioned potentials "
                             f"(got {type(net).__name__})")
    if not getattr(h, "cond_dim", 0):
        raise ValueError("free-weight mode needs a weight-conditioned generator")
    graph = Graph()
    f_bounds = [f.bind(graph) for f in fs]
    g_bounds = [g.bind(graph) for g in gs]
    y_nodes = [graph.leaf(np.asarray(y, dtype=np.float64)) for y in y_batches]
    z_node = graph.leaf(np.asarray(z_batch, dtype=np.float64))
    return build_objective(graph, f_bounds, g_bounds, h.bind(graph), y_nodes,
                           z_node, a, problem.penalty_weight, a_node=graph.constant(a))
