"""Reverse-mode automatic differentiation over dense float64 tensors.

The engine exists for one reason: the training objective contains the
input-gradient of a convex network inside another network, f(grad_y g(y)),
and parameter gradients must flow through that inner gradient. To get this
with a single mechanism, the reverse pass is itself recorded on the graph
as ordinary differentiable nodes (graph expansion). Differentiating the
result a second time then yields the exact mixed second-order terms.

Tensors are plain numpy float64 arrays of rank 0, 1 or 2. There is no
implicit broadcasting: every op that mixes ranks (add_bias, rowscale, ...)
is explicit about its semantics, and shape mismatches raise ShapeError
naming both shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


class NonFiniteError(ArithmeticError):
    """A NaN or Inf appeared in a tensor value."""


class GraphError(RuntimeError):
    """Graph misuse: non-scalar root, missing derivative, and the like."""


def as_tensor(value) -> np.ndarray:
    """Coerce to a float64 ndarray of rank <= 2."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim > 2:
        raise ShapeError(f"tensors of rank {arr.ndim} are not supported (shape {arr.shape})")
    return arr


def _check_finite(value: np.ndarray) -> None:
    # One reduction instead of an elementwise isfinite scan: any NaN poisons
    # the sum, and an Inf survives it (Inf - Inf -> NaN, still caught).
    if not math.isfinite(float(value.sum())):
        raise NonFiniteError(f"non-finite value in tensor of shape {value.shape}")


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Celu:
    """celu(x) = x for x > 0, alpha*(exp(x/alpha) - 1) otherwise.

    Convex and non-decreasing, so eligible for convex layers. At x = 0 the
    right derivative (1) and second derivative 0 are used; the kink is a
    measure-zero event.
    """

    alpha: float = 1.0
    convex = True
    nondecreasing = True
    has_second = True

    def value(self, x):
        return np.where(x > 0, x, self.alpha * np.expm1(np.minimum(x, 0.0) / self.alpha))

    def prime(self, x):
        return np.where(x >= 0, 1.0, np.exp(np.minimum(x, 0.0) / self.alpha))

    def second(self, x):
        return np.where(x >= 0, 0.0, np.exp(np.minimum(x, 0.0) / self.alpha) / self.alpha)

    def tag(self):
        return {"kind": "celu", "alpha": self.alpha}


@dataclass(frozen=True)
class Softplus:
    """softplus(x) = log(1 + exp(x)); smooth convex alternative to CELU."""

    convex = True
    nondecreasing = True
    has_second = True

    def value(self, x):
        return np.logaddexp(0.0, x)

    def prime(self, x):
        return 1.0 / (1.0 + np.exp(-x))

    def second(self, x):
        s = 1.0 / (1.0 + np.exp(-x))
        return s * (1.0 - s)

    def tag(self):
        return {"kind": "softplus"}


@dataclass(frozen=True)
class Prelu:
    """prelu(x) = x for x > 0, slope*x otherwise. Generator use only.

    With slope in (0, 1) the map is convex and non-decreasing, but its
    second derivative vanishes almost everywhere, which makes it useless
    for potentials that must be differentiated twice.
    """

    slope: float = 0.25
    convex = False  # not offered for convex layers regardless of slope
    nondecreasing = True
    has_second = True

    def value(self, x):
        return np.where(x >= 0, x, self.slope * x)

    def prime(self, x):
        return np.where(x >= 0, 1.0, self.slope)

    def second(self, x):
        return np.zeros_like(x)

    def tag(self):
        return {"kind": "prelu", "slope": self.slope}


@dataclass(frozen=True)
class Identity:
    """Pass-through; convex and non-decreasing, used in test configurations."""

    convex = True
    nondecreasing = True
    has_second = True

    def value(self, x):
        return x

    def prime(self, x):
        return np.ones_like(x)

    def second(self, x):
        return np.zeros_like(x)

    def tag(self):
        return {"kind": "identity"}


def activation_from_tag(tag: dict):
    kind = tag["kind"]
    if kind == "celu":
        return Celu(alpha=float(tag.get("alpha", 1.0)))
    if kind == "softplus":
        return Softplus()
    if kind == "prelu":
        return Prelu(slope=float(tag.get("slope", 0.25)))
    if kind == "identity":
        return Identity()
    raise ValueError(f"unknown activation kind {kind!r}")


# ---------------------------------------------------------------------------
# Graph and nodes
# ---------------------------------------------------------------------------


class Node:
    """One operation record: cached forward value plus vjp links to inputs.

    ``parents`` is a tuple of (input_node, vjp) pairs where vjp maps a
    cotangent Node to this input's contribution, building new graph nodes
    as it goes. A vjp may return the cotangent unchanged (identity) but
    never None.
    """

    __slots__ = ("graph", "value", "op", "parents", "idx", "grad")

    def __init__(self, graph, value, op, parents, idx):
        self.graph = graph
        self.value = value
        self.op = op
        self.parents = parents
        self.idx = idx
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape}, idx={self.idx})"

    # Sugar for assembling scalar objectives; the named ops below do the work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, c):
        if isinstance(c, Node):
            return mul(self, c)
        return scale(self, float(c))

    __rmul__ = __mul__


class Graph:
    """Append-only record of one differentiable computation.

    Single-owner: not safe for concurrent mutation. Nodes from different
    graphs must not be mixed. ``check_finite`` trades a ~1us reduction per
    node for immediate NaN/Inf detection and is on by default.
    """

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.params: list[Node] = []
        self.check_finite = check_finite

    def _record(self, value: np.ndarray, op: str, parents) -> Node:
        if self.check_finite:
            _check_finite(value)
        node = Node(self, value, op, parents, len(self.nodes))
        self.nodes.append(node)
        return node

    def leaf(self, value, param: bool = False) -> Node:
        """Register an input tensor. Parameter leaves get gradient slots,
        filled by backward()."""
        node = self._record(as_tensor(value), "leaf", ())
        if param:
            self.params.append(node)
        return node

    def constant(self, value) -> Node:
        return self._record(as_tensor(value), "const", ())


def _graph_of(*nodes: Node) -> Graph:
    g = nodes[0].graph
    for n in nodes[1:]:
        if n.graph is not g:
            raise GraphError("nodes belong to different graphs")
    return g


# ---------------------------------------------------------------------------
# Op vocabulary
# ---------------------------------------------------------------------------


def _same_shape(a: Node, b: Node, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shapes differ: {a.value.shape} vs {b.value.shape}")


def add(a: Node, b: Node) -> Node:
    _same_shape(a, b, "add")
    g = _graph_of(a, b)
    return g._record(a.value + b.value, "add", ((a, lambda c: c), (b, lambda c: c)))


def sub(a: Node, b: Node) -> Node:
    _same_shape(a, b, "sub")
    g = _graph_of(a, b)
    return g._record(a.value - b.value, "sub", ((a, lambda c: c), (b, neg)))


def neg(a: Node) -> Node:
    return a.graph._record(-a.value, "neg", ((a, neg),))


def mul(a: Node, b: Node) -> Node:
    """Elementwise product of same-shape tensors."""
    _same_shape(a, b, "mul")
    g = _graph_of(a, b)
    return g._record(a.value * b.value, "mul",
                     ((a, lambda c: mul(c, b)), (b, lambda c: mul(c, a))))


def scale(a: Node, c: float) -> Node:
    """Multiply by a python constant (not a graph quantity)."""
    c = float(c)
    return a.graph._record(a.value * c, "scale", ((a, lambda g: scale(g, c)),))


def smul(a: Node, s: Node) -> Node:
    """Multiply a tensor by a scalar node."""
    if s.value.ndim != 0:
        raise ShapeError(f"smul: scalar operand has shape {s.value.shape}")
    g = _graph_of(a, s)
    return g._record(a.value * s.value, "smul",
                     ((a, lambda c: smul(c, s)), (s, lambda c: inner_all(c, a))))


def adds(a: Node, s: Node) -> Node:
    """Add a scalar node to every entry of a tensor."""
    if s.value.ndim != 0:
        raise ShapeError(f"adds: scalar operand has shape {s.value.shape}")
    g = _graph_of(a, s)
    return g._record(a.value + s.value, "adds",
                     ((a, lambda c: c), (s, sum_all)))


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul: needs two matrices, got {a.value.shape} and {b.value.shape}")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: inner dims differ: {a.value.shape} vs {b.value.shape}")
    g = _graph_of(a, b)
    return g._record(a.value @ b.value, "matmul",
                     ((a, lambda c: _matmul_nt(c, b)),
                      (b, lambda c: _matmul_tn(a, c))))


def _matmul_nt(a: Node, b: Node) -> Node:
    """a @ b.T; fused so matrix-product vjps cost one node, not two."""
    g = _graph_of(a, b)
    return g._record(a.value @ b.value.T, "matmul_nt",
                     ((a, lambda c: matmul(c, b)),
                      (b, lambda c: _matmul_tn(c, a))))


def _matmul_tn(a: Node, b: Node) -> Node:
    """a.T @ b."""
    g = _graph_of(a, b)
    return g._record(a.value.T @ b.value, "matmul_tn",
                     ((a, lambda c: _matmul_nt(b, c)),
                      (b, lambda c: matmul(a, c))))


def matvec(a: Node, x: Node) -> Node:
    if a.value.ndim != 2 or x.value.ndim != 1:
        raise ShapeError(f"matvec: needs matrix and vector, got {a.value.shape} and {x.value.shape}")
    if a.value.shape[1] != x.value.shape[0]:
        raise ShapeError(f"matvec: inner dims differ: {a.value.shape} vs {x.value.shape}")
    g = _graph_of(a, x)
    return g._record(a.value @ x.value, "matvec",
                     ((a, lambda c: outer(c, x)),
                      (x, lambda c: _matvec_t(a, c))))


def _matvec_t(a: Node, c: Node) -> Node:
    """a.T @ c (adjoint of matvec in its vector argument)."""
    g = _graph_of(a, c)
    return g._record(a.value.T @ c.value, "matvec_t",
                     ((a, lambda g2: outer(c, g2)),
                      (c, lambda g2: matvec(a, g2))))


def outer(u: Node, v: Node) -> Node:
    if u.value.ndim != 1 or v.value.ndim != 1:
        raise ShapeError(f"outer: needs two vectors, got {u.value.shape} and {v.value.shape}")
    g = _graph_of(u, v)
    return g._record(np.outer(u.value, v.value), "outer",
                     ((u, lambda c: matvec(c, v)),
                      (v, lambda c: matvec(transpose(c), u))))


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise ShapeError(f"transpose: needs a matrix, got {a.value.shape}")
    return a.graph._record(a.value.T, "transpose", ((a, transpose),))


def add_bias(a: Node, v: Node) -> Node:
    """Add a vector to every row of a matrix."""
    if a.value.ndim != 2 or v.value.ndim != 1 or a.value.shape[1] != v.value.shape[0]:
        raise ShapeError(f"add_bias: incompatible shapes {a.value.shape} and {v.value.shape}")
    g = _graph_of(a, v)
    return g._record(a.value + v.value, "add_bias",
                     ((a, lambda c: c), (v, sum_rows)))


def sum_rows(a: Node) -> Node:
    """Column sums: [m, k] -> [k]."""
    if a.value.ndim != 2:
        raise ShapeError(f"sum_rows: needs a matrix, got {a.value.shape}")
    m = a.value.shape[0]
    return a.graph._record(a.value.sum(axis=0), "sum_rows",
                           ((a, lambda c: tile_rows(c, m)),))


def tile_rows(v: Node, m: int) -> Node:
    """Repeat a vector as m rows: [k] -> [m, k]."""
    if v.value.ndim != 1:
        raise ShapeError(f"tile_rows: needs a vector, got {v.value.shape}")
    return v.graph._record(np.broadcast_to(v.value, (m, v.value.shape[0])).copy(),
                           "tile_rows", ((v, sum_rows),))


def rowwise_inner(a: Node, b: Node) -> Node:
    """Per-row inner products of same-shape matrices: [m, k] x [m, k] -> [m]."""
    _same_shape(a, b, "rowwise_inner")
    if a.value.ndim != 2:
        raise ShapeError(f"rowwise_inner: needs matrices, got {a.value.shape}")
    g = _graph_of(a, b)
    return g._record(np.einsum("ij,ij->i", a.value, b.value), "rowwise_inner",
                     ((a, lambda c: rowscale(b, c)), (b, lambda c: rowscale(a, c))))


def rowscale(a: Node, s: Node) -> Node:
    """Scale row i of a matrix by s[i]."""
    if a.value.ndim != 2 or s.value.ndim != 1 or a.value.shape[0] != s.value.shape[0]:
        raise ShapeError(f"rowscale: incompatible shapes {a.value.shape} and {s.value.shape}")
    g = _graph_of(a, s)
    return g._record(a.value * s.value[:, None], "rowscale",
                     ((a, lambda c: rowscale(c, s)), (s, lambda c: rowwise_inner(c, a))))


def colscale(a: Node, s: Node) -> Node:
    """Scale column j of a matrix by s[j]."""
    if a.value.ndim != 2 or s.value.ndim != 1 or a.value.shape[1] != s.value.shape[0]:
        raise ShapeError(f"colscale: incompatible shapes {a.value.shape} and {s.value.shape}")
    g = _graph_of(a, s)
    return g._record(a.value * s.value, "colscale",
                     ((a, lambda c: colscale(c, s)), (s, lambda c: sum_rows(mul(c, a)))))


def inner_all(a: Node, b: Node) -> Node:
    """Full inner product over all entries: same shapes -> scalar."""
    _same_shape(a, b, "inner_all")
    g = _graph_of(a, b)
    return g._record(np.asarray(np.vdot(a.value, b.value)), "inner_all",
                     ((a, lambda c: smul(b, c)), (b, lambda c: smul(a, c))))


def sum_all(a: Node) -> Node:
    shape = a.value.shape
    return a.graph._record(np.asarray(a.value.sum()), "sum_all",
                           ((a, lambda c: spread(c, shape)),))


def spread(s: Node, shape) -> Node:
    """Fill the given shape with a scalar node (adjoint of sum_all)."""
    if s.value.ndim != 0:
        raise ShapeError(f"spread: scalar operand has shape {s.value.shape}")
    return s.graph._record(np.full(shape, float(s.value)), "spread",
                           ((s, sum_all),))


def squared_norm(a: Node) -> Node:
    """Sum of squares of all entries."""
    return inner_all(a, a)


def mean_all(a: Node) -> Node:
    return scale(sum_all(a), 1.0 / a.value.size)


def max0(a: Node) -> Node:
    """Elementwise max(a, 0). The kink's derivative is taken as 0 at 0."""
    gate = (a.value > 0).astype(np.float64)
    g = a.graph

    def vjp(c):
        return mul(c, g.constant(gate))

    return g._record(np.maximum(a.value, 0.0), "max0", ((a, vjp),))


def act(a: Node, kind) -> Node:
    """Apply an elementwise activation. Identity short-circuits."""
    if isinstance(kind, Identity):
        return a
    return a.graph._record(kind.value(a.value), "act",
                           ((a, lambda c: mul(c, act_prime(a, kind))),))


def act_prime(a: Node, kind) -> Node:
    # Differentiating this node needs the activation's second derivative,
    # so the requirement is enforced here, at construction of the gradient.
    if not kind.has_second:
        raise GraphError(f"activation {kind} has no second derivative; "
                         "cannot build a differentiable input-gradient through it")
    return a.graph._record(kind.prime(a.value), "act_prime",
                           ((a, lambda c: mul(c, act_second(a, kind))),))


def act_second(a: Node, kind) -> Node:
    def vjp(_c):
        raise GraphError(f"third derivative of {kind} is not supported")

    return a.graph._record(kind.second(a.value), "act_second", ((a, vjp),))


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


def _ancestors(root: Node) -> list[Node]:
    """All nodes reachable from root through parent links, root included."""
    seen = {root.idx}
    out = [root]
    stack = [root]
    while stack:
        for p, _ in stack.pop().parents:
            if p.idx not in seen:
                seen.add(p.idx)
                out.append(p)
                stack.append(p)
    return out


def grad(root: Node, wrt: list[Node]) -> list[Node]:
    """Symbolic reverse pass: gradient nodes of a scalar root w.r.t. wrt.

    The returned nodes live on the same graph and are differentiable again,
    which is what makes double backprop work. Targets unreachable from the
    root get zero-valued constants. Deterministic: the sweep follows node
    creation order.
    """
    if root.value.ndim != 0:
        raise GraphError(f"grad root must be scalar, got shape {root.value.shape}")
    g = root.graph
    for w in wrt:
        if w.graph is not g:
            raise GraphError("grad target lives on a different graph")

    reachable = _ancestors(root)
    reachable.sort(key=lambda n: n.idx)
    wrt_ids = {w.idx for w in wrt}

    # needed[n]: some wrt leaf is reachable from n. Parents always precede
    # children in idx order, so one ascending pass suffices.
    needed: dict[int, bool] = {}
    for n in reachable:
        needed[n.idx] = n.idx in wrt_ids or any(needed.get(p.idx, False) for p, _ in n.parents)

    cot: dict[int, Node] = {root.idx: g.constant(1.0)}
    for n in reversed(reachable):
        c = cot.get(n.idx)
        if c is None or not needed[n.idx]:
            continue
        for p, vjp in n.parents:
            if not needed.get(p.idx, False):
                continue
            contrib = vjp(c)
            prev = cot.get(p.idx)
            cot[p.idx] = contrib if prev is None else add(prev, contrib)

    out = []
    for w in wrt:
        gn = cot.get(w.idx)
        out.append(gn if gn is not None else g.constant(np.zeros_like(w.value)))
    return out


def backward(graph: Graph, root: Node) -> None:
    """Accumulate d(root)/d(theta) into every registered parameter leaf."""
    grads = grad(root, graph.params)
    for leaf, gn in zip(graph.params, grads):
        if gn.value.shape != leaf.value.shape:
            raise GraphError(f"gradient shape {gn.value.shape} != leaf shape {leaf.value.shape}")
        leaf.grad = gn.value.copy() if leaf.grad is None else leaf.grad + gn.value


def input_grad_node(graph: Graph, scalar_net_output: Node, inp: Node) -> Node:
    """Node whose value is the gradient of a scalar output w.r.t. an input.

    The result is itself differentiable: a later backward() through it
    produces the exact mixed second-order terms of expressions like
    f(grad g(y); theta_g).
    """
    if scalar_net_output.graph is not graph or inp.graph is not graph:
        raise GraphError("output/input nodes do not belong to the given graph")
    return grad(scalar_net_output, [inp])[0]


def batch_input_grad(scalar_per_row: Node, inp: Node) -> Node:
    """Per-row input gradients for a row-independent batch computation.

    For a potential applied rowwise (value shape [m], input shape [m, d]),
    the gradient of the summed output recovers each row's own gradient
    because distinct rows never interact.
    """
    if scalar_per_row.value.ndim != 1:
        raise ShapeError(f"batch_input_grad: per-row values must be a vector, "
                         f"got {scalar_per_row.value.shape}")
    return grad(sum_all(scalar_per_row), [inp])[0]
