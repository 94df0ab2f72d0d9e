"""Input-convex potentials and the generator network.

Three trainable families:
  * Ficnn: scalar potential convex in its whole input. Convexity holds when
    the pass-through weights are non-negative and activations are convex
    non-decreasing; f-role networks are clipped to stay feasible, g-role
    networks carry a penalty instead and are never clipped.
  * Picnn: potential convex in the sample input only, conditioned on a
    simplex weight vector through an unconstrained context path with
    non-negative multiplicative gates on the convex path.
  * Generator: unconstrained feed-forward map from latent noise (optionally
    concatenated with a weight vector) to the ambient space.

QuadraticPotential and ShiftGenerator are exact low-dimensional test
configurations (0.5*|x|^2 + b.x and z + a) used by the quadratic-landscape
checks and by closed-form tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node


SIMPLEX_TOL = 1e-9


def check_simplex(a: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"weight vector must be 1-D, got shape {a.shape}")
    if np.any(a < -tol) or abs(float(a.sum()) - 1.0) > max(tol, 1e-9):
        raise ValueError(f"weights must lie on the simplex, got {a}")
    return a


def _init_mat(rng, fan_in: int, shape, nonneg: bool = False) -> np.ndarray:
    w = rng.standard_normal(shape) / np.sqrt(fan_in)
    return np.abs(w) if nonneg else w


def _convex_eligible(kind) -> bool:
    return bool(getattr(kind, "convex", False) and getattr(kind, "nondecreasing", False))


# ---------------------------------------------------------------------------
# Fully input-convex network
# ---------------------------------------------------------------------------


@dataclass
class Ficnn:
    """Convex potential: hidden recurrence z_{l+1} = act(z_l W_l + y A_l + b_l),
    scalar head w_z.z_H + w_y.y + b. Sign-constrained blocks: W_l and w_z."""

    input_dim: int
    widths: list[int]
    activations: list          # one kind per hidden layer
    a_mats: list[np.ndarray]   # [d, k_l]
    w_mats: list[np.ndarray]   # [k_{l-1}, k_l], l >= 1; constrained
    biases: list[np.ndarray]   # [k_l]
    w_out: np.ndarray          # [k_H]; constrained
    a_out: np.ndarray          # [d]
    b_out: np.ndarray          # scalar

    @staticmethod
    def create(input_dim: int, widths: list[int], activation, rng) -> "Ficnn":
        if not widths:
            raise ValueError("Ficnn needs at least one hidden layer")
        if not _convex_eligible(activation):
            raise ValueError(f"activation {activation} is not convex non-decreasing; "
                             "not eligible for convex layers")
        acts = [activation] * len(widths)
        a_mats = [_init_mat(rng, input_dim, (input_dim, k)) for k in widths]
        w_mats = [_init_mat(rng, widths[l - 1], (widths[l - 1], widths[l]), nonneg=True)
                  for l in range(1, len(widths))]
        biases = [np.zeros(k) for k in widths]
        w_out = _init_mat(rng, widths[-1], (widths[-1],), nonneg=True)
        a_out = _init_mat(rng, input_dim, (input_dim,))
        return Ficnn(input_dim, list(widths), acts, a_mats, w_mats, biases,
                     w_out, a_out, np.zeros(()))

    def param_arrays(self) -> list[np.ndarray]:
        return [*self.a_mats, *self.w_mats, *self.biases, self.w_out, self.a_out, self.b_out]

    def constrained_flags(self) -> list[bool]:
        return ([False] * len(self.a_mats) + [True] * len(self.w_mats)
                + [False] * len(self.biases) + [True, False, False])

    def clip_nonneg(self) -> None:
        for w in self.w_mats:
            np.maximum(w, 0.0, out=w)
        np.maximum(self.w_out, 0.0, out=self.w_out)

    def bind(self, graph: Graph) -> "BoundFicnn":
        return BoundFicnn(self, graph)

    def spec(self) -> dict:
        return {"type": "ficnn", "input_dim": self.input_dim, "widths": list(self.widths),
                "activations": [k.tag() for k in self.activations]}

    @staticmethod
    def from_spec(spec: dict, arrays: list[np.ndarray]) -> "Ficnn":
        widths = list(spec["widths"])
        h = len(widths)
        acts = [ad.activation_from_tag(t) for t in spec["activations"]]
        a_mats = arrays[:h]
        w_mats = arrays[h:2 * h - 1]
        biases = arrays[2 * h - 1:3 * h - 1]
        w_out, a_out, b_out = arrays[3 * h - 1:3 * h + 2]
        return Ficnn(int(spec["input_dim"]), widths, acts, a_mats, w_mats, biases,
                     w_out, a_out, b_out)


class BoundFicnn:
    """A Ficnn bound to one graph: parameter leaves plus the forward map."""

    def __init__(self, params: Ficnn, graph: Graph):
        self.params = params
        self.graph = graph
        self.leaves = [graph.leaf(a, param=True) for a in params.param_arrays()]
        h = len(params.widths)
        self._a = self.leaves[:h]
        self._w = self.leaves[h:2 * h - 1]
        self._b = self.leaves[2 * h - 1:3 * h - 1]
        self._w_out, self._a_out, self._b_out = self.leaves[3 * h - 1:3 * h + 2]

    def value(self, y: Node, a: Node | None = None) -> Node:
        """Per-row potential values: [m, d] -> [m]."""
        if a is not None:
            raise ValueError("Ficnn takes no weight-vector input; use Picnn")
        p = self.params
        if y.value.ndim != 2 or y.value.shape[1] != p.input_dim:
            raise ad.ShapeError(f"ficnn: batch shape {y.value.shape} does not match "
                                f"input dim {p.input_dim}")
        z = ad.act(ad.add_bias(ad.matmul(y, self._a[0]), self._b[0]), p.activations[0])
        for l in range(1, len(p.widths)):
            pre = ad.add(ad.matmul(z, self._w[l - 1]),
                         ad.add_bias(ad.matmul(y, self._a[l]), self._b[l]))
            z = ad.act(pre, p.activations[l])
        head = ad.add(ad.matvec(z, self._w_out), ad.matvec(y, self._a_out))
        return ad.adds(head, self._b_out)

    def penalty(self, lam: float) -> Node:
        return _neg_part_penalty(self.graph, self._w + [self._w_out], lam)


def _neg_part_penalty(graph: Graph, weight_leaves: list[Node], lam: float) -> Node:
    """lam * sum of squared Frobenius norms of negative parts."""
    if lam < 0:
        raise ValueError(f"penalty weight must be >= 0, got {lam}")
    total = None
    for w in weight_leaves:
        m = ad.max0(ad.neg(w))
        term = ad.inner_all(m, m)
        total = term if total is None else ad.add(total, term)
    if total is None:
        return graph.constant(0.0)
    return ad.scale(total, lam)


# ---------------------------------------------------------------------------
# Partially input-convex network
# ---------------------------------------------------------------------------


@dataclass
class Picnn:
    """Potential convex in the sample input, arbitrary in the weight vector.

    Context path: u_0 = a, u_{l+1} = act(V_l u_l + c_l), unconstrained.
    Convex path:  z_{l+1} = act((z_l . gate_l) W_l + y A_l + U_l u_l + b_l)
    with gate_l = max(G_l u_l + d_l, 0), so the composition stays convex in
    y whenever W_l >= 0. Matrices that act on context vectors are stored
    transposed ([out, in]) so the forward pass is matvec-only.
    """

    input_dim: int
    context_dim: int
    widths: list[int]
    ctx_widths: list[int]
    activations: list
    ctx_activation: object = None
    # convex path
    a_mats: list[np.ndarray] = field(default_factory=list)   # [d, k_l]
    u_mats: list[np.ndarray] = field(default_factory=list)   # [k_l, c_l]
    biases: list[np.ndarray] = field(default_factory=list)   # [k_l]
    w_mats: list[np.ndarray] = field(default_factory=list)   # [k_{l-1}, k_l]; constrained
    gate_mats: list[np.ndarray] = field(default_factory=list)  # [k_{l-1}, c_{l-1}] for l>=1
    gate_biases: list[np.ndarray] = field(default_factory=list)
    # context path
    v_mats: list[np.ndarray] = field(default_factory=list)   # [c_{l+1}, c_l]
    c_biases: list[np.ndarray] = field(default_factory=list)
    # head
    w_out: np.ndarray = None        # [k_H]; constrained
    gate_out: np.ndarray = None     # [k_H, c_H]
    gate_out_bias: np.ndarray = None
    w_y: np.ndarray = None          # [d]
    w_u: np.ndarray = None          # [c_H]
    b_out: np.ndarray = None

    @staticmethod
    def create(input_dim: int, context_dim: int, widths: list[int],
               activation, rng, ctx_width: int | None = None) -> "Picnn":
        if not widths:
            raise ValueError("Picnn needs at least one hidden layer")
        if not _convex_eligible(activation):
            raise ValueError(f"activation {activation} is not convex non-decreasing; "
                             "not eligible for convex layers")
        cw = ctx_width if ctx_width is not None else max(4, 2 * context_dim)
        h = len(widths)
        ctx_widths = [cw] * h
        cdims = [context_dim] + ctx_widths  # c_0 .. c_H
        p = Picnn(input_dim, context_dim, list(widths), ctx_widths,
                  [activation] * h, activation)
        p.a_mats = [_init_mat(rng, input_dim, (input_dim, k)) for k in widths]
        p.u_mats = [_init_mat(rng, cdims[l], (widths[l], cdims[l])) for l in range(h)]
        p.biases = [np.zeros(k) for k in widths]
        p.w_mats = [_init_mat(rng, widths[l - 1], (widths[l - 1], widths[l]), nonneg=True)
                    for l in range(1, h)]
        # gates start near 1 so the net behaves like a plain Ficnn at init
        p.gate_mats = [_init_mat(rng, cdims[l], (widths[l - 1], cdims[l]))
                       for l in range(1, h)]
        p.gate_biases = [np.ones(widths[l - 1]) for l in range(1, h)]
        p.v_mats = [_init_mat(rng, cdims[l], (cdims[l + 1], cdims[l])) for l in range(h)]
        p.c_biases = [np.zeros(cdims[l + 1]) for l in range(h)]
        p.w_out = _init_mat(rng, widths[-1], (widths[-1],), nonneg=True)
        p.gate_out = _init_mat(rng, cdims[h], (widths[-1], cdims[h]))
        p.gate_out_bias = np.ones(widths[-1])
        p.w_y = _init_mat(rng, input_dim, (input_dim,))
        p.w_u = _init_mat(rng, cdims[h], (cdims[h],))
        p.b_out = np.zeros(())
        return p

    def param_arrays(self) -> list[np.ndarray]:
        return [*self.a_mats, *self.u_mats, *self.biases, *self.w_mats,
                *self.gate_mats, *self.gate_biases, *self.v_mats, *self.c_biases,
                self.w_out, self.gate_out, self.gate_out_bias,
                self.w_y, self.w_u, self.b_out]

    def constrained_flags(self) -> list[bool]:
        h = len(self.widths)
        flags = [False] * (3 * h)                 # a, u, b
        flags += [True] * (h - 1)                 # w_mats
        flags += [False] * (2 * (h - 1) + 2 * h)  # gates, context
        flags += [True, False, False, False, False, False]
        return flags

    def clip_nonneg(self) -> None:
        for w in self.w_mats:
            np.maximum(w, 0.0, out=w)
        np.maximum(self.w_out, 0.0, out=self.w_out)

    def bind(self, graph: Graph) -> "BoundPicnn":
        return BoundPicnn(self, graph)

    def spec(self) -> dict:
        return {"type": "picnn", "input_dim": self.input_dim,
                "context_dim": self.context_dim, "widths": list(self.widths),
                "ctx_widths": list(self.ctx_widths),
                "activations": [k.tag() for k in self.activations],
                "ctx_activation": self.ctx_activation.tag()}

    @staticmethod
    def from_spec(spec: dict, arrays: list[np.ndarray]) -> "Picnn":
        widths = list(spec["widths"])
        h = len(widths)
        p = Picnn(int(spec["input_dim"]), int(spec["context_dim"]), widths,
                  list(spec["ctx_widths"]),
                  [ad.activation_from_tag(t) for t in spec["activations"]],
                  ad.activation_from_tag(spec["ctx_activation"]))
        it = iter(arrays)

        def take(n):
            return [next(it) for _ in range(n)]

        p.a_mats, p.u_mats, p.biases = take(h), take(h), take(h)
        p.w_mats, p.gate_mats, p.gate_biases = take(h - 1), take(h - 1), take(h - 1)
        p.v_mats, p.c_biases = take(h), take(h)
        (p.w_out, p.gate_out, p.gate_out_bias, p.w_y, p.w_u, p.b_out) = take(6)
        return p


class BoundPicnn:
    def __init__(self, params: Picnn, graph: Graph):
        self.params = params
        self.graph = graph
        self.leaves = [graph.leaf(a, param=True) for a in params.param_arrays()]
        p, h = params, len(params.widths)
        it = iter(self.leaves)

        def take(n):
            return [next(it) for _ in range(n)]

        self._a, self._u, self._b = take(h), take(h), take(h)
        self._w, self._gate, self._gate_b = take(h - 1), take(h - 1), take(h - 1)
        self._v, self._cb = take(h), take(h)
        (self._w_out, self._gate_out, self._gate_out_b,
         self._w_y, self._w_u, self._b_out) = take(6)

    def value(self, y: Node, a: Node | None = None) -> Node:
        p = self.params
        if a is None:
            raise ValueError("Picnn requires a weight-vector input")
        check_simplex(a.value)
        if a.value.shape != (p.context_dim,):
            raise ad.ShapeError(f"picnn: weight vector shape {a.value.shape} does not "
                                f"match context dim {p.context_dim}")
        if y.value.ndim != 2 or y.value.shape[1] != p.input_dim:
            raise ad.ShapeError(f"picnn: batch shape {y.value.shape} does not match "
                                f"input dim {p.input_dim}")
        u = a
        z = None
        for l in range(len(p.widths)):
            bias = ad.add(ad.matvec(self._u[l], u), self._b[l])
            pre = ad.add_bias(ad.matmul(y, self._a[l]), bias)
            if l >= 1:
                gate = ad.max0(ad.add(ad.matvec(self._gate[l - 1], u), self._gate_b[l - 1]))
                pre = ad.add(pre, ad.matmul(ad.colscale(z, gate), self._w[l - 1]))
            z = ad.act(pre, p.activations[l])
            u = ad.act(ad.add(ad.matvec(self._v[l], u), self._cb[l]), p.ctx_activation)
        gate = ad.max0(ad.add(ad.matvec(self._gate_out, u), self._gate_out_b))
        head = ad.add(ad.matvec(ad.colscale(z, gate), self._w_out),
                      ad.matvec(y, self._w_y))
        return ad.adds(head, ad.add(ad.inner_all(u, self._w_u), self._b_out))

    def penalty(self, lam: float) -> Node:
        return _neg_part_penalty(self.graph, self._w + [self._w_out], lam)


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


@dataclass
class Generator:
    """Plain feed-forward map, PReLU between layers, linear output.

    With cond_dim > 0 the weight vector is concatenated to the latent input
    at the first layer only, realized as an extra bias path.
    """

    latent_dim: int
    out_dim: int
    widths: list[int]
    activation: object
    cond_dim: int = 0
    mats: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)
    cond_mat: np.ndarray = None   # [k_0, cond_dim]

    @staticmethod
    def create(latent_dim: int, out_dim: int, widths: list[int], rng,
               activation=None, cond_dim: int = 0) -> "Generator":
        kind = activation if activation is not None else ad.Prelu(0.25)
        dims = [latent_dim] + list(widths) + [out_dim]
        g = Generator(latent_dim, out_dim, list(widths), kind, cond_dim)
        g.mats = [_init_mat(rng, dims[i], (dims[i], dims[i + 1])) for i in range(len(dims) - 1)]
        g.biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
        if cond_dim:
            g.cond_mat = _init_mat(rng, cond_dim, (dims[1], cond_dim))
        return g

    def param_arrays(self) -> list[np.ndarray]:
        out = [*self.mats, *self.biases]
        if self.cond_dim:
            out.append(self.cond_mat)
        return out

    def constrained_flags(self) -> list[bool]:
        return [False] * len(self.param_arrays())

    def clip_nonneg(self) -> None:
        pass  # no sign constraints anywhere

    def bind(self, graph: Graph) -> "BoundGenerator":
        return BoundGenerator(self, graph)

    def spec(self) -> dict:
        return {"type": "generator", "latent_dim": self.latent_dim,
                "out_dim": self.out_dim, "widths": list(self.widths),
                "activation": self.activation.tag(), "cond_dim": self.cond_dim}

    @staticmethod
    def from_spec(spec: dict, arrays: list[np.ndarray]) -> "Generator":
        g = Generator(int(spec["latent_dim"]), int(spec["out_dim"]),
                      list(spec["widths"]), ad.activation_from_tag(spec["activation"]),
                      int(spec.get("cond_dim", 0)))
        n = len(g.widths) + 1
        g.mats = arrays[:n]
        g.biases = arrays[n:2 * n]
        if g.cond_dim:
            g.cond_mat = arrays[2 * n]
        return g


class BoundGenerator:
    def __init__(self, params: Generator, graph: Graph):
        self.params = params
        self.graph = graph
        self.leaves = [graph.leaf(a, param=True) for a in params.param_arrays()]
        n = len(params.widths) + 1
        self._mats = self.leaves[:n]
        self._biases = self.leaves[n:2 * n]
        self._cond = self.leaves[2 * n] if params.cond_dim else None

    def forward(self, z: Node, a: Node | None = None) -> Node:
        p = self.params
        if z.value.ndim != 2 or z.value.shape[1] != p.latent_dim:
            raise ad.ShapeError(f"generator: latent batch shape {z.value.shape} does not "
                                f"match latent dim {p.latent_dim}")
        if (a is not None) != bool(p.cond_dim):
            raise ValueError("generator conditioning mismatch: weight vector "
                             f"{'given' if a is not None else 'missing'} but cond_dim={p.cond_dim}")
        x = z
        n_layers = len(self._mats)
        for i in range(n_layers):
            bias = self._biases[i]
            if i == 0 and self._cond is not None:
                bias = ad.add(bias, ad.matvec(self._cond, a))
            x = ad.add_bias(ad.matmul(x, self._mats[i]), bias)
            if i < n_layers - 1:
                x = ad.act(x, p.activation)
        return x


# ---------------------------------------------------------------------------
# Exact test configurations
# ---------------------------------------------------------------------------


@dataclass
class QuadraticPotential:
    """f(x) = 0.5*|x|^2 + beta.x; the trainable parameter is beta."""

    beta: np.ndarray

    @staticmethod
    def create(dim: int, rng=None) -> "QuadraticPotential":
        beta = np.zeros(dim) if rng is None else rng.standard_normal(dim)
        return QuadraticPotential(beta)

    def param_arrays(self):
        return [self.beta]

    def constrained_flags(self):
        return [False]

    def clip_nonneg(self):
        pass

    def bind(self, graph: Graph) -> "BoundQuadratic":
        return BoundQuadratic(self, graph)

    def spec(self) -> dict:
        return {"type": "quadratic", "dim": int(self.beta.shape[0])}

    @staticmethod
    def from_spec(spec: dict, arrays) -> "QuadraticPotential":
        return QuadraticPotential(arrays[0])


class BoundQuadratic:
    def __init__(self, params: QuadraticPotential, graph: Graph):
        self.params = params
        self.graph = graph
        self.leaves = [graph.leaf(params.beta, param=True)]

    def value(self, y: Node, a: Node | None = None) -> Node:
        return ad.add(ad.scale(ad.rowwise_inner(y, y), 0.5), ad.matvec(y, self.leaves[0]))

    def penalty(self, lam: float) -> Node:
        if lam < 0:
            raise ValueError(f"penalty weight must be >= 0, got {lam}")
        return self.graph.constant(0.0)


@dataclass
class ShiftGenerator:
    """h(z) = z + alpha; the trainable parameter is alpha."""

    alpha: np.ndarray

    @staticmethod
    def create(dim: int) -> "ShiftGenerator":
        return ShiftGenerator(np.zeros(dim))

    latent_dim = property(lambda self: int(self.alpha.shape[0]))
    out_dim = property(lambda self: int(self.alpha.shape[0]))

    def param_arrays(self):
        return [self.alpha]

    def constrained_flags(self):
        return [False]

    def clip_nonneg(self):
        pass

    def bind(self, graph: Graph) -> "BoundShift":
        return BoundShift(self, graph)

    def spec(self) -> dict:
        return {"type": "shift", "dim": int(self.alpha.shape[0])}

    @staticmethod
    def from_spec(spec: dict, arrays) -> "ShiftGenerator":
        return ShiftGenerator(arrays[0])


class BoundShift:
    def __init__(self, params: ShiftGenerator, graph: Graph):
        self.params = params
        self.graph = graph
        self.leaves = [graph.leaf(params.alpha, param=True)]

    def forward(self, z: Node, a: Node | None = None) -> Node:
        return ad.add_bias(z, self.leaves[0])


# ---------------------------------------------------------------------------
# Spec-surface operations
# ---------------------------------------------------------------------------


def ficnn_forward(p: Ficnn, x: np.ndarray) -> float:
    """Potential value at a single point."""
    g = Graph()
    out = p.bind(g).value(g.leaf(np.atleast_2d(np.asarray(x, dtype=np.float64))))
    return float(out.value[0])


def ficnn_input_grad(p: Ficnn, x: np.ndarray) -> np.ndarray:
    """Gradient of the potential at a single point."""
    g = Graph()
    xn = g.leaf(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    out = p.bind(g).value(xn)
    return ad.batch_input_grad(out, xn).value[0]


def picnn_forward(p: Picnn, x: np.ndarray, a: np.ndarray) -> float:
    g = Graph()
    an = g.constant(check_simplex(a))
    out = p.bind(g).value(g.leaf(np.atleast_2d(np.asarray(x, dtype=np.float64))), an)
    return float(out.value[0])


def generator_forward(p, z: np.ndarray, a: np.ndarray | None = None) -> np.ndarray:
    g = Graph()
    an = g.constant(check_simplex(a)) if a is not None else None
    out = p.bind(g).forward(g.leaf(np.atleast_2d(np.asarray(z, dtype=np.float64))), an)
    return out.value[0]


def clip_nonneg(p) -> None:
    """Replace every sign-constrained weight entry by max(entry, 0), in place."""
    p.clip_nonneg()


def convexity_penalty(graph: Graph, p, lam: float) -> Node:
    """Differentiable penalty: lam * sum |max(-W, 0)|_F^2 over constrained blocks."""
    return p.bind(graph).penalty(lam)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_NET_TYPES = {"ficnn": Ficnn, "picnn": Picnn, "generator": Generator,
              "quadratic": QuadraticPotential, "shift": ShiftGenerator}


def save_models(path, named_nets: dict, meta: dict | None = None) -> None:
    """Binary checkpoint: shapes, activation kinds, constraint flags, weights.

    Arrays are stored verbatim as float64, so a round trip is bit-exact.
    """
    manifest = {"format": 1, "meta": meta or {}, "networks": {}}
    payload = {}
    for name, net in named_nets.items():
        spec = net.spec()
        spec["constrained"] = net.constrained_flags()
        manifest["networks"][name] = spec
        for i, arr in enumerate(net.param_arrays()):
            payload[f"{name}/{i}"] = arr
    payload["__manifest__"] = np.frombuffer(
        json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_models(path):
    """Inverse of save_models. Returns (named nets dict, meta dict)."""
    with np.load(path) as data:
        manifest = json.loads(bytes(data["__manifest__"]).decode())
        nets = {}
        for name, spec in manifest["networks"].items():
            cls = _NET_TYPES[spec["type"]]
            arrays = []
            i = 0
            while f"{name}/{i}" in data:
                arrays.append(np.array(data[f"{name}/{i}"], dtype=np.float64))
                i += 1
            nets[name] = cls.from_spec(spec, arrays)
    return nets, manifest["meta"]
