"""Adam and the three-loop alternating training schemes.

One outer cycle samples fresh batches (and, in free-weight mode, a weight
vector), then runs K2 middle iterations of { K1 g-updates, one f-update,
clip all f weights }, and finishes with one h-update. All updates of a
cycle reuse that cycle's batches. The combined h+g single-minimization
variant is deliberately not implemented: it is unstable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as dat
from . import networks as nw
from .gaussian import GaussianMoments, empirical_moments, gaussian_barycenter, uvp
from .objectives import BarycenterProblem, build_objective


class TrainingDiverged(RuntimeError):
    """Raised when the objective leaves the trust region; carries the state
    reached so far so callers can dump checkpoints."""

    def __init__(self, cycle: int, value: float, report=None):
        super().__init__(f"objective diverged at outer cycle {cycle}: {value!r}")
        self.cycle = cycle
        self.value = value
        self.report = report


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(arrays, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(lr, beta1, beta2, eps, 0,
                     [np.zeros_like(a) for a in arrays],
                     [np.zeros_like(a) for a in arrays])


def adam_step(state: AdamState, params, grads, direction: str = "minimize",
              lr: float | None = None) -> None:
    """Standard bias-corrected update, in place. 'maximize' negates grads."""
    if direction not in ("minimize", "maximize"):
        raise ValueError(f"direction must be minimize or maximize, got {direction!r}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter/gradient/state lengths differ")
    sign = -1.0 if direction == "maximize" else 1.0
    step_lr = state.lr if lr is None else lr
    state.t += 1
    b1t = 1.0 - state.beta1 ** state.t
    b2t = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        g = sign * g
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= step_lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)


# ---------------------------------------------------------------------------
# Configuration and report
# ---------------------------------------------------------------------------

CYCLES_PER_EPOCH = 100  # schedule accounting for infinite synthetic samplers


@dataclass
class TrainConfig:
    mode: str = "nwb"               # "nwb" | "nwbf"
    k1: int = 6
    k2: int = 4
    k3: int = 1000
    batch_size: int = 100
    lr: float = 1e-3
    lr_f: float | None = None       # per-role overrides; default to lr
    lr_g: float | None = None
    lr_h: float | None = None
    lr_decay_period_epochs: int = 0  # 0 disables; one epoch = 100 outer cycles
    lr_decay_factor: float = 0.1
    seed: int = 0
    potential_layers: int = 3
    potential_width: int | None = None   # default max(16, 2d)
    generator_layers: int = 4
    generator_width: int | None = None
    potential_activation: str = "celu"   # "celu" | "softplus"
    celu_alpha: float = 1.0
    prelu_slope: float = 0.25
    ctx_width: int | None = None         # picnn context width
    eval_every: int = 0                  # cycles between UVP telemetry; 0 = never
    eval_samples: int = 10000
    divergence_limit: float = 1e8

    def __post_init__(self):
        if self.mode not in ("nwb", "nwbf"):
            raise ValueError(f"mode must be nwb or nwbf, got {self.mode!r}")
        if min(self.k1, self.k2, self.k3) < 1:
            raise ValueError("k1, k2, k3 must all be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    def role_lr(self, role: str) -> float:
        return {"f": self.lr_f, "g": self.lr_g, "h": self.lr_h}[role] or self.lr


def lr_schedule(base: float, cycle: int, cfg: TrainConfig) -> float:
    """base * factor^(floor(cycle/period)); constant when decay is disabled."""
    if base <= 0:
        raise ValueError(f"base learning rate must be > 0, got {base}")
    if cfg.lr_decay_period_epochs <= 0:
        return base
    period = cfg.lr_decay_period_epochs * CYCLES_PER_EPOCH
    return base * cfg.lr_decay_factor ** (cycle // period)


@dataclass
class CycleRecord:
    cycle: int
    total: float
    j: list[float]
    r: list[float]
    gen_term: float
    lr: float
    uvp: float | None = None
    weights: list[float] | None = None  # sampled weights, free-weight mode only
    wall_ms: float = 0.0

    def to_json_dict(self) -> dict:
        out = {"cycle": self.cycle, "total": self.total, "J": self.j, "R": self.r,
               "gen_term": self.gen_term, "lr": self.lr}
        if self.uvp is not None:
            out["uvp"] = self.uvp
        if self.weights is not None:
            out["weights"] = self.weights
        out["wall_ms"] = self.wall_ms
        return out


@dataclass
class ModelSet:
    """All trainable networks of one run."""

    f: list
    g: list
    h: object
    mode: str = "nwb"

    def named(self) -> dict:
        out = {}
        for i, net in enumerate(self.f):
            out[f"f{i}"] = net
        for i, net in enumerate(self.g):
            out[f"g{i}"] = net
        out["h"] = self.h
        return out

    @staticmethod
    def from_named(nets: dict, mode: str) -> "ModelSet":
        n = sum(1 for k in nets if k.startswith("f"))
        return ModelSet([nets[f"f{i}"] for i in range(n)],
                        [nets[f"g{i}"] for i in range(n)], nets["h"], mode)

    def save(self, path, meta: dict | None = None) -> None:
        nw.save_models(path, self.named(), {"mode": self.mode, **(meta or {})})

    @staticmethod
    def load(path) -> "ModelSet":
        nets, meta = nw.load_models(path)
        return ModelSet.from_named(nets, meta.get("mode", "nwb"))


@dataclass
class TrainReport:
    records: list[CycleRecord]
    models: ModelSet
    config: TrainConfig
    diverged: bool = False


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------


def potential_activation(cfg: TrainConfig):
    if cfg.potential_activation == "celu":
        return ad.Celu(cfg.celu_alpha)
    if cfg.potential_activation == "softplus":
        return ad.Softplus()
    raise ValueError(f"unsupported potential activation {cfg.potential_activation!r}")


def build_models(problem: BarycenterProblem, cfg: TrainConfig) -> ModelSet:
    d = problem.dim
    n = problem.n_marginals
    width = cfg.potential_width or max(16, 2 * d)
    gwidth = cfg.generator_width or width
    act = potential_activation(cfg)
    rng = dat.seed_stream(cfg.seed, 990)
    pot_widths = [width] * cfg.potential_layers
    gen_widths = [gwidth] * cfg.generator_layers
    if cfg.mode == "nwb":
        fs = [nw.Ficnn.create(d, pot_widths, act, rng) for _ in range(n)]
        gs = [nw.Ficnn.create(d, pot_widths, act, rng) for _ in range(n)]
        h = nw.Generator.create(problem.latent_dim, d, gen_widths, rng,
                                ad.Prelu(cfg.prelu_slope))
    else:
        fs = [nw.Picnn.create(d, n, pot_widths, act, rng, ctx_width=cfg.ctx_width)
              for _ in range(n)]
        gs = [nw.Picnn.create(d, n, pot_widths, act, rng, ctx_width=cfg.ctx_width)
              for _ in range(n)]
        h = nw.Generator.create(problem.latent_dim, d, gen_widths, rng,
                                ad.Prelu(cfg.prelu_slope), cond_dim=n)
    return ModelSet(fs, gs, h, cfg.mode)


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


def _flatten(nets):
    arrays, spans = [], []
    for net in nets:
        a = net.param_arrays()
        spans.append(len(a))
        arrays.extend(a)
    return arrays, spans


def _objective_step(models: ModelSet, problem, ys, z, mix, a_vec,
                    role: str, states, lr_now, cfg) -> dict:
    """One recorded objective, gradients for one role, one Adam update.

    Per-node finite checks are off here: the divergence guard reads the
    scalar objective every step, and a NaN/Inf anywhere poisons it within
    one cycle, which the guard turns into a hard abort.
    """
    graph = ad.Graph(check_finite=False)
    f_bounds = [f.bind(graph) for f in models.f]
    g_bounds = [g.bind(graph) for g in models.g]
    h_bound = models.h.bind(graph)
    y_nodes = [graph.leaf(y) for y in ys]
    z_node = graph.leaf(z)
    a_node = graph.constant(a_vec) if a_vec is not None else None
    parts = build_objective(graph, f_bounds, g_bounds, h_bound, y_nodes, z_node,
                            mix, problem.penalty_weight, a_node)
    total = float(parts.total.value)
    if not np.isfinite(total) or abs(total) > cfg.divergence_limit:
        raise _Diverging(total)

    if role == "g":
        leaves = [lf for b in g_bounds for lf in b.leaves]
        arrays, _ = _flatten(models.g)
        direction = "minimize"
    elif role == "f":
        leaves = [lf for b in f_bounds for lf in b.leaves]
        arrays, _ = _flatten(models.f)
        direction = "maximize"
    else:
        leaves = h_bound.leaves
        arrays = models.h.param_arrays()
        direction = "minimize"
    grads = [n.value for n in ad.grad(parts.total, leaves)]
    adam_step(states[role], arrays, grads, direction, lr=lr_now[role])
    return parts.floats()


class _Diverging(Exception):
    def __init__(self, value):
        self.value = value


def _train(problem: BarycenterProblem, cfg: TrainConfig, models: ModelSet | None,
           callback=None, truth: GaussianMoments | None = None) -> TrainReport:
    if models is None:
        models = build_models(problem, cfg)
    n = problem.n_marginals
    free = cfg.mode == "nwbf"
    if free:
        for net in models.f + models.g:
            if not hasattr(net, "context_dim"):
                raise ValueError("free-weight training needs weight-conditioned "
                                 f"potentials, got {type(net).__name__}")
        if not getattr(models.h, "cond_dim", 0):
            raise ValueError("free-weight training needs a weight-conditioned generator")
    elif problem.free_weights:
        raise ValueError("fixed-weight training needs problem weights")

    states = {
        "f": adam_init(_flatten(models.f)[0], cfg.role_lr("f")),
        "g": adam_init(_flatten(models.g)[0], cfg.role_lr("g")),
        "h": adam_init(models.h.param_arrays(), cfg.role_lr("h")),
    }
    emit = callback or (lambda *a: None)
    records: list[CycleRecord] = []

    for cycle in range(cfg.k3):
        t0 = time.perf_counter()
        lr_now = {role: lr_schedule(cfg.role_lr(role), cycle, cfg)
                  for role in ("f", "g", "h")}
        a_vec = None
        if free:
            a_vec = dat.sample_simplex(n, dat.seed_stream(cfg.seed, n + 1, cycle))
        mix = a_vec if free else problem.weights
        z = dat.seed_stream(cfg.seed, n, cycle).standard_normal(
            (cfg.batch_size, problem.latent_dim))
        ys = [dat.sample(problem.marginals[i], cfg.batch_size,
                         dat.seed_stream(cfg.seed, i, cycle), marginal=i).points
              for i in range(n)]
        emit("sample", cycle, 0, 0)

        try:
            for k2 in range(cfg.k2):
                for k1 in range(cfg.k1):
                    _objective_step(models, problem, ys, z, mix, a_vec,
                                    "g", states, lr_now, cfg)
                    emit("g", cycle, k2, k1)
                _objective_step(models, problem, ys, z, mix, a_vec,
                                "f", states, lr_now, cfg)
                emit("f", cycle, k2, 0)
                for fnet in models.f:
                    fnet.clip_nonneg()
                emit("clip", cycle, k2, 0)
            parts = _objective_step(models, problem, ys, z, mix, a_vec,
                                    "h", states, lr_now, cfg)
            emit("h", cycle, 0, 0)
        except _Diverging as exc:
            records.append(CycleRecord(cycle, exc.value, [], [], 0.0,
                                       lr_now["g"],
                                       wall_ms=(time.perf_counter() - t0) * 1e3))
            report = TrainReport(records, models, cfg, diverged=True)
            raise TrainingDiverged(cycle, exc.value, report) from None

        score = None
        if truth is not None and cfg.eval_every > 0 and (cycle + 1) % cfg.eval_every == 0:
            score = _quick_uvp(models, problem, cfg, cycle, truth, a_vec)
        records.append(CycleRecord(
            cycle, parts["total"], parts["j"], parts["r"], parts["gen_term"],
            lr_now["g"], uvp=score,
            weights=(list(map(float, a_vec)) if a_vec is not None else None),
            wall_ms=(time.perf_counter() - t0) * 1e3))
    return TrainReport(records, models, cfg)


def _quick_uvp(models, problem, cfg, cycle, truth, a_vec):
    graph = ad.Graph()
    z = dat.seed_stream(cfg.seed, 7777, cycle).standard_normal(
        (cfg.eval_samples, problem.latent_dim))
    a_node = graph.constant(a_vec) if a_vec is not None else None
    pts = models.h.bind(graph).forward(graph.leaf(z), a_node).value
    return uvp(empirical_moments(pts), truth, cfg.eval_samples).value


def oracle_truth(problem: BarycenterProblem, weights=None) -> GaussianMoments:
    """Exact barycenter for all-Gaussian problems; raises otherwise."""
    moments = []
    for m in problem.marginals:
        if not isinstance(m, dat.Gaussian):
            raise ValueError("exact barycenter is only available when every "
                             f"marginal is Gaussian (got {type(m).__name__})")
        moments.append(m.moments())
    w = weights if weights is not None else problem.weights
    if w is None:
        raise ValueError("free-weight problems need an explicit weight vector "
                         "to evaluate the oracle")
    return gaussian_barycenter(moments, w)


def nwb_train(problem: BarycenterProblem, cfg: TrainConfig,
              models: ModelSet | None = None, callback=None,
              truth: GaussianMoments | None = None) -> TrainReport:
    """Fixed-weight scheme: K3 cycles of (K1 g / 1 f + clip) x K2, then h."""
    if cfg.mode != "nwb":
        raise ValueError("config mode is not nwb")
    return _train(problem, cfg, models, callback, truth)


def nwbf_train(problem: BarycenterProblem, cfg: TrainConfig,
               models: ModelSet | None = None, callback=None,
               truth: GaussianMoments | None = None) -> TrainReport:
    """Free-weight scheme: same loop, but each cycle first samples weights
    uniformly from the simplex and conditions every network on them."""
    if cfg.mode != "nwbf":
        raise ValueError("config mode is not nwbf")
    return _train(problem, cfg, models, callback, truth)
