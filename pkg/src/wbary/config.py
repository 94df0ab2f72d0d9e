"""Run configuration files.

A single TOML file fully determines a run: problem block (marginals,
weights, latent dim, penalty), network block, training block, eval block.
Validation is strict: unknown keys are errors with field-level paths, and
the effective config (defaults filled) can be echoed back out so a run
directory is self-describing.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import data as dat
from .objectives import BarycenterProblem
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid run configuration; messages carry field paths."""

    def __init__(self, messages):
        self.messages = list(messages) if isinstance(messages, (list, tuple)) else [messages]
        super().__init__("; ".join(self.messages))


@dataclass
class EvalConfig:
    uvp_samples: int = 10000
    eval_every: int = 0
    eval_seed: int = 424242
    export_samples: int = 1000


@dataclass
class RunConfig:
    problem: BarycenterProblem
    train: TrainConfig
    eval: EvalConfig
    marginal_specs: list = field(default_factory=list)  # raw dicts for echo

    def effective_dict(self) -> dict:
        t, e = self.train, self.eval
        prob = {
            "latent_dim": self.problem.latent_dim,
            "weights": ("free" if self.problem.free_weights
                        else [float(w) for w in self.problem.weights]),
            "penalty_weight": self.problem.penalty_weight,
            "marginals": self.marginal_specs,
        }
        networks = {
            "potential_layers": t.potential_layers,
            "potential_width": t.potential_width or max(16, 2 * self.problem.dim),
            "generator_layers": t.generator_layers,
            "generator_width": (t.generator_width or t.potential_width
                                or max(16, 2 * self.problem.dim)),
            "potential_activation": t.potential_activation,
            "celu_alpha": t.celu_alpha,
            "prelu_slope": t.prelu_slope,
        }
        if t.mode == "nwbf":
            networks["ctx_width"] = t.ctx_width or max(4, 2 * self.problem.n_marginals)
        training = {
            "mode": t.mode, "k1": t.k1, "k2": t.k2, "k3": t.k3,
            "batch_size": t.batch_size, "lr": t.lr,
            "lr_f": t.lr_f or t.lr, "lr_g": t.lr_g or t.lr, "lr_h": t.lr_h or t.lr,
            "lr_decay_period_epochs": t.lr_decay_period_epochs,
            "lr_decay_factor": t.lr_decay_factor,
            "seed": t.seed, "divergence_limit": t.divergence_limit,
        }
        ev = {"uvp_samples": e.uvp_samples, "eval_every": e.eval_every,
              "eval_seed": e.eval_seed, "export_samples": e.export_samples}
        return {"problem": prob, "networks": networks, "training": training, "eval": ev}


_PROBLEM_KEYS = {"latent_dim", "weights", "penalty_weight", "marginals"}
_NETWORK_KEYS = {"potential_layers", "potential_width", "generator_layers",
                 "generator_width", "potential_activation", "celu_alpha",
                 "prelu_slope", "ctx_width"}
_TRAINING_KEYS = {"mode", "k1", "k2", "k3", "batch_size", "lr", "lr_f", "lr_g",
                  "lr_h", "lr_decay_period_epochs", "lr_decay_factor", "seed",
                  "divergence_limit"}
_EVAL_KEYS = {"uvp_samples", "eval_every", "eval_seed", "export_samples"}
_MARGINAL_KEYS = {
    "gaussian": {"kind", "mean", "cov"},
    "mixture": {"kind", "weights", "components"},
    "uniform_line": {"kind", "p0", "p1"},
    "uniform_ellipse": {"kind", "center", "axes", "angle"},
    "file": {"kind", "path"},
}


def _check_keys(section: dict, allowed: set, where: str, errors: list) -> None:
    for key in section:
        if key not in allowed:
            errors.append(f"{where}: unknown key {key!r}")


def _parse_marginal(m: dict, where: str, errors: list, base_dir: str):
    kind = m.get("kind")
    if kind not in _MARGINAL_KEYS:
        errors.append(f"{where}: unknown marginal kind {kind!r} "
                      f"(expected one of {sorted(_MARGINAL_KEYS)})")
        return None
    _check_keys(m, _MARGINAL_KEYS[kind], where, errors)
    try:
        if kind == "gaussian":
            return dat.Gaussian(np.array(m["mean"], dtype=float),
                                np.array(m["cov"], dtype=float))
        if kind == "mixture":
            comps = [dat.Gaussian(np.array(c["mean"], dtype=float),
                                  np.array(c["cov"], dtype=float))
                     for c in m["components"]]
            return dat.Mixture(np.array(m["weights"], dtype=float), comps)
        if kind == "uniform_line":
            return dat.UniformLine(np.array(m["p0"], dtype=float),
                                   np.array(m["p1"], dtype=float))
        if kind == "uniform_ellipse":
            return dat.UniformEllipse(np.array(m["center"], dtype=float),
                                      np.array(m["axes"], dtype=float),
                                      float(m.get("angle", 0.0)))
        path = m["path"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return dat.FileBacked(path)
    except (KeyError, ValueError, TypeError) as exc:
        errors.append(f"{where}: {exc}")
        return None


def parse_config(path) -> RunConfig:
    """Load, validate and default-fill a run config. All problems found are
    reported together in one ConfigError."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"{path}: not valid TOML: {exc}"]) from None
    base_dir = os.path.dirname(os.path.abspath(path))

    errors: list[str] = []
    for key in raw:
        if key not in ("problem", "networks", "training", "eval"):
            errors.append(f"unknown section {key!r}")
    prob_raw = raw.get("problem", {})
    net_raw = raw.get("networks", {})
    train_raw = raw.get("training", {})
    eval_raw = raw.get("eval", {})
    _check_keys(prob_raw, _PROBLEM_KEYS, "problem", errors)
    _check_keys(net_raw, _NETWORK_KEYS, "networks", errors)
    _check_keys(train_raw, _TRAINING_KEYS, "training", errors)
    _check_keys(eval_raw, _EVAL_KEYS, "eval", errors)

    marg_raw = prob_raw.get("marginals", [])
    if not marg_raw:
        errors.append("problem: needs at least one [[problem.marginals]] entry")
    marginals = [_parse_marginal(m, f"problem.marginals[{i}]", errors, base_dir)
                 for i, m in enumerate(marg_raw)]
    if errors or any(m is None for m in marginals):
        raise ConfigError(errors)

    weights_raw = prob_raw.get("weights", "free" if train_raw.get("mode") == "nwbf"
                               else [1.0 / len(marginals)] * len(marginals))
    weights = None if weights_raw == "free" else np.array(weights_raw, dtype=float)
    mode = train_raw.get("mode", "nwb")
    if mode == "nwbf" and weights is not None:
        errors.append("training: mode nwbf requires problem.weights = \"free\"")
    if mode == "nwb" and weights is None:
        errors.append("training: mode nwb requires explicit problem.weights")

    try:
        problem = BarycenterProblem(
            marginals, weights,
            latent_dim=int(prob_raw.get("latent_dim", marginals[0].dim)),
            penalty_weight=float(prob_raw.get("penalty_weight", 0.1)))
    except ValueError as exc:
        errors.append(f"problem: {exc}")
        raise ConfigError(errors) from None

    def _opt_int(d, key):
        return int(d[key]) if key in d and d[key] is not None else None

    def _opt_float(d, key):
        return float(d[key]) if key in d and d[key] is not None else None

    try:
        train = TrainConfig(
            mode=mode,
            k1=int(train_raw.get("k1", 6)),
            k2=int(train_raw.get("k2", 4)),
            k3=int(train_raw.get("k3", 1000)),
            batch_size=int(train_raw.get("batch_size", 100)),
            lr=float(train_raw.get("lr", 1e-3)),
            lr_f=_opt_float(train_raw, "lr_f"),
            lr_g=_opt_float(train_raw, "lr_g"),
            lr_h=_opt_float(train_raw, "lr_h"),
            lr_decay_period_epochs=int(train_raw.get("lr_decay_period_epochs", 0)),
            lr_decay_factor=float(train_raw.get("lr_decay_factor", 0.1)),
            seed=int(train_raw.get("seed", 0)),
            potential_layers=int(net_raw.get("potential_layers", 3)),
            potential_width=_opt_int(net_raw, "potential_width"),
            generator_layers=int(net_raw.get("generator_layers", 4)),
            generator_width=_opt_int(net_raw, "generator_width"),
            potential_activation=str(net_raw.get("potential_activation", "celu")),
            celu_alpha=float(net_raw.get("celu_alpha", 1.0)),
            prelu_slope=float(net_raw.get("prelu_slope", 0.25)),
            ctx_width=_opt_int(net_raw, "ctx_width"),
            eval_every=int(eval_raw.get("eval_every", 0)),
            eval_samples=int(eval_raw.get("uvp_samples", 10000)),
        )
    except ValueError as exc:
        errors.append(f"training: {exc}")
        raise ConfigError(errors) from None
    if errors:
        raise ConfigError(errors)

    ev = EvalConfig(
        uvp_samples=int(eval_raw.get("uvp_samples", 10000)),
        eval_every=int(eval_raw.get("eval_every", 0)),
        eval_seed=int(eval_raw.get("eval_seed", 424242)),
        export_samples=int(eval_raw.get("export_samples", 1000)))

    echo_marginals = [dict(m) for m in marg_raw]
    return RunConfig(problem, train, ev, echo_marginals)


# ---------------------------------------------------------------------------
# TOML echo
# ---------------------------------------------------------------------------


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__} to TOML")


def dump_toml(cfg: dict) -> str:
    """Serialize the effective-config dict (sections of scalars/lists plus
    the marginals list-of-tables) back to TOML."""
    lines = []
    for section, body in cfg.items():
        tables = {k: v for k, v in body.items()
                  if isinstance(v, list) and v and isinstance(v[0], dict)}
        plain = {k: v for k, v in body.items() if k not in tables}
        lines.append(f"[{section}]")
        for k, v in plain.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
        for k, entries in tables.items():
            for entry in entries:
                lines.append(f"[[{section}.{k}]]")
                for ek, ev in entry.items():
                    lines.append(f"{ek} = {_toml_value(ev)}")
                lines.append("")
    return "\n".join(lines)
