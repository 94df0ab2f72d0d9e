"""Command-line surface.

Commands: train, oracle, eval, export, gradcheck, landscape.
Exit codes: 0 ok, 2 usage/config error, 3 numeric failure.

A train run writes a fixed layout under --out:
    config.toml      effective configuration (defaults filled)
    report.jsonl     one record per outer cycle
    checkpoints/     final.npz (diverged.npz on abort)
    figures/         training.png
Exports write CSV point clouds with a rendered PNG alongside each file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data as dat
from . import gradcheck
from . import landscape as lsc
from . import plots
from . import recovery
from . import training as tr
from .config import ConfigError, RunConfig, dump_toml, parse_config
from .gaussian import GaussianMoments, fixed_point_residual, gaussian_barycenter

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _parse_weights(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.replace(" ", "").split(",") if t], dtype=float)
    except ValueError:
        raise ConfigError([f"cannot parse weight vector {text!r}"]) from None


def _load_run_config(path, seed_override=None) -> RunConfig:
    cfg = parse_config(path)
    if seed_override is not None:
        cfg.train.seed = int(seed_override)
    return cfg


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_run_config(args.config, args.seed)
    run_dir = args.out
    os.makedirs(run_dir, exist_ok=True)
    ckpt_dir = os.path.join(run_dir, "checkpoints")
    fig_dir = os.path.join(run_dir, "figures")
    os.makedirs(ckpt_dir, exist_ok=True)
    os.makedirs(fig_dir, exist_ok=True)

    with open(os.path.join(run_dir, "config.toml"), "w", encoding="utf-8") as fh:
        fh.write(dump_toml(cfg.effective_dict()))

    truth = None
    if cfg.eval.eval_every and not cfg.problem.free_weights:
        try:
            truth = tr.oracle_truth(cfg.problem)
        except ValueError:
            truth = None  # non-Gaussian marginals: no oracle telemetry
    cfg.train.eval_every = cfg.eval.eval_every
    cfg.train.eval_samples = cfg.eval.uvp_samples

    train_fn = tr.nwbf_train if cfg.train.mode == "nwbf" else tr.nwb_train
    try:
        report = train_fn(cfg.problem, cfg.train, truth=truth)
    except tr.TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.report is not None:
            exc.report.models.save(os.path.join(ckpt_dir, "diverged.npz"),
                                   {"diverged_at": exc.cycle})
            _write_report(exc.report, run_dir)
        return EXIT_NUMERIC

    _write_report(report, run_dir)
    report.models.save(os.path.join(ckpt_dir, "final.npz"), {"k3": cfg.train.k3})
    recs = [r.to_json_dict() for r in report.records]
    plots.training_curves_png(recs, os.path.join(fig_dir, "training.png"))
    last = report.records[-1]
    msg = f"done: {cfg.train.k3} cycles, final objective {last.total:.6f}"
    if last.uvp is not None:
        msg += f", UVP {last.uvp:.3f}%"
    print(msg)
    return EXIT_OK


def _write_report(report: tr.TrainReport, run_dir) -> None:
    with open(os.path.join(run_dir, "report.jsonl"), "w", encoding="utf-8") as fh:
        for rec in report.records:
            fh.write(json.dumps(rec.to_json_dict()) + "\n")


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def cmd_oracle(args) -> int:
    with open(args.moments, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list) or not entries:
        print("error: moments file must be a non-empty JSON list of "
              "{mean, cov} objects", file=sys.stderr)
        return EXIT_CONFIG
    moments = [GaussianMoments(np.array(e["mean"], dtype=float),
                               np.array(e["cov"], dtype=float)) for e in entries]
    weights = (_parse_weights(args.weights) if args.weights
               else np.full(len(moments), 1.0 / len(moments)))
    try:
        bary = gaussian_barycenter(moments, weights)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    residual = fixed_point_residual(bary, moments, weights)
    out = args.out or "barycenter.json"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(bary.to_json())
    print(f"barycenter written to {out}; fixed-point residual {residual:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    if not os.path.exists(args.checkpoint):
        print(f"error: checkpoint {args.checkpoint} not found", file=sys.stderr)
        return EXIT_CONFIG
    cfg = _load_run_config(args.config)
    models = tr.ModelSet.load(args.checkpoint)
    weights = _parse_weights(args.weight) if args.weight else None
    n = args.n or cfg.eval.uvp_samples
    try:
        scores = recovery.score_run(models, cfg.problem, n=n,
                                    seed=cfg.eval.eval_seed, weights=weights)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    gen = scores["generator"]
    print(f"UVP at {n} samples")
    print(f"  generator pushforward : {gen.value:8.4f} %")
    print(f"  potential pushforward : {scores['pushforward']:8.4f} % (weighted)")
    for i, s in enumerate(scores["pushforward_per_marginal"]):
        print(f"    marginal {i}         : {s.value:8.4f} %")
    if args.out:
        payload = {"n_samples": n, "generator_uvp": gen.value,
                   "pushforward_uvp": scores["pushforward"],
                   "pushforward_per_marginal": [s.value for s in
                                                scores["pushforward_per_marginal"]]}
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    return EXIT_OK


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def cmd_export(args) -> int:
    if not os.path.exists(args.checkpoint):
        print(f"error: checkpoint {args.checkpoint} not found", file=sys.stderr)
        return EXIT_CONFIG
    models = tr.ModelSet.load(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    if args.weight:
        weight_list = [_parse_weights(w) for w in args.weight]
    else:
        weight_list = [None]
    if models.mode == "nwb" and weight_list != [None]:
        print("error: --weight sweeps need a free-weight (nwbf) checkpoint",
              file=sys.stderr)
        return EXIT_CONFIG
    if models.mode == "nwbf" and weight_list == [None]:
        print("error: nwbf checkpoints need at least one --weight", file=sys.stderr)
        return EXIT_CONFIG
    for a in weight_list:
        batch = recovery.sample_generator(models.h, args.n, args.seed, a)
        stem = "barycenter" if a is None else (
            "barycenter_w" + "-".join(f"{x:.2f}" for x in a))
        csv_path = os.path.join(args.out, stem + ".csv")
        dat.save_points(csv_path, batch)
        plots.scatter_png(batch.points, os.path.join(args.out, stem + ".png"),
                          title=stem.replace("_", " "))
        print(f"wrote {csv_path} (+ .png), {args.n} samples")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck / landscape
# ---------------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_suite(args.seed, n_seeds=args.n_seeds,
                                  corruption=args.corrupt)
    ok = True
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{status}  {r.name:20s} max rel err {r.max_rel_err:.3e} "
              f"(tol {r.tolerance:.0e})")
        ok = ok and r.passed
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_landscape(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = lsc.EliminationReport(0, 0, 0, 0, 0)
    n_inst = 20
    for _ in range(n_inst):
        n = int(rng.integers(1, 5))
        d = int(rng.integers(1, 6))
        inst = lsc.QuadraticLandscape(3.0 * rng.standard_normal((n, d)),
                                      dat.sample_simplex(n, rng))
        rep = lsc.staged_elimination_check(inst, rng, n_trials=5)
        opt = lsc.closed_form_optimum(inst)
        desc = lsc.descend_reduced(inst, steps=300)
        worst = lsc.EliminationReport(
            max(worst.gamma_value_dev, rep.gamma_value_dev),
            max(worst.gamma_arg_dev, rep.gamma_arg_dev),
            max(worst.beta_value_dev, rep.beta_value_dev),
            max(worst.beta_arg_dev, rep.beta_arg_dev),
            max(worst.chain_dev, rep.chain_dev,
                float(np.max(np.abs(desc - opt)))))
    print(f"{n_inst} random instances")
    print(f"  gamma stage  value dev {worst.gamma_value_dev:.3e}  "
          f"arg dev {worst.gamma_arg_dev:.3e}")
    print(f"  beta stage   value dev {worst.beta_value_dev:.3e}  "
          f"arg dev {worst.beta_arg_dev:.3e}")
    print(f"  chain / descent dev    {worst.chain_dev:.3e}")
    ok = max(worst.gamma_value_dev, worst.beta_value_dev) < 1e-8 and worst.chain_dev < 1e-6
    print("pass" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wbary",
                                description="Continuous Wasserstein barycenters "
                                            "via convex potentials")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the alternating training scheme")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None, help="override config seed")
    t.set_defaults(fn=cmd_train)

    o = sub.add_parser("oracle", help="exact Gaussian barycenter from moments")
    o.add_argument("--moments", required=True, help="JSON list of {mean, cov}")
    o.add_argument("--weights", default=None, help="comma-separated simplex weights")
    o.add_argument("--out", default=None)
    o.set_defaults(fn=cmd_oracle)

    e = sub.add_parser("eval", help="UVP of both recovery routes")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--weight", default=None, help="weights for nwbf checkpoints")
    e.add_argument("--n", type=int, default=None)
    e.add_argument("--out", default=None)
    e.set_defaults(fn=cmd_eval)

    x = sub.add_parser("export", help="sample the barycenter to CSV + PNG")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--n", type=int, default=1000)
    x.add_argument("--out", required=True)
    x.add_argument("--weight", action="append", default=None,
                   help="repeatable; one export per weight (nwbf)")
    x.add_argument("--seed", type=int, default=12345)
    x.set_defaults(fn=cmd_export)

    g = sub.add_parser("gradcheck", help="finite-difference engine verification")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-seeds", type=int, default=100)
    g.add_argument("--corrupt", type=float, default=0.0, help=argparse.SUPPRESS)
    g.set_defaults(fn=cmd_gradcheck)

    l = sub.add_parser("landscape", help="quadratic-landscape closed-form checks")
    l.add_argument("--seed", type=int, default=0)
    l.set_defaults(fn=cmd_landscape)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
