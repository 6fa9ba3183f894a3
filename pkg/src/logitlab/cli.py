"""Command line interface.

Grid commands (simulate-existence, simulate-risk, simulate-misspec) take an
experiment config as a JSON file or as flags and emit the deterministic grid
CSV; phase-curve, hessian-sweep and grad-dev emit small per-point CSVs;
audit-design and fit emit JSON validated against the shipped schemas. Every
stochastic command requires a seed (from --seed or the config file). With
--figures, commands that write delimited output also render a PNG figure next
to it.
"""

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np

from . import report
from .audit import (audit_design, gradient_deviation_experiment,
                    hessian_lower_sweep)
from .core import StructuredSpectralMatrix
from .designs import DesignSpec, SeededRng, Wellspec, dataset_from_csv, sample_dataset
from .harness import (SCHEMA_VERSION, ExperimentConfig, grid_csv_text,
                      load_schema, run_existence_grid, run_misspec_grid,
                      run_risk_grid)
from .solver import FitStatus, fit_mle
from .theory import phase_boundary

__all__ = ["main"]

PHASE_CSV_HEADER = "beta,h_hat,se,t_star"
SWEEP_CSV_HEADER = "schema_version,replicate,min_whitened_eigenvalue"
DEV_CSV_HEADER = "schema_version,replicate,deviation,bound"

_DESIGN_CHOICES = ("gaussian", "rademacher", "laplace", "iid_centered")


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header.split(","))
    for row in rows:
        writer.writerow([x if isinstance(x, str) else
                         (repr(x) if isinstance(x, float) else str(x))
                         for x in row])
    return buf.getvalue()


def _emit(text, output):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _figure_path(output):
    return str(Path(output).with_suffix(".png"))


def _ints(text):
    return tuple(int(tok) for tok in text.split(","))


def _floats(text):
    return tuple(float(tok) for tok in text.split(","))


def _beta_values(text):
    """Comma list ('0,1,5') or colon range ('0:20:0.5', both ends included)."""
    if ":" in text:
        start, stop, step = (float(tok) for tok in text.split(":"))
        if step <= 0:
            raise ValueError("step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + k * step for k in range(max(count, 1)))
    return _floats(text)


def _unit_direction(kind, d, rng):
    if kind == "canonical":
        u = np.zeros(d)
        u[0] = 1.0
        return u
    if kind == "diffuse":
        return np.full(d, 1.0 / math.sqrt(d))
    g = rng.stream("ustar").standard_normal(d)
    return g / np.linalg.norm(g)


# --- grid commands -------------------------------------------------------------

def _add_grid_arguments(sub):
    sub.add_argument("--config", help="experiment config JSON file")
    sub.add_argument("--design", choices=_DESIGN_CHOICES, default="gaussian")
    sub.add_argument("--law", choices=("wellspec", "worstcase"))
    sub.add_argument("--d", help="comma-separated dimensions")
    sub.add_argument("--signal",
                     help="comma-separated signal norms (flip probabilities "
                          "for the worst-case law)")
    sub.add_argument("--n", help="comma-separated sample sizes or multipliers")
    sub.add_argument("--n-mode", choices=("absolute", "times_bd"),
                     default="absolute")
    sub.add_argument("--replicates", type=int, default=100)
    sub.add_argument("--risk-mc", type=int, default=200_000)
    sub.add_argument("--t", type=float, default=1.0)
    sub.add_argument("--no-risk", action="store_true",
                     help="existence frequencies only, skip maximizer fits")
    sub.add_argument("--seed", type=int,
                     help="master seed (required unless --config supplies one)")
    sub.add_argument("--output", help="CSV path (default: stdout)")
    sub.add_argument("--figures", action="store_true",
                     help="render a PNG next to the output CSV")


def _grid_config(args, parser, default_law):
    if args.figures and not args.output:
        parser.error("--figures requires --output")
    if args.config:
        payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        cfg = ExperimentConfig.from_json_dict(payload)
        if args.seed is not None:
            cfg = replace(cfg, master_seed=args.seed)
        if args.output:
            cfg = replace(cfg, output_path=args.output)
        return cfg
    if args.seed is None:
        parser.error("--seed is required when no config file is given")
    missing = [name for name in ("d", "signal", "n")
               if getattr(args, name) is None]
    if missing:
        parser.error(f"missing required flags: {', '.join('--' + m for m in missing)}")
    return ExperimentConfig(
        design=args.design, law=args.law or default_law,
        d_grid=_ints(args.d), signal_grid=_floats(args.signal),
        n_grid=_floats(args.n), replicates=args.replicates,
        master_seed=args.seed, n_mode=args.n_mode, t=args.t,
        risk_mc=args.risk_mc, compute_risk=not args.no_risk,
        output_path=args.output)


def _run_grid_command(args, parser, runner, default_law):
    cfg = _grid_config(args, parser, default_law)
    rows = runner(cfg)
    if not cfg.output_path:
        sys.stdout.write(grid_csv_text(rows))
    elif args.figures:
        report.grid_figure(rows, _figure_path(cfg.output_path))
    return 0


def _cmd_simulate_existence(args, parser):
    return _run_grid_command(args, parser, run_existence_grid, "wellspec")


def _cmd_simulate_risk(args, parser):
    return _run_grid_command(args, parser, run_risk_grid, "wellspec")


def _cmd_simulate_misspec(args, parser):
    return _run_grid_command(args, parser, run_misspec_grid, "worstcase")


# --- curve and deviation commands ------------------------------------------------

def _cmd_phase_curve(args, parser):
    if args.figures and not args.output:
        parser.error("--figures requires --output")
    betas = _beta_values(args.betas)
    rng = SeededRng(args.seed)
    estimates = [phase_boundary(b, args.mc, rng.stream("phase", i),
                                n_boot=args.boot)
                 for i, b in enumerate(betas)]
    rows = [(float(e.beta), float(e.h_hat), float(e.mc_std_error),
             float(e.t_star)) for e in estimates]
    _emit(_csv_text(PHASE_CSV_HEADER, rows), args.output)
    if args.figures:
        report.phase_curve_figure(estimates, _figure_path(args.output))
    return 0


def _cmd_audit_design(args, parser):
    rng = SeededRng(args.seed)
    u = _unit_direction(args.ustar, args.d, rng)
    spec = DesignSpec(args.design, args.d)
    rep = audit_design(spec, u, args.eta, args.c, args.mc, rng)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "design": args.design,
        "d": args.d,
        "u_star_kind": args.ustar,
        "u_star": [float(v) for v in rep.u_star],
        "eta": rep.eta,
        "c": args.c,
        "n_mc": args.mc,
        "c_small_ball": rep.c_small_ball,
        "margin2d_min_ratio": rep.margin2d_min_ratio,
        "psi1_hat": rep.psi1_hat,
    }
    jsonschema.validate(payload, load_schema("regularity_report"))
    _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.output)
    return 0


def _cmd_hessian_sweep(args, parser):
    if args.figures and not args.output:
        parser.error("--figures requires --output")
    b = args.b
    radius = args.radius if args.radius is not None else 1.0 / (100.0 * math.sqrt(b))
    u = np.zeros(args.d)
    u[0] = 1.0
    theta_star = b * u
    h = StructuredSpectralMatrix(u, b)
    spec = DesignSpec("gaussian", args.d)
    law = Wellspec(theta_star)
    rng = SeededRng(args.seed)
    vals = []
    for r in range(args.replicates):
        data = sample_dataset(spec, law, args.n, rng.stream("sweep", r, "data"))
        vals.append(hessian_lower_sweep(data, theta_star, h, radius,
                                        args.dirs, rng.stream("sweep", r, "dirs")))
    rows = [(SCHEMA_VERSION, r, float(v)) for r, v in enumerate(vals)]
    _emit(_csv_text(SWEEP_CSV_HEADER, rows), args.output)
    frac = float(np.mean(np.asarray(vals) >= args.threshold))
    stream = sys.stderr if not args.output else sys.stdout
    print(f"min={min(vals):.6g} fraction>={args.threshold:g}: {frac:.3f}",
          file=stream)
    if args.figures:
        report.sweep_figure(vals, args.threshold, _figure_path(args.output))
    return 0


def _cmd_grad_dev(args, parser):
    if args.figures and not args.output:
        parser.error("--figures requires --output")
    if args.config:
        payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        cfg = ExperimentConfig.from_json_dict(payload)
        cells = list(cfg.cells())
        if cfg.design != "gaussian" or cfg.law != "wellspec" or len(cells) != 1:
            parser.error("grad-dev config needs a single gaussian wellspec cell")
        _, d, signal, n = cells[0]
        b = cfg.cell_signal_strength(signal)
        t = cfg.t
        replicates = cfg.replicates
        seed = args.seed if args.seed is not None else cfg.master_seed
    else:
        if args.seed is None:
            parser.error("--seed is required when no config file is given")
        if args.d is None:
            parser.error("--d is required when no config file is given")
        d, b, t = args.d, args.b, args.t
        replicates = args.replicates
        n = args.n if args.n is not None else int(math.ceil(
            4.0 * b * (d * math.log(5.0) + t)))
        seed = args.seed
    summary = gradient_deviation_experiment(
        d, b, n, t, replicates, SeededRng(seed).stream("graddev"))
    rows = [(SCHEMA_VERSION, r, float(v), float(summary.bound))
            for r, v in enumerate(summary.samples)]
    _emit(_csv_text(DEV_CSV_HEADER, rows), args.output)
    stream = sys.stderr if not args.output else sys.stdout
    print(f"n={n} bound={summary.bound:.6g} coverage={summary.coverage:.4f}",
          file=stream)
    if args.figures:
        report.deviation_figure(summary, _figure_path(args.output))
    return 0


def _cmd_fit(args, parser):
    try:
        data = dataset_from_csv(args.data)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    result = fit_mle(data, tol_grad=args.tol_grad, max_iters=args.max_iters)
    witness = result.separation.witness
    payload = {
        "schema_version": SCHEMA_VERSION,
        "status": result.status.value,
        "theta_hat": [float(v) for v in result.theta_hat.theta],
        "iterations": result.iterations,
        "final_grad_norm": result.final_grad_norm,
        "separation_status": result.separation.status.value,
        "separation_witness": (None if witness is None
                               else [float(v) for v in witness]),
    }
    jsonschema.validate(payload, load_schema("fit_report"))
    _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.output)
    if result.status is FitStatus.CONVERGED:
        return 0
    if result.status is FitStatus.SEPARATION_DETECTED:
        return 2
    return 1


# --- parser --------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="logitlab",
        description="Simulation laboratory for logistic regression: maximizer "
                    "existence, excess risk, and design regularity audits.")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, func in (("simulate-existence", _cmd_simulate_existence),
                       ("simulate-risk", _cmd_simulate_risk),
                       ("simulate-misspec", _cmd_simulate_misspec)):
        sub = subs.add_parser(name, help=f"run the {name.split('-')[1]} grid")
        _add_grid_arguments(sub)
        sub.set_defaults(func=func)

    sub = subs.add_parser("phase-curve",
                          help="critical d/n ratio as a function of signal strength")
    sub.add_argument("--betas", default="0:10:0.5",
                     help="comma list or start:stop:step range")
    sub.add_argument("--mc", type=int, default=200_000)
    sub.add_argument("--boot", type=int, default=200,
                     help="bootstrap resamples for the standard error")
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--output", help="CSV path (default: stdout)")
    sub.add_argument("--figures", action="store_true")
    sub.set_defaults(func=_cmd_phase_curve)

    sub = subs.add_parser("audit-design",
                          help="regularity report for a design and direction")
    sub.add_argument("--design", choices=_DESIGN_CHOICES, required=True)
    sub.add_argument("--d", type=int, required=True)
    sub.add_argument("--ustar", choices=("canonical", "diffuse", "random"),
                     default="canonical")
    sub.add_argument("--eta", type=float, default=math.exp(-1.0))
    sub.add_argument("--c", type=float, default=21000.0)
    sub.add_argument("--mc", type=int, default=1_000_000)
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--output", help="JSON path (default: stdout)")
    sub.set_defaults(func=_cmd_audit_design)

    sub = subs.add_parser("hessian-sweep",
                          help="minimum whitened curvature over local sweeps")
    sub.add_argument("--d", type=int, required=True)
    sub.add_argument("--b", type=float, default=math.e,
                     help="signal strength (at least e)")
    sub.add_argument("--n", type=int, required=True)
    sub.add_argument("--radius", type=float,
                     help="sweep radius in the curvature metric "
                          "(default 1/(100 sqrt(B)))")
    sub.add_argument("--dirs", type=int, default=200)
    sub.add_argument("--replicates", type=int, default=100)
    sub.add_argument("--threshold", type=float, default=1e-3,
                     help="reporting threshold for the eigenvalue summary")
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--output", help="CSV path (default: stdout)")
    sub.add_argument("--figures", action="store_true")
    sub.set_defaults(func=_cmd_hessian_sweep)

    sub = subs.add_parser("grad-dev",
                          help="whitened gradient deviations at the truth")
    sub.add_argument("--config", help="experiment config JSON (single cell; "
                                      "supplies d, B, n, t, replicates, seed)")
    sub.add_argument("--d", type=int)
    sub.add_argument("--b", type=float, default=math.e)
    sub.add_argument("--n", type=int,
                     help="sample size (default: smallest admissible)")
    sub.add_argument("--t", type=float, default=1.0)
    sub.add_argument("--replicates", type=int, default=200)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--output", help="CSV path (default: stdout)")
    sub.add_argument("--figures", action="store_true")
    sub.set_defaults(func=_cmd_grad_dev)

    sub = subs.add_parser("fit", help="fit one dataset from a CSV file")
    sub.add_argument("--data", required=True,
                     help="dataset CSV with columns x1..xd,y")
    sub.add_argument("--tol-grad", type=float, default=1e-9)
    sub.add_argument("--max-iters", type=int, default=200)
    sub.add_argument("--output", help="JSON path (default: stdout)")
    sub.set_defaults(func=_cmd_fit)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ValueError, jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
