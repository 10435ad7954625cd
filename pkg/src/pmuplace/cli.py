"""Command line entry points.

Subcommands: ``place`` solves one constraint level and prints the best
placement found, ``bounds`` prints the full lower/upper bound table for a
level, ``sweep`` runs every solver across a range of levels and writes
JSON/CSV, ``estimate`` fuses measured phasors into a posterior voltage,
and ``oracle`` is the exhaustive-search reference for small cases.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from .convex import PgdConfig
from .errors import ConvergenceError, ValidationError
from .experiment import (
    ExperimentConfig,
    SolverConfig,
    emit_curves,
    run_sweep,
    save_results,
    solve_level,
)
from .grid import (
    PD_FLOOR,
    PriorModel,
    build_admittance,
    feasible_subspace,
    prior_covariance,
    solve_power_flow,
)
from .gridfile import load_cost_map, load_grid, load_measurements
from .measurement import enumerate_candidates
from .placement import BRUTE_FORCE_LIMIT, brute_force_opt, greedy_budget, greedy_cardinality
from .placement import Budget, Cardinality, PlacementInstance
from .posterior import SelectionVector, se_update


def _add_model_args(sp):
    sp.add_argument("--grid", required=True, help="grid model JSON file")
    sp.add_argument("--metric", choices=["A", "D"], default="D")
    sp.add_argument(
        "--sigma-psd",
        type=float,
        default=0.5,
        help="relative std of the load pseudo-measurements (default 0.5)",
    )
    sp.add_argument("--sigma-mag", type=float, default=0.01)
    sp.add_argument("--sigma-ang", type=float, default=0.01)
    sp.add_argument("--cost-map", help="JSON pattern -> cost file")
    sp.add_argument(
        "--normalize-costs",
        action="store_true",
        help="rescale candidate costs to mean 1 before solving",
    )
    sp.add_argument("--output", help="write the full result as JSON")


def _add_solver_args(sp, samples_default):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument(
        "--samples",
        type=int,
        default=samples_default,
        help="random-baseline sample count (0 disables)",
    )
    sp.add_argument("--online-set", choices=["empty", "greedy"], default="greedy")
    sp.add_argument("--pgd-alpha", type=float, default=1.0)
    sp.add_argument("--pgd-max-iters", type=int, default=2000)
    sp.add_argument("--pgd-tol", type=float, default=1e-9)
    sp.add_argument("--pgd-patience", type=int, default=50)


def _add_level_args(sp):
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--sensors", type=int, help="number of sensors to place")
    group.add_argument("--budget", type=float, help="total cost budget")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pmuplace",
        description="Sensor placement for Bayesian voltage estimation",
    )
    parser.add_argument(
        "--version", action="version", version="pmuplace " + __version__
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("place", help="solve one constraint level")
    _add_model_args(sp)
    _add_level_args(sp)
    _add_solver_args(sp, samples_default=0)
    sp.set_defaults(func=cmd_place)

    sp = sub.add_parser("bounds", help="bound table for one constraint level")
    _add_model_args(sp)
    _add_level_args(sp)
    _add_solver_args(sp, samples_default=100)
    sp.add_argument(
        "--brute",
        action="store_true",
        help="include the exhaustive optimum (small instances only)",
    )
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("sweep", help="run all solvers across constraint levels")
    _add_model_args(sp)
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--sensors", help="cardinality levels: '1..10' or '2,4,6'")
    group.add_argument("--budget", help="budget levels: '1..5' or '0.5,1,2.5'")
    _add_solver_args(sp, samples_default=100)
    sp.add_argument("--curves", help="write per-level curves as CSV")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("estimate", help="fuse measured phasors into a posterior")
    sp.add_argument("--grid", required=True, help="grid model JSON file")
    sp.add_argument("--measurements", required=True, help="measurement JSON file")
    sp.add_argument("--sigma-psd", type=float, default=0.5)
    sp.add_argument("--sigma-mag", type=float, default=0.01)
    sp.add_argument("--sigma-ang", type=float, default=0.01)
    sp.add_argument("--output", help="write the posterior as JSON")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("oracle", help="exhaustive optimum for small instances")
    _add_model_args(sp)
    _add_level_args(sp)
    sp.set_defaults(func=cmd_oracle)

    return parser


def _prior_model(model, adm, sub, v_prior, sigma_psd):
    """PSD-propagated prior, or the explicit override carried by the file.

    An explicit prior is given over the non-source phases in file order
    and is projected onto the feasible basis with the same floor the
    propagated prior gets.
    """
    if model.sigma_f_prior is not None:
        full = np.asarray(model.sigma_f_prior, dtype=complex)
        n = adm.n_state
        if full.shape != (n, n):
            raise ValidationError(
                "sigma_f_prior must be %d x %d (non-source phases in file order)"
                % (n, n)
            )
        reduced = sub.basis.conj().T @ full @ sub.basis
        reduced = 0.5 * (reduced + reduced.conj().T)
        reduced += PD_FLOOR * np.eye(sub.n_reduced)
        return PriorModel(v_prior=v_prior, sigma_f=reduced, sigma_psd=float(sigma_psd))
    return prior_covariance(model, v_prior, sub.basis, sigma_psd, adm=adm)


def _build_case(args):
    model = load_grid(args.grid)
    adm = build_admittance(model)
    sub = feasible_subspace(adm)
    v_prior = solve_power_flow(model, adm)
    prior = _prior_model(model, adm, sub, v_prior, args.sigma_psd)
    cost_map = load_cost_map(args.cost_map) if getattr(args, "cost_map", None) else None
    cands = enumerate_candidates(
        model,
        adm,
        sub,
        v_prior,
        sigma_mag=args.sigma_mag,
        sigma_ang=args.sigma_ang,
        cost_map=cost_map,
    )
    costs = cands.costs
    if getattr(args, "normalize_costs", False):
        costs = costs / float(np.mean(costs))
    inst = PlacementInstance(
        prior.sigma_f,
        cands.rows,
        cands.precisions,
        costs=costs,
        metric=getattr(args, "metric", "D"),
        labels=cands.labels,
        basis=sub.basis,
        full_rows=cands.full_rows,
        offsets=cands.offsets,
        v_prior=v_prior,
        candidates=cands.candidates,
    )
    return model, adm, sub, v_prior, cands, inst


def _solver_from(args):
    return SolverConfig(
        metric=args.metric,
        pgd=PgdConfig(
            alpha=args.pgd_alpha,
            max_iters=args.pgd_max_iters,
            tol=args.pgd_tol,
            patience=args.pgd_patience,
        ),
        samples=args.samples,
        seed=args.seed,
        online_set=args.online_set,
        brute=getattr(args, "brute", False),
    )


def _level_of(args):
    if args.sensors is not None:
        return "cardinality", args.sensors
    return "budget", args.budget


def cmd_place(args):
    *_, inst = _build_case(args)
    kind, level = _level_of(args)
    entry = solve_level(inst, kind, level, _solver_from(args))
    bounds = entry["bounds"]
    best = min(bounds["upper_bounds"], key=bounds["upper_bounds"].get)
    print(
        "metric %s  %s=%g  candidates %d"
        % (args.metric, kind, level, inst.n_cand)
    )
    print("selection [%s]:" % best)
    for label in entry["labels"][best]:
        print("  %s" % label)
    print("value        %.12g" % bounds["upper_bounds"][best])
    print("no sensors   %.12g" % bounds["values"]["empty"])
    print("lower bound  %.12g" % bounds["lower"])
    print("gap          %.3e" % bounds["gap"])
    if args.output:
        save_results(entry, args.output)
    return 0


def cmd_bounds(args):
    *_, inst = _build_case(args)
    kind, level = _level_of(args)
    entry = solve_level(inst, kind, level, _solver_from(args))
    bounds = entry["bounds"]
    print(
        "metric %s  %s=%g  candidates %d"
        % (args.metric, kind, level, inst.n_cand)
    )
    for name in sorted(bounds["lower_bounds"]):
        print("  lower  %-26s %.12g" % (name, bounds["lower_bounds"][name]))
    for name in sorted(bounds["upper_bounds"]):
        print("  upper  %-26s %.12g" % (name, bounds["upper_bounds"][name]))
    for name in sorted(bounds["values"]):
        print("  value  %-26s %.12g" % (name, bounds["values"][name]))
    if "random" in entry:
        print(
            "  random %-26s %.12g (mean %.12g, n=%d)"
            % ("min", entry["random"]["min"], entry["random"]["mean"],
               entry["random"]["samples"])
        )
    if "brute" in entry:
        print("  exact  %-26s %.12g" % ("optimum", entry["brute"]["value"]))
    print(
        "best lower %.12g  best upper %.12g  gap %.3e"
        % (bounds["lower"], bounds["upper"], bounds["gap"])
    )
    if not bounds["valid"]:
        print("warning: lower bound exceeds upper bound", file=sys.stderr)
    if args.output:
        save_results(entry, args.output)
    return 0


def _parse_levels(text, kind):
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            values = list(range(lo, hi + 1))
        else:
            values = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ValidationError("cannot parse levels %r" % text)
    if ".." in text and not values:
        raise ValidationError("empty level range %r" % text)
    if not values:
        raise ValidationError("no levels in %r" % text)
    if kind == "cardinality":
        out = []
        for v in values:
            if int(v) != v:
                raise ValidationError("sensor counts must be integers, got %r" % v)
            out.append(int(v))
        return out
    return [float(v) for v in values]


def cmd_sweep(args):
    *_, inst = _build_case(args)
    kind = "cardinality" if args.sensors is not None else "budget"
    levels = _parse_levels(args.sensors or args.budget, kind)
    config = ExperimentConfig(kind=kind, levels=levels, solver=_solver_from(args))
    results = run_sweep(inst, config)
    for entry in results["levels"]:
        if "error" in entry:
            print("level %-8g FAILED: %s" % (entry["level"], entry["error"]))
            continue
        bounds = entry["bounds"]
        print(
            "level %-8g upper %.9g  lower %.9g  gap %.3e"
            % (entry["level"], bounds["upper"], bounds["lower"], bounds["gap"])
        )
    if args.output:
        save_results(results, args.output)
    if args.curves:
        emit_curves(results, args.curves)
    if results["failures"]:
        print("%d level(s) failed" % results["failures"], file=sys.stderr)
        return 1
    return 0


def cmd_estimate(args):
    model = load_grid(args.grid)
    adm = build_admittance(model)
    sub = feasible_subspace(adm)
    v_prior = solve_power_flow(model, adm)
    prior = _prior_model(model, adm, sub, v_prior, args.sigma_psd)
    cands = enumerate_candidates(
        model, adm, sub, v_prior, sigma_mag=args.sigma_mag, sigma_ang=args.sigma_ang
    )
    labels, values = load_measurements(args.measurements)
    index = {label: i for i, label in enumerate(cands.labels)}
    pairs = []
    for label, value in zip(labels, values):
        if label not in index:
            raise ValidationError("unknown measurement label '%s'" % label)
        pairs.append((index[label], value))
    if len({i for i, _ in pairs}) != len(pairs):
        raise ValidationError("duplicate measurement labels")
    pairs.sort()
    idx = [i for i, _ in pairs]
    z = np.array([v for _, v in pairs])

    inst = PlacementInstance.from_candidates(
        prior, cands, None, "D", subspace=sub, v_prior=v_prior
    )
    x = SelectionVector.from_indices(idx, inst.n_cand)
    v_post, state = se_update(inst, x, v_prior, z)
    trace_prior = inst.f_empty("A")
    print(
        "%d measurement(s): posterior trace %.6e (prior %.6e)"
        % (len(idx), state.trace, trace_prior)
    )
    if args.output:
        out = {
            "measurements": [cands.labels[i] for i in idx],
            "voltage": {
                "%s:%s" % lab: [float(v.real), float(v.imag)]
                for lab, v in zip(adm.state_labels, v_post)
            },
            "trace_prior": float(trace_prior),
            "trace_posterior": float(state.trace),
            "logdet_posterior": float(state.logdet),
        }
        with open(args.output, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_oracle(args):
    *_, inst = _build_case(args)
    kind, level = _level_of(args)
    constraint = Cardinality(int(level)) if kind == "cardinality" else Budget(level)
    inst = inst.with_constraint(constraint)
    if inst.n_cand > BRUTE_FORCE_LIMIT:
        raise ValidationError(
            "instance too large for exhaustive search (%d candidates)" % inst.n_cand
        )
    sel, val = brute_force_opt(inst)
    if kind == "cardinality":
        greedy_val = greedy_cardinality(inst).value
    else:
        greedy_val = greedy_budget(inst).f2
    print("metric %s  %s=%g  candidates %d" % (args.metric, kind, level, inst.n_cand))
    print("optimum      %.12g" % val)
    print("greedy       %.12g" % greedy_val)
    for i in sel:
        print("  %s" % inst.labels[i])
    if args.output:
        save_results(
            {
                "kind": kind,
                "level": float(level),
                "metric": args.metric,
                "optimum": float(val),
                "greedy": float(greedy_val),
                "selection": [int(i) for i in sel],
                "labels": [inst.labels[i] for i in sel],
            },
            args.output,
        )
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConvergenceError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
