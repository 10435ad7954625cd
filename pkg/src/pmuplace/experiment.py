"""Sweep orchestration: run every solver across constraint levels.

A sweep evaluates greedy, the relaxed solver with rounding, the
correction-factor and marginal-gain lower bounds, and a random baseline
at each level, then aggregates them into per-level bound reports.  A
level that throws is recorded as a failure entry instead of aborting the
rest of the sweep.  Output is deterministic for a fixed seed: per-level
baseline seeds are spawned from one root SeedSequence and JSON is
emitted with sorted keys and no timestamps.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .convex import PgdConfig, pgd_budget, pgd_cardinality
from .errors import ValidationError
from .placement import (
    BRUTE_FORCE_LIMIT,
    Budget,
    Cardinality,
    aggregate_bounds,
    brute_force_opt,
    greedy_budget,
    greedy_cardinality,
    online_bound,
    random_baseline,
    round_budget,
    round_cardinality,
    supermodular_lower_bounds,
)
from .posterior import evaluate_selection


@dataclass
class SolverConfig:
    """Knobs shared by every level of a sweep."""

    metric: str = "D"
    pgd: PgdConfig = field(default_factory=PgdConfig)
    samples: int = 100
    seed: int = 0
    online_set: str = "greedy"
    brute: bool = False


@dataclass
class ExperimentConfig:
    kind: str
    levels: list
    solver: SolverConfig = field(default_factory=SolverConfig)


def _labels_for(inst, indices):
    return [inst.labels[i] for i in indices]


def solve_level(instance, kind, level, solver, baseline_seed=None):
    """Run all solvers on one constraint level and aggregate the bounds."""
    if kind == "cardinality":
        constraint = Cardinality(int(level))
    elif kind == "budget":
        constraint = Budget(float(level))
    else:
        raise ValueError("unknown constraint kind %r" % kind)
    inst = instance._rebuild(constraint=constraint, metric=solver.metric)

    greedy = None
    budget_greedy = None
    if kind == "cardinality":
        greedy = greedy_cardinality(inst)
        convex = pgd_cardinality(inst, config=solver.pgd)
        feas_sel = round_cardinality(convex.x, constraint.n_meas)
        base = greedy.selection
    else:
        budget_greedy = greedy_budget(inst)
        convex = pgd_budget(inst, config=solver.pgd)
        feas_sel = round_budget(convex.x, inst.costs, constraint.b)
        base = budget_greedy.x2
    f_feas = evaluate_selection(inst, feas_sel)

    supermod = None
    online = None
    if solver.metric == "D":
        supermod = supermodular_lower_bounds(
            inst, greedy if greedy is not None else budget_greedy
        )
        online = online_bound(
            inst, a_set=base if solver.online_set == "greedy" else []
        )

    report = aggregate_bounds(
        inst,
        convex=convex,
        greedy=greedy,
        budget_greedy=budget_greedy,
        feasible=(feas_sel, f_feas),
        supermodular=supermod,
        online=online,
    )

    entry = {
        "level": float(level),
        "bounds": report.to_dict(),
        "convex": {
            "value": float(convex.value),
            "iterations": int(convex.iterations),
            "converged": bool(convex.converged),
            "gap": float(convex.gap),
        },
        "labels": {
            name: _labels_for(inst, sel) for name, sel in report.selections.items()
        },
    }

    if solver.samples > 0:
        seed = solver.seed if baseline_seed is None else baseline_seed
        vals = random_baseline(inst, solver.samples, seed)
        entry["random"] = {
            "samples": len(vals),
            "min": float(np.min(vals)),
            "mean": float(np.mean(vals)),
            "max": float(np.max(vals)),
        }

    if solver.brute:
        if inst.n_cand > BRUTE_FORCE_LIMIT:
            raise ValidationError(
                "exhaustive check requested on %d candidates (limit %d)"
                % (inst.n_cand, BRUTE_FORCE_LIMIT)
            )
        sel, val = brute_force_opt(inst)
        entry["brute"] = {"value": float(val), "selection": [int(i) for i in sel]}

    return entry


def run_sweep(instance, config):
    """Solve every level in the sweep; failures are captured per level."""
    solver = config.solver
    levels = list(config.levels)
    seeds = np.random.SeedSequence(solver.seed).spawn(len(levels))
    entries = []
    failures = 0
    for level, seed in zip(levels, seeds):
        try:
            entries.append(
                solve_level(instance, config.kind, level, solver, baseline_seed=seed)
            )
        except Exception as exc:  # a broken level must not kill the sweep
            entries.append(
                {"level": float(level), "error": "%s: %s" % (type(exc).__name__, exc)}
            )
            failures += 1
    return {
        "kind": config.kind,
        "metric": solver.metric,
        "n_candidates": int(instance.n_cand),
        "samples": int(solver.samples),
        "seed": int(solver.seed),
        "failures": failures,
        "levels": entries,
    }


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def save_results(results, path):
    """Deterministic JSON dump: sorted keys, non-finite mapped to null."""
    with open(path, "w") as fh:
        json.dump(_clean(results), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _curve_row(entry):
    row = {"level": entry["level"]}
    bounds = entry["bounds"]
    for key, val in bounds["lower_bounds"].items():
        row["lower_" + key] = val
    for key, val in bounds["upper_bounds"].items():
        row["upper_" + key] = val
    for key, val in bounds["values"].items():
        row[key] = val
    row["lower"] = bounds["lower"]
    row["upper"] = bounds["upper"]
    if "random" in entry:
        row["random_min"] = entry["random"]["min"]
        row["random_mean"] = entry["random"]["mean"]
    if "brute" in entry:
        row["brute"] = entry["brute"]["value"]
    return row


def emit_curves(results, path):
    """Write per-level curves as CSV.

    Columns are the numeric keys common to every successful level, so a
    sweep mixing levels with and without some bound stays rectangular.
    """
    rows = [_curve_row(e) for e in results["levels"] if "error" not in e]
    if rows:
        common = set(rows[0])
        for row in rows[1:]:
            common &= set(row)
        fields = ["level"] + sorted(k for k in common if k != "level")
    else:
        fields = ["level"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fields})
