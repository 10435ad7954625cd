"""Placement solvers and optimality bounds.

Holds the complete solver stack for one placement instance: greedy
selection under a sensor count, cost-effective greedy under a budget,
rounding of relaxed solutions, supermodularity correction factors with
their lower bounds, the online marginal-gain bound, exhaustive search for
small instances, random baselines, and the aggregation of everything into
a bound report sandwiching the intractable optimum.

Ties in every argmin/argmax are broken toward the lowest candidate index,
so identical inputs always produce identical selections.
"""

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from ._kernels import quadforms, rank_one_downdate
from .errors import ValidationError
from .posterior import _norm_metric, evaluate_selection, posterior_covariance, SelectionVector

BRUTE_FORCE_LIMIT = 22
_BATCH = 2048


@dataclass
class Cardinality:
    """Place exactly ``n_meas`` sensors."""

    n_meas: int
    kind = "cardinality"

    @property
    def level(self):
        return self.n_meas


@dataclass
class Budget:
    """Total installation cost at most ``b``."""

    b: float
    kind = "budget"

    @property
    def level(self):
        return self.b


class PlacementInstance:
    """Everything a solver needs: prior, candidate rows, costs, constraint.

    Candidates costing more than a budget are dropped at construction (a
    sensor that can never be afforded only distorts the bounds);
    ``kept`` records the surviving original indices.  Optional grid
    context (basis, full rows, offsets, prior voltage) enables the
    estimation update on placements from this instance.
    """

    def __init__(
        self,
        sigma_prior,
        rows,
        precisions,
        costs=None,
        constraint=None,
        metric="D",
        labels=None,
        basis=None,
        full_rows=None,
        offsets=None,
        v_prior=None,
        candidates=None,
    ):
        sigma = np.asarray(sigma_prior, dtype=complex)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValidationError("prior covariance must be square")
        sigma = 0.5 * (sigma + sigma.conj().T)
        rows = np.asarray(rows, dtype=complex)
        if rows.ndim != 2 or rows.shape[1] != sigma.shape[0]:
            raise ValidationError("candidate rows do not match the prior dimension")
        precisions = np.asarray(precisions, dtype=float)
        if precisions.shape != (rows.shape[0],):
            raise ValidationError("one precision per candidate required")
        if np.any(~np.isfinite(precisions)) or np.any(precisions <= 0):
            raise ValidationError("noise precisions must be positive and finite")
        if costs is None:
            costs = np.ones(rows.shape[0])
        costs = np.asarray(costs, dtype=float)
        if costs.shape != (rows.shape[0],):
            raise ValidationError("one cost per candidate required")
        if np.any(~np.isfinite(costs)) or np.any(costs <= 0):
            raise ValidationError("costs must be positive and finite")

        kept = np.arange(rows.shape[0])
        if isinstance(constraint, Budget):
            if not np.isfinite(constraint.b) or constraint.b <= 0:
                raise ValidationError("budget must be positive")
            kept = np.flatnonzero(costs <= constraint.b)
        elif isinstance(constraint, Cardinality):
            k = constraint.n_meas
            if int(k) != k or k < 1:
                raise ValidationError("sensor count must be a positive integer")
            if k > rows.shape[0]:
                raise ValidationError(
                    "sensor count %d exceeds the %d candidates" % (k, rows.shape[0])
                )
        elif constraint is not None:
            raise ValidationError("unknown constraint %r" % (constraint,))

        self.sigma_prior = np.ascontiguousarray(sigma)
        self.rows = np.ascontiguousarray(rows[kept])
        self.precisions = precisions[kept]
        self.costs = costs[kept]
        self.kept = kept
        self.constraint = constraint
        self.metric = _norm_metric(metric)
        if labels is None:
            labels = ["cand%d" % i for i in range(rows.shape[0])]
        self.labels = [labels[i] for i in kept]
        self.candidates = (
            None if candidates is None else [candidates[i] for i in kept]
        )
        self.basis = None if basis is None else np.asarray(basis, dtype=complex)
        self.full_rows = (
            None if full_rows is None else np.asarray(full_rows, dtype=complex)[kept]
        )
        self.offsets = (
            None if offsets is None else np.asarray(offsets, dtype=complex)[kept]
        )
        self.v_prior = None if v_prior is None else np.asarray(v_prior, dtype=complex)

        try:
            factor = scipy.linalg.cho_factor(self.sigma_prior, lower=True)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            raise ValidationError("prior covariance must be positive definite")
        n = sigma.shape[0]
        info = scipy.linalg.cho_solve(factor, np.eye(n, dtype=complex))
        self.prior_info = np.ascontiguousarray(0.5 * (info + info.conj().T))
        self._logdet_prior = 2.0 * float(np.sum(np.log(np.real(np.diag(factor[0])))))
        self._f_empty = {}

    @classmethod
    def from_candidates(
        cls, prior, cands, constraint, metric="D", subspace=None, v_prior=None
    ):
        """Build an instance from a PriorModel and a CandidateSet."""
        sigma = prior.sigma_f if hasattr(prior, "sigma_f") else prior
        if v_prior is None and hasattr(prior, "v_prior"):
            v_prior = prior.v_prior
        return cls(
            sigma,
            cands.rows,
            cands.precisions,
            costs=cands.costs,
            constraint=constraint,
            metric=metric,
            labels=cands.labels,
            basis=None if subspace is None else subspace.basis,
            full_rows=cands.full_rows,
            offsets=cands.offsets,
            v_prior=v_prior,
            candidates=cands.candidates,
        )

    @property
    def n_cand(self):
        return self.rows.shape[0]

    @property
    def n_reduced(self):
        return self.rows.shape[1]

    def f_empty(self, metric=None):
        """Metric of the prior covariance (no sensors)."""
        metric = _norm_metric(self.metric if metric is None else metric)
        if metric not in self._f_empty:
            if metric == "A":
                self._f_empty[metric] = float(np.real(np.trace(self.sigma_prior)))
            else:
                self._f_empty[metric] = self._logdet_prior
        return self._f_empty[metric]

    def with_constraint(self, constraint):
        """Same candidates under a different constraint."""
        return self._rebuild(constraint=constraint, metric=self.metric)

    def with_metric(self, metric):
        """Same candidates and constraint under the other metric."""
        return self._rebuild(constraint=self.constraint, metric=metric)

    def subset(self, indices):
        """Restrict to a candidate subset (for trimming instances)."""
        idx = np.asarray(sorted({int(i) for i in indices}), dtype=int)
        return PlacementInstance(
            self.sigma_prior,
            self.rows[idx],
            self.precisions[idx],
            costs=self.costs[idx],
            constraint=self.constraint,
            metric=self.metric,
            labels=[self.labels[i] for i in idx],
            basis=self.basis,
            full_rows=None if self.full_rows is None else self.full_rows[idx],
            offsets=None if self.offsets is None else self.offsets[idx],
            v_prior=self.v_prior,
            candidates=None
            if self.candidates is None
            else [self.candidates[i] for i in idx],
        )

    def _rebuild(self, constraint, metric):
        return PlacementInstance(
            self.sigma_prior,
            self.rows,
            self.precisions,
            costs=self.costs,
            constraint=constraint,
            metric=metric,
            labels=self.labels,
            basis=self.basis,
            full_rows=self.full_rows,
            offsets=self.offsets,
            v_prior=self.v_prior,
            candidates=self.candidates,
        )


class GreedyResult(NamedTuple):
    selection: list
    value: float
    trajectory: list


class BudgetGreedyResult(NamedTuple):
    x1: list
    x2: list
    a: object
    f1: float
    f2: float
    f1a: object


class BetaFactors(NamedTuple):
    beta: float
    beta_a: object
    gamma: float


@dataclass
class BoundReport:
    """All bound values for one constraint level.

    ``lower``/``upper`` are the best aggregated bounds; ``valid`` is
    cleared instead of raising when lower exceeds upper beyond tolerance,
    which flags a solver bug without aborting a sweep.
    """

    metric: str
    constraint_kind: str
    level: float
    lower_bounds: dict
    upper_bounds: dict
    values: dict
    selections: dict
    lower: float
    upper: float
    gap: float
    valid: bool

    def to_dict(self):
        return {
            "metric": self.metric,
            "constraint": self.constraint_kind,
            "level": self.level,
            "lower_bounds": dict(self.lower_bounds),
            "upper_bounds": dict(self.upper_bounds),
            "values": dict(self.values),
            "selections": {k: [int(i) for i in v] for k, v in self.selections.items()},
            "lower": self.lower,
            "upper": self.upper,
            "gap": self.gap,
            "valid": self.valid,
        }


def _sweep_values(inst, sigma, current, metric):
    """Metric after adding each candidate, from the current covariance."""
    q, s = quadforms(sigma, inst.rows)
    if metric == "A":
        return current - s / (1.0 / inst.precisions + q)
    return current - np.log1p(inst.precisions * q)


def greedy_cardinality(inst):
    """Forward greedy selection of ``n_meas`` sensors.

    Each step adds the candidate minimizing the metric, evaluated with
    O(n^2) rank-one updates; the trajectory holds the exact metric after
    every addition.
    """
    if not isinstance(inst.constraint, Cardinality):
        raise ValidationError("greedy_cardinality needs a cardinality constraint")
    metric = inst.metric
    sigma = inst.sigma_prior.copy()
    current = inst.f_empty()
    selected = np.zeros(inst.n_cand, dtype=bool)
    sel, traj = [], []
    for _ in range(inst.constraint.n_meas):
        vals = _sweep_values(inst, sigma, current, metric)
        vals[selected] = np.inf
        j = int(np.argmin(vals))
        rank_one_downdate(sigma, inst.rows[j], float(inst.precisions[j]))
        selected[j] = True
        sel.append(j)
        current = evaluate_selection(inst, sel)
        traj.append(current)
    return GreedyResult(selection=sel, value=current, trajectory=traj)


def greedy_budget(inst):
    """Cost-effective forward greedy selection under a budget.

    Phase one adds the candidate minimizing metric/cost until the
    minimizer no longer fits (that candidate is ``a``); phase two keeps
    extending the same selection over candidates that still fit.  Returns
    both selections with their exact values and the value with ``a``
    appended (used by the correction-factor bounds; that set exceeds the
    budget on purpose).
    """
    if not isinstance(inst.constraint, Budget):
        raise ValidationError("greedy_budget needs a budget constraint")
    b = inst.constraint.b
    metric = inst.metric
    n = inst.n_cand
    sigma = inst.sigma_prior.copy()
    current = inst.f_empty()
    selected = np.zeros(n, dtype=bool)
    sel = []
    a = None

    def spent():
        return float(np.sum(inst.costs[sel])) if sel else 0.0

    while n and not selected.all():
        vals = _sweep_values(inst, sigma, current, metric)
        ratios = vals / inst.costs
        ratios[selected] = np.inf
        j = int(np.argmin(ratios))
        if spent() + inst.costs[j] <= b:
            rank_one_downdate(sigma, inst.rows[j], float(inst.precisions[j]))
            selected[j] = True
            sel.append(j)
            current = evaluate_selection(inst, sel)
        else:
            a = j
            break

    x1 = list(sel)
    f1 = evaluate_selection(inst, x1) if x1 else inst.f_empty()
    f1a = None if a is None else evaluate_selection(inst, x1 + [a])

    while True:
        afford = ~selected & (spent() + inst.costs <= b)
        if not afford.any():
            break
        vals = _sweep_values(inst, sigma, current, metric)
        ratios = np.where(afford, vals / inst.costs, np.inf)
        j = int(np.argmin(ratios))
        rank_one_downdate(sigma, inst.rows[j], float(inst.precisions[j]))
        selected[j] = True
        sel.append(j)
        current = evaluate_selection(inst, sel)

    x2 = list(sel)
    f2 = evaluate_selection(inst, x2) if x2 else inst.f_empty()
    return BudgetGreedyResult(x1=x1, x2=x2, a=a, f1=f1, f2=f2, f1a=f1a)


def round_cardinality(x_relaxed, n_meas):
    """Indicator of the ``n_meas`` largest relaxed weights.

    Threshold ties go to the lowest index.
    """
    x = np.asarray(x_relaxed, dtype=float)
    order = np.argsort(-x, kind="stable")
    return sorted(int(i) for i in order[:n_meas])


def round_budget(x_relaxed, costs, b):
    """Greedy rounding of a relaxed budget solution.

    Repeatedly adds the affordable unselected candidate with the largest
    relaxed weight until nothing else fits.
    """
    x = np.asarray(x_relaxed, dtype=float)
    costs = np.asarray(costs, dtype=float)
    available = np.ones(x.shape[0], dtype=bool)
    sel = []
    while True:
        spent = float(np.sum(costs[sel])) if sel else 0.0
        afford = available & (spent + costs <= b)
        if not afford.any():
            break
        masked = np.where(afford, x, -np.inf)
        j = int(np.argmax(masked))
        sel.append(j)
        available[j] = False
    return sorted(sel)


def alpha_factor(n_meas):
    """Greedy guarantee factor 1 - (1 - 1/N)^N, in (1 - 1/e, 1]."""
    n = int(n_meas)
    if n < 1:
        raise ValidationError("n_meas must be at least 1")
    return 1.0 - float(np.prod(np.full(n, 1.0 - 1.0 / n)))


def beta_factors(x1, a, costs, b):
    """Budget-greedy guarantee factors.

    beta = 1 - prod_{i in X1} (1 - c_i / b), beta_a the same over
    X1 + [a], gamma the budget fraction spent by X1.  beta_a is None
    without ``a``.
    """
    x1 = list(x1)
    costs = np.asarray(costs, dtype=float)
    if not x1 and a is None:
        raise ValidationError("beta factors are undefined for an empty selection")
    c1 = costs[x1] if x1 else np.zeros(0)
    if np.any(c1 > b) or (a is not None and costs[a] > b):
        raise ValidationError("candidate cost exceeds the budget")
    beta = 1.0 - float(np.prod(1.0 - c1 / b))
    gamma = float(np.sum(c1) / b)
    if a is None:
        beta_a = None
    else:
        ca = np.concatenate([c1, [costs[a]]])
        beta_a = 1.0 - float(np.prod(1.0 - ca / b))
    assert beta >= 1.0 - math.exp(-gamma) - 1e-12
    if beta_a is not None and float(np.sum(c1)) + costs[a] > b:
        assert beta_a >= 1.0 - gamma * math.exp(-gamma) - 1e-12
    return BetaFactors(beta=beta, beta_a=beta_a, gamma=gamma)


def supermodular_lower_bounds(inst, greedy):
    """Correction-factor lower bounds from greedy values (D metric only).

    Scales the greedy gain by the applicable guarantee factor:
    (f_greedy - f_empty) / factor + f_empty.  Returns a dict keyed by
    bound name; entries whose factor is unavailable are omitted.
    """
    if inst.metric != "D":
        raise ValidationError("supermodular corrections apply to the D metric only")
    f0 = inst.f_empty("D")
    out = {}
    if isinstance(greedy, BudgetGreedyResult):
        if not greedy.x1 and greedy.a is None:
            return out
        bf = beta_factors(greedy.x1, greedy.a, inst.costs, inst.constraint.b)
        if bf.beta > 0:
            out["supermodular_greedy1"] = (greedy.f1 - f0) / bf.beta + f0
        if bf.beta_a is not None and bf.beta_a > 0 and greedy.f1a is not None:
            out["supermodular_greedy1a"] = (greedy.f1a - f0) / bf.beta_a + f0
    else:
        alpha = alpha_factor(inst.constraint.n_meas)
        out["supermodular_greedy"] = (greedy.value - f0) / alpha + f0
    return out


def online_bound(inst, a_set=None):
    """Marginal-gain lower bound on the optimal D value.

    From a base set A, sorts the one-step decrements per unit cost and
    spends the budget on the best ones, crediting the overshooting
    candidate fractionally.  A cardinality constraint is treated as unit
    costs with budget ``n_meas``.
    """
    if inst.metric != "D":
        raise ValidationError("the online bound applies to the D metric only")
    if isinstance(inst.constraint, Budget):
        costs, b = inst.costs, float(inst.constraint.b)
    elif isinstance(inst.constraint, Cardinality):
        costs, b = np.ones(inst.n_cand), float(inst.constraint.n_meas)
    else:
        raise ValidationError("online bound needs a constraint")
    base = sorted({int(i) for i in a_set}) if a_set is not None else []
    state = posterior_covariance(
        inst, SelectionVector.from_indices(base, inst.n_cand)
    )
    bound = state.logdet
    q, _ = quadforms(state.sigma, inst.rows)
    delta = -np.log1p(inst.precisions * q)
    in_base = np.zeros(inst.n_cand, dtype=bool)
    in_base[base] = True
    order = [
        int(j)
        for j in np.argsort(delta / costs, kind="stable")
        if not in_base[j]
    ]
    spent = 0.0
    for j in order:
        if spent >= b:
            break
        if spent + costs[j] <= b:
            bound += delta[j]
            spent += costs[j]
        else:
            bound += delta[j] * (b - spent) / costs[j]
            break
    return float(bound)


def _batch_values(infos, metric):
    if metric == "D":
        _, logabs = np.linalg.slogdet(infos)
        return -logabs
    inv = np.linalg.inv(infos)
    return np.real(np.einsum("kii->k", inv))


def _feasible_subsets(costs, b):
    """Yield affordable index tuples in lexicographic order."""
    n = len(costs)
    sel = []

    def rec(start, spent):
        yield tuple(sel)
        for i in range(start, n):
            if spent + costs[i] <= b:
                sel.append(i)
                yield from rec(i + 1, spent + costs[i])
                sel.pop()

    yield from rec(0, 0.0)


def brute_force_opt(inst):
    """Exhaustive search over every feasible subset.

    Guarded to at most 22 candidates.  Ties keep the lexicographically
    first subset.
    """
    n = inst.n_cand
    if n > BRUTE_FORCE_LIMIT:
        raise ValidationError(
            "instance too large for exhaustive search (%d candidates)" % n
        )
    metric = inst.metric
    contribs = (
        inst.precisions[:, None, None]
        * inst.rows.conj()[:, :, None]
        * inst.rows[:, None, :]
    )

    if isinstance(inst.constraint, Cardinality):
        subsets = itertools.combinations(range(n), inst.constraint.n_meas)
    elif isinstance(inst.constraint, Budget):
        subsets = _feasible_subsets(inst.costs, inst.constraint.b)
    else:
        raise ValidationError("exhaustive search needs a constraint")

    best_val = np.inf
    best_sel = None
    while True:
        chunk = list(itertools.islice(subsets, _BATCH))
        if not chunk:
            break
        infos = np.broadcast_to(
            inst.prior_info, (len(chunk),) + inst.prior_info.shape
        ).copy()
        for k, sub in enumerate(chunk):
            for i in sub:
                infos[k] += contribs[i]
        vals = _batch_values(infos, metric)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_sel = list(chunk[j])
    if best_sel is None:
        return [], inst.f_empty()
    # report the winner through the covariance path so the value agrees
    # with evaluate_selection regardless of batched roundoff
    return best_sel, float(evaluate_selection(inst, best_sel))


def random_baseline(inst, samples, seed):
    """Metric values of uniformly drawn feasible selections.

    Cardinality draws uniform k-subsets; a budget packs a random
    permutation, keeping every candidate that still fits.
    """
    if samples < 0:
        raise ValidationError("sample count must be nonnegative")
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(samples):
        if isinstance(inst.constraint, Cardinality):
            idx = rng.choice(inst.n_cand, size=inst.constraint.n_meas, replace=False)
        elif isinstance(inst.constraint, Budget):
            idx = []
            spent = 0.0
            for i in rng.permutation(inst.n_cand):
                if spent + inst.costs[i] <= inst.constraint.b:
                    idx.append(int(i))
                    spent += inst.costs[i]
        else:
            raise ValidationError("random baseline needs a constraint")
        vals.append(evaluate_selection(inst, idx))
    return vals


def _check_feasible(inst, sel, name):
    sel = list(sel)
    if len(set(sel)) != len(sel):
        raise ValidationError("selection %r repeats a candidate" % name)
    if isinstance(inst.constraint, Cardinality):
        if len(sel) != inst.constraint.n_meas:
            raise ValidationError(
                "selection %r has %d sensors, constraint wants %d"
                % (name, len(sel), inst.constraint.n_meas)
            )
    elif isinstance(inst.constraint, Budget):
        if sel and float(np.sum(inst.costs[sel])) > inst.constraint.b:
            raise ValidationError("selection %r exceeds the budget" % name)


def aggregate_bounds(
    inst,
    convex=None,
    greedy=None,
    budget_greedy=None,
    feasible=None,
    supermodular=None,
    online=None,
):
    """Combine solver outputs into one BoundReport.

    Lower bound: best of the relaxed value and any supermodular/online
    bounds.  Upper bound: best feasible solution seen.  The report is
    flagged invalid (not raised) when lower exceeds upper by more than
    1e-8, which would indicate a solver bug.
    """
    lower_bounds = {}
    upper_bounds = {}
    values = {"empty": inst.f_empty()}
    selections = {}

    if convex is not None:
        f_convex = float(convex.value) if hasattr(convex, "value") else float(convex)
        lower_bounds["convex"] = f_convex
    if greedy is not None:
        _check_feasible(inst, greedy.selection, "greedy")
        upper_bounds["greedy"] = float(greedy.value)
        selections["greedy"] = list(greedy.selection)
    if budget_greedy is not None:
        _check_feasible(inst, budget_greedy.x1, "greedy1")
        _check_feasible(inst, budget_greedy.x2, "greedy2")
        upper_bounds["greedy2"] = float(budget_greedy.f2)
        values["greedy1"] = float(budget_greedy.f1)
        if budget_greedy.f1a is not None:
            values["greedy1a"] = float(budget_greedy.f1a)
        selections["greedy1"] = list(budget_greedy.x1)
        selections["greedy2"] = list(budget_greedy.x2)
    if feasible is not None:
        sel, val = feasible
        _check_feasible(inst, sel, "feasible")
        upper_bounds["feasible"] = float(val)
        selections["feasible"] = list(sel)
    if supermodular:
        for key, val in supermodular.items():
            lower_bounds[key] = float(val)
    if online is not None:
        lower_bounds["online"] = float(online)

    lower = max(lower_bounds.values()) if lower_bounds else -np.inf
    upper = min(upper_bounds.values()) if upper_bounds else np.inf
    constraint = inst.constraint
    level = float(constraint.level) if constraint is not None else float("nan")
    return BoundReport(
        metric=inst.metric,
        constraint_kind=constraint.kind if constraint is not None else "none",
        level=level,
        lower_bounds=lower_bounds,
        upper_bounds=upper_bounds,
        values=values,
        selections=selections,
        lower=float(lower),
        upper=float(upper),
        gap=float(upper - lower),
        valid=bool(lower <= upper + 1e-8),
    )
