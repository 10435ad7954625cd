"""Combinatorial solvers, guarantee factors, and bound aggregation."""

import itertools
import math

import numpy as np
import pytest

import pmuplace as pp
from pmuplace.errors import ValidationError
from pmuplace.placement import BRUTE_FORCE_LIMIT, BudgetGreedyResult
from pmuplace.posterior import evaluate_selection

from conftest import slow_greedy


def diag_instance(precisions, costs=None, constraint=None, metric="D", n=None):
    """Identity prior with one orthogonal unit row per candidate."""
    m = len(precisions)
    n = m if n is None else n
    rows = np.eye(n, dtype=complex)[:m]
    return pp.PlacementInstance(
        sigma_prior=np.eye(n, dtype=complex),
        rows=rows,
        precisions=np.asarray(precisions, dtype=float),
        costs=costs,
        constraint=constraint,
        metric=metric,
    )


# ------------------------------------------------------------ cardinality


def test_greedy_matches_slow_recompute():
    for metric in ("A", "D"):
        inst = pp.random_instance(
            n_state=5, n_cand=10, seed=7, metric=metric,
            constraint=pp.Cardinality(3),
        )
        res = pp.greedy_cardinality(inst)
        sel, val = slow_greedy(inst, 3)
        assert res.selection == sel
        assert res.value == pytest.approx(val, rel=1e-11)


def test_greedy_trajectory_is_exact_and_monotone():
    inst = pp.random_instance(
        n_state=4, n_cand=8, seed=8, constraint=pp.Cardinality(4)
    )
    res = pp.greedy_cardinality(inst)
    assert len(res.trajectory) == 4
    for i, v in enumerate(res.trajectory):
        assert v == pytest.approx(
            evaluate_selection(inst, res.selection[: i + 1]), rel=1e-11
        )
    assert all(b <= a + 1e-12 for a, b in zip(res.trajectory, res.trajectory[1:]))
    assert res.value == res.trajectory[-1]


def test_greedy_tie_breaks_to_lowest_index():
    # candidates 0 and 1 are byte-identical, 2 is weaker
    rows = np.array([[1, 0], [1, 0], [0, 1]], dtype=complex)
    inst = pp.PlacementInstance(
        sigma_prior=np.eye(2, dtype=complex),
        rows=rows,
        precisions=np.array([2.0, 2.0, 1.0]),
        constraint=pp.Cardinality(1),
    )
    assert pp.greedy_cardinality(inst).selection == [0]


def test_greedy_all_candidates_when_k_equals_n():
    inst = pp.random_instance(
        n_state=4, n_cand=6, seed=9, constraint=pp.Cardinality(6)
    )
    res = pp.greedy_cardinality(inst)
    assert sorted(res.selection) == list(range(6))
    assert res.value == pytest.approx(
        evaluate_selection(inst, range(6)), rel=1e-11
    )


def test_greedy_requires_cardinality_constraint():
    inst = pp.random_instance(n_state=3, n_cand=5, seed=0, constraint=pp.Budget(2.0))
    with pytest.raises(ValidationError, match="cardinality"):
        pp.greedy_cardinality(inst)


# ----------------------------------------------------------------- budget


def test_budget_greedy_captures_unaffordable_minimizer():
    # step 1 takes the cheap candidate; step 2's ratio winner no longer
    # fits (captured as a) even though another candidate is affordable,
    # which phase two then picks up
    inst = diag_instance(
        precisions=[0.5, 1000.0, 0.8],
        costs=np.array([0.05, 0.9, 0.8]),
        constraint=pp.Budget(0.9),
    )
    res = pp.greedy_budget(inst)
    assert res.x1 == [0]
    assert res.a == 1
    assert res.x2 == [0, 2]
    assert res.f1 == pytest.approx(-math.log(1.5), rel=1e-12)
    assert res.f1a == pytest.approx(evaluate_selection(inst, [0, 1]), rel=1e-12)
    assert res.f2 == pytest.approx(-math.log(1.5) - math.log(1.8), rel=1e-12)
    assert res.f2 <= res.f1


def test_budget_greedy_extends_phase_one():
    for metric in ("A", "D"):
        inst = pp.random_instance(
            n_state=5, n_cand=12, seed=10, metric=metric,
            constraint=pp.Budget(3.0),
        )
        res = pp.greedy_budget(inst)
        assert res.x2[: len(res.x1)] == res.x1
        assert res.f2 <= res.f1 + 1e-12
        assert float(np.sum(inst.costs[res.x2])) <= 3.0 + 1e-12
        if res.a is not None:
            assert res.a not in res.x1
            assert (
                float(np.sum(inst.costs[res.x1])) + inst.costs[res.a] > 3.0
            )


def test_budget_greedy_requires_budget_constraint():
    inst = pp.random_instance(n_state=3, n_cand=5, seed=0, constraint=pp.Cardinality(2))
    with pytest.raises(ValidationError, match="budget"):
        pp.greedy_budget(inst)


# --------------------------------------------------------------- rounding


def test_round_cardinality_top_k_stable_ties():
    sel = pp.round_cardinality(np.array([0.1, 0.9, 0.5, 0.5]), 2)
    assert sel == [1, 2]
    assert pp.round_cardinality(np.array([0.5, 0.5, 0.5]), 2) == [0, 1]


def test_round_budget_packs_by_weight():
    x = np.array([0.9, 0.8, 0.7])
    costs = np.array([2.0, 1.5, 1.0])
    assert pp.round_budget(x, costs, 2.5) == [0]
    assert pp.round_budget(x, costs, 3.0) == [0, 2]
    assert pp.round_budget(x, costs, 4.5) == [0, 1, 2]
    assert pp.round_budget(x, costs, 0.5) == []


# -------------------------------------------------------------- factors


def test_alpha_factor_values():
    assert pp.alpha_factor(1) == 1.0
    assert pp.alpha_factor(2) == pytest.approx(0.75, abs=1e-15)
    assert pp.alpha_factor(4) == pytest.approx(1 - (3 / 4) ** 4, abs=1e-15)
    for n in (1, 2, 3, 10, 100, 10 ** 6):
        a = pp.alpha_factor(n)
        assert 1 - 1 / math.e < a <= 1.0
    with pytest.raises(ValidationError):
        pp.alpha_factor(0)


def test_beta_equals_alpha_under_unit_costs():
    # same product expression evaluates bitwise identically
    for n in (1, 2, 5, 17):
        bf = pp.beta_factors(list(range(n)), None, np.ones(n), float(n))
        assert bf.beta == pp.alpha_factor(n)
        assert bf.gamma == pytest.approx(1.0, abs=1e-15)


def test_beta_factors_by_hand():
    bf = pp.beta_factors([0, 1], 2, np.array([0.5, 0.5, 0.6]), 1.0)
    assert bf.beta == pytest.approx(0.75, abs=1e-15)
    assert bf.beta_a == pytest.approx(1 - 0.5 * 0.5 * 0.4, abs=1e-15)
    assert bf.gamma == pytest.approx(1.0, abs=1e-15)
    solo = pp.beta_factors([0], None, np.array([0.3]), 1.0)
    assert solo.beta == pytest.approx(0.3, abs=1e-15)
    assert solo.beta_a is None
    assert solo.beta >= 1 - math.exp(-solo.gamma)


def test_beta_factors_errors():
    with pytest.raises(ValidationError, match="undefined"):
        pp.beta_factors([], None, np.array([0.5]), 1.0)
    with pytest.raises(ValidationError, match="exceeds"):
        pp.beta_factors([0], None, np.array([1.5]), 1.0)
    with pytest.raises(ValidationError, match="exceeds"):
        pp.beta_factors([], 0, np.array([1.5]), 1.0)


# ------------------------------------------------------------ lower bounds


def test_supermodular_bound_formula_and_validity():
    inst = pp.random_instance(
        n_state=4, n_cand=9, seed=11, constraint=pp.Cardinality(2)
    )
    greedy = pp.greedy_cardinality(inst)
    bounds = pp.supermodular_lower_bounds(inst, greedy)
    f0 = inst.f_empty()
    want = (greedy.value - f0) / pp.alpha_factor(2) + f0
    assert bounds["supermodular_greedy"] == pytest.approx(want, rel=1e-12)
    opt = pp.brute_force_opt(inst)[1]
    assert bounds["supermodular_greedy"] <= opt + 1e-10


def test_supermodular_bound_tight_at_one_sensor():
    inst = pp.random_instance(
        n_state=4, n_cand=7, seed=12, constraint=pp.Cardinality(1)
    )
    greedy = pp.greedy_cardinality(inst)
    bounds = pp.supermodular_lower_bounds(inst, greedy)
    # alpha(1) = 1, and one greedy step is optimal, so the bound is exact
    assert bounds["supermodular_greedy"] == pytest.approx(greedy.value, rel=1e-14)
    assert bounds["supermodular_greedy"] == pytest.approx(
        pp.brute_force_opt(inst)[1], rel=1e-11
    )


def test_supermodular_budget_keys():
    inst = pp.random_instance(
        n_state=4, n_cand=9, seed=13, constraint=pp.Budget(2.5)
    )
    res = pp.greedy_budget(inst)
    bounds = pp.supermodular_lower_bounds(inst, res)
    bf = pp.beta_factors(res.x1, res.a, inst.costs, 2.5)
    f0 = inst.f_empty()
    assert bounds["supermodular_greedy1"] == pytest.approx(
        (res.f1 - f0) / bf.beta + f0, rel=1e-12
    )
    if res.a is not None:
        assert bounds["supermodular_greedy1a"] == pytest.approx(
            (res.f1a - f0) / bf.beta_a + f0, rel=1e-12
        )
    opt = pp.brute_force_opt(inst)[1]
    for v in bounds.values():
        assert v <= opt + 1e-10


def test_supermodular_rejects_trace_metric():
    inst = pp.random_instance(
        n_state=3, n_cand=5, seed=0, metric="A", constraint=pp.Cardinality(2)
    )
    greedy = pp.greedy_cardinality(inst)
    with pytest.raises(ValidationError, match="D metric"):
        pp.supermodular_lower_bounds(inst, greedy)


def test_online_bound_full_set_is_its_own_value():
    inst = pp.random_instance(
        n_state=4, n_cand=6, seed=14, constraint=pp.Cardinality(2)
    )
    everything = list(range(6))
    assert pp.online_bound(inst, everything) == pytest.approx(
        evaluate_selection(inst, everything), rel=1e-11
    )


def test_online_bound_below_optimum():
    inst = pp.random_instance(
        n_state=4, n_cand=9, seed=15, constraint=pp.Cardinality(3)
    )
    opt = pp.brute_force_opt(inst)[1]
    assert pp.online_bound(inst) <= opt + 1e-10
    assert pp.online_bound(inst, [0, 1]) <= opt + 1e-10


def test_online_bound_fractional_credit_by_hand():
    from pmuplace._kernels import quadforms
    from pmuplace.posterior import posterior_covariance

    inst = pp.random_instance(
        n_state=3, n_cand=4, seed=16, constraint=pp.Budget(1.5)
    )
    # force unit costs so exactly one candidate overshoots the budget
    inst.costs[:] = 1.0
    state = posterior_covariance(inst, np.zeros(4))
    q, _ = quadforms(state.sigma, inst.rows)
    delta = -np.log1p(inst.precisions * q)
    order = np.argsort(delta, kind="stable")
    want = state.logdet + delta[order[0]] + 0.5 * delta[order[1]]
    assert pp.online_bound(inst) == pytest.approx(want, rel=1e-12)


def test_online_bound_rejects_trace_metric():
    inst = pp.random_instance(
        n_state=3, n_cand=5, seed=0, metric="A", constraint=pp.Cardinality(2)
    )
    with pytest.raises(ValidationError, match="D metric"):
        pp.online_bound(inst)


# ------------------------------------------------------------ brute force


def test_brute_force_matches_independent_enumeration():
    inst = pp.random_instance(
        n_state=4, n_cand=7, seed=17, constraint=pp.Cardinality(3)
    )
    sel, val = pp.brute_force_opt(inst)
    best = min(
        (evaluate_selection(inst, sub), sub)
        for sub in itertools.combinations(range(7), 3)
    )
    assert val == pytest.approx(best[0], rel=1e-10)
    assert evaluate_selection(inst, sel) == pytest.approx(best[0], rel=1e-10)


def test_brute_force_budget_matches_powerset_scan():
    inst = pp.random_instance(
        n_state=4, n_cand=7, seed=18, constraint=pp.Budget(2.0)
    )
    # binary-fraction costs keep the affordability test exact
    inst.costs[:] = np.array([0.5, 0.75, 1.0, 0.5, 0.25, 1.25, 0.75])
    sel, val = pp.brute_force_opt(inst)
    best = np.inf
    for r in range(8):
        for sub in itertools.combinations(range(7), r):
            if sum(inst.costs[i] for i in sub) <= 2.0:
                best = min(best, evaluate_selection(inst, sub))
    assert val == pytest.approx(best, rel=1e-10)
    assert float(np.sum(inst.costs[sel])) <= 2.0


def test_brute_force_prefers_lexicographic_ties():
    rows = np.array([[1, 0], [1, 0], [0, 1]], dtype=complex)
    inst = pp.PlacementInstance(
        sigma_prior=np.eye(2, dtype=complex),
        rows=rows,
        precisions=np.array([2.0, 2.0, 0.5]),
        constraint=pp.Cardinality(1),
    )
    assert pp.brute_force_opt(inst)[0] == [0]


def test_brute_force_guard():
    n = BRUTE_FORCE_LIMIT + 1
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    inst = pp.PlacementInstance(
        sigma_prior=np.eye(2, dtype=complex),
        rows=rows,
        precisions=np.ones(n),
        constraint=pp.Cardinality(1),
    )
    with pytest.raises(ValidationError, match="too large"):
        pp.brute_force_opt(inst)


def test_brute_force_empty_budget_returns_prior():
    inst = diag_instance(
        precisions=[1.0, 1.0],
        costs=np.array([2.0, 3.0]),
        constraint=pp.Budget(1.0),
    )
    assert inst.n_cand == 0  # nothing affordable survives construction
    sel, val = pp.brute_force_opt(inst)
    assert sel == []
    assert val == pytest.approx(inst.f_empty(), abs=1e-14)


# --------------------------------------------------------------- baseline


def test_random_baseline_deterministic_and_feasible():
    inst = pp.random_instance(
        n_state=4, n_cand=8, seed=19, constraint=pp.Cardinality(3)
    )
    a = pp.random_baseline(inst, 25, seed=42)
    b = pp.random_baseline(inst, 25, seed=42)
    assert a == b
    assert len(a) == 25
    opt = pp.brute_force_opt(inst)[1]
    assert min(a) >= opt - 1e-10
    assert pp.random_baseline(inst, 0, seed=0) == []
    with pytest.raises(ValidationError):
        pp.random_baseline(inst, -1, seed=0)


def test_random_baseline_budget_respects_costs():
    inst = pp.random_instance(
        n_state=4, n_cand=8, seed=20, constraint=pp.Budget(2.0)
    )
    opt = pp.brute_force_opt(inst)[1]
    vals = pp.random_baseline(inst, 50, seed=1)
    assert min(vals) >= opt - 1e-10


# ------------------------------------------------------------- aggregation


def test_aggregate_bounds_trace_metric_lower_is_convex():
    inst = pp.random_instance(
        n_state=4, n_cand=8, seed=21, metric="A", constraint=pp.Cardinality(2)
    )
    greedy = pp.greedy_cardinality(inst)
    report = pp.aggregate_bounds(inst, convex=-1.0, greedy=greedy)
    assert report.lower_bounds == {"convex": -1.0}
    assert report.lower == -1.0
    assert report.upper == greedy.value
    assert report.gap == pytest.approx(greedy.value + 1.0)
    assert report.metric == "A"
    assert report.constraint_kind == "cardinality"
    assert report.level == 2


def test_aggregate_bounds_logdet_takes_best_of_all():
    inst = pp.random_instance(
        n_state=4, n_cand=8, seed=22, constraint=pp.Cardinality(2)
    )
    greedy = pp.greedy_cardinality(inst)
    supermod = pp.supermodular_lower_bounds(inst, greedy)
    online = pp.online_bound(inst, greedy.selection)
    report = pp.aggregate_bounds(
        inst, convex=-50.0, greedy=greedy, supermodular=supermod, online=online
    )
    everything = dict(supermod)
    everything["convex"] = -50.0
    everything["online"] = online
    assert report.lower == max(everything.values())
    assert set(report.lower_bounds) == set(everything)
    assert report.valid


def test_aggregate_bounds_flags_crossing():
    inst = pp.random_instance(
        n_state=3, n_cand=5, seed=23, constraint=pp.Cardinality(1)
    )
    report = pp.aggregate_bounds(inst, convex=10.0, feasible=([0], -3.0))
    assert not report.valid
    assert report.lower == 10.0 and report.upper == -3.0
    d = report.to_dict()
    assert d["valid"] is False
    assert d["selections"]["feasible"] == [0]


def test_aggregate_bounds_rejects_infeasible_selections():
    inst = pp.random_instance(
        n_state=3, n_cand=5, seed=24, constraint=pp.Cardinality(2)
    )
    with pytest.raises(ValidationError, match="constraint wants"):
        pp.aggregate_bounds(inst, feasible=([0], 1.0))
    with pytest.raises(ValidationError, match="repeats"):
        pp.aggregate_bounds(inst, feasible=([0, 0], 1.0))
    binst = pp.PlacementInstance(
        inst.sigma_prior,
        inst.rows,
        inst.precisions,
        costs=np.array([0.6, 0.6, 0.3, 0.3, 0.9]),
        constraint=pp.Budget(1.0),
    )
    assert binst.n_cand == 5
    with pytest.raises(ValidationError, match="exceeds the budget"):
        pp.aggregate_bounds(binst, feasible=([0, 1], 1.0))


# ---------------------------------------------------------------- instance


def test_budget_drops_unaffordable_candidates():
    inst = pp.random_instance(n_state=3, n_cand=6, seed=25)
    base_labels = list(inst.labels)
    costs = np.array([0.5, 3.0, 0.5, 0.5, 3.0, 0.5])
    trimmed = pp.PlacementInstance(
        inst.sigma_prior,
        inst.rows,
        inst.precisions,
        costs=costs,
        constraint=pp.Budget(2.0),
        labels=base_labels,
    )
    assert trimmed.n_cand == 4
    np.testing.assert_array_equal(trimmed.kept, [0, 2, 3, 5])
    assert trimmed.labels == [base_labels[i] for i in (0, 2, 3, 5)]
    np.testing.assert_array_equal(trimmed.costs, [0.5] * 4)


def test_instance_validation_errors():
    rows = np.eye(3, dtype=complex)
    eye = np.eye(3, dtype=complex)
    with pytest.raises(ValidationError, match="square"):
        pp.PlacementInstance(np.ones((2, 3)), rows, np.ones(3))
    with pytest.raises(ValidationError, match="match the prior"):
        pp.PlacementInstance(eye, np.ones((2, 4), dtype=complex), np.ones(2))
    with pytest.raises(ValidationError, match="one precision"):
        pp.PlacementInstance(eye, rows, np.ones(2))
    with pytest.raises(ValidationError, match="positive and finite"):
        pp.PlacementInstance(eye, rows, np.array([1.0, -1.0, 1.0]))
    with pytest.raises(ValidationError, match="positive and finite"):
        pp.PlacementInstance(eye, rows, np.ones(3), costs=np.zeros(3))
    with pytest.raises(ValidationError, match="exceeds the 3 candidates"):
        pp.PlacementInstance(eye, rows, np.ones(3), constraint=pp.Cardinality(4))
    with pytest.raises(ValidationError, match="positive integer"):
        pp.PlacementInstance(eye, rows, np.ones(3), constraint=pp.Cardinality(0))
    with pytest.raises(ValidationError, match="budget must be positive"):
        pp.PlacementInstance(eye, rows, np.ones(3), constraint=pp.Budget(-1.0))
    with pytest.raises(ValidationError, match="unknown constraint"):
        pp.PlacementInstance(eye, rows, np.ones(3), constraint="later")
    with pytest.raises(ValidationError, match="positive definite"):
        pp.PlacementInstance(-eye, rows, np.ones(3))


def test_subset_and_rebuild_keep_context(feeder_case):
    inst = feeder_case.instance
    sub = inst.subset(range(5))
    assert sub.n_cand == 5
    assert sub.labels == inst.labels[:5]
    np.testing.assert_array_equal(sub.rows, inst.rows[:5])
    assert sub.full_rows is not None and sub.offsets is not None
    other = inst.with_metric("A")
    assert other.metric == "A" and other.n_cand == inst.n_cand
    karg = inst.with_constraint(pp.Cardinality(2))
    assert isinstance(karg.constraint, pp.Cardinality)
    assert karg.constraint.n_meas == 2


def test_f_empty_anchors():
    inst = diag_instance([1.0, 1.0, 1.0])
    assert inst.f_empty("A") == pytest.approx(3.0, abs=1e-14)
    assert inst.f_empty("D") == pytest.approx(0.0, abs=1e-14)
