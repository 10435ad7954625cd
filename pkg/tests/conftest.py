"""Shared fixtures, reference oracles, and the acceptance summary hook."""

import numpy as np
import pytest

import pmuplace as pp
from pmuplace.posterior import evaluate_selection

# ---------------------------------------------------------------- oracles


def project_by_bisection(v, cap, upper, iters=200):
    """Reference box-simplex projection.

    Independent of the production sweep: the water level tau solves
    sum(clip(v - tau, 0, upper)) = cap by bisection, which pins the unique
    projection even when tau itself is not unique.
    """
    v = np.asarray(v, dtype=float)
    upper = np.asarray(upper, dtype=float)
    cap = min(float(cap), float(np.sum(upper)))
    lo = float(np.min(v - upper)) - 1.0
    hi = float(np.max(v)) + 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.sum(np.clip(v - mid, 0.0, upper)) > cap:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi), 0.0, upper)


def projection_kkt_residual(x, v, cap, upper):
    """Max KKT violation of a candidate box-simplex projection.

    Stationarity with multiplier tau: free coordinates sit at v - tau,
    coordinates clipped to 0 need v <= tau, coordinates clipped to the
    upper bound need v - upper >= tau.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    upper = np.asarray(upper, dtype=float)
    res = max(0.0, float(np.max(x - upper)), float(np.max(-x)))
    res = max(res, abs(float(np.sum(x)) - min(float(cap), float(np.sum(upper)))))
    eps = 1e-12
    free = (x > eps) & (x < upper - eps)
    at_zero = x <= eps
    at_up = x >= upper - eps
    if free.any():
        taus = v[free] - x[free]
        tau = float(np.mean(taus))
        res = max(res, float(np.max(np.abs(taus - tau))))
    else:
        # tau only needs to exist inside the interval the clips allow:
        # at least every v at a zero, at most every v - upper at a cap
        lo = float(np.max(v[at_zero], initial=-np.inf))
        hi = float(np.min(v[at_up] - upper[at_up], initial=np.inf))
        res = max(res, max(0.0, lo - hi))
        tau = min(max(lo, min(hi, 0.0)), hi) if lo <= hi else 0.5 * (lo + hi)
    if at_zero.any():
        res = max(res, max(0.0, float(np.max(v[at_zero])) - tau))
    if at_up.any():
        res = max(res, max(0.0, tau - float(np.min(v[at_up] - upper[at_up]))))
    return res


def slow_greedy(inst, k):
    """Greedy by full re-evaluation of every candidate set, no shortcuts."""
    selected = []
    for _ in range(k):
        best_j, best_v = None, np.inf
        for j in range(inst.n_cand):
            if j in selected:
                continue
            val = evaluate_selection(inst, selected + [j])
            if val < best_v:
                best_j, best_v = j, val
        selected.append(best_j)
    return selected, best_v


# ---------------------------------------------------------------- models


def two_bus_model(load=0.01 + 0.005j, y=2.0 - 6.0j):
    """Source plus one load bus, single phase, one line."""
    buses = [
        pp.Bus("s", ("a",)),
        pp.Bus("l", ("a",), injection=np.array([-load])),
    ]
    branches = [pp.Branch("s", "l", np.array([[y]]))]
    return pp.GridModel(
        buses=buses, branches=branches, source=pp.Source("s", np.array([1.0 + 0j]))
    )


def three_bus_zi_model():
    """Chain s - m - l where the middle bus is zero-injection."""
    buses = [
        pp.Bus("s", ("a",)),
        pp.Bus("m", ("a",), zero_injection=np.array([True])),
        pp.Bus("l", ("a",), injection=np.array([-0.01 - 0.004j])),
    ]
    branches = [
        pp.Branch("s", "m", np.array([[1.0 - 3.0j]])),
        pp.Branch("m", "l", np.array([[2.0 - 5.0j]])),
    ]
    return pp.GridModel(
        buses=buses, branches=branches, source=pp.Source("s", np.array([1.0 + 0j]))
    )


@pytest.fixture
def feeder_case():
    return pp.feeder_instance(n_buses=8, seed=3, metric="D")


# ------------------------------------------------------- acceptance hook

_ACCEPTANCE = []


def record_acceptance(number, name, passed):
    _ACCEPTANCE.append((number, name, bool(passed)))
    assert passed, "acceptance %d (%s) failed" % (number, name)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed in sorted(_ACCEPTANCE):
        terminalreporter.write_line(
            "ACCEPTANCE %2d %-38s %s" % (number, name, "PASS" if passed else "FAIL")
        )
