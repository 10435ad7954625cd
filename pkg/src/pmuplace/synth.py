"""Synthetic instances and radial feeders.

Deterministic generators used by the test suite, the benchmarks, and the
demo data: abstract placement instances with random Hermitian priors, and
random radial feeders with realistic per-unit line impedances, light
loads, and a configurable share of zero-injection buses.
"""

from typing import NamedTuple

import numpy as np

from .grid import (
    Branch,
    Bus,
    GridModel,
    Source,
    build_admittance,
    feasible_subspace,
    prior_covariance,
    solve_power_flow,
)
from .measurement import enumerate_candidates
from .placement import PlacementInstance


class FeederCase(NamedTuple):
    model: object
    adm: object
    subspace: object
    prior: object
    candidates: object
    instance: object


def random_instance(
    n_state=5,
    n_cand=10,
    seed=0,
    metric="D",
    constraint=None,
    precision_range=(0.5, 4.0),
    cost_range=(0.5, 1.5),
):
    """Abstract placement instance with a random well-conditioned prior."""
    rng = np.random.default_rng(seed)
    a = (
        rng.standard_normal((n_state, n_state))
        + 1j * rng.standard_normal((n_state, n_state))
    ) / np.sqrt(2)
    sigma = a @ a.conj().T / n_state + 0.25 * np.eye(n_state)
    rows = (
        rng.standard_normal((n_cand, n_state))
        + 1j * rng.standard_normal((n_cand, n_state))
    ) / np.sqrt(2)
    precisions = rng.uniform(*precision_range, n_cand)
    costs = rng.uniform(*cost_range, n_cand)
    return PlacementInstance(
        sigma, rows, precisions, costs=costs, constraint=constraint, metric=metric
    )


def _line_block(rng, phases):
    z_self = rng.uniform(0.02, 0.1) + 1j * rng.uniform(0.04, 0.2)
    if len(phases) == 1:
        return np.array([[1.0 / z_self]])
    z_mut = z_self * rng.uniform(0.15, 0.35)
    n = len(phases)
    z = np.full((n, n), z_mut, dtype=complex)
    np.fill_diagonal(z, z_self)
    return np.linalg.inv(z)


def random_feeder(
    n_buses=8,
    seed=0,
    three_phase=False,
    zi_fraction=0.25,
    load_range=(0.002, 0.012),
):
    """Random radial feeder rooted at bus b1.

    Loads are light (per-unit) so linearized noise propagation stays
    accurate; a ``zi_fraction`` share of non-source buses carries no load
    and is flagged zero-injection on every phase.
    """
    if n_buses < 2:
        raise ValueError("need at least a source and one load bus")
    rng = np.random.default_rng(seed)
    phases = ("a", "b", "c") if three_phase else ("a",)
    nph = len(phases)

    zi = rng.random(n_buses - 1) < zi_fraction
    if zi.all():
        zi[-1] = False

    buses = [Bus("b1", phases)]
    for i in range(2, n_buses + 1):
        if zi[i - 2]:
            buses.append(
                Bus(
                    "b%d" % i,
                    phases,
                    zero_injection=np.ones(nph, dtype=bool),
                )
            )
        else:
            p = rng.uniform(*load_range, nph)
            q = p * rng.uniform(0.2, 0.6, nph)
            buses.append(Bus("b%d" % i, phases, injection=-(p + 1j * q)))

    branches = []
    for i in range(2, n_buses + 1):
        parent = int(rng.integers(1, i))
        branches.append(
            Branch("b%d" % parent, "b%d" % i, _line_block(rng, phases))
        )

    if three_phase:
        v = np.exp(-2j * np.pi * np.arange(3) / 3)
    else:
        v = np.array([1.0 + 0j])
    return GridModel(buses=buses, branches=branches, source=Source("b1", v))


def feeder_instance(
    n_buses=8,
    seed=0,
    metric="D",
    constraint=None,
    three_phase=False,
    sigma_psd=0.5,
    sigma_mag=0.01,
    sigma_ang=0.01,
    zi_fraction=0.25,
    cost_range=None,
):
    """Full pipeline from a random feeder to a solvable instance.

    Returns a FeederCase bundling the model, admittance, subspace, prior,
    candidate set, and the PlacementInstance (which carries the grid
    context needed by the estimation update).  ``cost_range`` optionally
    replaces unit costs with uniform draws.
    """
    model = random_feeder(
        n_buses, seed=seed, three_phase=three_phase, zi_fraction=zi_fraction
    )
    adm = build_admittance(model)
    sub = feasible_subspace(adm)
    v_prior = solve_power_flow(model, adm)
    prior = prior_covariance(model, v_prior, sub.basis, sigma_psd, adm=adm)
    cands = enumerate_candidates(
        model, adm, sub, v_prior, sigma_mag=sigma_mag, sigma_ang=sigma_ang
    )
    costs = cands.costs
    if cost_range is not None:
        rng = np.random.default_rng(np.random.SeedSequence((seed, 977)))
        costs = rng.uniform(*cost_range, cands.n_cand)
    inst = PlacementInstance(
        prior.sigma_f,
        cands.rows,
        cands.precisions,
        costs=costs,
        constraint=constraint,
        metric=metric,
        labels=cands.labels,
        basis=sub.basis,
        full_rows=cands.full_rows,
        offsets=cands.offsets,
        v_prior=v_prior,
        candidates=cands.candidates,
    )
    return FeederCase(
        model=model,
        adm=adm,
        subspace=sub,
        prior=prior,
        candidates=cands,
        instance=inst,
    )
