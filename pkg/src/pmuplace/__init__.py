"""Sensor placement for three-phase distribution grid state estimation.

Builds unbalanced feeder models, propagates pseudo-measurement uncertainty
into a voltage prior, and selects phasor measurement locations under
cardinality or budget constraints.  Solvers include greedy heuristics with
a-posteriori optimality bounds, a projected-gradient convex relaxation, and
exact enumeration for small instances.
"""

from .errors import ConvergenceError, ValidationError
from .grid import (
    AdmittanceMatrix,
    Branch,
    Bus,
    FeasibleSubspace,
    GridModel,
    PriorModel,
    Source,
    build_admittance,
    feasible_subspace,
    prior_covariance,
    solve_power_flow,
)
from .measurement import Candidate, CandidateSet, enumerate_candidates
from .posterior import (
    PosteriorState,
    SelectionVector,
    evaluate_selection,
    gradient,
    metric_a,
    metric_d,
    metric_with_candidate,
    posterior_covariance,
    se_update,
)
from .placement import (
    BoundReport,
    Budget,
    Cardinality,
    PlacementInstance,
    aggregate_bounds,
    alpha_factor,
    beta_factors,
    brute_force_opt,
    greedy_budget,
    greedy_cardinality,
    online_bound,
    random_baseline,
    round_budget,
    round_cardinality,
    supermodular_lower_bounds,
)
from .convex import (
    PgdConfig,
    RelaxedSolution,
    pgd_budget,
    pgd_cardinality,
    project_boxed_simplex,
)
from .synth import FeederCase, feeder_instance, random_feeder, random_instance
from .gridfile import load_cost_map, load_grid, load_measurements, save_grid

__version__ = "0.1.0"

__all__ = [
    "AdmittanceMatrix",
    "BoundReport",
    "Branch",
    "Budget",
    "Bus",
    "Candidate",
    "CandidateSet",
    "Cardinality",
    "ConvergenceError",
    "FeederCase",
    "FeasibleSubspace",
    "GridModel",
    "PgdConfig",
    "PlacementInstance",
    "PosteriorState",
    "PriorModel",
    "RelaxedSolution",
    "SelectionVector",
    "Source",
    "ValidationError",
    "aggregate_bounds",
    "alpha_factor",
    "beta_factors",
    "brute_force_opt",
    "build_admittance",
    "enumerate_candidates",
    "evaluate_selection",
    "feasible_subspace",
    "feeder_instance",
    "gradient",
    "greedy_budget",
    "greedy_cardinality",
    "load_cost_map",
    "load_grid",
    "load_measurements",
    "metric_a",
    "metric_d",
    "metric_with_candidate",
    "online_bound",
    "pgd_budget",
    "pgd_cardinality",
    "posterior_covariance",
    "prior_covariance",
    "project_boxed_simplex",
    "random_baseline",
    "random_feeder",
    "random_instance",
    "round_budget",
    "round_cardinality",
    "save_grid",
    "se_update",
    "solve_power_flow",
    "supermodular_lower_bounds",
    "__version__",
]
