"""Candidate measurement enumeration.

Builds one linear row per measurable phasor quantity: bus voltages, bus
current injections, and branch currents, each per phase.  Rows are
expressed both over the full state (used by the estimation update) and
reduced through the feasible-subspace basis (used by placement).  Every
candidate carries a noise precision derived from its predicted magnitude
and an installation cost looked up from a pattern list.

Candidates whose reduced row vanishes (bus currents at zero-injection
phases, fully constrained quantities) are dropped: they carry no
information and would break argmin tie-breaking in the solvers.
"""

from dataclasses import dataclass
from fnmatch import fnmatchcase

import numpy as np

from .errors import ValidationError

KINDS = ("bus-voltage", "bus-current", "branch-current")

# Predicted magnitudes are floored before squaring so near-zero signals do
# not produce unbounded precisions.
MAG_FLOOR = 1e-4

# Reduced rows with sup norm at or below this are treated as zero.
ZERO_ROW_TOL = 1e-12


@dataclass
class Candidate:
    """Descriptor of one candidate measurement."""

    kind: str
    bus: str = None
    branch: tuple = None
    phase: str = None

    @property
    def label(self):
        if self.kind == "branch-current":
            return "%s:%s->%s:%s" % (self.kind, self.branch[0], self.branch[1], self.phase)
        return "%s:%s:%s" % (self.kind, self.bus, self.phase)


@dataclass
class CandidateSet:
    """All candidate rows with their noise precisions and costs.

    ``rows`` is (N_cand, n_reduced); ``full_rows`` is (N_cand, N) over the
    unreduced state; ``offsets`` holds the fixed source-voltage
    contribution so a candidate's predicted value is
    ``full_rows @ v + offsets``.
    """

    rows: np.ndarray
    precisions: np.ndarray
    costs: np.ndarray
    candidates: list
    full_rows: np.ndarray
    offsets: np.ndarray
    z_pred: np.ndarray

    @property
    def n_cand(self):
        return self.rows.shape[0]

    @property
    def labels(self):
        return [c.label for c in self.candidates]

    @property
    def variances(self):
        return 1.0 / self.precisions

    def __len__(self):
        return self.rows.shape[0]


def _resolve_costs(labels, cost_map):
    """First matching pattern wins; unmatched labels cost 1."""
    costs = np.ones(len(labels))
    if cost_map is None:
        return costs
    pairs = list(cost_map.items()) if hasattr(cost_map, "items") else list(cost_map)
    matched = [False] * len(pairs)
    for i, label in enumerate(labels):
        for k, (pattern, cost) in enumerate(pairs):
            if fnmatchcase(label, pattern):
                costs[i] = cost
                matched[k] = True
                break
    for k, (pattern, cost) in enumerate(pairs):
        c = float(cost)
        if not np.isfinite(c) or c <= 0:
            raise ValidationError("cost pattern %r: cost must be positive" % pattern)
        if not matched[k]:
            raise ValidationError(
                "cost pattern %r matches no candidate" % pattern
            )
    return costs


def enumerate_candidates(
    model, adm, subspace, v_prior, sigma_mag=0.01, sigma_ang=0.01, cost_map=None
):
    """Enumerate every candidate measurement of a feeder.

    Parameters
    ----------
    model : GridModel
    adm : AdmittanceMatrix
    subspace : FeasibleSubspace
        Supplies the reduction basis.
    v_prior : complex array
        Converged prior voltage in state order; sets predicted magnitudes.
    sigma_mag, sigma_ang : float
        Relative magnitude noise and angle noise (radians) of a sensor.
        Candidate noise variance is ``(sigma_mag^2 + sigma_ang^2)`` times
        the squared (floored) predicted magnitude.
    cost_map : sequence of (pattern, cost) pairs, optional
        Shell-style patterns matched against candidate labels, first match
        wins, unmatched candidates cost 1.

    Returns
    -------
    CandidateSet
        Ordered as all bus voltages, then bus currents, then branch
        currents; buses and branches keep input order, phases a < b < c.
        Branch currents appear once per branch in the from -> to
        direction; the reverse row carries the same information.
    """
    if sigma_mag < 0 or sigma_ang < 0 or sigma_mag ** 2 + sigma_ang ** 2 == 0:
        raise ValidationError("sigma_mag and sigma_ang must not both vanish")
    f = subspace.basis
    n = adm.n_state
    v_prior = np.asarray(v_prior, dtype=complex)
    bmap = model.bus_map()
    src = model.source.bus
    src_bus = bmap[src]

    descriptors = []
    full_rows = []
    offsets = []

    for bus in model.buses:
        if bus.id == src:
            continue
        for ph in bus.phases:
            row = np.zeros(n, dtype=complex)
            row[adm.state_index(bus.id, ph)] = 1.0
            descriptors.append(Candidate("bus-voltage", bus=bus.id, phase=ph))
            full_rows.append(row)
            offsets.append(0.0)

    for bus in model.buses:
        if bus.id == src:
            continue
        for ph in bus.phases:
            r = adm.index[(bus.id, ph)]
            descriptors.append(Candidate("bus-current", bus=bus.id, phase=ph))
            full_rows.append(adm.matrix[r, adm.n_source:].copy())
            offsets.append(adm.matrix[r, : adm.n_source] @ adm.v_source)

    for br in model.branches:
        bi, bj = bmap[br.from_bus], bmap[br.to_bus]
        shared = [p for p in bi.phases if p in bj.phases]
        for ph in shared:
            w = br.admittance[bi.phases.index(ph), bj.phases.index(ph)]
            row = np.zeros(n, dtype=complex)
            offset = 0.0
            if bi.id == src:
                offset += w * adm.v_source[src_bus.phases.index(ph)]
            else:
                row[adm.state_index(bi.id, ph)] += w
            if bj.id == src:
                offset -= w * adm.v_source[src_bus.phases.index(ph)]
            else:
                row[adm.state_index(bj.id, ph)] -= w
            descriptors.append(
                Candidate("branch-current", branch=(bi.id, bj.id), phase=ph)
            )
            full_rows.append(row)
            offsets.append(offset)

    full_rows = np.array(full_rows, dtype=complex).reshape(len(full_rows), n)
    offsets = np.array(offsets, dtype=complex)
    reduced = full_rows @ f

    keep = np.max(np.abs(reduced), axis=1) > ZERO_ROW_TOL
    descriptors = [d for d, k in zip(descriptors, keep) if k]
    full_rows = full_rows[keep]
    offsets = offsets[keep]
    reduced = reduced[keep]

    z_pred = full_rows @ v_prior + offsets
    mag = np.maximum(np.abs(z_pred), MAG_FLOOR)
    variances = (sigma_mag ** 2 + sigma_ang ** 2) * mag ** 2
    precisions = 1.0 / variances

    costs = _resolve_costs([d.label for d in descriptors], cost_map)

    return CandidateSet(
        rows=np.ascontiguousarray(reduced),
        precisions=precisions,
        costs=costs,
        candidates=descriptors,
        full_rows=np.ascontiguousarray(full_rows),
        offsets=offsets,
        z_pred=z_pred,
    )
