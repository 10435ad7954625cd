"""Three-phase feeder electrical model.

Builds the nodal admittance matrix from per-branch admittance blocks,
extracts the feasible voltage subspace implied by zero-injection phases,
solves the load flow by fixed-point current injection, and propagates
pseudo-load noise into a reduced voltage prior.

Conventions used throughout the package:

* buses keep their input order and phases are ordered a < b < c, so the
  state vector stacks the non-source (bus, phase) pairs in that order;
* bus power entries are complex injections in per-unit, so a load of
  P + jQ enters as -(P + jQ);
* the source bus holds a fixed voltage and its rows come first in the
  full admittance matrix.

Everything here is a pure function over inputs that are treated as
immutable once built, so concurrent reads are safe.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, ValidationError

PHASES = ("a", "b", "c")

# Positive-definiteness floor added to the reduced prior covariance.
PD_FLOOR = 1e-12

# Power-flow stopping tolerance (max apparent-power mismatch, per-unit).
PF_TOL = 1e-10
PF_MAX_ITER = 100


@dataclass
class Bus:
    """One bus: phase set, per-phase injection, zero-injection flags.

    ``injection`` is complex power injected into the network, so loads are
    negative.  ``shunt`` is an optional per-phase shunt admittance added to
    the matrix diagonal.
    """

    id: str
    phases: tuple
    injection: np.ndarray = None
    zero_injection: np.ndarray = None
    shunt: np.ndarray = None

    def __post_init__(self):
        self.phases = tuple(self.phases)
        n = len(self.phases)
        if self.injection is None:
            self.injection = np.zeros(n, dtype=complex)
        else:
            self.injection = np.asarray(self.injection, dtype=complex)
        if self.zero_injection is None:
            self.zero_injection = np.zeros(n, dtype=bool)
        else:
            self.zero_injection = np.asarray(self.zero_injection, dtype=bool)
        if self.shunt is None:
            self.shunt = np.zeros(n, dtype=complex)
        else:
            self.shunt = np.asarray(self.shunt, dtype=complex)


@dataclass
class Branch:
    """Series connection between two buses.

    ``admittance`` is a complex block of shape (n_phases_from, n_phases_to)
    in the phase order of each endpoint.  Square blocks must be symmetric
    (reciprocal line).
    """

    from_bus: str
    to_bus: str
    admittance: np.ndarray = None

    def __post_init__(self):
        self.admittance = np.atleast_2d(np.asarray(self.admittance, dtype=complex))


@dataclass
class Source:
    """The slack bus: fixed complex voltage per phase."""

    bus: str
    voltage: np.ndarray = None

    def __post_init__(self):
        self.voltage = np.atleast_1d(np.asarray(self.voltage, dtype=complex))


@dataclass
class GridModel:
    """A feeder: buses, branches, and one voltage source.

    ``sigma_f_prior`` optionally carries an explicit reduced prior
    covariance loaded from file, bypassing :func:`prior_covariance`.
    """

    buses: list
    branches: list
    source: Source
    sigma_f_prior: np.ndarray = None

    def bus_map(self):
        return {b.id: b for b in self.buses}

    @property
    def n_state(self):
        src = self.source.bus
        return sum(len(b.phases) for b in self.buses if b.id != src)

    def validate(self):
        """Check structural invariants; raises ValidationError naming the record."""
        seen = set()
        for bus in self.buses:
            if bus.id in seen:
                raise ValidationError("duplicate bus id %r" % bus.id)
            seen.add(bus.id)
            if not bus.phases:
                raise ValidationError("bus %r has no phases" % bus.id)
            for ph in bus.phases:
                if ph not in PHASES:
                    raise ValidationError(
                        "bus %r: unknown phase label %r" % (bus.id, ph)
                    )
            if tuple(sorted(bus.phases)) != bus.phases:
                raise ValidationError(
                    "bus %r: phases must be ordered a < b < c" % bus.id
                )
            if len(set(bus.phases)) != len(bus.phases):
                raise ValidationError("bus %r: repeated phase" % bus.id)
            for name in ("injection", "zero_injection", "shunt"):
                if len(getattr(bus, name)) != len(bus.phases):
                    raise ValidationError(
                        "bus %r: %s length does not match phases" % (bus.id, name)
                    )
            if not np.all(np.isfinite(bus.injection)):
                raise ValidationError("bus %r: non-finite injection" % bus.id)
            if not np.all(np.isfinite(bus.shunt)):
                raise ValidationError("bus %r: non-finite shunt" % bus.id)
            bad = bus.zero_injection & (bus.injection != 0)
            if np.any(bad):
                raise ValidationError(
                    "bus %r: zero-injection phase carries a nonzero injection"
                    % bus.id
                )
        if self.source.bus not in seen:
            raise ValidationError("source bus %r not in bus list" % self.source.bus)
        src_bus = self.bus_map()[self.source.bus]
        if len(self.source.voltage) != len(src_bus.phases):
            raise ValidationError("source voltage length does not match phases")
        if not np.all(np.isfinite(self.source.voltage)):
            raise ValidationError("source voltage is non-finite")
        bmap = self.bus_map()
        for k, br in enumerate(self.branches):
            for end in (br.from_bus, br.to_bus):
                if end not in bmap:
                    raise ValidationError(
                        "branch %d references unknown bus %r" % (k, end)
                    )
            if br.from_bus == br.to_bus:
                raise ValidationError("branch %d is a self loop" % k)
            ni = len(bmap[br.from_bus].phases)
            nj = len(bmap[br.to_bus].phases)
            if br.admittance.shape != (ni, nj):
                raise ValidationError(
                    "branch %d (%s-%s): admittance block shape %s does not match"
                    " endpoint phases (%d, %d)"
                    % (k, br.from_bus, br.to_bus, br.admittance.shape, ni, nj)
                )
            if not np.all(np.isfinite(br.admittance)):
                raise ValidationError("branch %d: non-finite admittance" % k)
            if ni == nj and not np.allclose(
                br.admittance, br.admittance.T, rtol=1e-12, atol=1e-12
            ):
                raise ValidationError(
                    "branch %d (%s-%s): square admittance block is not symmetric"
                    % (k, br.from_bus, br.to_bus)
                )
        self._check_connected()

    def _check_connected(self):
        adj = {b.id: set() for b in self.buses}
        for br in self.branches:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
        stack = [self.source.bus]
        seen = {self.source.bus}
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        missing = [b.id for b in self.buses if b.id not in seen]
        if missing:
            raise ValidationError(
                "disconnected graph: buses %s unreachable from the source"
                % ", ".join(missing)
            )


@dataclass
class AdmittanceMatrix:
    """Full nodal admittance with source rows first.

    ``matrix`` has shape (n_source + N, n_source + N) where N is the state
    dimension.  ``index`` maps (bus id, phase) to a row of the full matrix;
    state indices are full rows minus ``n_source``.
    """

    matrix: np.ndarray
    n_source: int
    index: dict
    state_labels: list
    v_source: np.ndarray
    zero_injection: np.ndarray

    @property
    def n_state(self):
        return self.matrix.shape[0] - self.n_source

    @property
    def y_ll(self):
        """Non-source block."""
        return self.matrix[self.n_source:, self.n_source:]

    @property
    def y_ls(self):
        """Coupling of non-source rows to source columns."""
        return self.matrix[self.n_source:, : self.n_source]

    def state_index(self, bus, phase):
        return self.index[(bus, phase)] - self.n_source


@dataclass
class FeasibleSubspace:
    """Orthonormal basis of voltages compatible with zero-injection phases.

    Any feasible state is ``V = basis @ x + v0`` where ``v0`` is the
    zero-load voltage propagated from the source.
    """

    basis: np.ndarray
    zero_injection: np.ndarray
    v0: np.ndarray

    @property
    def n_reduced(self):
        return self.basis.shape[1]


@dataclass
class PriorModel:
    """Prior voltage estimate with its reduced covariance."""

    v_prior: np.ndarray
    sigma_f: np.ndarray
    sigma_psd: float


def build_admittance(model):
    """Assemble the full nodal admittance matrix of a grid model.

    Parameters
    ----------
    model : GridModel
        Validated on entry.

    Returns
    -------
    AdmittanceMatrix
        Source rows first, then non-source buses in input order with
        phases ordered a < b < c.
    """
    model.validate()
    bmap = model.bus_map()
    src = model.source.bus
    ordered = [bmap[src]] + [b for b in model.buses if b.id != src]
    index = {}
    row = 0
    for bus in ordered:
        for ph in bus.phases:
            index[(bus.id, ph)] = row
            row += 1
    n_source = len(bmap[src].phases)
    y = np.zeros((row, row), dtype=complex)

    for br in model.branches:
        bi, bj = bmap[br.from_bus], bmap[br.to_bus]
        ri = [index[(bi.id, p)] for p in bi.phases]
        rj = [index[(bj.id, p)] for p in bj.phases]
        w = br.admittance
        y[np.ix_(ri, rj)] -= w
        y[np.ix_(rj, ri)] -= w.T
        if w.shape[0] == w.shape[1]:
            y[np.ix_(ri, ri)] += w
            y[np.ix_(rj, rj)] += w
        else:
            # unequal phase sets: keep per-branch row sums zero
            y[ri, ri] += w.sum(axis=1)
            y[rj, rj] += w.sum(axis=0)

    for bus in model.buses:
        for k, ph in enumerate(bus.phases):
            r = index[(bus.id, ph)]
            y[r, r] += bus.shunt[k]

    state_labels = [
        (bus.id, ph) for bus in model.buses if bus.id != src for ph in bus.phases
    ]
    zi = [
        k
        for k, (bid, ph) in enumerate(state_labels)
        if bmap[bid].zero_injection[bmap[bid].phases.index(ph)]
    ]
    return AdmittanceMatrix(
        matrix=y,
        n_source=n_source,
        index=index,
        state_labels=state_labels,
        v_source=np.array(model.source.voltage, dtype=complex),
        zero_injection=np.array(zi, dtype=int),
    )


def injection_vector(model, adm):
    """Stack the per-phase complex injections into state order."""
    s = np.zeros(adm.n_state, dtype=complex)
    for bus in model.buses:
        if bus.id == model.source.bus:
            continue
        for k, ph in enumerate(bus.phases):
            s[adm.state_index(bus.id, ph)] = bus.injection[k]
    return s


def feasible_subspace(adm, zero_injection=None):
    """Orthonormal null-space basis of the zero-injection current rows.

    Parameters
    ----------
    adm : AdmittanceMatrix
    zero_injection : array of state indices, optional
        Defaults to the indices flagged on the model.

    Returns
    -------
    FeasibleSubspace
        ``basis`` has shape (N, N - len(eps)) with orthonormal columns,
        and ``(y_ll @ basis)[eps] == 0``.
    """
    if zero_injection is None:
        zero_injection = adm.zero_injection
    eps = np.array(sorted({int(i) for i in np.atleast_1d(zero_injection)}), dtype=int)
    n = adm.n_state
    if eps.size and (eps[0] < 0 or eps[-1] >= n):
        raise ValidationError("zero-injection index out of range")
    if eps.size >= n:
        raise ValidationError("every state constrained, no feasible subspace")

    try:
        v0 = np.linalg.solve(adm.y_ll, -adm.y_ls @ adm.v_source)
    except np.linalg.LinAlgError:
        raise ValidationError("singular non-source admittance block")

    if eps.size == 0:
        basis = np.eye(n, dtype=complex)
    else:
        basis = scipy.linalg.null_space(adm.y_ll[eps, :])
        if basis.shape[1] != n - eps.size:
            raise ValidationError(
                "zero-injection constraint rows are rank deficient"
            )
        basis = basis.astype(complex)
    return FeasibleSubspace(basis=basis, zero_injection=eps, v0=v0)


def solve_power_flow(model, adm, s=None, tol=PF_TOL, max_iter=PF_MAX_ITER):
    """Fixed-point current-injection load flow.

    Iterates ``V <- y_ll \\ (conj(S / V) - y_ls @ v_source)`` until the
    apparent-power mismatch drops below ``tol``.

    Parameters
    ----------
    s : complex array, optional
        Injections in state order; defaults to the model loads.

    Returns
    -------
    complex array
        Non-source voltages in state order.

    Raises
    ------
    ConvergenceError
        If iterates diverge or the tolerance is not met in ``max_iter``
        sweeps (infeasible loading).
    """
    if s is None:
        s = injection_vector(model, adm)
    s = np.asarray(s, dtype=complex)
    if s.shape != (adm.n_state,):
        raise ValidationError("injection vector has wrong length")
    if adm.zero_injection.size and np.any(s[adm.zero_injection] != 0):
        raise ValidationError("nonzero injection at a zero-injection phase")

    rhs_src = adm.y_ls @ adm.v_source
    try:
        lu = scipy.linalg.lu_factor(adm.y_ll)
    except (ValueError, np.linalg.LinAlgError):
        raise ValidationError("singular non-source admittance block")

    v = scipy.linalg.lu_solve(lu, -rhs_src)
    for _ in range(max_iter):
        with np.errstate(divide="ignore", invalid="ignore"):
            i_inj = np.conj(s / v)
        i_inj[s == 0] = 0.0
        if not np.all(np.isfinite(i_inj)):
            raise ConvergenceError("power flow diverged (voltage collapse)")
        v_new = scipy.linalg.lu_solve(lu, i_inj - rhs_src)
        if not np.all(np.isfinite(v_new)) or np.max(np.abs(v_new)) > 1e6:
            raise ConvergenceError("power flow diverged")
        i_l = adm.y_ll @ v_new + rhs_src
        mismatch = np.max(np.abs(v_new * np.conj(i_l) - s)) if len(s) else 0.0
        if mismatch < tol:
            return v_new
        v = v_new
    raise ConvergenceError(
        "power flow did not converge in %d iterations (mismatch %.3e)"
        % (max_iter, mismatch)
    )


def prior_covariance(model, v_prior, basis, sigma_psd, adm=None):
    """Propagate pseudo-load noise into a reduced prior covariance.

    Each injection carries independent circular complex noise of standard
    deviation ``sigma_psd * |S_i|``.  To first order the induced current
    perturbation at the prior voltage is ``conj(dS / v_prior)``, which the
    inverse non-source admittance block maps onto voltages:

        Sigma = y_ll^-1 @ diag(sigma_psd^2 |S|^2 / |v_prior|^2) @ y_ll^-H

    projected as ``basis^H @ Sigma @ basis`` plus a PD floor of
    ``PD_FLOOR * I``.

    Returns
    -------
    PriorModel
    """
    if sigma_psd < 0:
        raise ValidationError("sigma_psd must be nonnegative")
    if adm is None:
        adm = build_admittance(model)
    v_prior = np.asarray(v_prior, dtype=complex)
    s = injection_vector(model, adm)
    d = (sigma_psd ** 2) * np.abs(s) ** 2 / np.abs(v_prior) ** 2
    try:
        g = np.linalg.solve(adm.y_ll, np.eye(adm.n_state, dtype=complex))
    except np.linalg.LinAlgError:
        raise ValidationError("singular non-source admittance block")
    sigma_prior = (g * d) @ g.conj().T
    f = np.asarray(basis)
    sigma_f = f.conj().T @ sigma_prior @ f
    sigma_f = 0.5 * (sigma_f + sigma_f.conj().T)
    sigma_f += PD_FLOOR * np.eye(sigma_f.shape[0])
    try:
        np.linalg.cholesky(sigma_f)
    except np.linalg.LinAlgError:
        raise ValidationError("prior covariance is not positive definite")
    return PriorModel(v_prior=v_prior, sigma_f=sigma_f, sigma_psd=float(sigma_psd))
