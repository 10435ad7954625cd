"""Posterior covariance, placement metrics, and the estimation update.

For a selection weight vector ``x`` over candidate rows ``r_i`` with noise
precisions ``p_i``, the reduced posterior covariance is

    Sigma(x) = (Sigma_prior^{-1} + sum_i x_i p_i r_i^H r_i)^{-1}

computed by Hermitian factorization of the information matrix, never by
inverting an inverse.  The A metric is its trace, the D metric its log
determinant; both are convex and monotone decreasing in ``x``, with
closed-form gradients and O(n^2) single-candidate updates used by the
greedy solvers.

Selections are passed as :class:`SelectionVector` or as plain weight
vectors of length ``n_cand``; index collections go through
:meth:`SelectionVector.from_indices` or :func:`evaluate_selection`.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._kernels import quadforms
from .errors import ValidationError

IMAG_TOL = 1e-10


@dataclass
class SelectionVector:
    """Indicator (or relaxed fractional) weights over candidates."""

    x: np.ndarray
    relaxed: bool = False

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 1:
            raise ValidationError("selection must be a vector")
        if np.any(self.x < -1e-12) or np.any(self.x > 1 + 1e-12):
            raise ValidationError("selection weights must lie in [0, 1]")
        self.x = np.clip(self.x, 0.0, 1.0)
        if not self.relaxed and not np.all((self.x == 0) | (self.x == 1)):
            raise ValidationError("binary selection has fractional entries")

    @classmethod
    def from_indices(cls, indices, n_cand):
        x = np.zeros(n_cand)
        idx = np.asarray(sorted({int(i) for i in indices}), dtype=int)
        if idx.size and (idx[0] < 0 or idx[-1] >= n_cand):
            raise ValidationError("candidate index out of range")
        x[idx] = 1.0
        return cls(x)

    @property
    def indices(self):
        return np.flatnonzero(self.x > 0.5)


def _as_weights(inst, x, binary=False):
    if isinstance(x, SelectionVector):
        if binary and x.relaxed and not np.all((x.x == 0) | (x.x == 1)):
            raise ValidationError("binary selection required")
        return x.x
    w = np.asarray(x, dtype=float)
    if w.shape != (inst.rows.shape[0],):
        raise ValidationError(
            "selection length %s does not match candidate count %d"
            % (w.shape, inst.rows.shape[0])
        )
    if np.any(w < -1e-12) or np.any(w > 1 + 1e-12):
        raise ValidationError("selection weights must lie in [0, 1]")
    w = np.clip(w, 0.0, 1.0)
    if binary and not np.all((w == 0) | (w == 1)):
        raise ValidationError("binary selection required")
    return w


def _norm_metric(metric):
    m = str(metric).upper()
    if m not in ("A", "D"):
        raise ValidationError("metric must be 'A' or 'D', got %r" % metric)
    return m


@dataclass
class PosteriorState:
    """Reduced posterior covariance with cached trace and log determinant."""

    sigma: np.ndarray
    selection: np.ndarray
    trace: float
    logdet: float


def _factor_info(info):
    info = 0.5 * (info + info.conj().T)
    try:
        return scipy.linalg.cho_factor(info, lower=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise ValidationError("posterior information matrix is not positive definite")


def _information(inst, weights):
    lam = weights * inst.precisions
    info = inst.prior_info.copy()
    active = np.flatnonzero(lam > 0)
    if active.size:
        r = inst.rows[active]
        info += (r.conj().T * lam[active]) @ r
    return info


def posterior_covariance(inst, x):
    """Reduced posterior covariance for a selection.

    Parameters
    ----------
    inst : PlacementInstance
    x : SelectionVector or weight vector

    Returns
    -------
    PosteriorState
    """
    w = _as_weights(inst, x)
    factor = _factor_info(_information(inst, w))
    n = inst.rows.shape[1]
    sigma = scipy.linalg.cho_solve(factor, np.eye(n, dtype=complex))
    sigma = np.ascontiguousarray(0.5 * (sigma + sigma.conj().T))
    logdet = -2.0 * float(np.sum(np.log(np.real(np.diag(factor[0])))))
    tr = np.trace(sigma)
    if abs(tr.imag) >= IMAG_TOL:
        raise ValidationError("posterior trace has a non-real residual")
    return PosteriorState(sigma=sigma, selection=w, trace=float(tr.real), logdet=logdet)


def metric_a(state):
    """Trace of the posterior covariance (sum of error variances)."""
    if isinstance(state, PosteriorState):
        return state.trace
    tr = np.trace(np.asarray(state))
    if abs(np.imag(tr)) >= IMAG_TOL:
        raise ValidationError("trace has a non-real residual")
    return float(np.real(tr))


def metric_d(state):
    """Log determinant of the posterior covariance (log ellipsoid volume)."""
    if isinstance(state, PosteriorState):
        return state.logdet
    m = np.asarray(state)
    try:
        c = scipy.linalg.cho_factor(m, lower=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise ValidationError("matrix is not Hermitian positive definite")
    return 2.0 * float(np.sum(np.log(np.real(np.diag(c[0])))))


def gradient(inst, x, metric=None):
    """Analytic gradient of a metric at a relaxed selection.

    With ``Sigma = Sigma(x)``, the entries are

        A:  -p_i ||Sigma r_i^H||^2
        D:  -p_i Re(r_i Sigma r_i^H)

    both real and nonpositive (adding a sensor never hurts).
    """
    metric = _norm_metric(inst.metric if metric is None else metric)
    state = posterior_covariance(inst, x)
    q, s = quadforms(state.sigma, inst.rows)
    if metric == "A":
        return -inst.precisions * s
    return -inst.precisions * q


def metric_with_candidate(inst, state, j, metric=None):
    """Metric value after adding candidate ``j`` to a posterior state.

    O(n^2) rank-one update from the cached covariance:

        A:  trace - s_j / (1/p_j + q_j)
        D:  logdet - log(1 + p_j q_j)

    with ``q_j = r_j Sigma r_j^H`` and ``s_j = ||r_j Sigma||^2``.
    """
    metric = _norm_metric(inst.metric if metric is None else metric)
    row = inst.rows[j]
    u = state.sigma @ row.conj()
    q = float(np.real(row @ u))
    p = inst.precisions[j]
    if metric == "D":
        return state.logdet - math.log1p(p * q)
    s = float(np.real(u.conj() @ u))
    return state.trace - s / (1.0 / p + q)


def evaluate_selection(inst, indices, metric=None):
    """Metric of a selected index set by direct dense evaluation."""
    metric = _norm_metric(inst.metric if metric is None else metric)
    idx = np.asarray(sorted({int(i) for i in indices}), dtype=int)
    n_cand, n = inst.rows.shape
    if idx.size and (idx[0] < 0 or idx[-1] >= n_cand):
        raise ValidationError("candidate index out of range")
    info = inst.prior_info.copy()
    if idx.size:
        r = inst.rows[idx]
        info += (r.conj().T * inst.precisions[idx]) @ r
    factor = _factor_info(info)
    if metric == "D":
        return -2.0 * float(np.sum(np.log(np.real(np.diag(factor[0])))))
    sigma = scipy.linalg.cho_solve(factor, np.eye(n, dtype=complex))
    tr = np.trace(sigma)
    if abs(tr.imag) >= IMAG_TOL:
        raise ValidationError("posterior trace has a non-real residual")
    return float(tr.real)


def se_update(inst, x, v_prior, z_meas):
    """Linear-filter state update from measured phasors.

    Parameters
    ----------
    inst : PlacementInstance
        Must carry grid context (basis, full rows, offsets).
    x : SelectionVector or binary weight vector
    v_prior : complex array
        Prior voltage over the full state.
    z_meas : complex array
        One entry per selected candidate, in candidate-index order.

    Returns
    -------
    (v_post, PosteriorState)
        Posterior voltage over the full state and the reduced posterior
        covariance.  An empty selection returns the prior unchanged.
    """
    w = _as_weights(inst, x, binary=True)
    idx = np.flatnonzero(w == 1.0)
    v_prior = np.asarray(v_prior, dtype=complex)
    if idx.size == 0:
        if len(np.atleast_1d(z_meas)) != 0:
            raise ValidationError("measurements supplied for an empty selection")
        return v_prior.copy(), posterior_covariance(inst, w)
    if inst.basis is None or inst.full_rows is None:
        raise ValidationError("instance lacks grid context for estimation")
    z = np.asarray(z_meas, dtype=complex)
    if z.shape != (idx.size,):
        raise ValidationError(
            "expected %d measurements, got %s" % (idx.size, z.shape)
        )
    c_full = inst.full_rows[idx]
    r = inst.rows[idx]
    p = inst.sigma_prior
    gram = r @ p @ r.conj().T + np.diag(1.0 / inst.precisions[idx]).astype(complex)
    gram = 0.5 * (gram + gram.conj().T)
    try:
        gf = scipy.linalg.cho_factor(gram, lower=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise ValidationError("innovation covariance is not positive definite")
    innov = z - (c_full @ v_prior + inst.offsets[idx])
    dx = scipy.linalg.cho_solve(gf, innov)
    v_post = v_prior + inst.basis @ (p @ (r.conj().T @ dx))
    return v_post, posterior_covariance(inst, w)
