"""Relaxed placement by projected gradient descent.

Relaxing the binary selection to the box [0, 1] makes both metrics convex,
so the relaxed minimum is a lower bound on the best binary placement.
The constraint sets are boxed simplices: under a sensor count the weights
themselves sum to the count; under a budget the change of variables
y_i = x_i c_i turns the cost constraint into a sum over y with per-entry
caps c_i.  The projection onto either set is computed exactly by a
breakpoint pivot on the dual of the sum constraint.

The sum constraint is handled as an equality: both metrics decrease in
every coordinate, so the inequality-constrained optimum always spends the
whole cap and no generality is lost.

Steps follow the diminishing schedule alpha / (K ||grad||), so individual
iterations are not monotone; the best iterate is tracked and returned,
along with a linear-minimization duality gap that certifies how far the
returned value can sit above the true relaxed minimum.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import quadforms
from .errors import ValidationError
from .posterior import _norm_metric, posterior_covariance

SUM_TOL = 1e-9


@dataclass
class PgdConfig:
    """Step scale, iteration cap, and stopping rule."""

    alpha: float = 1.0
    max_iters: int = 2000
    tol: float = 1e-9
    patience: int = 50


@dataclass
class RelaxedSolution:
    """Best relaxed iterate with its objective and solve diagnostics.

    ``gap`` bounds how far ``value`` can exceed the exact relaxed
    minimum (linear-minimization duality gap at the best iterate).
    """

    x: np.ndarray
    value: float
    iterations: int
    step: float
    converged: bool
    gap: float


def project_boxed_simplex(v, cap, upper):
    """Euclidean projection onto {y : sum(y) = cap, 0 <= y <= upper}.

    Pivots exactly on the breakpoints of the piecewise-linear dual
    residual, so the result satisfies the KKT conditions to floating
    precision rather than to an iteration tolerance.
    """
    v = np.asarray(v, dtype=float)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), v.shape).copy()
    if np.any(upper <= 0):
        raise ValidationError("projection upper bounds must be positive")
    total = float(upper.sum())
    if cap <= 0:
        raise ValidationError("projection cap must be positive")
    if cap > total * (1 + 1e-12) + 1e-12:
        raise ValidationError("projection cap exceeds the box capacity")
    cap = min(float(cap), total)

    n = v.shape[0]
    t = np.concatenate([v - upper, v])
    d = np.concatenate([-np.ones(n), np.ones(n)])
    order = np.argsort(t, kind="stable")
    t = t[order]
    d = d[order]
    slope = np.cumsum(d)
    g = np.empty(2 * n)
    g[0] = total
    if n:
        g[1:] = total + np.cumsum(slope[:-1] * np.diff(t))

    k = int(np.flatnonzero(g <= cap)[0])
    if k == 0:
        tau = t[0]
    else:
        lo, hi = t[k - 1], t[k]
        g_lo = float(np.clip(v - lo, 0.0, upper).sum())
        g_hi = float(np.clip(v - hi, 0.0, upper).sum())
        if g_lo <= cap:
            tau = lo
        elif g_hi >= cap:
            tau = hi
        else:
            tau = lo + (g_lo - cap) * (hi - lo) / (g_lo - g_hi)
    return np.clip(v - tau, 0.0, upper)


def _linear_min(g, cap, upper):
    """Minimize <g, s> over the boxed simplex; returns (s, value)."""
    n = g.shape[0]
    s = np.zeros(n)
    rem = float(cap)
    for i in np.argsort(g, kind="stable"):
        take = min(float(upper[i]), rem)
        s[i] = take
        rem -= take
        if rem <= 0:
            break
    return s, float(g @ s)


def _pgd(inst, metric, cap, upper, config):
    if config is None:
        config = PgdConfig()
    n = inst.n_cand
    if n == 0:
        return RelaxedSolution(
            x=np.zeros(0),
            value=inst.f_empty(metric),
            iterations=0,
            step=0.0,
            converged=True,
            gap=0.0,
        )

    def f_and_grad(y):
        w = y / upper
        state = posterior_covariance(inst, w)
        q, s = quadforms(state.sigma, inst.rows)
        gx = -inst.precisions * (s if metric == "A" else q)
        val = state.trace if metric == "A" else state.logdet
        return val, gx / upper

    y = (cap / upper.sum()) * upper
    best_y = y.copy()
    best_f, g = f_and_grad(y)
    last_improve = 0
    step = 0.0
    converged = False
    k = 0
    for k in range(1, config.max_iters + 1):
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            converged = True
            break
        step = config.alpha / (k * gn)
        y = project_boxed_simplex(y - step * g, cap, upper)
        f, g = f_and_grad(y)
        if f < best_f:
            if best_f - f >= config.tol:
                last_improve = k
            best_f = f
            best_y = y.copy()
        if k - last_improve >= config.patience:
            converged = True
            break

    gy = f_and_grad(best_y)[1]
    s, lin = _linear_min(gy, cap, upper)
    gap = float(gy @ best_y - lin)
    return RelaxedSolution(
        x=best_y / upper,
        value=float(best_f),
        iterations=k,
        step=float(step),
        converged=converged,
        gap=gap,
    )


def pgd_cardinality(inst, config=None):
    """Relaxed solve under a sensor count; weights sum to the count."""
    from .placement import Cardinality

    if not isinstance(inst.constraint, Cardinality):
        raise ValidationError("pgd_cardinality needs a cardinality constraint")
    metric = _norm_metric(inst.metric)
    upper = np.ones(inst.n_cand)
    cap = float(min(inst.constraint.n_meas, inst.n_cand))
    return _pgd(inst, metric, cap, upper, config)


def pgd_budget(inst, config=None):
    """Relaxed solve under a budget via the change of variables y = x c."""
    from .placement import Budget

    if not isinstance(inst.constraint, Budget):
        raise ValidationError("pgd_budget needs a budget constraint")
    metric = _norm_metric(inst.metric)
    upper = inst.costs.copy()
    cap = float(min(inst.constraint.b, upper.sum())) if inst.n_cand else 0.0
    return _pgd(inst, metric, cap, upper, config)
