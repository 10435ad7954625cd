"""Posterior covariance, metrics, gradients, and the estimation update."""

import numpy as np
import pytest

import pmuplace as pp
from pmuplace.errors import ValidationError
from pmuplace.posterior import (
    evaluate_selection,
    gradient,
    metric_a,
    metric_d,
    metric_with_candidate,
    posterior_covariance,
    se_update,
)

# ------------------------------------------------------- selection vector


def test_selection_vector_clips_roundoff():
    s = pp.SelectionVector(np.array([-1e-13, 1.0 + 1e-13, 0.0]))
    assert s.x.min() == 0.0 and s.x.max() == 1.0
    assert list(s.indices) == [1]


def test_selection_vector_rejects_out_of_box():
    with pytest.raises(ValidationError, match=r"\[0, 1\]"):
        pp.SelectionVector(np.array([0.5, -0.1]), relaxed=True)
    with pytest.raises(ValidationError, match=r"\[0, 1\]"):
        pp.SelectionVector(np.array([1.2]), relaxed=True)


def test_selection_vector_binary_vs_relaxed():
    pp.SelectionVector(np.array([0.3, 0.7]), relaxed=True)
    with pytest.raises(ValidationError, match="fractional"):
        pp.SelectionVector(np.array([0.3, 0.7]))
    with pytest.raises(ValidationError, match="vector"):
        pp.SelectionVector(np.zeros((2, 2)))


def test_from_indices_dedupes_and_checks_range():
    s = pp.SelectionVector.from_indices([3, 1, 3], 5)
    np.testing.assert_array_equal(s.x, [0, 1, 0, 1, 0])
    with pytest.raises(ValidationError, match="out of range"):
        pp.SelectionVector.from_indices([5], 5)
    with pytest.raises(ValidationError, match="out of range"):
        pp.SelectionVector.from_indices([-1], 5)


# --------------------------------------------------------- metric anchors


def identity_instance(n=4, metric="D"):
    rows = np.eye(n, dtype=complex)
    return pp.PlacementInstance(
        sigma_prior=np.eye(n, dtype=complex),
        rows=rows,
        precisions=np.full(n, 2.0),
        metric=metric,
    )


def test_empty_selection_metrics_on_identity_prior():
    inst = identity_instance(4)
    assert evaluate_selection(inst, [], metric="A") == pytest.approx(4.0, abs=1e-12)
    assert evaluate_selection(inst, [], metric="D") == pytest.approx(0.0, abs=1e-12)


def test_empty_selection_metrics_on_diagonal_prior():
    inst = pp.PlacementInstance(
        sigma_prior=np.diag([2.0, 0.5]).astype(complex),
        rows=np.eye(2, dtype=complex),
        precisions=np.ones(2),
    )
    assert evaluate_selection(inst, [], metric="A") == pytest.approx(2.5, abs=1e-12)
    # log 2 + log 0.5 cancels exactly
    assert evaluate_selection(inst, [], metric="D") == pytest.approx(0.0, abs=1e-12)


def test_scalar_posterior_variance():
    # one state, one sensor: 1 / (1/sigma0^2 + p)
    inst = pp.PlacementInstance(
        sigma_prior=np.array([[4.0 + 0j]]),
        rows=np.array([[1.0 + 0j]]),
        precisions=np.array([3.0]),
    )
    want = 1.0 / (1.0 / 4.0 + 3.0)
    assert evaluate_selection(inst, [0], metric="A") == pytest.approx(want, rel=1e-12)
    assert evaluate_selection(inst, [0], metric="D") == pytest.approx(
        np.log(want), rel=1e-12
    )


def test_empty_posterior_equals_prior():
    inst = pp.random_instance(n_state=5, n_cand=8, seed=0)
    state = posterior_covariance(inst, np.zeros(8))
    np.testing.assert_allclose(state.sigma, inst.sigma_prior, atol=1e-10)
    assert metric_a(state) == pytest.approx(np.trace(inst.sigma_prior).real, rel=1e-10)


def test_posterior_matches_direct_inverse():
    inst = pp.random_instance(n_state=5, n_cand=8, seed=1)
    rng = np.random.default_rng(7)
    w = rng.uniform(0.1, 0.9, size=8)
    state = posterior_covariance(inst, pp.SelectionVector(w, relaxed=True))
    info = np.linalg.inv(inst.sigma_prior)
    for i in range(8):
        r = inst.rows[i][None, :]
        info = info + w[i] * inst.precisions[i] * (r.conj().T @ r)
    direct = np.linalg.inv(info)
    np.testing.assert_allclose(state.sigma, direct, atol=1e-11)
    np.testing.assert_allclose(state.sigma, state.sigma.conj().T, atol=1e-14)
    assert metric_d(state) == pytest.approx(np.linalg.slogdet(direct)[1], abs=1e-10)


def test_metric_helpers_accept_raw_matrices():
    m = np.diag([1.0, 3.0]).astype(complex)
    assert metric_a(m) == pytest.approx(4.0)
    assert metric_d(m) == pytest.approx(np.log(3.0))
    with pytest.raises(ValidationError, match="positive definite"):
        metric_d(np.diag([1.0, -1.0]).astype(complex))
    with pytest.raises(ValidationError, match="metric"):
        evaluate_selection(identity_instance(), [0], metric="B")


# ------------------------------------------------------------ fast update


def test_fast_candidate_update_matches_dense():
    inst = pp.random_instance(n_state=6, n_cand=10, seed=2)
    base = [1, 4]
    state = posterior_covariance(inst, pp.SelectionVector.from_indices(base, 10))
    for metric in ("A", "D"):
        for j in range(10):
            if j in base:
                continue
            fast = metric_with_candidate(inst, state, j, metric=metric)
            dense = evaluate_selection(inst, base + [j], metric=metric)
            assert fast == pytest.approx(dense, rel=1e-11), (metric, j)


def test_scalar_fast_update_formulas():
    # q = x sigma, posterior shrink matches 1/(1/p + q) by hand
    p0 = 4.0
    inst = pp.PlacementInstance(
        sigma_prior=np.array([[p0 + 0j]]),
        rows=np.array([[1.0 + 0j], [1.0 + 0j]]),
        precisions=np.array([3.0, 2.0]),
    )
    state = posterior_covariance(inst, np.array([1.0, 0.0]))
    sig1 = 1.0 / (1.0 / p0 + 3.0)
    assert state.trace == pytest.approx(sig1, rel=1e-12)
    want = sig1 - sig1 ** 2 / (1.0 / 2.0 + sig1)
    assert metric_with_candidate(inst, state, 1, metric="A") == pytest.approx(
        want, rel=1e-12
    )
    assert metric_with_candidate(inst, state, 1, metric="D") == pytest.approx(
        state.logdet - np.log1p(2.0 * sig1), rel=1e-12
    )


# -------------------------------------------------------------- gradients


def test_gradient_matches_finite_differences():
    inst = pp.random_instance(n_state=5, n_cand=7, seed=3)
    rng = np.random.default_rng(11)
    x = rng.uniform(0.2, 0.8, size=7)
    h = 1e-6
    for metric in ("A", "D"):
        g = gradient(inst, pp.SelectionVector(x, relaxed=True), metric=metric)
        for i in range(7):
            e = np.zeros(7)
            e[i] = h
            num = (
                metric_value(inst, x + e, metric) - metric_value(inst, x - e, metric)
            ) / (2 * h)
            assert g[i] == pytest.approx(num, rel=1e-5), (metric, i)


def metric_value(inst, x, metric):
    state = posterior_covariance(inst, pp.SelectionVector(x, relaxed=True))
    return metric_a(state) if metric == "A" else metric_d(state)


def test_gradient_is_nonpositive():
    inst = pp.random_instance(n_state=5, n_cand=9, seed=4)
    x = np.random.default_rng(5).uniform(0, 1, size=9)
    for metric in ("A", "D"):
        g = gradient(inst, pp.SelectionVector(x, relaxed=True), metric=metric)
        assert np.all(g <= 1e-15), metric


def test_scalar_gradient_formulas():
    # d/dx of 1/(1/s + x p) and of -log(1/s + x p) at a fractional x
    s, p, x = 2.0, 3.0, 0.4
    inst = pp.PlacementInstance(
        sigma_prior=np.array([[s + 0j]]),
        rows=np.array([[1.0 + 0j]]),
        precisions=np.array([p]),
    )
    sig = 1.0 / (1.0 / s + x * p)
    ga = gradient(inst, pp.SelectionVector([x], relaxed=True), metric="A")
    gd = gradient(inst, pp.SelectionVector([x], relaxed=True), metric="D")
    assert ga[0] == pytest.approx(-p * sig ** 2, rel=1e-12)
    assert gd[0] == pytest.approx(-p * sig, rel=1e-12)


# ------------------------------------------------------ estimation update


def test_se_update_zero_innovation_keeps_prior(feeder_case):
    inst = feeder_case.instance
    v0 = feeder_case.prior.v_prior
    sel = pp.SelectionVector.from_indices([0, 3, 5], inst.n_cand)
    idx = sel.indices
    z = inst.full_rows[idx] @ v0 + inst.offsets[idx]
    v_post, state = se_update(inst, sel, v0, z)
    np.testing.assert_allclose(v_post, v0, atol=1e-12)
    assert state.trace <= np.trace(inst.sigma_prior).real + 1e-12


def test_se_update_empty_selection(feeder_case):
    inst = feeder_case.instance
    v0 = feeder_case.prior.v_prior
    v_post, state = se_update(inst, np.zeros(inst.n_cand), v0, np.array([]))
    np.testing.assert_array_equal(v_post, v0)
    np.testing.assert_allclose(state.sigma, inst.sigma_prior, atol=1e-10)
    with pytest.raises(ValidationError, match="empty selection"):
        se_update(inst, np.zeros(inst.n_cand), v0, np.array([1.0 + 0j]))


def test_se_update_validates_inputs(feeder_case):
    inst = feeder_case.instance
    v0 = feeder_case.prior.v_prior
    sel = pp.SelectionVector.from_indices([1, 2], inst.n_cand)
    with pytest.raises(ValidationError, match="expected 2 measurements"):
        se_update(inst, sel, v0, np.zeros(3, dtype=complex))
    bare = pp.random_instance(n_state=4, n_cand=6, seed=6)
    with pytest.raises(ValidationError, match="grid context"):
        se_update(
            bare,
            pp.SelectionVector.from_indices([0], 6),
            np.zeros(4, dtype=complex),
            np.zeros(1, dtype=complex),
        )
    with pytest.raises(ValidationError, match="binary"):
        se_update(inst, np.full(inst.n_cand, 0.5), v0, np.array([]))


def test_se_update_matches_information_form(feeder_case):
    # innovation form vs information form agree (same Woodbury identity,
    # opposite sides), and the correction stays in the feasible subspace
    inst = feeder_case.instance
    v0 = feeder_case.prior.v_prior
    rng = np.random.default_rng(9)
    idx = np.array([0, 2, 7, 11])
    sel = pp.SelectionVector.from_indices(idx, inst.n_cand)
    z_pred = inst.full_rows[idx] @ v0 + inst.offsets[idx]
    noise = rng.normal(scale=2e-3, size=(2, idx.size))
    z = z_pred + noise[0] + 1j * noise[1]
    v_post, state = se_update(inst, sel, v0, z)

    r = inst.rows[idx]
    info = np.linalg.inv(inst.sigma_prior) + (
        r.conj().T * inst.precisions[idx]
    ) @ r
    dx = np.linalg.solve(info, r.conj().T @ (inst.precisions[idx] * (z - z_pred)))
    np.testing.assert_allclose(
        inst.basis.conj().T @ (v_post - v0), dx, atol=1e-10
    )
    # correction never leaves the span of the basis
    proj = inst.basis @ (inst.basis.conj().T @ (v_post - v0))
    np.testing.assert_allclose(proj, v_post - v0, atol=1e-10)
    assert state.trace <= np.trace(inst.sigma_prior).real + 1e-12


def test_se_update_pulls_toward_measured_voltage(feeder_case):
    inst = feeder_case.instance
    v0 = feeder_case.prior.v_prior
    # measure one bus voltage, offset the reading from the prediction
    j = next(
        i for i, c in enumerate(inst.candidates) if c.kind == "bus-voltage"
    )
    k = int(np.flatnonzero(np.abs(inst.full_rows[j]) > 0.5)[0])
    sel = pp.SelectionVector.from_indices([j], inst.n_cand)
    z = np.array([v0[k] + 0.004 - 0.002j])
    v_post, _ = se_update(inst, sel, v0, z)
    assert abs(z[0] - v_post[k]) < abs(z[0] - v0[k])
