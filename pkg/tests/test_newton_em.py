import json
from math import lgamma

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from condmix.exceptions import DegenerateComponent, UnsupportedDimension
from condmix.experiments import truth_density
from condmix.initialization import InitConfig, initialize
from condmix.model import Dataset, ModelSpec, log_weights, loglik, make_params, responsibilities, sample
from condmix.newton_em import (
    FitConfig,
    FitResult,
    chi2_quantile,
    e_step,
    fit,
    floor_covariance,
    m_step_means_covs,
    newton_weight_update,
    variance_floor,
)
from condmix.polybasis import design_matrix

from helpers import random_params

P = truth_density("P")
NP = truth_density("NP")


def assert_monotone(trace, slack=1e-8):
    diffs = np.diff(np.asarray(trace))
    assert np.all(diffs >= -slack), diffs.min()


# e-step


def test_e_step_single_component():
    data = sample(make_params([[0, 0]], [[0, 1]], [1.0]), 20, seed=0)
    np.testing.assert_array_equal(e_step(make_params([[0, 0]], [[0, 1]], [1.0]), data), np.ones((20, 1)))


def test_e_step_identical_components():
    params = make_params([[0, 0], [0, 0]], [[0, 1], [0, 1]], [1, 1])
    tau = e_step(params, sample(params, 25, seed=1))
    np.testing.assert_allclose(tau, 0.5)


def test_e_step_matches_pointwise(rng):
    params = random_params(rng, K=3, p=2, mean_degree=2)
    data = sample(params, 50, seed=2)
    tau = e_step(params, data)
    np.testing.assert_allclose(tau.sum(axis=1), 1.0, atol=1e-12)
    for i in range(50):
        np.testing.assert_allclose(tau[i], responsibilities(params, data.x[i], data.y[i]), atol=1e-12)


# m-step


def test_m_step_noiseless_line():
    x = np.linspace(0, 1, 30)
    data = Dataset(x, 2 * x + 1)
    mc, cv = m_step_means_covs(data, np.ones((30, 1)), 1, floor=1e-3)
    np.testing.assert_allclose(mc[0, 0], [1.0, 2.0], atol=1e-8)
    assert cv[0, 0, 0] == pytest.approx(1e-3)


def test_m_step_unit_weights_is_ols(rng):
    x = rng.random(80)
    y = np.column_stack([np.sin(4 * x), x**2]) + 0.1 * rng.standard_normal((80, 2))
    data = Dataset(x, y)
    mc, cv = m_step_means_covs(data, np.ones((80, 1)), 2, floor=1e-9)
    B = design_matrix(1, 2, x)
    coef = np.linalg.solve(B.T @ B, B.T @ y)
    np.testing.assert_allclose(mc[0], coef.T, rtol=1e-9)
    R = y - B @ coef
    np.testing.assert_allclose(cv[0], R.T @ R / 80, rtol=1e-9)


def test_m_step_weighted_matches_lstsq(rng):
    x = rng.random(60)
    y = 3 * x + rng.standard_normal(60)
    w = rng.random(60)
    mc, _ = m_step_means_covs(Dataset(x, y), np.column_stack([w, 1 - w]), 1, floor=1e-9)
    B = design_matrix(1, 1, x)
    sw = np.sqrt(w)
    coef = np.linalg.lstsq(B * sw[:, None], y * sw, rcond=None)[0]
    np.testing.assert_allclose(mc[0, 0], coef, rtol=1e-9)


def test_m_step_empty_component():
    data = Dataset(np.linspace(0, 1, 10), np.arange(10.0))
    tau = np.column_stack([np.ones(10), np.zeros(10)])
    with pytest.raises(DegenerateComponent) as info:
        m_step_means_covs(data, tau, 1, floor=0.1)
    assert info.value.component == 1


def test_floor_covariance_clips_eigenvalues(rng):
    S = np.array([[1.0, 0.999], [0.999, 1.0]])
    F = floor_covariance(S, 0.1)
    assert np.linalg.eigvalsh(F).min() == pytest.approx(0.1)
    assert np.linalg.eigvalsh(F).max() == pytest.approx(1.999)
    np.testing.assert_array_equal(floor_covariance(np.eye(2), 0.5), np.eye(2))


# Newton weight update


def gate_data(n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    return Dataset(x, rng.standard_normal(n))


def test_newton_stationary_when_tau_equals_pi():
    params = make_params([[0, 0], [1.0, -2.0], [0.5, 0.5]], np.zeros((3, 2)), [1, 1, 1])
    data = gate_data()
    tau = np.exp(log_weights(params, data.x))
    wc, trace = newton_weight_update(params, data, tau, 5)
    np.testing.assert_allclose(wc, params.weight_coeffs, atol=1e-10)
    assert len(trace) == 1


def test_newton_separable_tau_increases_strictly():
    params = make_params([[0, 0], [0, 0]], np.zeros((2, 2)), [1, 1])
    data = gate_data()
    t2 = (data.x[:, 0] > 0.5).astype(float)
    tau = np.column_stack([1 - t2, t2])
    _, trace = newton_weight_update(params, data, tau, 5)
    assert len(trace) == 6
    assert np.all(np.diff(trace) > 0)


def test_newton_rejects_zero_steps():
    params = make_params([[0, 0], [0, 0]], np.zeros((2, 2)), [1, 1])
    data = gate_data(20)
    with pytest.raises(ValueError):
        newton_weight_update(params, data, np.full((20, 2), 0.5), 0)
    with pytest.raises(ValueError):
        FitConfig(newton_steps=0)


def test_newton_reaches_the_surrogate_maximum(rng):
    """Many Newton steps agree with a generic optimizer on the concave surrogate."""
    K, bw = 3, 3
    params = make_params(np.zeros((K, bw)), np.zeros((K, 2)), np.ones(K), weight_degree=2)
    data = gate_data(300, seed=4)
    tau = rng.dirichlet(np.ones(K), size=300)
    B = design_matrix(1, 2, data.x)

    def neg_q(v):
        logits = np.column_stack([np.zeros(300), B @ v.reshape(K - 1, bw).T])
        return -np.sum(tau * (logits - np.log(np.exp(logits).sum(1, keepdims=True))))

    ref = optimize.minimize(neg_q, np.zeros((K - 1) * bw), method="BFGS", options={"gtol": 1e-10})
    wc, trace = newton_weight_update(params, data, tau, 50)
    assert trace[-1] == pytest.approx(-ref.fun, abs=1e-7)
    np.testing.assert_allclose(wc[1:].ravel(), ref.x, atol=1e-4)


# variance floor


def test_variance_floor_modes():
    data = sample(P, 2000, seed=0)
    assert variance_floor("fixed", data, 2) == pytest.approx(0.005)
    assert variance_floor(0.01, data, 2) == 0.01
    with pytest.raises(ValueError):
        variance_floor("bogus", data, 2)


def trapezoid_chi2_quantile(q, df):
    """Invert a trapezoid-integrated chi-square CDF by interpolation on a fine grid."""
    grid = np.linspace(1e-12, 6 * df + 100, 400_001)
    dens = np.exp((df / 2 - 1) * np.log(grid) - grid / 2 - (df / 2) * np.log(2) - lgamma(df / 2))
    cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
    return float(np.interp(q, cdf, grid))


def test_data_driven_floor_against_trapezoid_oracle():
    data = sample(P, 100, seed=9)
    K, alpha = 2, 0.05
    df = 100 - 2 * K + 1
    q = trapezoid_chi2_quantile((1 - alpha) ** (1 / K), df)
    gap = np.min(np.diff(np.sort(data.y[:, 0]))) ** 2
    assert variance_floor("data", data, K, alpha) == pytest.approx(gap / (2 * q), rel=1e-5)


@given(st.floats(0.01, 0.99), st.floats(0.5, 500))
def test_chi2_quantile_matches_scipy(q, df):
    assert chi2_quantile(q, df) == pytest.approx(stats.chi2.ppf(q, df), rel=1e-9)


def test_data_driven_floor_needs_scalar_response(rng):
    data = Dataset(rng.random(20), rng.standard_normal((20, 2)))
    with pytest.raises(UnsupportedDimension):
        variance_floor("data", data, 2)


# fit


def test_fit_recovers_single_regression():
    truth = make_params([[0.0, 0.0]], [[1.0, -2.0]], [0.5])
    n = 1500
    data = sample(truth, n, seed=12)
    spec = ModelSpec(K=1)
    start = make_params([[0.0, 0.0]], [[0.0, 0.0]], [1.0])
    res = fit(data, spec, start)
    B = design_matrix(1, 1, data.x)
    se = np.sqrt(0.5 * np.diag(np.linalg.inv(B.T @ B)))
    assert np.all(np.abs(res.params.mean_coeffs[0, 0] - [1.0, -2.0]) < 3 * se)
    assert_monotone(res.loglik_trace)


def test_fit_single_component_stationary_start():
    data = sample(make_params([[0.0, 0.0]], [[1.0, -2.0]], [0.5]), 300, seed=13)
    B = design_matrix(1, 1, data.x)
    coef = np.linalg.solve(B.T @ B, B.T @ data.y[:, 0])
    var = np.mean((data.y[:, 0] - B @ coef) ** 2)
    start = make_params([[0.0, 0.0]], [coef], [var])
    res = fit(data, ModelSpec(K=1), start, FitConfig(max_em_iters=1, stop="fixed"))
    assert abs(res.loglik_trace[1] - res.loglik_trace[0]) < 1e-9


def test_fit_converged_point_is_fixed():
    data = sample(P, 500, seed=14)
    spec = ModelSpec(K=2)
    res = fit(data, spec, P, FitConfig(max_em_iters=3000, em_rel_tol=1e-15, newton_steps=20))
    again = fit(data, spec, res.params, FitConfig(max_em_iters=1, stop="fixed", newton_steps=20))
    assert abs(again.loglik_trace[-1] - again.loglik_trace[0]) < 1e-9


def test_fit_example_p_close_to_truth():
    data = sample(P, 2000, seed=21)
    spec = ModelSpec(K=2)
    start = initialize(data, spec, InitConfig(seed=21))
    res = fit(data, spec, start)
    assert_monotone(res.loglik_trace)
    assert abs(res.loglik / 2000 - loglik(P, data) / 2000) < 0.05


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.integers(1, 4), st.sampled_from([0, 1, 2]))
def test_fit_monotone_and_floored(seed, K, degree):
    rng = np.random.default_rng(seed)
    truth = random_params(rng, K=2, weight_degree=1, mean_degree=1)
    data = sample(truth, 150, seed=seed)
    spec = ModelSpec(K=K, weight_degree=degree, mean_degree=degree)
    start = random_params(rng, K=K, weight_degree=degree, mean_degree=degree, weight_scale=1.0)
    try:
        res = fit(data, spec, start, FitConfig(max_em_iters=40))
    except DegenerateComponent:
        return
    assert_monotone(res.loglik_trace)
    floor = 10 / 150
    for c in res.params.covs:
        assert np.linalg.eigvalsh(c).min() >= floor - 1e-12
    assert res.eta_slack >= 0


def test_fit_monotone_bivariate_response(rng):
    truth = random_params(rng, K=2, p=2)
    data = sample(truth, 300, seed=3)
    res = fit(data, ModelSpec(K=2, p=2), random_params(rng, K=2, p=2, weight_scale=0.5), FitConfig(max_em_iters=50))
    assert_monotone(res.loglik_trace)
    for c in res.params.covs:
        assert np.linalg.eigvalsh(c).min() >= 10 / 300 - 1e-12


def test_fit_permutation_invariance():
    data = sample(P, 400, seed=15)
    start = make_params([[0, 0], [-3.0, 5.0]], [[6.0, -10.0], [0.0, 1.0]], [1.0, 1.0])
    cfg = FitConfig(max_em_iters=30, stop="fixed")
    a = fit(data, ModelSpec(K=2), start, cfg)
    b = fit(data, ModelSpec(K=2), start.permuted([1, 0]), cfg)
    np.testing.assert_allclose(a.loglik_trace, b.loglik_trace, rtol=1e-9)
    np.testing.assert_allclose(b.params.permuted([1, 0]).mean_coeffs, a.params.mean_coeffs, rtol=1e-6, atol=1e-8)


def test_newton_steps_five_versus_fifty():
    compared = 0
    for seed in (16, 17, 18):
        data = sample(NP, 2000, seed=seed)
        spec = ModelSpec(K=3)
        start = initialize(data, spec, InitConfig(n_trials=10, seed=seed))
        try:
            few = fit(data, spec, start, FitConfig(newton_steps=5))
            many = fit(data, spec, start, FitConfig(newton_steps=50))
        except DegenerateComponent:
            continue
        assert abs(few.loglik - many.loglik) < 0.5
        compared += 1
    assert compared >= 2


def test_fit_fixed_stop_runs_all_iterations():
    data = sample(P, 200, seed=17)
    res = fit(data, ModelSpec(K=2), P, FitConfig(max_em_iters=10, stop="fixed"))
    assert res.n_iters == 10 and len(res.loglik_trace) == 11
    assert res.terminated_by == "max_iters"


def test_fit_rejects_mismatched_init():
    data = sample(P, 50, seed=0)
    with pytest.raises(ValueError):
        fit(data, ModelSpec(K=3), P)
    with pytest.raises(ValueError):
        fit(data, ModelSpec(K=2, cov_structure="cKK"), P)


def test_fit_result_json_round_trip():
    data = sample(P, 100, seed=1)
    res = fit(data, ModelSpec(K=2), P, FitConfig(max_em_iters=5))
    back = FitResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert back.loglik_trace == res.loglik_trace
    assert back.spec == res.spec
    np.testing.assert_array_equal(back.params.covs, res.params.covs)


def test_coefficient_bounds_respected():
    data = sample(P, 300, seed=18)
    spec = ModelSpec(K=2, T_W=5.0, T_mean=5.0)
    res = fit(data, spec, P, FitConfig(enforce_coeff_bounds=True, max_em_iters=30))
    assert np.abs(res.params.weight_coeffs).max() <= 5.0
    assert np.abs(res.params.mean_coeffs).max() <= 5.0
    assert_monotone(res.loglik_trace)
