from fractions import Fraction
from math import comb, log, pi, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from condmix.exceptions import BracketViolated, InvalidBox, PreconditionViolated
from condmix.model import CovarianceDecomp, ModelSpec
from condmix.polybasis import PolyFn
from condmix.selection import model_dim
from condmix.theory import (
    BracketComponent,
    bracket_size_sq,
    delta_sigma_cap,
    entropy_constants,
    gamma_kappa,
    general_gaussian_constant,
    kraft_constant,
    kraft_partial_sum,
    milder_penalty,
    random_bracket_pair,
    run_bracket_trials,
    sigma_m_bound,
    structure_dims,
    theoretical_penalty,
    verify_gaussian_bracket,
)

# entropy constants


def test_polynomial_entropy_constants():
    c = entropy_constants(ModelSpec(K=2, T_W=10.0, T_mean=10.0), K_max=10)
    assert c.C_W == pytest.approx(log(sqrt(2) + 20), rel=1e-12)
    assert c.C_Y == pytest.approx(log(sqrt(2) + 20), rel=1e-12)
    assert c.C_W == pytest.approx(3.0638, abs=5e-4)


def test_mean_constant_scales_with_response_dimension():
    c = entropy_constants(ModelSpec(K=2, p=3, mean_degree=2, T_mean=4.0), K_max=5)
    assert c.C_Y == pytest.approx(log(sqrt(2) + sqrt(3) * comb(3, 1) * 4.0), rel=1e-12)


def gamma_rational(kappa: Fraction) -> Fraction:
    return 25 * (kappa - Fraction(1, 2)) / (49 * (1 + 2 * kappa / 5))


def test_gamma_kappa_rational_oracle():
    k = Fraction(17, 29)
    assert gamma_rational(k) == 25 * (Fraction(17, 29) - Fraction(1, 2)) / (49 * (1 + Fraction(34, 145)))
    assert gamma_kappa(17 / 29) == pytest.approx(float(gamma_rational(k)), rel=1e-12)
    for num, den in [(1, 1), (3, 2), (7, 5), (10, 1)]:
        assert gamma_kappa(num / den) == pytest.approx(float(gamma_rational(Fraction(num, den))), rel=1e-12)


def test_gamma_kappa_domain():
    with pytest.raises(ValueError):
        gamma_kappa(0.5)


def test_derived_constants_are_consistent():
    c = entropy_constants(ModelSpec(K=2), K_max=20)
    assert c.frakC == pytest.approx(c.C_W + log(20 * sqrt(19) / (3 * sqrt(3))) + c.C1, rel=1e-12)
    assert c.C_penalty == pytest.approx(2 * (sqrt(c.frakC) + sqrt(pi)) ** 2, rel=1e-12)
    assert all(np.isfinite(v) for v in (c.C_W, c.C_Y, c.C1, c.frakC, c.C_penalty, c.gamma_kappa))


def test_universal_constant_shifts_c1():
    for p in (1, 2, 3):
        spec = ModelSpec(K=2, p=p)
        a = entropy_constants(spec, 5, c_U=1.0)
        b = entropy_constants(spec, 5, c_U=7.0)
        assert b.C1 - a.C1 == pytest.approx(2 * log(7.0) / (p * (p + 1)), rel=1e-10)


@given(st.floats(0.5, 100), st.floats(0.01, 50))
def test_constants_monotone_in_bound(T, extra):
    lo = entropy_constants(ModelSpec(K=2, T_W=T), 10)
    hi = entropy_constants(ModelSpec(K=2, T_W=T + extra), 10)
    assert hi.C_W > lo.C_W


@given(st.integers(2, 200), st.integers(1, 50))
def test_constants_monotone_in_kmax(K_max, extra):
    spec = ModelSpec(K=2)
    assert entropy_constants(spec, K_max + extra).frakC > entropy_constants(spec, K_max).frakC


def test_invalid_box():
    spec = ModelSpec(K=2)
    object.__setattr__(spec, "box", (2.0, 1.0, 0.5, 2.0))
    with pytest.raises(InvalidBox):
        entropy_constants(spec, 5)
    with pytest.raises(ValueError):
        entropy_constants(ModelSpec(K=2), 1)


def test_structure_dims():
    spec = ModelSpec(K=3, p=2)
    dims = structure_dims(spec)
    assert (dims.Z_L, dims.Z_D, dims.Z_A) == (3, 3, 3)
    assert dims.Z_mean == 3 * 2 * 2
    assert dims.D_script == dims.Z_mean + 3 + 1 * 3 + 1 * 3
    common = structure_dims(ModelSpec(K=3, p=2, cov_structure="c0K"))
    assert (common.Z_L, common.Z_D, common.Z_A) == (1, 0, 3)
    # free structure: D_script equals the Gaussian part of the model dimension
    for p in (1, 2, 3):
        s = ModelSpec(K=4, p=p)
        assert structure_dims(s).D_script == model_dim(s) - (s.K - 1) * 2


def test_general_constant_finite():
    for tags in ("KKK", "cKK", "ccc", "K0c"):
        dims, C = general_gaussian_constant(ModelSpec(K=3, p=2, cov_structure=tags))
        assert np.isfinite(C) and dims.D_script > 0


# sigma_m


def phi_over_sigma(s, D, C):
    return sqrt(D) * (sqrt(C) + sqrt(pi) + sqrt(log(1 / min(s, 1))))


def test_sigma_root_residual():
    res = sigma_m_bound(8, 5.0, 2000)
    assert abs(phi_over_sigma(res.sigma, 8, 5.0) - sqrt(2000) * res.sigma) < 1e-9 * sqrt(2000) * res.sigma


def test_sigma_bound_example():
    res = sigma_m_bound(8, 5.0, 2000)
    a = (sqrt(5) + sqrt(pi)) ** 2
    assert res.bound == pytest.approx(8 * (2 * a + max(log(2000 / (a * 8)), 0.0)), rel=1e-12)
    assert res.n_sigma_sq <= res.bound


def test_sigma_decreases_with_n():
    assert sigma_m_bound(8, 5.0, 8000).sigma < sigma_m_bound(8, 5.0, 2000).sigma


def test_sigma_bound_random_triples(rng):
    for _ in range(1000):
        D = int(rng.integers(1, 500))
        C = float(np.exp(rng.uniform(-5, 5)))
        n = int(np.exp(rng.uniform(0, 14)))
        res = sigma_m_bound(D, C, n)
        assert res.n_sigma_sq <= res.bound


# penalties


def test_penalty_examples():
    spec = ModelSpec(K=2)
    c = entropy_constants(spec, 20)
    assert theoretical_penalty(spec, 2000, c, 0.0) == 0.0
    assert theoretical_penalty(spec, 2000, c) == pytest.approx((c.C_penalty + log(2000)) * 8 + 2)
    a = (sqrt(c.frakC) + sqrt(pi)) ** 2
    assert milder_penalty(spec, 2000, c) == pytest.approx(8 * (2 * a + max(log(2000 / (a * 8)), 0)) + 2)


@given(st.integers(1, 20), st.integers(1, 3), st.integers(0, 3), st.integers(1, 10**6), st.floats(0, 5))
def test_theoretical_penalty_dominates_log_term(K, p, degree, n, kappa):
    spec = ModelSpec(K=K, p=p, weight_degree=degree, mean_degree=degree)
    c = entropy_constants(spec, max(K, 2))
    assert theoretical_penalty(spec, n, c, kappa) >= kappa * log(n) * model_dim(spec)


def test_kraft_sum():
    assert kraft_constant() == pytest.approx(0.5819767068693265, rel=1e-15)
    partial = [kraft_partial_sum(K) for K in range(1, 60)]
    assert all(a < b for a, b in zip(partial[:30], partial[1:30]))
    assert all(a <= b for a, b in zip(partial, partial[1:]))
    # partial sums stay below the limit up to float round-off
    assert all(v <= kraft_constant() * (1 + 1e-15) for v in partial)
    assert kraft_constant() - partial[-1] < 1e-15


# Gaussian brackets


def component(mean_coeffs, L, D=None, A=None):
    p = len(mean_coeffs)
    D = np.eye(p) if D is None else D
    A = np.ones(p) if A is None else A
    return BracketComponent(tuple(PolyFn(1, 1, c) for c in mean_coeffs), CovarianceDecomp(L, D, A))


@pytest.mark.parametrize("p", [1, 2, 3])
def test_bracket_size_below_target_on_delta_grid(p):
    for delta in np.linspace(1e-3, sqrt(2), 50):
        cap = delta_sigma_cap(delta, 1.0, p)
        for ds in (cap, 0.5 * cap, 0.01 * cap):
            assert bracket_size_sq(ds, 1.0, p) <= (delta / 5) ** 2


@given(st.floats(0.01, 1.0), st.floats(0.6, 3.0), st.floats(0.2, 3.0))
def test_bracket_size_matches_quadrature(ds, kappa, var):
    a, b = 1 + kappa * ds, 1 + ds
    lo = lambda y: stats.norm.pdf(y, 0, np.sqrt(var / b)) / a
    hi = lambda y: stats.norm.pdf(y, 0, np.sqrt(var * b)) * a
    quad = integrate.quad(lambda y: (np.sqrt(lo(y)) - np.sqrt(hi(y))) ** 2, -np.inf, np.inf, epsabs=1e-13)[0]
    assert bracket_size_sq(ds, kappa, 1) == pytest.approx(quad, abs=1e-9)


def test_exact_approximation_is_bracketed():
    true = component([[0.3, -1.0]], 1.2)
    rep = verify_gaussian_bracket(true, true, 0.5)
    assert rep.ok and rep.containment_checked
    assert rep.n_points >= 20 * 10_000
    assert rep.delta_sigma == pytest.approx(delta_sigma_cap(0.5, 1.0, 1))


def test_exact_approximation_bivariate():
    D = np.array([[np.cos(0.4), -np.sin(0.4)], [np.sin(0.4), np.cos(0.4)]])
    true = component([[0.3, -1.0], [0.0, 0.5]], 1.0, D, np.array([1.5, 1 / 1.5]))
    assert verify_gaussian_bracket(true, true, 0.5, box=(0.5, 2.0, 0.5, 2.0)).ok


def test_random_admissible_instances_have_no_violation():
    assert run_bracket_trials(30, p=1, seed=5).violations == 0
    res = run_bracket_trials(10, p=2, seed=5)
    assert res.violations == 0 and res.precondition_failures == 0 and res.size_failures == 0


def test_random_pairs_meet_preconditions(rng):
    for p in (1, 2):
        for _ in range(20):
            true, approx, box = random_bracket_pair(rng, 0.5, 1.0, p)
            rep = verify_gaussian_bracket(true, approx, 0.5, box=box, n_y=401)
            assert not rep.failed


def test_negative_control_breaks_containment():
    res = run_bracket_trials(10, p=1, seed=6, mean_gap_factor=10.0)
    assert res.violations >= 1
    assert res.precondition_failures == 10


def test_precondition_and_violation_errors(rng):
    true, approx, box = random_bracket_pair(rng, 0.5, 1.0, 1, mean_gap_factor=10.0)
    with pytest.raises(PreconditionViolated):
        verify_gaussian_bracket(true, approx, 0.5, box=box)
    with pytest.raises(BracketViolated):
        verify_gaussian_bracket(true, approx, 0.5, box=box, enforce_preconditions=False, raise_on_violation=True)
    with pytest.raises(PreconditionViolated):
        verify_gaussian_bracket(true, true, 2.0, box=box)


def test_high_dimension_checks_size_only():
    true = component([[0, 0]] * 3, 1.0)
    rep = verify_gaussian_bracket(true, true, 0.5, box=(0.5, 2.0, 0.5, 2.0))
    assert not rep.containment_checked and rep.size_ok
