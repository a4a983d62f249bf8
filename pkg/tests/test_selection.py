import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from condmix.exceptions import NoJump
from condmix.experiments import truth_density
from condmix.initialization import InitConfig
from condmix.model import ModelSpec, sample
from condmix.newton_em import FitConfig, fit
from condmix.selection import (
    dimension_path,
    fit_one,
    model_dim,
    penalized_criterion,
    select,
    select_from_fits,
    slope_heuristic,
)

from helpers import random_params

P = truth_density("P")


def test_model_dim_examples():
    assert model_dim(ModelSpec(K=2)) == 8
    assert model_dim(ModelSpec(K=1, weight_degree=0, mean_degree=0)) == 2
    assert model_dim(ModelSpec(K=3, p=2, weight_degree=2, mean_degree=2)) == 33


def test_model_dim_affine_family():
    assert [model_dim(ModelSpec(K=K)) for K in range(1, 6)] == [3, 8, 13, 18, 23]


def test_model_dim_brute_force_count(rng):
    for _ in range(50):
        K, d, p = (int(v) for v in rng.integers(1, 4, 3))
        wd, md = (int(v) for v in rng.integers(0, 4, 2))
        params = random_params(rng, K=K, d=d, p=p, weight_degree=wd, mean_degree=md)
        free_weights = params.weight_coeffs[1:].size
        free_means = params.mean_coeffs.size
        free_covs = sum(np.triu(np.ones((p, p))).sum() for _ in params.covs)
        spec = ModelSpec(K=K, d=d, p=p, weight_degree=wd, mean_degree=md)
        assert model_dim(spec) == free_weights + free_means + free_covs


def test_criterion_examples():
    spec = ModelSpec(K=2)
    assert penalized_criterion(-100.0, spec, 0.0) == 100.0
    assert penalized_criterion(-100.0, spec, 1.0) == 108.0
    assert penalized_criterion(-100.0, spec, 1.0, "dim_plus_xm") == 110.0
    n, C = 2000, 3.0
    expected = 100.0 + 0.5 * ((C + np.log(n)) * 8 + 2)
    assert penalized_criterion(-100.0, spec, 0.5, "theory", C=C, n=n) == pytest.approx(expected)


def test_criterion_aic_and_bic():
    spec, ll, n = ModelSpec(K=3), -512.25, 2000
    dim = model_dim(spec)
    aic = -2 * ll + 2 * dim
    bic = -2 * ll + np.log(n) * dim
    assert 2 * penalized_criterion(ll, spec, 1.0) == pytest.approx(aic)
    assert 2 * penalized_criterion(ll, spec, np.log(n) / 2) == pytest.approx(bic)


def test_criterion_errors():
    with pytest.raises(ValueError):
        penalized_criterion(-1.0, ModelSpec(K=1), 1.0, "theory", C=1.0)
    with pytest.raises(ValueError):
        penalized_criterion(-1.0, ModelSpec(K=1), 1.0, "aic")


def linear_toy(a, Ks=range(1, 7)):
    specs = {K: ModelSpec(K=K) for K in Ks}
    return {K: a * model_dim(specs[K]) for K in Ks}, specs


def test_slope_heuristic_linear_toy():
    lls, specs = linear_toy(0.6)
    grid = np.round(np.arange(0.01, 2.0, 0.01), 10)
    res = slope_heuristic(lls, specs, grid)
    assert res.kappa_hat == pytest.approx(0.6)
    assert res.kappa_prescribed == pytest.approx(1.2)
    dims = dict(res.dim_path)
    assert dims[0.59] == model_dim(specs[6])
    assert dims[0.6] == model_dim(specs[1])


def test_slope_heuristic_brute_force_path(rng):
    lls = {K: -1000.0 + 40 * np.log(K) + rng.normal() for K in range(1, 9)}
    specs = {K: ModelSpec(K=K) for K in lls}
    grid = np.logspace(-2, 1, 100)
    res = slope_heuristic(lls, specs, grid)
    brute = [model_dim(specs[min(lls, key=lambda K: (-lls[K] + k * model_dim(specs[K]), K))]) for k in grid]
    assert [dm for _, dm in res.dim_path] == brute
    drops = -np.diff(brute)
    assert res.kappa_hat == grid[int(np.argmax(drops)) + 1]


def test_slope_heuristic_no_jump():
    specs = {K: ModelSpec(K=K) for K in range(1, 5)}
    with pytest.raises(NoJump):
        slope_heuristic({K: -10.0 for K in specs}, specs)


def test_slope_heuristic_needs_three_dimensions():
    specs = {K: ModelSpec(K=K) for K in (1, 2)}
    with pytest.raises(ValueError):
        slope_heuristic({1: -10.0, 2: -5.0}, specs)
    specs = {K: ModelSpec(K=K) for K in (1, 2, 3)}
    with pytest.raises(ValueError):
        slope_heuristic({1: -10.0, 2: -5.0, 3: -1.0}, specs, [1.0, 0.5])


@given(st.lists(st.floats(-1e4, 0), min_size=3, max_size=12))
def test_selected_dimension_non_increasing_in_kappa(lls):
    fits = {K + 1: v for K, v in enumerate(lls)}
    specs = {K: ModelSpec(K=K) for K in fits}
    dims = [dm for _, dm in dimension_path(fits, specs, np.logspace(-3, 2, 80))]
    assert all(b <= a for a, b in zip(dims, dims[1:]))


@pytest.fixture(scope="module")
def small_selection():
    data = sample(P, 400, seed=8)
    return data, select(data, range(1, 5), init_cfg=InitConfig(n_trials=5, seed=1))


def test_chosen_k_is_argmin(small_selection):
    _, res = small_selection
    assert res.chosen_K == min(res.criterion, key=lambda K: (res.criterion[K], K))
    for K, f in res.fits.items():
        assert res.criterion[K] == pytest.approx(-f.loglik + model_dim(res.specs[K]))
    assert res.chosen_K == 2


def test_selection_json(small_selection):
    _, res = small_selection
    obj = json.loads(json.dumps(res.to_dict()))
    assert obj["chosen_K"] == res.chosen_K
    assert set(obj["fits"]) == {"1", "2", "3", "4"}
    assert res.dim_path_csv().startswith("kappa,dimension\n")
    assert json.loads(json.dumps(res.to_dict(include_params=False)))["fits"] == {}


def test_selection_invariant_under_relabeling(small_selection):
    data, res = small_selection
    relabeled = {}
    for K, f in res.fits.items():
        order = list(range(K))[::-1]
        refit = fit(data, res.specs[K], f.params.permuted(order), FitConfig(max_em_iters=0))
        relabeled[K] = refit
        assert refit.loglik == pytest.approx(f.loglik, abs=1e-8)
    again = select_from_fits(relabeled, res.specs, 1.0)
    assert again.chosen_K == res.chosen_K


def test_select_single_k():
    data = sample(P, 200, seed=9)
    res = select(data, [1], init_cfg=InitConfig(n_trials=2))
    assert res.chosen_K == 1
    assert res.kappa_hat is None


def test_select_slope_kappa(small_selection):
    _, res = small_selection
    again = select_from_fits(res.fits, res.specs, "slope")
    assert again.kappa_used == pytest.approx(2 * again.kappa_hat)


def test_select_empty_range():
    with pytest.raises(ValueError):
        select(sample(P, 50, seed=0), [])


def test_fit_one_deterministic():
    data = sample(P, 300, seed=10)
    cfg = InitConfig(n_trials=3, seed=4)
    a = fit_one(data, ModelSpec(K=2), cfg)
    b = fit_one(data, ModelSpec(K=2), cfg)
    assert a.loglik_trace == b.loglik_trace


def test_fit_one_fixed_mode_runs_final_steps():
    data = sample(P, 300, seed=10)
    res = fit_one(data, ModelSpec(K=2), InitConfig(n_trials=3, final_steps=10), FitConfig(stop="fixed"))
    assert res.n_iters == 10
