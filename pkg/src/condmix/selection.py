"""Penalized-likelihood selection of the number of components.

The criterion of a fitted model is ``-loglik + pen`` with one of

* ``dim_only``      pen = kappa * dim
* ``dim_plus_xm``   pen = kappa * (dim + K)
* ``theory``        pen = kappa * ((C + ln n) * dim + K)

``kappa`` is either given or calibrated by the slope heuristic: track the
dimension of the selected model along a kappa grid, locate the largest
drop at ``kappa_hat`` and use ``2 * kappa_hat``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .exceptions import CondMixError, DegenerateComponent, InitFailure, NoJump
from .initialization import InitConfig, initialize
from .model import Dataset, ModelSpec
from .newton_em import FitConfig, FitResult, fit

log = logging.getLogger(__name__)

MAX_RESTARTS = 10
DEFAULT_KAPPA_GRID = tuple(np.logspace(-2, 1, 100))

__all__ = [
    "ModelSpec",
    "SelectionResult",
    "SlopeHeuristicResult",
    "default_kappa_grid",
    "model_dim",
    "penalized_criterion",
    "select",
    "select_from_fits",
    "slope_heuristic",
]


def default_kappa_grid() -> np.ndarray:
    return np.array(DEFAULT_KAPPA_GRID)


def model_dim(spec: ModelSpec) -> int:
    """Free parameter count of a model with free covariances.

    ``(K - 1) * C(dW + d, d) + K * p * C(dM + d, d) + K * p (p + 1) / 2``.
    """
    K, d, p = spec.K, spec.d, spec.p
    return (
        (K - 1) * comb(spec.weight_degree + d, d)
        + K * p * comb(spec.mean_degree + d, d)
        + K * p * (p + 1) // 2
    )


def _penalty(dim: int, K: int, n: int, kappa: float, mode: str, C: float | None) -> float:
    if mode == "dim_only":
        return kappa * dim
    if mode == "dim_plus_xm":
        return kappa * (dim + K)
    if mode == "theory":
        if C is None:
            raise ValueError("theory penalty needs the constant C")
        return kappa * ((C + np.log(n)) * dim + K)
    raise ValueError(f"unknown penalty mode {mode!r}")


def penalized_criterion(
    fit_result: FitResult | float,
    spec: ModelSpec,
    kappa: float,
    penalty_mode: str = "dim_only",
    *,
    C: float | None = None,
    n: int | None = None,
) -> float:
    """``-loglik + pen(m)``; ``fit_result`` may also be a bare log-likelihood."""
    if isinstance(fit_result, FitResult):
        ll, n = fit_result.loglik, n or fit_result.n_obs
    else:
        ll = float(fit_result)
    if penalty_mode == "theory" and n is None:
        raise ValueError("theory penalty needs the sample size")
    return -ll + _penalty(model_dim(spec), spec.K, n or 1, kappa, penalty_mode, C)


def _argmin_K(crit: dict) -> int:
    # ties go to the smaller K
    return min(crit, key=lambda K: (crit[K], K))


@dataclass(frozen=True)
class SlopeHeuristicResult:
    kappa_hat: float
    kappa_prescribed: float
    dim_path: tuple  # ((kappa, dimension), ...)


def _logliks(fits: dict) -> dict:
    return {K: (f.loglik if isinstance(f, FitResult) else float(f)) for K, f in fits.items()}


def dimension_path(fits: dict, specs: dict, kappa_grid, penalty_mode="dim_only", C=None, n=None):
    lls = _logliks(fits)
    path = []
    for kappa in kappa_grid:
        crit = {K: penalized_criterion(lls[K], specs[K], kappa, penalty_mode, C=C, n=n) for K in lls}
        path.append((float(kappa), model_dim(specs[_argmin_K(crit)])))
    return tuple(path)


def slope_heuristic(fits: dict, specs: dict, kappa_grid=None) -> SlopeHeuristicResult:
    """Calibrate kappa from the largest drop of the selected dimension.

    ``fits`` maps K to a :class:`FitResult` (or a log-likelihood), ``specs``
    maps K to its :class:`ModelSpec`. ``kappa_hat`` is the first grid value
    after the largest downward jump (ties go to the smallest kappa).

    Raises
    ------
    NoJump
        If the selected dimension never changes along the grid.
    """
    grid = default_kappa_grid() if kappa_grid is None else np.asarray(kappa_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("kappa grid must be strictly increasing with at least two points")
    if len(fits) < 3 or len({model_dim(specs[K]) for K in fits}) < 3:
        raise ValueError("slope heuristic needs at least three models with three distinct dimensions")
    path = dimension_path(fits, specs, grid)
    dims = np.array([dm for _, dm in path])
    drops = dims[:-1] - dims[1:]
    if not np.any(drops > 0):
        raise NoJump("selected dimension is constant along the kappa grid")
    j = int(np.argmax(drops))
    kappa_hat = float(grid[j + 1])
    return SlopeHeuristicResult(kappa_hat, 2.0 * kappa_hat, path)


@dataclass(frozen=True)
class SelectionResult:
    fits: dict
    specs: dict
    criterion: dict
    kappa_used: float
    kappa_hat: float | None
    chosen_K: int
    dim_path: tuple
    penalty_mode: str = "dim_only"
    failures: dict = field(default_factory=dict)

    @property
    def chosen_fit(self) -> FitResult:
        return self.fits[self.chosen_K]

    def to_dict(self, include_params: bool = True) -> dict:
        return {
            "chosen_K": self.chosen_K,
            "kappa_used": self.kappa_used,
            "kappa_hat": self.kappa_hat,
            "penalty_mode": self.penalty_mode,
            "criterion": {str(K): v for K, v in sorted(self.criterion.items())},
            "dims": {str(K): model_dim(self.specs[K]) for K in sorted(self.fits)},
            "loglik": {str(K): f.loglik for K, f in sorted(self.fits.items())},
            "dim_path": [list(t) for t in self.dim_path],
            "failures": {str(K): msg for K, msg in sorted(self.failures.items())},
            "fits": {str(K): f.to_dict() for K, f in sorted(self.fits.items())} if include_params else {},
        }

    def dim_path_csv(self) -> str:
        return "kappa,dimension\n" + "".join(f"{k!r},{dm}\n" for k, dm in self.dim_path)


def fit_one(
    data: Dataset,
    spec: ModelSpec,
    init_cfg: InitConfig = InitConfig(),
    fit_cfg: FitConfig = FitConfig(),
) -> FitResult:
    """Initialize then fit one model, restarting from fresh seeds on degeneracy."""
    final_cfg = fit_cfg
    if fit_cfg.stop == "fixed":
        final_cfg = FitConfig(**{**fit_cfg.to_dict(), "max_em_iters": init_cfg.final_steps})
    last = None
    for restart in range(MAX_RESTARTS + 1):
        seed = int(np.random.SeedSequence([init_cfg.seed, spec.K, restart]).generate_state(1)[0])
        cfg = InitConfig(**{**init_cfg.to_dict(), "seed": seed})
        try:
            start = initialize(data, spec, cfg, fit_cfg)
            return fit(data, spec, start, final_cfg)
        except (DegenerateComponent, InitFailure) as exc:
            last = exc
            log.debug("K=%d restart %d after %s", spec.K, restart, exc)
    raise InitFailure(f"K={spec.K}: no successful fit after {MAX_RESTARTS} restarts ({last})")


def select_from_fits(
    fits: dict,
    specs: dict,
    kappa: float | str = 1.0,
    penalty_mode: str = "dim_only",
    *,
    C: float | None = None,
    kappa_grid=None,
    failures: dict | None = None,
) -> SelectionResult:
    """Apply the penalized criterion to already fitted models."""
    if not fits:
        raise CondMixError("no successful fit to select from")
    n = next(iter(fits.values())).n_obs
    grid = default_kappa_grid() if kappa_grid is None else np.asarray(kappa_grid, dtype=float)
    kappa_hat = None
    dim_path = ()
    slope_ok = len(fits) >= 3 and len({model_dim(specs[K]) for K in fits}) >= 3
    if slope_ok:
        try:
            sh = slope_heuristic(fits, specs, grid)
            kappa_hat, dim_path = sh.kappa_hat, sh.dim_path
        except NoJump:
            dim_path = dimension_path(fits, specs, grid)
    if kappa == "slope":
        if kappa_hat is None:
            log.warning("slope heuristic unavailable, falling back to kappa = 1")
            kappa_used = 1.0
        else:
            kappa_used = 2.0 * kappa_hat
    else:
        kappa_used = float(kappa)
    crit = {K: penalized_criterion(f, specs[K], kappa_used, penalty_mode, C=C, n=n) for K, f in fits.items()}
    return SelectionResult(
        dict(fits), dict(specs), crit, kappa_used, kappa_hat, _argmin_K(crit), dim_path, penalty_mode,
        dict(failures or {}),
    )


def select(
    data: Dataset,
    K_range,
    spec_template: ModelSpec | None = None,
    init_cfg: InitConfig = InitConfig(),
    fit_cfg: FitConfig = FitConfig(),
    *,
    kappa: float | str = 1.0,
    penalty_mode: str = "dim_only",
    C: float | None = None,
    kappa_grid=None,
) -> SelectionResult:
    """Fit every K in ``K_range`` and pick the minimizer of the criterion.

    ``kappa="slope"`` uses twice the slope-heuristic estimate. Failed fits
    are recorded in ``failures`` and left out.
    """
    K_range = list(K_range)
    if not K_range:
        raise ValueError("K_range must not be empty")
    template = spec_template or ModelSpec(K=1, d=data.d, p=data.p)
    fits, specs, failures = {}, {}, {}
    for K in K_range:
        spec = template.with_K(K)
        try:
            fits[K] = fit_one(data, spec, init_cfg, fit_cfg)
            specs[K] = spec
        except CondMixError as exc:
            failures[K] = str(exc)
            log.warning("fit failed for K=%d: %s", K, exc)
    if not fits:
        raise CondMixError(f"every fit failed: {failures}")
    return select_from_fits(
        fits, specs, kappa, penalty_mode, C=C, kappa_grid=kappa_grid, failures=failures
    )
