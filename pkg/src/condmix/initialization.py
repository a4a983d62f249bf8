"""Initialization strategies for Newton-EM (scalar covariate and response).

``regular``
    Repeated trials of: K random lines through pairs of observations,
    K-means along the Y axis around those lines, a short Newton-EM race.
    The trial with the largest raced log-likelihood wins.
``naive``
    A single draw of random lines with a pooled common variance.
``clever``
    Standardize (x, y), run K-means with ``overfactor * K`` clusters, fit a
    regression line per cluster with more than two points, then run the
    regular trials with lines drawn among those regression lines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2

from .exceptions import DegenerateComponent, InitFailure, TooFewPoints, UnsupportedDimension
from .model import Dataset, MixtureParams, ModelSpec
from .newton_em import FitConfig, fit, variance_floor
from .polybasis import basis_size

MAX_CONSECUTIVE_FAILURES = 10


@dataclass(frozen=True)
class InitConfig:
    strategy: str = "regular"
    n_trials: int = 50
    race_steps: int = 3
    final_steps: int = 10
    kmeans_overfactor: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("regular", "naive", "clever"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.n_trials < 1 or self.race_steps < 1:
            raise ValueError("n_trials and race_steps must be >= 1")
        if self.kmeans_overfactor < 1:
            raise ValueError("kmeans_overfactor must be >= 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    lines: np.ndarray  # (K, 2): intercept, slope
    variances: np.ndarray
    objective_trace: tuple
    n_iters: int


@dataclass(frozen=True)
class InitResult:
    params: MixtureParams
    trial_logliks: tuple  # nan for degenerate trials
    winner: int


def _require_scalar(data: Dataset):
    if data.d != 1 or data.p != 1:
        raise UnsupportedDimension("line-based initialization needs d = 1 and p = 1")


def _line_through(x, y, i, j):
    slope = (y[j] - y[i]) / (x[j] - x[i])
    return np.array([y[i] - slope * x[i], slope])


def random_lines(data: Dataset, K: int, rng) -> np.ndarray:
    """K lines, each through two distinct observations drawn at random.

    Points are drawn without replacement within a line but may be shared
    between lines. Pairs with equal x are redrawn (at most 100 times).
    Returns a ``(K, 2)`` array of (intercept, slope).
    """
    _require_scalar(data)
    if data.n < 2 * K:
        raise TooFewPoints(f"need at least {2 * K} points for {K} lines, got {data.n}")
    x, y = data.x[:, 0], data.y[:, 0]
    lines = np.empty((K, 2))
    for k in range(K):
        for _ in range(101):
            i, j = rng.choice(data.n, size=2, replace=False)
            if x[i] != x[j]:
                break
        else:
            raise TooFewPoints("could not find two points with distinct covariates")
        lines[k] = _line_through(x, y, i, j)
    return lines


def _ols_line(x, y):
    A = np.column_stack([np.ones_like(x), x])
    return np.linalg.lstsq(A, y, rcond=None)[0]


def _cluster_lines(x, y, labels, K, lines):
    """Least-squares line of every non-empty cluster, from per-cluster moments."""
    n_k = np.bincount(labels, minlength=K).astype(float)
    sx = np.bincount(labels, x, K)
    sy = np.bincount(labels, y, K)
    sxx = np.bincount(labels, x * x, K)
    sxy = np.bincount(labels, x * y, K)
    out = lines.copy()
    has = n_k > 0
    mx = np.divide(sx, n_k, out=np.zeros(K), where=has)
    my = np.divide(sy, n_k, out=np.zeros(K), where=has)
    vxx = sxx - n_k * mx * mx
    cxy = sxy - n_k * mx * my
    # clusters whose x spread vanishes get a flat line through their mean
    sloped = has & (vxx > 1e-12 * np.maximum(sxx, 1e-300))
    slope = np.divide(cxy, vxx, out=np.zeros(K), where=sloped)
    out[has, 1] = slope[has]
    out[has, 0] = my[has] - slope[has] * mx[has]
    return out


def _nearest(lines, x, y):
    """Index of the vertically nearest line and its squared residual.

    Ties go to the lowest index, as with ``argmin``.
    """
    best = (y - lines[0, 0] - lines[0, 1] * x) ** 2
    labels = np.zeros(x.size, dtype=np.intp)
    for k in range(1, lines.shape[0]):
        sq = (y - lines[k, 0] - lines[k, 1] * x) ** 2
        closer = sq < best
        labels[closer] = k
        np.minimum(best, sq, out=best)
    return labels, best


def y_axis_kmeans(data: Dataset, lines, max_iters: int = 20, *, rng=None, floor: float = 0.0) -> KMeansResult:
    """Lloyd iterations with the vertical distance ``|y_i - line_k(x_i)|``.

    After each assignment every line is refit by least squares on its
    cluster. An empty cluster gets a new line through two random points of
    the largest cluster. Stops at an assignment fixed point or after
    ``max_iters`` rounds; returns floored per-cluster residual variances.
    """
    _require_scalar(data)
    rng = np.random.default_rng(0) if rng is None else rng
    x, y = data.x[:, 0], data.y[:, 0]
    lines = np.array(lines, dtype=float).reshape(-1, 2)
    K = lines.shape[0]
    labels = None
    objective = []
    it = 0
    for it in range(1, max_iters + 1):
        new_labels, best = _nearest(lines, x, y)
        objective.append(float(np.sum(best)))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=K)
        lines = _cluster_lines(x, y, labels, K, lines)
        for k in np.flatnonzero(counts == 0):
            big = np.flatnonzero(labels == np.argmax(counts))
            if big.size >= 2:
                i, j = rng.choice(big, size=2, replace=False)
                if x[i] != x[j]:
                    lines[k] = _line_through(x, y, i, j)
    if labels is None:
        labels = _nearest(lines, x, y)[0]
    res = y - lines[labels, 0] - lines[labels, 1] * x
    counts = np.bincount(labels, minlength=K)
    sse = np.bincount(labels, res * res, K)
    variances = np.maximum(np.divide(sse, counts, out=np.zeros(K), where=counts > 0), floor)
    return KMeansResult(labels, lines, variances, tuple(objective), it)


def params_from_lines(lines, variances, spec: ModelSpec, xbar: float = 0.5) -> MixtureParams:
    """Zero weights and degree-capped means built from lines.

    Higher-degree mean coefficients start at zero; with constant means the
    line value at ``xbar`` is used.
    """
    K = spec.K
    bm = basis_size(1, spec.mean_degree)
    mc = np.zeros((K, 1, bm))
    lines = np.asarray(lines, dtype=float)
    if spec.mean_degree == 0:
        mc[:, 0, 0] = lines[:, 0] + lines[:, 1] * xbar
    else:
        mc[:, 0, :2] = lines
    wc = np.zeros((K, basis_size(1, spec.weight_degree)))
    covs = np.asarray(variances, dtype=float).reshape(K, 1, 1)
    return MixtureParams(1, spec.weight_degree, spec.mean_degree, wc, mc, covs)


def _trial_rng(seed: int, trial: int):
    return np.random.default_rng([seed, trial])


def _race(data, spec, params, race_steps, fit_cfg):
    cfg = FitConfig(
        max_em_iters=race_steps,
        newton_steps=fit_cfg.newton_steps,
        variance_floor=fit_cfg.variance_floor,
        alpha=fit_cfg.alpha,
        enforce_coeff_bounds=fit_cfg.enforce_coeff_bounds,
        stop="fixed",
    )
    res = fit(data, spec, params, cfg)
    return res.params, res.loglik


def _clever_candidates(data: Dataset, spec: ModelSpec, cfg: InitConfig) -> np.ndarray:
    x, y = data.x[:, 0], data.y[:, 0]
    sx = x.std(ddof=1) or 1.0
    sy = y.std(ddof=1) or 1.0
    pts = np.column_stack([x / sx, y / sy])
    k = min(spec.K * cfg.kmeans_overfactor, data.n)
    _, labels = kmeans2(pts, k, minit="++", seed=np.random.default_rng([cfg.seed, 1_000_003]))
    cands = []
    for c in range(k):
        members = labels == c
        if members.sum() > 2 and np.ptp(x[members]) > 0:
            cands.append(_ols_line(x[members], y[members]))
    return np.array(cands).reshape(-1, 2)


def run_trials(
    data: Dataset, spec: ModelSpec, cfg: InitConfig = InitConfig(), fit_cfg: FitConfig = FitConfig()
) -> InitResult:
    """Run the configured strategy and report every trial's raced log-likelihood."""
    _require_scalar(data)
    if spec.d != 1 or spec.p != 1:
        raise UnsupportedDimension("line-based initialization needs d = 1 and p = 1")
    floor = variance_floor(fit_cfg.variance_floor, data, spec.K, fit_cfg.alpha)
    xbar = float(data.x.mean())
    x, y = data.x[:, 0], data.y[:, 0]

    if cfg.strategy == "naive":
        rng = _trial_rng(cfg.seed, 0)
        lines = random_lines(data, spec.K, rng)
        pooled = max(float(np.mean(_nearest(lines, x, y)[1])), floor)
        start = params_from_lines(lines, np.full(spec.K, pooled), spec, xbar)
        raced, ll = _race(data, spec, start, cfg.race_steps, fit_cfg)
        return InitResult(raced, (ll,), 0)

    candidates = _clever_candidates(data, spec, cfg) if cfg.strategy == "clever" else None
    best, best_ll = None, -np.inf
    lls = []
    failures = 0
    for trial in range(cfg.n_trials):
        rng = _trial_rng(cfg.seed, trial)
        try:
            if candidates is not None and len(candidates) > 0:
                pick = rng.choice(len(candidates), size=spec.K, replace=len(candidates) < spec.K)
                lines = candidates[pick]
            else:
                lines = random_lines(data, spec.K, rng)
            km = y_axis_kmeans(data, lines, rng=rng, floor=floor)
            start = params_from_lines(km.lines, km.variances, spec, xbar)
            raced, ll = _race(data, spec, start, cfg.race_steps, fit_cfg)
        except (DegenerateComponent, np.linalg.LinAlgError):
            lls.append(float("nan"))
            failures += 1
            if failures >= MAX_CONSECUTIVE_FAILURES:
                raise InitFailure(f"{failures} consecutive degenerate trials")
            continue
        failures = 0
        lls.append(ll)
        if ll > best_ll:
            best, best_ll, winner = raced, ll, trial
    if best is None:
        raise InitFailure("every trial degenerated")
    return InitResult(best, tuple(lls), winner)


def initialize(
    data: Dataset, spec: ModelSpec, cfg: InitConfig = InitConfig(), fit_cfg: FitConfig = FitConfig()
) -> MixtureParams:
    """Starting parameters for the final Newton-EM run."""
    return run_trials(data, spec, cfg, fit_cfg).params
