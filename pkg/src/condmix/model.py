"""Mixtures of Gaussian regressions with logistic (softmax) weights.

The conditional density is

    s(y | x) = sum_k pi_k(x) N(y; mean_k(x), cov_k),
    pi_k(x)  = exp(w_k(x)) / sum_l exp(w_l(x)),

with polynomial ``w_k`` and polynomial mean coordinates. ``w_1`` is pinned to
zero for identifiability. All mixture arithmetic is done in log space.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from math import comb
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import DomainError, NotSPD
from .polybasis import DOMAIN_TOL, PolyFn, as_points, basis_size, design_matrix

LOG_2PI = float(np.log(2.0 * np.pi))


def row_max(a: np.ndarray) -> np.ndarray:
    """Row maxima of a 2-D array.

    Elementwise over columns: numpy's short-axis reductions are several
    times slower for the tall, narrow arrays used here.
    """
    m = a[:, 0].copy()
    for k in range(1, a.shape[1]):
        np.maximum(m, a[:, k], out=m)
    return m


def row_sum(a: np.ndarray) -> np.ndarray:
    """Row sums of a 2-D array (as a matrix-vector product)."""
    return a @ np.ones(a.shape[1])


def logsumexp(a: np.ndarray, axis: int = -1, keepdims: bool = False) -> np.ndarray:
    """Stable ``log(sum(exp(a)))`` along ``axis`` for finite inputs."""
    if a.ndim == 2 and axis in (1, -1) and a.shape[1] > 0:
        m = row_max(a)
        out = m + np.log(row_sum(np.exp(a - m[:, None])))
        return out[:, None] if keepdims else out
    m = a.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """``n`` observations: covariates ``x`` in [0, 1]^d and responses ``y`` in R^p."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise ValueError(f"x and y must have the same positive length, got {x.shape[0]} and {y.shape[0]}")
        if x.min() < -DOMAIN_TOL or x.max() > 1.0 + DOMAIN_TOL:
            raise DomainError("covariates must lie in [0, 1]^d")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    def to_csv(self, path=None) -> str:
        """Write ``x1..xd,y1..yp`` rows with round-trip float formatting."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(self.d)] + [f"y{j + 1}" for j in range(self.p)])
        for xi, yi in zip(self.x, self.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "Dataset":
        if isinstance(path_or_text, str) and "\n" in path_or_text:
            text = path_or_text
        else:
            with open(path_or_text, newline="") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        xcols = [i for i, h in enumerate(header) if h.strip().startswith("x")]
        ycols = [i for i, h in enumerate(header) if h.strip().startswith("y")]
        if not xcols or not ycols:
            raise ValueError("CSV header must contain x1..xd and y1..yp columns")
        arr = np.array([[float(v) for v in r] for r in body], dtype=float)
        return cls(arr[:, xcols], arr[:, ycols])


# ---------------------------------------------------------------------------
# Model index
# ---------------------------------------------------------------------------

COV_TAGS = ("0", "c", "K")


@dataclass(frozen=True)
class ModelSpec:
    """One model of the collection.

    ``cov_structure`` holds the tags of (volume, rotation, shape) in
    ``{"0", "c", "K"}`` (known, common, free per component). Fitting only
    supports the free structure ``"KKK"``; the other tags feed the entropy
    dimension counts. ``box`` is ``(L_minus, L_plus, lambda_minus, lambda_plus)``.
    """

    K: int
    weight_degree: int = 1
    mean_degree: int = 1
    d: int = 1
    p: int = 1
    T_W: float = 10.0
    T_mean: float = 10.0
    cov_structure: str = "KKK"
    box: tuple = (1e-3, 1e3, 0.1, 10.0)

    def __post_init__(self):
        if self.K < 1 or self.d < 1 or self.p < 1:
            raise ValueError("K, d and p must be positive")
        if self.weight_degree < 0 or self.mean_degree < 0:
            raise ValueError("degrees must be non-negative")
        if self.T_W <= 0 or self.T_mean <= 0:
            raise ValueError("coefficient bounds must be positive")
        if len(self.cov_structure) != 3 or any(c not in COV_TAGS for c in self.cov_structure):
            raise ValueError(f"cov_structure must be three tags from {COV_TAGS}")
        L_lo, L_hi, lam_lo, lam_hi = (float(v) for v in self.box)
        if min(L_lo, L_hi, lam_lo, lam_hi) <= 0 or L_lo > L_hi or lam_lo > lam_hi:
            raise ValueError(f"invalid box {self.box}")
        object.__setattr__(self, "box", (L_lo, L_hi, lam_lo, lam_hi))

    def with_K(self, K: int) -> "ModelSpec":
        return replace(self, K=K)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "weight_degree": self.weight_degree,
            "mean_degree": self.mean_degree,
            "d": self.d,
            "p": self.p,
            "T_W": self.T_W,
            "T_mean": self.T_mean,
            "cov_structure": self.cov_structure,
            "box": list(self.box),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelSpec":
        obj = dict(obj)
        if "box" in obj:
            obj["box"] = tuple(obj["box"])
        return cls(**obj)


# ---------------------------------------------------------------------------
# Covariance decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceDecomp:
    """``cov = L * D @ diag(A) @ D.T`` with ``det(A) = 1`` and ``D`` a rotation."""

    L: float
    D: np.ndarray
    A: np.ndarray

    @classmethod
    def from_matrix(cls, cov) -> "CovarianceDecomp":
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        vals, vecs = np.linalg.eigh(cov)
        if vals[0] <= 0:
            raise NotSPD("covariance has non-positive eigenvalues")
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        if np.linalg.det(vecs) < 0:
            vecs[:, -1] = -vecs[:, -1]
        L = float(np.exp(np.mean(np.log(vals))))
        return cls(L, vecs, vals / L)

    def to_matrix(self) -> np.ndarray:
        D = np.asarray(self.D)
        return self.L * (D * np.asarray(self.A)[None, :]) @ D.T


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureParams:
    """Full parameter set of one conditional density.

    Attributes
    ----------
    weight_coeffs : (K, bw) array
        Coefficients of ``w_1..w_K``; row 0 is identically zero.
    mean_coeffs : (K, p, bm) array
        Coefficients of each mean coordinate.
    covs : (K, p, p) array
        Component covariance matrices.
    """

    d: int
    weight_degree: int
    mean_degree: int
    weight_coeffs: np.ndarray
    mean_coeffs: np.ndarray
    covs: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        wc = np.array(self.weight_coeffs, dtype=float)
        mc = np.array(self.mean_coeffs, dtype=float)
        cv = np.array(self.covs, dtype=float)
        K = wc.shape[0]
        if wc.shape != (K, basis_size(self.d, self.weight_degree)):
            raise ValueError(f"weight_coeffs has shape {wc.shape}")
        if mc.ndim != 3 or mc.shape[0] != K or mc.shape[2] != basis_size(self.d, self.mean_degree):
            raise ValueError(f"mean_coeffs has shape {mc.shape}")
        p = mc.shape[1]
        if cv.shape != (K, p, p):
            raise ValueError(f"covs has shape {cv.shape}, expected {(K, p, p)}")
        if np.any(wc[0] != 0.0):
            raise ValueError("the first weight polynomial must be identically zero")
        cv = 0.5 * (cv + np.transpose(cv, (0, 2, 1)))
        try:
            chol = np.linalg.cholesky(cv)
        except np.linalg.LinAlgError as exc:
            raise NotSPD("component covariance is not SPD") from exc
        for a in (wc, mc, cv, chol):
            a.setflags(write=False)
        object.__setattr__(self, "weight_coeffs", wc)
        object.__setattr__(self, "mean_coeffs", mc)
        object.__setattr__(self, "covs", cv)
        object.__setattr__(self, "_chol", chol)

    @property
    def K(self) -> int:
        return self.weight_coeffs.shape[0]

    @property
    def p(self) -> int:
        return self.mean_coeffs.shape[1]

    @property
    def weights(self) -> tuple:
        return tuple(PolyFn(self.d, self.weight_degree, c) for c in self.weight_coeffs)

    @property
    def means(self) -> tuple:
        return tuple(tuple(PolyFn(self.d, self.mean_degree, c) for c in comp) for comp in self.mean_coeffs)

    def decomp(self, k: int) -> CovarianceDecomp:
        return CovarianceDecomp.from_matrix(self.covs[k])

    def replace(self, **changes) -> "MixtureParams":
        return replace(self, **changes)

    def permuted(self, order) -> "MixtureParams":
        """Relabel components so that new component ``j`` is old ``order[j]``.

        Weights are re-pinned by subtracting the new first weight from all
        of them, which leaves every ``pi_k(x)`` unchanged.
        """
        order = list(order)
        wc = self.weight_coeffs[order]
        wc = wc - wc[0]
        return MixtureParams(
            self.d, self.weight_degree, self.mean_degree, wc, self.mean_coeffs[order], self.covs[order]
        )

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "d": self.d,
            "p": self.p,
            "weight_degree": self.weight_degree,
            "mean_degree": self.mean_degree,
            "weights": [pf.to_dict() for pf in self.weights],
            "means": [[pf.to_dict() for pf in comp] for comp in self.means],
            "covs": self.covs.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MixtureParams":
        wc = np.array([w["coeffs"] for w in obj["weights"]], dtype=float)
        mc = np.array([[m["coeffs"] for m in comp] for comp in obj["means"]], dtype=float)
        return cls(int(obj["d"]), int(obj["weight_degree"]), int(obj["mean_degree"]), wc, mc, obj["covs"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    # Vectorised evaluation on rows of (X, Y), used by the divergence estimators.
    def logpdf(self, X, Y) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        Y = np.asarray(Y, dtype=float).reshape(-1, self.p)
        return logsumexp(joint_log_terms(self, X, Y), axis=1)

    def sample_y(self, X, rng) -> np.ndarray:
        return _sample_y(self, np.asarray(X, dtype=float).reshape(-1, self.d), rng)


def make_params(
    weights, means, covs, *, d: int = 1, weight_degree: int | None = None, mean_degree: int | None = None
) -> MixtureParams:
    """Convenience constructor from nested coefficient lists.

    ``weights`` lists K coefficient vectors (first must be zero), ``means``
    lists K entries of p coefficient vectors (a bare vector is read as p=1),
    ``covs`` lists K covariances (scalars are read as 1x1 variances).
    """
    wc = np.atleast_2d(np.asarray(weights, dtype=float))
    K = wc.shape[0]
    mc = np.asarray(means, dtype=float)
    if mc.ndim == 2:
        mc = mc[:, None, :]
    p = mc.shape[1]
    cv = np.asarray(covs, dtype=float)
    if cv.ndim == 1:
        cv = cv.reshape(K, 1, 1)
    wd = weight_degree if weight_degree is not None else _degree_from_size(d, wc.shape[1])
    md = mean_degree if mean_degree is not None else _degree_from_size(d, mc.shape[2])
    return MixtureParams(d, wd, md, wc, mc, cv.reshape(K, p, p))


def _degree_from_size(d: int, size: int) -> int:
    D = 0
    while comb(D + d, d) < size:
        D += 1
    if comb(D + d, d) != size:
        raise ValueError(f"{size} coefficients do not match any degree in dimension {d}")
    return D


# ---------------------------------------------------------------------------
# Vectorised kernels
# ---------------------------------------------------------------------------


def gate_logits(params: MixtureParams, Bw: np.ndarray) -> np.ndarray:
    """``(n, K)`` weight-function values from a weight design matrix."""
    return Bw @ params.weight_coeffs.T


def log_softmax(logits: np.ndarray) -> np.ndarray:
    return logits - logsumexp(logits, axis=1, keepdims=True)


def component_means(params: MixtureParams, Bm: np.ndarray) -> np.ndarray:
    """``(n, K, p)`` component means from a mean design matrix."""
    if params.p == 1:
        return (Bm @ params.mean_coeffs[:, 0, :].T)[:, :, None]
    return np.einsum("nb,kpb->nkp", Bm, params.mean_coeffs)


def component_logpdf(params: MixtureParams, Y: np.ndarray, means: np.ndarray) -> np.ndarray:
    """``(n, K)`` Gaussian log densities of each response under each component."""
    n, K, p = means.shape
    out = np.empty((n, K))
    if p == 1:
        var = params.covs[:, 0, 0]
        r = Y[:, 0:1] - means[:, :, 0]
        r *= r
        r *= (-0.5 / var)[None, :]
        out[:] = r - 0.5 * (LOG_2PI + np.log(var))[None, :]
        return out
    for k in range(K):
        L = params._chol[k]
        z = solve_triangular(L, (Y - means[:, k, :]).T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        out[:, k] = -0.5 * (p * LOG_2PI + logdet + np.sum(z * z, axis=0))
    return out


def joint_log_terms(params: MixtureParams, X: np.ndarray, Y: np.ndarray, Bw=None, Bm=None) -> np.ndarray:
    """``log pi_k(x_i) + log N(y_i; mean_k(x_i), cov_k)`` as an ``(n, K)`` array."""
    if Bw is None:
        Bw = design_matrix(params.d, params.weight_degree, X)
    if Bm is None:
        Bm = design_matrix(params.d, params.mean_degree, X)
    return log_softmax(gate_logits(params, Bw)) + component_logpdf(params, Y, component_means(params, Bm))


def loglik(params: MixtureParams, data: Dataset) -> float:
    """Observed-data log-likelihood ``sum_i log s(y_i | x_i)``."""
    return float(np.sum(logsumexp(joint_log_terms(params, data.x, data.y), axis=1)))


# ---------------------------------------------------------------------------
# Point-wise operations
# ---------------------------------------------------------------------------


def log_weights(params: MixtureParams, x) -> np.ndarray:
    """``log pi_k(x)`` for one point (shape ``(K,)``) or for each row of ``x``."""
    pts, single = as_points(x, params.d)
    lw = log_softmax(gate_logits(params, design_matrix(params.d, params.weight_degree, pts)))
    return lw[0] if single else lw


def log_gaussian(y, mean, cov) -> float:
    """Exact Gaussian log density through a Cholesky factor."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    p = y.shape[0]
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotSPD("covariance is not SPD") from exc
    z = solve_triangular(L, y - mean, lower=True)
    return float(-0.5 * (p * LOG_2PI + 2.0 * np.sum(np.log(np.diag(L))) + z @ z))


def _point_terms(params: MixtureParams, x, y):
    pts, single = as_points(x, params.d)
    Y = np.asarray(y, dtype=float).reshape(pts.shape[0], params.p)
    return joint_log_terms(params, pts, Y), single


def log_density(params: MixtureParams, x, y):
    """``log s(y | x)`` by log-sum-exp over components."""
    terms, single = _point_terms(params, x, y)
    out = logsumexp(terms, axis=1)
    return float(out[0]) if single else out


def responsibilities(params: MixtureParams, x, y) -> np.ndarray:
    """Posterior class probabilities ``tau_k`` of one observation (or of each row)."""
    terms, single = _point_terms(params, x, y)
    tau = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
    return tau[0] if single else tau


def uniform_x_sampler(d: int) -> Callable:
    def draw(rng, n):
        return rng.random((n, d))

    return draw


def _sample_y(params: MixtureParams, X: np.ndarray, rng, return_labels: bool = False):
    n = X.shape[0]
    probs = np.exp(log_weights(params, X))
    u = rng.random(n)
    cls = np.minimum((u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1), params.K - 1)
    means = component_means(params, design_matrix(params.d, params.mean_degree, X))
    z = rng.standard_normal((n, params.p))
    noise = np.einsum("npq,nq->np", params._chol[cls], z)
    Y = means[np.arange(n), cls] + noise
    return (Y, cls) if return_labels else Y


def sample(
    params: MixtureParams, n: int, seed: int, x_sampler: Callable | None = None, *, return_labels: bool = False
):
    """Draw ``n`` pairs: ``X ~ x_sampler`` (uniform by default), then ``Y | X ~ s``.

    With ``return_labels`` the drawn component indices come back as well,
    as ``(dataset, labels)``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    draw = x_sampler or uniform_x_sampler(params.d)
    X = np.asarray(draw(rng, n), dtype=float).reshape(n, params.d)
    Y, cls = _sample_y(params, X, rng, return_labels=True)
    data = Dataset(X, Y)
    return (data, cls) if return_labels else data
