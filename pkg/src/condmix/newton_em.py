"""Newton-EM fitting of logistic-weight Gaussian regression mixtures.

Each EM iteration runs

1. an E-step (posterior class probabilities),
2. a closed-form weighted least-squares update of the mean polynomials and
   covariances, with covariance eigenvalues floored,
3. a few damped Newton steps on the weight polynomials.

Both M-substeps never decrease their part of the EM surrogate, so the
observed log-likelihood is non-decreasing along the iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc

from .exceptions import DegenerateComponent, UnsupportedDimension
from .model import (
    Dataset,
    MixtureParams,
    ModelSpec,
    component_logpdf,
    component_means,
    log_softmax,
    logsumexp,
    row_max,
    row_sum,
)
from .polybasis import design_matrix

MAX_HALVINGS = 20
NEWTON_GAIN_TOL = 1e-10
MONOTONE_SLACK = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Knobs of :func:`fit`.

    ``variance_floor`` is ``"fixed"`` (10/n), ``"data"`` (min-spacing and
    chi-square quantile bound, p = 1 only) or an explicit positive number.
    ``stop="tol"`` stops on relative log-likelihood change; ``stop="fixed"``
    always runs ``max_em_iters`` iterations.
    """

    max_em_iters: int = 200
    em_rel_tol: float = 1e-6
    newton_steps: int = 5
    variance_floor: str | float = "fixed"
    alpha: float = 0.05
    enforce_coeff_bounds: bool = False
    stop: str = "tol"

    def __post_init__(self):
        if self.newton_steps < 1:
            raise ValueError("newton_steps must be >= 1")
        if self.max_em_iters < 0:
            raise ValueError("max_em_iters must be >= 0")
        if not self.em_rel_tol > 0:
            raise ValueError("em_rel_tol must be positive")
        if self.stop not in ("tol", "fixed"):
            raise ValueError(f"unknown stop rule {self.stop!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if isinstance(self.variance_floor, str):
            if self.variance_floor not in ("fixed", "data"):
                raise ValueError(f"unknown variance floor mode {self.variance_floor!r}")
        elif not float(self.variance_floor) > 0:
            raise ValueError("explicit variance floor must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters plus the log-likelihood trace.

    ``loglik_trace[0]`` is the log-likelihood of the (floored) initial
    parameters and ``loglik_trace[t]`` the value after EM iteration ``t``.
    ``eta_slack`` is the last log-likelihood increment, a proxy for how far
    the returned point is from a stationary value.
    """

    params: MixtureParams
    loglik_trace: tuple
    n_iters: int
    terminated_by: str
    eta_slack: float
    floor: float
    n_obs: int
    spec: ModelSpec | None = field(default=None, compare=False)

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    def to_dict(self) -> dict:
        out = {
            "params": self.params.to_dict(),
            "loglik_trace": [float(v) for v in self.loglik_trace],
            "n_iters": self.n_iters,
            "terminated_by": self.terminated_by,
            "eta_slack": float(self.eta_slack),
            "floor": float(self.floor),
            "n_obs": self.n_obs,
        }
        if self.spec is not None:
            out["spec"] = self.spec.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "FitResult":
        spec = ModelSpec.from_dict(obj["spec"]) if obj.get("spec") else None
        return cls(
            MixtureParams.from_dict(obj["params"]),
            tuple(obj["loglik_trace"]),
            int(obj["n_iters"]),
            obj["terminated_by"],
            float(obj["eta_slack"]),
            float(obj["floor"]),
            int(obj["n_obs"]),
            spec,
        )


# ---------------------------------------------------------------------------
# Variance floor
# ---------------------------------------------------------------------------


def chi2_quantile(q: float, df: float, tol: float = 1e-12) -> float:
    """Chi-square quantile by bisection on the regularized lower incomplete gamma."""
    if not 0 < q < 1 or df <= 0:
        raise ValueError("need 0 < q < 1 and df > 0")
    lo, hi = 0.0, max(1.0, 2.0 * df)
    while gammainc(df / 2.0, hi / 2.0) < q:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if gammainc(df / 2.0, mid / 2.0) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def variance_floor(mode, data: Dataset, K: int, alpha: float = 0.05) -> float:
    """Lower bound imposed on every covariance eigenvalue.

    ``"fixed"`` gives 10/n. ``"data"`` gives
    ``min_{i<j} (Y_i - Y_j)^2 / (2 q)`` with ``q`` the chi-square quantile of
    order ``(1 - alpha)^(1/K)`` with ``n - 2K + 1`` degrees of freedom.
    A number is returned unchanged.
    """
    if isinstance(mode, str):
        if mode == "fixed":
            return 10.0 / data.n
        if mode == "data":
            if data.p != 1:
                raise UnsupportedDimension("the data-driven variance floor is defined for p = 1 only")
            df = data.n - 2 * K + 1
            if df < 1:
                raise ValueError("data-driven floor needs n - 2K + 1 >= 1")
            ys = np.sort(data.y[:, 0])
            gap = float(np.min(np.diff(ys)) ** 2) if data.n > 1 else 0.0
            return gap / (2.0 * chi2_quantile((1.0 - alpha) ** (1.0 / K), df))
        raise ValueError(f"unknown variance floor mode {mode!r}")
    value = float(mode)
    if value <= 0:
        raise ValueError("explicit variance floor must be positive")
    return value


def floor_covariance(S: np.ndarray, floor: float) -> np.ndarray:
    """Clip the eigenvalues of a symmetric matrix from below at ``floor``."""
    if S.shape[0] == 1:
        return np.maximum(S, floor)
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    if vals[0] >= floor:
        return 0.5 * (S + S.T)
    vals = np.maximum(vals, floor)
    return (vecs * vals[None, :]) @ vecs.T


# ---------------------------------------------------------------------------
# E-step and M-substeps
# ---------------------------------------------------------------------------


def e_step(params: MixtureParams, data: Dataset) -> np.ndarray:
    """``(n, K)`` matrix of responsibilities; each row sums to one."""
    Bw = design_matrix(params.d, params.weight_degree, data.x)
    Bm = design_matrix(params.d, params.mean_degree, data.x)
    terms = _joint_terms(params, data.y, Bw, Bm)
    return np.exp(terms - logsumexp(terms, axis=1, keepdims=True))


def _joint_terms(params, Y, Bw, Bm):
    return log_softmax(Bw @ params.weight_coeffs.T) + component_logpdf(
        params, Y, component_means(params, Bm)
    )


def _solve_ok(M: np.ndarray, x: np.ndarray, b: np.ndarray) -> bool:
    scale = float(np.abs(b).max()) if b.size else 0.0
    return bool(np.all(np.isfinite(x))) and float(np.abs(M @ x - b).max()) <= 1e-6 * max(scale, 1e-300)


def _solve_sym(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for symmetric ``A``; retry once with a small ridge.

    A solution is rejected when it is not finite or leaves a relative
    residual above ``1e-6``.
    """
    try:
        x = np.linalg.solve(A, b)
        if _solve_ok(A, x, b):
            return x
    except np.linalg.LinAlgError:
        pass
    M = A + 1e-10 * max(float(np.trace(A)), 1e-300) / A.shape[0] * np.eye(A.shape[0])
    try:
        x = np.linalg.solve(M, b)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("singular system") from None
    if not _solve_ok(M, x, b):
        raise np.linalg.LinAlgError("singular system")
    return x


def m_step_means_covs(
    data: Dataset,
    tau: np.ndarray,
    mean_degree: int,
    floor: float,
    *,
    Bm: np.ndarray | None = None,
    coeff_bound: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted least-squares means and floored weighted residual covariances.

    Returns ``(mean_coeffs, covs)`` of shapes ``(K, p, bm)`` and ``(K, p, p)``.
    With ``coeff_bound`` the mean coefficients are clamped to
    ``[-coeff_bound, coeff_bound]`` before the covariance is formed.
    """
    n, K = tau.shape
    p = data.p
    if Bm is None:
        Bm = design_matrix(data.d, mean_degree, data.x)
    bm = Bm.shape[1]
    Y = data.y
    mean_coeffs = np.empty((K, p, bm))
    covs = np.empty((K, p, p))
    for k in range(K):
        w = tau[:, k]
        Nk = float(w.sum())
        if Nk < 1e-8 * n:
            raise DegenerateComponent(f"component {k} has total responsibility {Nk:.3g}", component=k)
        WB = Bm * w[:, None]
        try:
            coef = _solve_sym(Bm.T @ WB, WB.T @ Y)
        except np.linalg.LinAlgError:
            raise DegenerateComponent(f"weighted normal equations of component {k} are singular", component=k)
        if coeff_bound is not None:
            coef = np.clip(coef, -coeff_bound, coeff_bound)
        R = Y - Bm @ coef
        S = (R * w[:, None]).T @ R / Nk
        mean_coeffs[k] = coef.T
        covs[k] = floor_covariance(S, floor)
    return mean_coeffs, covs


def _weight_surrogate(V: np.ndarray, Bw: np.ndarray, G: np.ndarray, tau_mass: np.ndarray):
    """``Q(V)`` and ``pi_2..pi_K`` at every point.

    ``G = tau[:, 1:]' Bw`` and ``tau_mass`` (row sums of ``tau``) are
    precomputed by the caller. The first logit is pinned at zero.
    """
    z = Bw @ V.T
    m = np.maximum(row_max(z), 0.0)
    e = np.exp(z - m[:, None])
    total = np.exp(-m) + row_sum(e)
    lse = m + np.log(total)
    # sum_ik tau_ik (logit_ik - lse_i)
    q = float(np.sum(G * V)) - float(tau_mass @ lse)
    return q, e / total[:, None]


def newton_weight_update(
    params: MixtureParams,
    data: Dataset,
    tau: np.ndarray,
    steps: int,
    *,
    Bw: np.ndarray | None = None,
    coeff_bound: float | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Damped Newton ascent on ``Q(w) = sum_ik tau_ik log pi_k(x_i)``.

    Only ``w_2..w_K`` move. Every step is halved (at most 20 times) until
    ``Q`` does not decrease; when the Newton system cannot be solved a
    gradient step of Lipschitz length is used instead.

    Returns
    -------
    weight_coeffs : (K, bw) array
        Updated coefficients, first row zero.
    trace : list of float
        Surrogate value before the first step and after each accepted step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    K = params.K
    if Bw is None:
        Bw = design_matrix(params.d, params.weight_degree, data.x)
    if K == 1:
        return params.weight_coeffs.copy(), [0.0]
    n, bw = Bw.shape
    m = (K - 1) * bw
    V = params.weight_coeffs[1:].copy()
    G = tau[:, 1:].T @ Bw
    tau_mass = row_sum(tau)
    q, P = _weight_surrogate(V, Bw, G, tau_mass)
    trace = [q]
    BB = (Bw[:, :, None] * Bw[:, None, :]).reshape(n, bw * bw)
    lipschitz = 0.5 * float(np.sum(Bw * Bw)) + 1e-300
    for _ in range(steps):
        grad = (G - P.T @ Bw).reshape(m)
        if not np.any(grad):
            break
        # -Hessian = blockdiag(B' diag(P_k) B) - M'M with M_i = P_i (x) b_i
        M = np.empty((n, m))
        for a in range(bw):
            np.multiply(P, Bw[:, a:a + 1], out=M[:, a::bw])
        H = -(M.T @ M)
        diag_blocks = (P.T @ BB).reshape(K - 1, bw, bw)
        for k in range(K - 1):
            H[k * bw:(k + 1) * bw, k * bw:(k + 1) * bw] += diag_blocks[k]
        try:
            direction = _solve_sym(H, grad)
        except np.linalg.LinAlgError:
            direction = grad / lipschitz
        # half the Newton decrement predicts the gain of a full step
        if 0.5 * float(grad @ direction) <= NEWTON_GAIN_TOL * (1.0 + abs(q)):
            break
        direction = direction.reshape(K - 1, bw)
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = V + t * direction
            if coeff_bound is not None:
                cand = np.clip(cand, -coeff_bound, coeff_bound)
            qc, Pc = _weight_surrogate(cand, Bw, G, tau_mass)
            if qc >= q:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        gain = qc - q
        V, q, P = cand, qc, Pc
        trace.append(q)
        if gain <= NEWTON_GAIN_TOL * (1.0 + abs(q)):
            break
    out = np.zeros_like(params.weight_coeffs)
    out[1:] = V
    return out, trace


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _component_q(params, Y, Bm, tau):
    """Per-component Gaussian part of the EM surrogate."""
    return np.sum(tau * component_logpdf(params, Y, component_means(params, Bm)), axis=0)


def fit(data: Dataset, spec: ModelSpec, init: MixtureParams, cfg: FitConfig = FitConfig()) -> FitResult:
    """Run Newton-EM from ``init``.

    Raises
    ------
    DegenerateComponent
        With ``iteration`` set, when a component collapses.
    """
    if init.K != spec.K or init.d != data.d or init.p != data.p:
        raise ValueError("initial parameters do not match the model or the data")
    if (init.weight_degree, init.mean_degree) != (spec.weight_degree, spec.mean_degree):
        raise ValueError("initial parameters have the wrong polynomial degrees")
    if spec.cov_structure != "KKK":
        raise ValueError("fitting supports the free covariance structure only")
    floor = variance_floor(cfg.variance_floor, data, spec.K, cfg.alpha)
    w_bound = spec.T_W if cfg.enforce_coeff_bounds else None
    m_bound = spec.T_mean if cfg.enforce_coeff_bounds else None

    Bw = design_matrix(data.d, spec.weight_degree, data.x)
    Bm = design_matrix(data.d, spec.mean_degree, data.x)
    wc0 = init.weight_coeffs if w_bound is None else np.clip(init.weight_coeffs, -w_bound, w_bound)
    mc0 = init.mean_coeffs if m_bound is None else np.clip(init.mean_coeffs, -m_bound, m_bound)
    params = init.replace(
        weight_coeffs=wc0, mean_coeffs=mc0, covs=np.array([floor_covariance(c, floor) for c in init.covs])
    )
    terms = _joint_terms(params, data.y, Bw, Bm)
    ll = float(np.sum(logsumexp(terms, axis=1)))
    trace = [ll]
    terminated = "max_iters"
    for it in range(1, cfg.max_em_iters + 1):
        tau = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
        try:
            mc, cv = m_step_means_covs(data, tau, spec.mean_degree, floor, Bm=Bm, coeff_bound=m_bound)
        except DegenerateComponent as exc:
            exc.iteration = it
            raise
        cand = params.replace(mean_coeffs=mc, covs=cv)
        if m_bound is not None:
            # clamped means are not the constrained optimum; keep the old component when worse
            worse = _component_q(cand, data.y, Bm, tau) < _component_q(params, data.y, Bm, tau)
            if np.any(worse):
                mc = np.where(worse[:, None, None], params.mean_coeffs, mc)
                cv = np.where(worse[:, None, None], params.covs, cv)
                cand = params.replace(mean_coeffs=mc, covs=cv)
        wc, _ = newton_weight_update(cand, data, tau, cfg.newton_steps, Bw=Bw, coeff_bound=w_bound)
        cand = cand.replace(weight_coeffs=wc)
        new_terms = _joint_terms(cand, data.y, Bw, Bm)
        new_ll = float(np.sum(logsumexp(new_terms, axis=1)))
        if not np.isfinite(new_ll) or new_ll < ll - MONOTONE_SLACK:
            # rounding-level regression: keep the previous point and stop
            terminated = "tol"
            break
        params, terms = cand, new_terms
        rel = abs(new_ll - ll) / (1.0 + abs(ll))
        ll = new_ll
        trace.append(ll)
        if cfg.stop == "tol" and rel < cfg.em_rel_tol:
            terminated = "tol"
            break
    eta = trace[-1] - trace[-2] if len(trace) > 1 else 0.0
    return FitResult(params, tuple(trace), len(trace) - 1, terminated, float(eta), floor, data.n, spec)
