"""Divergences between conditional densities.

Tensorized divergences average a per-covariate divergence over design
points ``x_1..x_n``. They are estimated by Monte Carlo: at each ``x_i`` draw
``m_y`` responses from ``s(.|x_i)`` and average an integrand in
``ln s`` and ``ln t``. Any object with vectorized ``logpdf(X, Y)`` and
``sample_y(X, rng)`` methods (such as :class:`~condmix.model.MixtureParams`)
can play the role of ``s``; ``t`` only needs ``logpdf``.

Closed forms for pairs of Gaussians serve as oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NotSPD

DEFAULT_MY = 1000
CHUNK_DRAWS = 200_000

__all__ = [
    "DivergenceEstimate",
    "gaussian_hellinger_exact",
    "gaussian_kl_exact",
    "hellinger_tensorized",
    "jkl_hellinger_lower_constant",
    "jkl_tensorized",
    "kl_tensorized",
]


@dataclass(frozen=True)
class DivergenceEstimate:
    """Monte-Carlo estimate with its standard error.

    The standard error is conditional on the design points: the per-point
    sample variances of the integrand, summed and divided by ``n_x^2 m_y``.
    """

    value: float
    mc_std_error: float
    n_x: int
    m_y: int
    rho: float | None = None

    def to_dict(self) -> dict:
        out = {"value": self.value, "mc_std_error": self.mc_std_error, "n_x": self.n_x, "m_y": self.m_y}
        if self.rho is not None:
            out["rho"] = self.rho
        return out


def _integrand_kl(ls, lt, rho):
    return ls - lt


def _integrand_jkl(ls, lt, rho):
    mix = np.logaddexp(np.log1p(-rho) + ls, np.log(rho) + lt)
    return (ls - mix) / rho


def _integrand_hellinger(ls, lt, rho):
    # 2 - 2 E_s[sqrt(t/s)]
    return 2.0 - 2.0 * np.exp(0.5 * (lt - ls))


def _mc(s, targets, x_points, m_y, seed, integrand, rho=None):
    """Shared Monte-Carlo loop; the same draws from ``s`` serve every target.

    Draws come in chunks of design points, each with its own generator
    spawned from ``seed``, so results do not depend on memory layout.
    """
    if m_y < 2:
        raise ValueError("m_y must be at least 2")
    X = np.asarray(x_points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n_x = X.shape[0]
    if n_x < 1:
        raise ValueError("need at least one design point")
    per_chunk = max(1, CHUNK_DRAWS // m_y)
    starts = range(0, n_x, per_chunk)
    children = np.random.SeedSequence(seed).spawn(len(starts))
    sums = np.zeros(len(targets))
    var_sums = np.zeros(len(targets))
    for start, child in zip(starts, children):
        rng = np.random.default_rng(child)
        Xc = np.repeat(X[start:start + per_chunk], m_y, axis=0)
        Yc = s.sample_y(Xc, rng)
        ls = s.logpdf(Xc, Yc)
        rows = Xc.shape[0] // m_y
        for j, t in enumerate(targets):
            vals = integrand(ls, t.logpdf(Xc, Yc), rho).reshape(rows, m_y)
            sums[j] += vals.mean(axis=1).sum()
            var_sums[j] += vals.var(axis=1, ddof=1).sum()
    values = sums / n_x
    errors = np.sqrt(var_sums / (n_x**2 * m_y))
    return [DivergenceEstimate(float(v), float(e), n_x, int(m_y), rho) for v, e in zip(values, errors)]


def _dispatch(s, t, x_points, m_y, seed, integrand, rho=None):
    many = isinstance(t, (list, tuple))
    out = _mc(s, list(t) if many else [t], x_points, m_y, seed, integrand, rho)
    return out if many else out[0]


def kl_tensorized(s, t, x_points, m_y: int = DEFAULT_MY, seed: int = 0):
    """Monte-Carlo tensorized Kullback-Leibler divergence ``KL(s, t)``.

    ``t`` may be a list of densities; they are then all evaluated on the
    same draws from ``s`` and a list of estimates is returned.
    """
    return _dispatch(s, t, x_points, m_y, seed, _integrand_kl)


def jkl_tensorized(s, t, rho: float, x_points, m_y: int = DEFAULT_MY, seed: int = 0):
    """Monte-Carlo tensorized Jensen-Kullback-Leibler divergence.

    The integrand is ``(ln s - ln((1 - rho) s + rho t)) / rho``, evaluated in
    log space. Its value never exceeds ``ln(1 / (1 - rho)) / rho``.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    return _dispatch(s, t, x_points, m_y, seed, _integrand_jkl, float(rho))


def hellinger_tensorized(s, t, x_points, m_y: int = DEFAULT_MY, seed: int = 0):
    """Monte-Carlo tensorized squared Hellinger distance ``int (sqrt s - sqrt t)^2``.

    Uses ``2 - 2 E_s[sqrt(t / s)]`` so only ``s`` has to be sampled.
    """
    return _dispatch(s, t, x_points, m_y, seed, _integrand_hellinger)


def _spd(S, name):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1] or not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise NotSPD(f"{name} is not a symmetric matrix")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NotSPD(f"{name} is not positive definite") from None
    return S


def _logdet(S):
    return float(np.linalg.slogdet(S)[1])


def gaussian_hellinger_exact(mu1, cov1, mu2, cov2) -> float:
    """Squared Hellinger distance ``int (sqrt(phi_1) - sqrt(phi_2))^2`` of two Gaussians.

    ``2 (1 - 2^{p/2} |S1 S2|^{-1/4} |S1^{-1} + S2^{-1}|^{-1/2}
    exp(-(m1 - m2)' (S1 + S2)^{-1} (m1 - m2) / 4))``
    """
    S1, S2 = _spd(cov1, "cov1"), _spd(cov2, "cov2")
    diff = np.atleast_1d(np.asarray(mu1, dtype=float)) - np.atleast_1d(np.asarray(mu2, dtype=float))
    p = S1.shape[0]
    if S2.shape[0] != p or diff.shape[0] != p:
        raise ValueError("dimension mismatch")
    log_aff = (
        0.5 * p * np.log(2.0)
        - 0.25 * (_logdet(S1) + _logdet(S2))
        - 0.5 * _logdet(np.linalg.inv(S1) + np.linalg.inv(S2))
        - 0.25 * float(diff @ np.linalg.solve(S1 + S2, diff))
    )
    return float(-2.0 * np.expm1(log_aff))


def gaussian_kl_exact(mu1, cov1, mu2, cov2) -> float:
    """``KL(N(mu1, cov1), N(mu2, cov2))``."""
    S1, S2 = _spd(cov1, "cov1"), _spd(cov2, "cov2")
    diff = np.atleast_1d(np.asarray(mu2, dtype=float)) - np.atleast_1d(np.asarray(mu1, dtype=float))
    p = S1.shape[0]
    return 0.5 * float(
        np.trace(np.linalg.solve(S2, S1)) + diff @ np.linalg.solve(S2, diff) - p + _logdet(S2) - _logdet(S1)
    )


def jkl_hellinger_lower_constant(rho: float) -> float:
    """A constant ``C_rho`` with ``C_rho d^2(s, t) <= JKL_rho(s, t)``.

    ``KL(s, m) >= d^2(s, m)`` and, for ``m = (1 - rho) s + rho t``,
    ``|sqrt m - sqrt s| >= rho |sqrt t - sqrt s| / (1 + sqrt(1 - rho))``
    pointwise, which gives ``C_rho = rho / (1 + sqrt(1 - rho))^2``.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    return rho / (1.0 + np.sqrt(1.0 - rho)) ** 2
