"""Constants of the penalty theory and a numerical Gaussian bracket verifier.

The penalty shape ``kappa * ((C + ln n) dim + K)`` comes with explicit
constants built from bracketing-entropy bounds of the model pieces:

* ``C_W``, ``C_Y``: entropy constants of the polynomial weight and mean sets,
* ``C1``: a model-free upper bound of the Gaussian-part constant,
* ``frakC = C_W + ln(20 sqrt(K_max - 1) / (3 sqrt 3)) + C1``,
* ``C_penalty = 2 (sqrt(frakC) + sqrt(pi))^2``.

The bracket verifier builds ``t^- <= Phi <= t^+`` from a nearby Gaussian
and checks containment on a grid and the closed-form Hellinger size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, cosh, e, log, pi, sqrt

import numpy as np

from .exceptions import BracketViolated, InvalidBox, PreconditionViolated
from .model import LOG_2PI, CovarianceDecomp, ModelSpec
from .polybasis import PolyFn
from .selection import model_dim

KAPPA_MIN = 17.0 / 29.0

__all__ = [
    "BracketComponent",
    "BracketReport",
    "BracketTrials",
    "EntropyConstants",
    "SigmaBound",
    "StructureDims",
    "bracket_size_sq",
    "default_bracket_box",
    "delta_sigma_cap",
    "entropy_constants",
    "gamma_kappa",
    "general_gaussian_constant",
    "kraft_constant",
    "kraft_partial_sum",
    "milder_penalty",
    "random_bracket_pair",
    "run_bracket_trials",
    "sigma_m_bound",
    "structure_dims",
    "theoretical_penalty",
    "verify_gaussian_bracket",
]


# ---------------------------------------------------------------------------
# Entropy constants
# ---------------------------------------------------------------------------


def gamma_kappa(kappa: float) -> float:
    """``25 (kappa - 1/2) / (49 (1 + 2 kappa / 5))``, defined for kappa >= 17/29."""
    if kappa < KAPPA_MIN:
        raise ValueError(f"kappa must be at least 17/29, got {kappa}")
    return 25.0 * (kappa - 0.5) / (49.0 * (1.0 + 2.0 * kappa / 5.0))


def _kappa_term(kappa: float) -> float:
    return kappa * kappa * cosh(2.0 * kappa / 5.0) + 0.5


def _check_box(box):
    L_lo, L_hi, lam_lo, lam_hi = (float(v) for v in box)
    if min(L_lo, L_hi, lam_lo, lam_hi) <= 0 or L_lo > L_hi or lam_lo > lam_hi:
        raise InvalidBox(f"need 0 < L- <= L+ and 0 < lambda- <= lambda+, got {tuple(box)}")
    return L_lo, L_hi, lam_lo, lam_hi


@dataclass(frozen=True)
class EntropyConstants:
    C_W: float
    C_Y: float
    C1: float
    frakC: float
    C_penalty: float
    gamma_kappa: float
    kappa: float
    c_U: float = 1.0
    K_max: int = 2

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def entropy_constants(spec: ModelSpec, K_max: int, kappa: float = 1.0, c_U: float = 1.0) -> EntropyConstants:
    """Evaluate ``C_W``, ``C_Y``, ``C1``, ``frakC`` and ``C_penalty`` for polynomial sets.

    ``c_U`` is the covering constant of the rotation group, whose value is
    unknown; it shifts ``C1`` by ``2 ln(c_U) / (p (p + 1))``.

    Raises
    ------
    InvalidBox
        If the volume or eigenvalue box is inconsistent.
    """
    L_lo, L_hi, lam_lo, lam_hi = _check_box(spec.box)
    if K_max < 2:
        raise ValueError("K_max must be at least 2")
    if c_U <= 0:
        raise ValueError("c_U must be positive")
    d, p = spec.d, spec.p
    g = gamma_kappa(kappa)
    kt = _kappa_term(kappa)
    C_W = log(sqrt(2.0) + spec.T_W * comb(spec.weight_degree + d, d))
    C_Y = log(sqrt(2.0) + sqrt(p) * comb(spec.mean_degree + d, d) * spec.T_mean)
    ratio = lam_hi / lam_lo
    C1 = (
        C_Y
        + 0.5 * log(25.0 * p * lam_hi * kt / (g * L_lo * lam_lo**2))
        + log(5.0 * p * sqrt(kt))
        + 2.0 / (p * (p + 1)) * (
            log(c_U)
            + log((4.0 + 129.0 * log(L_hi / L_lo)) / 10.0)
            + (p - 1) * log(0.8 + 52.0 * ratio / 5.0 * log(ratio))
        )
        + (p - 1) / (p + 1) * log(10.0 * ratio)
    )
    frakC = C_W + log(20.0 * sqrt(K_max - 1) / (3.0 * sqrt(3.0))) + C1
    C_pen = 2.0 * (sqrt(frakC) + sqrt(pi)) ** 2
    return EntropyConstants(C_W, C_Y, C1, frakC, C_pen, g, float(kappa), float(c_U), int(K_max))


@dataclass(frozen=True)
class StructureDims:
    """Entropy dimension counts of a covariance structure.

    ``D_script = Z_mean + Z_L + p (p - 1) / 2 * Z_D + (p - 1) * Z_A``.
    """

    Z_mean: int
    Z_L: int
    Z_D: int
    Z_A: int
    p: int

    @property
    def D_script(self) -> int:
        return self.Z_mean + self.Z_L + self.p * (self.p - 1) // 2 * self.Z_D + (self.p - 1) * self.Z_A


def _z(tag: str, K: int) -> int:
    return {"0": 0, "c": 1, "K": K}[tag]


def structure_dims(spec: ModelSpec, mean_structure: str = "K") -> StructureDims:
    """Counts for the tags of ``spec.cov_structure`` (volume, rotation, shape).

    Free means count ``p K C(dY + d, d)`` parameters, common means
    ``p C(dY + d, d)`` and known means none.
    """
    if mean_structure not in ("0", "c", "K") or len(spec.cov_structure) != 3:
        raise ValueError("structure tags must be in {'0', 'c', 'K'}")
    per_comp = spec.p * comb(spec.mean_degree + spec.d, spec.d)
    Z_mean = {"0": 0, "c": per_comp, "K": spec.K * per_comp}[mean_structure]
    tL, tD, tA = spec.cov_structure
    return StructureDims(Z_mean, _z(tL, spec.K), _z(tD, spec.K), _z(tA, spec.K), spec.p)


def general_gaussian_constant(
    spec: ModelSpec, kappa: float = 1.0, c_U: float = 1.0, mean_structure: str = "K"
) -> tuple[StructureDims, float]:
    """``(dims, C)`` with ``C`` the constant of the Gaussian-part entropy bound.

    Each structure term is weighted by its share ``Z / D_script`` of the
    dimension.
    """
    L_lo, L_hi, lam_lo, lam_hi = _check_box(spec.box)
    dims = structure_dims(spec, mean_structure)
    D = dims.D_script
    if D == 0:
        raise ValueError("a fully known Gaussian family has no entropy dimension")
    p = spec.p
    g = gamma_kappa(kappa)
    C_Y = log(sqrt(2.0) + sqrt(p) * comb(spec.mean_degree + spec.d, spec.d) * spec.T_mean)
    ratio = lam_hi / lam_lo
    C = (
        log(5.0 * p * sqrt(_kappa_term(kappa)))
        + dims.Z_mean * C_Y / D
        + dims.Z_mean / (2.0 * D) * log(lam_hi / (p * g * L_lo * lam_lo**2))
        + dims.Z_L / D * log((4.0 + 129.0 * log(L_hi / L_lo)) / 10.0)
        + dims.Z_D / D * (log(c_U) + p * (p - 1) / 2.0 * log(10.0 * ratio))
        + dims.Z_A * (p - 1) / D * log(0.8 + 52.0 * ratio / 5.0 * log(ratio))
    )
    return dims, C


# ---------------------------------------------------------------------------
# Complexity and penalties
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaBound:
    sigma: float
    n_sigma_sq: float
    bound: float


def _phi_over_sigma(sigma, D, C):
    return sqrt(D) * (sqrt(C) + sqrt(pi) + sqrt(log(1.0 / min(sigma, 1.0))))


def sigma_m_bound(D_m: int, C_m: float, n: int, rel_tol: float = 1e-12) -> SigmaBound:
    """Root of ``phi_m(sigma) / sigma = sqrt(n) sigma`` and the bound on ``n sigma^2``.

    ``phi_m(sigma) = sigma sqrt(D_m) (sqrt(C_m) + sqrt(pi) + sqrt(ln(1 / min(sigma, 1))))``.
    The left side minus the right side decreases in ``sigma``, so bisection
    applies. The bound is
    ``D_m (2 (sqrt(C_m) + sqrt(pi))^2 + (ln(n / ((sqrt(C_m) + sqrt(pi))^2 D_m)))_+)``.
    """
    if D_m < 1 or n < 1 or not C_m > 0:
        raise ValueError("need D_m >= 1, n >= 1 and C_m > 0")
    rn = sqrt(n)

    def f(s):
        return _phi_over_sigma(s, D_m, C_m) - rn * s

    lo = 1e-12
    hi = sqrt(2.0) * max(1.0, (C_m / n) ** 0.25)
    while f(hi) > 0:
        hi *= 2.0
    while f(lo) < 0:
        lo *= 1e-3
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    a = (sqrt(C_m) + sqrt(pi)) ** 2
    bound = D_m * (2.0 * a + max(log(n / (a * D_m)), 0.0))
    n_sigma_sq = n * sigma * sigma
    if n_sigma_sq > bound * (1.0 + 1e-9):
        raise ArithmeticError(f"n sigma^2 = {n_sigma_sq} exceeds its bound {bound}")
    return SigmaBound(sigma, n_sigma_sq, bound)


def theoretical_penalty(spec: ModelSpec, n: int, consts: EntropyConstants, kappa_mult: float = 1.0) -> float:
    """``kappa_mult ((C_penalty + ln n) dim + K)`` with the Kraft weight ``x_m = K``."""
    if n < 1:
        raise ValueError("n must be positive")
    return kappa_mult * ((consts.C_penalty + log(n)) * model_dim(spec) + spec.K)


def milder_penalty(spec: ModelSpec, n: int, consts: EntropyConstants, kappa_mult: float = 1.0) -> float:
    """``kappa_mult (D (2 a + (ln(n / (a D)))_+) + K)`` with ``a = (sqrt(frakC) + sqrt(pi))^2``."""
    if n < 1:
        raise ValueError("n must be positive")
    D = model_dim(spec)
    a = (sqrt(consts.frakC) + sqrt(pi)) ** 2
    return kappa_mult * (D * (2.0 * a + max(log(n / (a * D)), 0.0)) + spec.K)


def kraft_constant() -> float:
    """``sum_{K >= 1} exp(-K) = 1 / (e - 1)`` for the weights ``x_m = K``."""
    return 1.0 / (e - 1.0)


def kraft_partial_sum(K_max: int) -> float:
    return float(np.sum(np.exp(-np.arange(1, K_max + 1, dtype=float))))


# ---------------------------------------------------------------------------
# Gaussian brackets
# ---------------------------------------------------------------------------


def delta_sigma_cap(delta: float, kappa: float, p: int) -> float:
    """Largest admissible ``delta_Sigma``: ``delta / (5 p sqrt(kappa^2 cosh(2 kappa / 5) + 1/2))``."""
    return delta / (5.0 * p * sqrt(_kappa_term(kappa)))


def bracket_size_sq(delta_sigma: float, kappa: float, p: int) -> float:
    """Squared Hellinger distance between ``t^-`` and ``t^+``.

    ``(1 + k ds)^-p + (1 + k ds)^p - 2^{p/2 + 1} ((1 + ds) + (1 + ds)^-1)^{-p/2}``
    """
    a = 1.0 + kappa * delta_sigma
    b = 1.0 + delta_sigma
    return a**-p + a**p - 2.0 ** (p / 2.0 + 1.0) * (b + 1.0 / b) ** (-p / 2.0)


@dataclass(frozen=True)
class BracketComponent:
    """A Gaussian regression component: polynomial mean and ``L D diag(A) D'`` covariance."""

    mean: tuple  # p PolyFn coordinates
    decomp: CovarianceDecomp

    def __post_init__(self):
        mean = tuple(self.mean)
        if not mean or not all(isinstance(f, PolyFn) for f in mean):
            raise ValueError("mean must be a non-empty sequence of PolyFn")
        if len({f.d for f in mean}) != 1:
            raise ValueError("mean coordinates must share the covariate dimension")
        object.__setattr__(self, "mean", mean)

    @property
    def p(self) -> int:
        return len(self.mean)

    @property
    def d(self) -> int:
        return self.mean[0].d

    @property
    def cov(self) -> np.ndarray:
        return self.decomp.to_matrix()

    def mean_at(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        return np.column_stack([f(X) for f in self.mean])


@dataclass(frozen=True)
class BracketReport:
    delta: float
    delta_sigma: float
    kappa: float
    p: int
    preconditions: dict
    size_sq: float
    size_ok: bool
    containment_checked: bool
    n_points: int
    n_violations: int
    witness: tuple | None = None
    max_log_excess: float = float("-inf")
    failed: tuple = field(default=())

    @property
    def ok(self) -> bool:
        return self.size_ok and self.n_violations == 0

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["witness"] = None if self.witness is None else [np.asarray(w).tolist() for w in self.witness]
        out["failed"] = list(self.failed)
        out["ok"] = self.ok
        return out


def _log_gauss_rows(Y, means, cov):
    """Log densities of rows of ``Y`` (``(n, p)``) around ``means`` (``(n, p)`` or ``(p,)``)."""
    p = cov.shape[0]
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, (Y - means).T)
    return -0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(chol))) - 0.5 * p * LOG_2PI


def _preconditions(true, approx, delta, delta_sigma, kappa, box, X, tol):
    L_lo, L_hi, lam_lo, lam_hi = box
    p = true.p
    ds = delta_sigma
    dt, da = true.decomp, approx.decomp
    A, At = np.asarray(dt.A, dtype=float), np.asarray(da.A, dtype=float)
    D, Dt = np.atleast_2d(dt.D), np.atleast_2d(da.D)
    gap = true.mean_at(X) - approx.mean_at(X)
    mean_gap_sq = float(np.max(np.sum(gap * gap, axis=1)))
    eye = np.eye(p)

    def rotation(M):
        return np.allclose(M.T @ M, eye, atol=1e-10) and np.linalg.det(M) > 0

    checks = {
        "delta_range": 0.0 < delta <= sqrt(2.0),
        "delta_sigma_cap": 0.0 < ds <= delta_sigma_cap(delta, kappa, p) * (1.0 + tol),
        "box_true": (
            L_lo <= dt.L <= L_hi
            and bool(np.all((A >= lam_lo * (1 - tol)) & (A <= lam_hi * (1 + tol))))
            and abs(float(np.prod(A)) - 1.0) <= 1e-10
            and rotation(D)
        ),
        "box_approx": (
            L_lo <= da.L <= L_hi
            and bool(np.all(At >= lam_lo * (1 - tol)))
            and abs(float(np.prod(At)) - 1.0) <= 1e-10
            and rotation(Dt)
        ),
        "mean_gap": mean_gap_sq <= p * gamma_kappa(kappa) * L_lo * lam_lo * (lam_lo / lam_hi) * ds**2 * (1 + tol),
        "volume_sandwich": da.L / (1.0 + 2.0 * ds / 25.0) <= dt.L * (1 + tol) and dt.L <= da.L * (1 + tol),
        "diagonal_gap": bool(np.all(np.abs(1.0 / A - 1.0 / At) <= ds / (10.0 * lam_hi) * (1 + tol))),
        "rotation_gap": float(np.linalg.norm(D - Dt, 2)) <= lam_lo / lam_hi * ds / 10.0 * (1 + tol),
    }
    return {k: bool(v) for k, v in checks.items()}


def _y_grid(center, cov, n_y, n_std):
    p = cov.shape[0]
    half = n_std * np.sqrt(np.max(np.linalg.eigvalsh(cov)))
    if p == 1:
        return center[None, :] + np.linspace(-half, half, n_y)[:, None]
    side = int(np.ceil(np.sqrt(n_y)))
    g = np.linspace(-half, half, side)
    mesh = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    return center[None, :] + mesh


def verify_gaussian_bracket(
    true: BracketComponent,
    approx: BracketComponent,
    delta: float,
    kappa: float = 1.0,
    *,
    box=(0.5, 2.0, 1.0, 1.0),
    delta_sigma: float | None = None,
    x_points=None,
    n_y: int = 10_001,
    n_std: float = 8.0,
    enforce_preconditions: bool = True,
    raise_on_violation: bool = False,
    tol: float = 1e-12,
) -> BracketReport:
    """Check that ``t^- <= Phi_{true} <= t^+`` and that the bracket is ``delta/5`` wide.

    ``t^-`` and ``t^+`` are ``(1 + k ds)^{-+p} Phi_{approx mean, (1 + ds)^{-+1} approx cov}``
    with ``ds = delta_sigma`` (default: its cap). Containment is tested on
    ``x_points`` (default 21 points of [0, 1] for d = 1) times a grid of at
    least ``n_y`` responses spanning ``n_std`` standard deviations around the
    true mean; only ``p <= 2`` is gridded.

    Raises
    ------
    PreconditionViolated
        When ``enforce_preconditions`` is set and an input condition fails.
    BracketViolated
        When ``raise_on_violation`` is set and containment fails.
    """
    L_lo, L_hi, lam_lo, lam_hi = _check_box(box)
    if true.p != approx.p or true.d != approx.d:
        raise ValueError("components must share p and d")
    p, d = true.p, true.d
    ds = delta_sigma_cap(delta, kappa, p) if delta_sigma is None else float(delta_sigma)
    if x_points is None:
        if d != 1:
            x_points = np.random.default_rng(0).random((21, d))
        else:
            x_points = np.linspace(0.0, 1.0, 21)
    X = np.asarray(x_points, dtype=float).reshape(-1, d)

    checks = _preconditions(true, approx, delta, ds, kappa, (L_lo, L_hi, lam_lo, lam_hi), X, tol)
    failed = tuple(k for k, ok in checks.items() if not ok)
    if failed and enforce_preconditions:
        raise PreconditionViolated(failed)

    size_sq = bracket_size_sq(ds, kappa, p)
    size_ok = size_sq <= (delta / 5.0) ** 2 * (1 + tol)

    if p > 2:
        return BracketReport(delta, ds, kappa, p, checks, size_sq, size_ok, False, 0, 0, None, float("-inf"), failed)

    cov, cov_t = true.cov, approx.cov
    shift = p * log(1.0 + kappa * ds)
    mu, mu_t = true.mean_at(X), approx.mean_at(X)
    n_points = 0
    n_viol = 0
    witness = None
    worst = -np.inf
    for i in range(X.shape[0]):
        Y = _y_grid(mu[i], cov, n_y, n_std)
        lf = _log_gauss_rows(Y, mu[i], cov)
        lo = _log_gauss_rows(Y, mu_t[i], cov_t / (1.0 + ds)) - shift
        hi = _log_gauss_rows(Y, mu_t[i], cov_t * (1.0 + ds)) + shift
        excess = np.maximum(lo - lf, lf - hi)
        bad = excess > tol * np.maximum(1.0, np.abs(lf))
        n_points += Y.shape[0]
        n_viol += int(bad.sum())
        j = int(np.argmax(excess))
        if excess[j] > worst:
            worst = float(excess[j])
            if bad[j]:
                witness = (X[i].copy(), Y[j].copy())
    if n_viol and raise_on_violation:
        raise BracketViolated(witness)
    return BracketReport(delta, ds, kappa, p, checks, size_sq, size_ok, True, n_points, n_viol, witness, worst, failed)


def default_bracket_box(p: int) -> tuple:
    """Box used by the randomized checks; with p = 1 the shape matrix is forced to 1."""
    return (0.5, 2.0, 1.0, 1.0) if p == 1 else (0.5, 2.0, 0.5, 2.0)


def _rotation(p, rng):
    if p == 1:
        return np.eye(1)
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    q = q * np.sign(np.diag(r))[None, :]
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _shape(p, lam_lo, lam_hi, rng):
    if p == 1:
        return np.ones(1)
    # log-uniform entries renormalized to unit product, kept inside the box
    for _ in range(1000):
        a = np.exp(rng.uniform(np.log(lam_lo), np.log(lam_hi), p - 1))
        last = 1.0 / np.prod(a)
        if lam_lo <= last <= lam_hi:
            return np.append(a, last)
    return np.ones(p)


def random_bracket_pair(
    rng, delta: float, kappa: float = 1.0, p: int = 1, *, box=None, mean_gap_factor: float = 1.0, mean_degree: int = 1
) -> tuple[BracketComponent, BracketComponent, tuple]:
    """Draw a true component and a nearby one meeting the closeness conditions.

    With ``mean_gap_factor > 1`` the mean gap reaches ``mean_gap_factor``
    times its admissible norm (a negative control); otherwise it is a
    uniform fraction of it. Returns ``(true, approx, box)``.
    """
    box = _check_box(default_bracket_box(p) if box is None else box)
    L_lo, L_hi, lam_lo, lam_hi = box
    ds = delta_sigma_cap(delta, kappa, p)
    bm = mean_degree + 1
    mean = tuple(PolyFn(1, mean_degree, rng.uniform(-1.0, 1.0, bm)) for _ in range(p))

    # mean gap, sup over [0, 1] of each coordinate equal to scale_j
    allowed = sqrt(p * gamma_kappa(kappa) * L_lo * lam_lo * (lam_lo / lam_hi) * ds**2 / p)
    approx_mean = []
    for f in mean:
        a, b = rng.uniform(-1.0, 1.0, 2)
        sup = max(abs(a), abs(a + b)) or 1.0
        scale = allowed * (mean_gap_factor if mean_gap_factor > 1.0 else rng.uniform())
        gap = np.zeros(bm)
        gap[:2] = np.array([a, b]) * scale / sup
        approx_mean.append(PolyFn(1, mean_degree, f.coeffs - gap))

    L_t = rng.uniform(L_lo, L_hi)
    L = rng.uniform(max(L_lo, L_t / (1.0 + 2.0 * ds / 25.0)), L_t)

    D = _rotation(p, rng)
    A = _shape(p, lam_lo, lam_hi, rng)
    if p == 1:
        D_t, A_t = D.copy(), A.copy()
    else:
        # small rotation of the eigenvectors and a small change of shape
        angle = rng.uniform(-1.0, 1.0) * (lam_lo / lam_hi) * ds / 10.0 / 2.0
        G = np.eye(p)
        G[0, 0] = G[1, 1] = np.cos(angle)
        G[0, 1], G[1, 0] = -np.sin(angle), np.sin(angle)
        D_t = D @ G
        eps = rng.uniform(-1.0, 1.0) * ds / (10.0 * lam_hi) / (4.0 * max(lam_hi**2, 1.0))
        inv = 1.0 / A
        inv_t = inv.copy()
        inv_t[0] += eps
        inv_t[1] *= inv[0] / inv_t[0] if inv_t[0] > 0 else 1.0
        A_t = 1.0 / inv_t
        A_t = A_t / np.prod(A_t) ** (1.0 / p)
    true = BracketComponent(mean, CovarianceDecomp(L, D, A))
    approx = BracketComponent(tuple(approx_mean), CovarianceDecomp(L_t, D_t, A_t))
    return true, approx, box


@dataclass(frozen=True)
class BracketTrials:
    trials: int
    violations: int
    precondition_failures: int
    size_failures: int
    max_log_excess: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def run_bracket_trials(
    trials: int, p: int = 1, delta: float = 0.5, kappa: float = 1.0, seed: int = 0, mean_gap_factor: float = 1.0
) -> BracketTrials:
    """Verify ``trials`` random instances; counts instances with any containment violation."""
    violations = pre_fail = size_fail = 0
    worst = -np.inf
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        true, approx, box = random_bracket_pair(rng, delta, kappa, p, mean_gap_factor=mean_gap_factor)
        rep = verify_gaussian_bracket(true, approx, delta, kappa, box=box, enforce_preconditions=False)
        violations += rep.n_violations > 0
        pre_fail += bool(rep.failed)
        size_fail += not rep.size_ok
        worst = max(worst, rep.max_log_excess)
    return BracketTrials(trials, violations, pre_fail, size_fail, float(worst))
