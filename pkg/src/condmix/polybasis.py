"""Multivariate monomial bases on the covariate hypercube [0, 1]^d.

Weight functions and mean coordinates are polynomials ``sum_r alpha_r x^r``
over multi-indices ``r`` with ``|r| <= degree``. Coefficients are always
stored in the order produced by :func:`enumerate_multiindices`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .exceptions import DomainError

DOMAIN_TOL = 1e-12


@lru_cache(maxsize=None)
def _multiindex_array(d: int, D: int) -> np.ndarray:
    idx = [r for r in itertools.product(range(D + 1), repeat=d) if sum(r) <= D]
    idx.sort(key=lambda r: (sum(r), r))
    arr = np.array(idx, dtype=np.int64).reshape(len(idx), d)
    arr.setflags(write=False)
    return arr


def enumerate_multiindices(d: int, D: int) -> list[tuple[int, ...]]:
    """All exponent tuples of length ``d`` with total order at most ``D``.

    Sorted by total order, then lexicographically. The list has
    ``comb(D + d, d)`` entries.
    """
    if d < 1 or D < 0:
        raise ValueError(f"need d >= 1 and D >= 0, got d={d}, D={D}")
    return [tuple(int(v) for v in r) for r in _multiindex_array(d, D)]


def basis_size(d: int, D: int) -> int:
    return comb(D + d, d)


def _check_points(X: np.ndarray) -> None:
    if X.size and (X.min() < -DOMAIN_TOL or X.max() > 1.0 + DOMAIN_TOL):
        raise DomainError("covariate outside [0, 1]^d")


def as_points(x, d: int) -> tuple[np.ndarray, bool]:
    """Coerce ``x`` to an ``(n, d)`` array; the flag tells whether it was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if d != 1:
            raise ValueError(f"scalar covariate given but d={d}")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if d == 1 and arr.shape[0] != 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != d:
            raise ValueError(f"point has {arr.shape[0]} coordinates, expected {d}")
        return arr.reshape(1, d), True
    if arr.ndim == 2 and arr.shape[1] == d:
        return arr, False
    raise ValueError(f"cannot interpret array of shape {arr.shape} as points in dimension {d}")


def design_matrix(d: int, D: int, X) -> np.ndarray:
    """Rows are :func:`basis_vector` evaluated at each row of ``X`` (shape ``(n, d)``)."""
    X = np.asarray(X, dtype=float).reshape(-1, d)
    _check_points(X)
    E = _multiindex_array(d, D)
    if d == 1:
        return X[:, :1] ** E[:, 0][None, :]
    return np.prod(X[:, None, :] ** E[None, :, :], axis=2)


def basis_vector(d: int, D: int, x) -> np.ndarray:
    """Monomials ``x^r`` of a single point in enumeration order."""
    pts, _ = as_points(x, d)
    if pts.shape[0] != 1:
        raise ValueError("basis_vector takes a single point")
    return design_matrix(d, D, pts)[0]


@dataclass(frozen=True)
class PolyFn:
    """Polynomial on [0, 1]^d with coefficients in enumeration order.

    ``bound`` is the sup-norm bound T on the coefficients; it is only
    enforced by :meth:`project`.
    """

    d: int
    degree: int
    coeffs: np.ndarray
    bound: float | None = None

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape[0] != basis_size(self.d, self.degree):
            raise ValueError(
                f"expected {basis_size(self.d, self.degree)} coefficients for "
                f"d={self.d}, degree={self.degree}, got {c.shape[0]}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, d: int, degree: int, bound: float | None = None) -> "PolyFn":
        return cls(d, degree, np.zeros(basis_size(d, degree)), bound)

    @classmethod
    def from_terms(cls, d: int, degree: int, terms: dict, bound: float | None = None) -> "PolyFn":
        """Build from ``{exponent_tuple: coefficient}``; missing terms are zero."""
        index = {r: i for i, r in enumerate(enumerate_multiindices(d, degree))}
        c = np.zeros(len(index))
        for r, v in terms.items():
            r = (r,) if np.isscalar(r) else tuple(r)
            c[index[r]] = v
        return cls(d, degree, c, bound)

    def __call__(self, x):
        return poly_eval(self, x)

    def project(self) -> "PolyFn":
        """Clamp coefficients to ``[-bound, bound]`` (identity when unbounded)."""
        if self.bound is None:
            return self
        return PolyFn(self.d, self.degree, np.clip(self.coeffs, -self.bound, self.bound), self.bound)

    def to_dict(self) -> dict:
        return {"d": self.d, "degree": self.degree, "coeffs": [float(v) for v in self.coeffs]}

    @classmethod
    def from_dict(cls, obj: dict, bound: float | None = None) -> "PolyFn":
        return cls(int(obj["d"]), int(obj["degree"]), np.asarray(obj["coeffs"], dtype=float), bound)

    def __eq__(self, other):
        if not isinstance(other, PolyFn):
            return NotImplemented
        return (self.d, self.degree) == (other.d, other.degree) and np.array_equal(
            self.coeffs, other.coeffs
        )

    __hash__ = None


def poly_eval(f: PolyFn, x):
    """Evaluate ``f`` at one point (returns a float) or at rows of an array."""
    pts, single = as_points(x, f.d)
    vals = design_matrix(f.d, f.degree, pts) @ f.coeffs
    return float(vals[0]) if single else vals
