"""Generic central quadrics x^T A x = 1 with A = diag(1/a_j), their confocal
families, the sphere chart and the Ivory affine map.

Vectors of C^n are embedded in C^{n+1} with a zero last coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .calg import as_rng, principal_sqrt, random_complex
from .errors import DomainError, GenerationError, InconsistencyError, SingularityError

POLE_DISTANCE = 1e-6
CHART_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class QuadricSpec:
    """Semiaxis parameters a_1..a_{n+1}; must be nonzero and pairwise distinct."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=complex).reshape(-1)
        if a.size < 2:
            raise DomainError("QuadricSpec needs at least two semiaxis parameters")
        if np.any(a == 0):
            raise DomainError("QuadricSpec: semiaxis parameters must be nonzero")
        diffs = np.abs(a[:, None] - a[None, :]) + np.eye(a.size)
        if np.any(diffs == 0):
            raise DomainError("QuadricSpec: semiaxis parameters must be pairwise distinct")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.size - 1

    @property
    def a_last(self) -> complex:
        return complex(self.a[-1])

    @property
    def A(self) -> np.ndarray:
        return np.diag(1.0 / self.a)

    def e_last(self) -> np.ndarray:
        e = np.zeros(self.n + 1, dtype=complex)
        e[-1] = 1.0
        return e

    def I1n(self) -> np.ndarray:
        """I_{n+1} - e_{n+1} e_{n+1}^T."""
        P = np.eye(self.n + 1, dtype=complex)
        P[-1, -1] = 0.0
        return P

    def embed(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n + 1, dtype=complex)
        out[: self.n] = v
        return out

    def embed_matrix(self, M: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n + 1, self.n + 1), dtype=complex)
        out[: self.n, : self.n] = M
        return out

    def __repr__(self):
        return f"QuadricSpec(a={self.a.tolist()})"


@dataclass(frozen=True)
class ConfocalParam:
    """Confocal parameter z with an explicitly recorded branch of sqrt(z)."""

    z: complex
    sqrt_z: complex

    def __post_init__(self):
        if abs(self.sqrt_z**2 - self.z) > 1e-12 * max(1.0, abs(self.z)):
            raise DomainError("ConfocalParam: sqrt_z**2 != z")

    @classmethod
    def principal(cls, z: complex) -> "ConfocalParam":
        z = complex(z)
        return cls(z, principal_sqrt(z) if z != 0 else 0j)

    def flipped(self) -> "ConfocalParam":
        return ConfocalParam(self.z, -self.sqrt_z)


def check_pole_distance(spec: QuadricSpec, z: complex) -> None:
    if np.min(np.abs(spec.a - z)) < POLE_DISTANCE:
        raise SingularityError(f"z={z} lies within {POLE_DISTANCE} of a semiaxis parameter; R_z is singular")


def _chart_denominator(V) -> complex:
    q = complex(V @ V)
    if abs(q + 1) < CHART_EPS:
        raise SingularityError("chart singularity: |V|^2 = -1")
    return q


def chart_G(V: np.ndarray) -> np.ndarray:
    """Numerator 2V + (|V|^2 - 1) e_{n+1} of the sphere chart."""
    V = np.asarray(V, dtype=complex)
    q = complex(V @ V)
    return np.append(2 * V, q - 1)


def chart_X(V: np.ndarray) -> np.ndarray:
    """Point of the bilinear unit sphere in C^{n+1} with chart coordinates V."""
    V = np.asarray(V, dtype=complex)
    q = _chart_denominator(V)
    return chart_G(V) / (q + 1)


def chart_dX(V: np.ndarray, dV: np.ndarray) -> np.ndarray:
    """Directional derivative 2 (dV + V^T dV (e - X)) / (|V|^2 + 1)."""
    V = np.asarray(V, dtype=complex)
    dV = np.asarray(dV, dtype=complex)
    q = _chart_denominator(V)
    X = chart_G(V) / (q + 1)
    e = np.zeros(V.size + 1, dtype=complex)
    e[-1] = 1
    return 2 * (np.append(dV, 0) + (V @ dV) * (e - X)) / (q + 1)


def chart_metric_factor(V: np.ndarray, dV: np.ndarray) -> complex:
    """4 |dV|^2 / (|V|^2 + 1)^2, the pulled-back sphere metric."""
    q = _chart_denominator(np.asarray(V, dtype=complex))
    dV = np.asarray(dV, dtype=complex)
    return complex(4 * (dV @ dV) / (q + 1) ** 2)


def x0_point(spec: QuadricSpec, V: np.ndarray) -> np.ndarray:
    """x_0 = (sqrt A)^{-1} X(V), a point of the base quadric."""
    return principal_sqrt(spec.a) * chart_X(V)


def resolvent(spec: QuadricSpec, z: complex) -> np.ndarray:
    """R_z = I - z A (may be singular)."""
    return np.diag(1.0 - z / spec.a)


@lru_cache(maxsize=256)
def _sqrt_resolvent_cached(spec: QuadricSpec, z: complex) -> np.ndarray:
    check_pole_distance(spec, z)
    root = principal_sqrt(1.0 - z / spec.a)
    root.setflags(write=False)
    return root


def sqrt_resolvent_diag(spec: QuadricSpec, z: complex) -> np.ndarray:
    """Entrywise principal roots of the diagonal of R_z (read-only array)."""
    return _sqrt_resolvent_cached(spec, complex(z))


def sqrt_resolvent(spec: QuadricSpec, z: complex) -> np.ndarray:
    return np.diag(sqrt_resolvent_diag(spec, z))


def confocal_eval(spec: QuadricSpec, z: complex, x: np.ndarray) -> complex:
    """x^T A R_z^{-1} x - 1."""
    check_pole_distance(spec, z)
    x = np.asarray(x, dtype=complex)
    return complex(np.sum(x * x / (spec.a - z)) - 1.0)


def ivory(spec: QuadricSpec, z: complex, x0: np.ndarray) -> np.ndarray:
    """Ivory affine map x_z = sqrt(R_z) x_0 onto the confocal quadric."""
    return sqrt_resolvent_diag(spec, z) * np.asarray(x0, dtype=complex)


def normal_direction(spec: QuadricSpec, x0: np.ndarray) -> np.ndarray:
    return np.asarray(x0, dtype=complex) / spec.a


def tangency_residuals(spec: QuadricSpec, z: complex, V0, V1) -> tuple[complex, complex, complex]:
    """The three equivalent forms of the symmetric tangency relation.

    Returns (X_1^T sqrt(R_z) X_0 - 1, the expanded bilinear form, and
    (x_z^1 - x_0^0)^T N_0^0). The second equals the first times
    (|V_0|^2+1)(|V_1|^2+1); the third equals the first, since N = A x_0,
    (sqrt A)^{-1} A (sqrt A)^{-1} = I and |X_0|^2 = 1.
    """
    V0 = np.asarray(V0, dtype=complex)
    V1 = np.asarray(V1, dtype=complex)
    r = sqrt_resolvent_diag(spec, z)
    X0, X1 = chart_X(V0), chart_X(V1)
    form_i = complex(X1 @ (r * X0)) - 1.0
    form_ii = complex(chart_G(V0) @ (r * chart_G(V1))) - (V0 @ V0 + 1) * (V1 @ V1 + 1)
    x00 = x0_point(spec, V0)
    xz1 = ivory(spec, z, x0_point(spec, V1))
    form_iii = complex((xz1 - x00) @ normal_direction(spec, x00))
    return form_i, complex(form_ii), form_iii


def _tangency_quadratic(spec: QuadricSpec, z: complex, V0: np.ndarray, w: np.ndarray):
    """Coefficients (c2, c1, c0) of the expanded tangency form at V0 + t w."""
    r = sqrt_resolvent_diag(spec, z)
    y = r * chart_G(V0)
    p, yl = y[:-1], y[-1]
    q0 = complex(V0 @ V0)
    kappa = yl - q0 - 1
    c2 = kappa * (w @ w)
    c1 = 2 * (p @ w) + 2 * kappa * (V0 @ w)
    c0 = 2 * (p @ V0) + kappa * q0 - yl - q0 - 1
    return complex(c2), complex(c1), complex(c0)


def tangency_partner(spec: QuadricSpec, z: complex, V0, w, *, root: str = "large") -> np.ndarray:
    """Point V1 = V0 + t w on the tangency variety of V0.

    ``root='large'`` picks the root t of larger modulus, ``'small'`` the other.
    """
    V0 = np.asarray(V0, dtype=complex)
    w = np.asarray(w, dtype=complex)
    c2, c1, c0 = _tangency_quadratic(spec, z, V0, w)
    disc = c1 * c1 - 4 * c2 * c0
    if abs(c2) < 1e-12 or abs(disc) < 1e-12:
        raise SingularityError("tangency quadratic is degenerate along this ray")
    sq = principal_sqrt(disc)
    # numerically stable pair of roots
    big = -c1 - sq if abs(-c1 - sq) >= abs(-c1 + sq) else -c1 + sq
    t_large = big / (2 * c2)
    t_small = 2 * c0 / big
    t = t_large if root == "large" else t_small
    return V0 + t * w


def tangency_point(spec: QuadricSpec, z: complex, V0, seed=None, *, retries: int = 20) -> np.ndarray:
    """Seeded point V1 in symmetric tangency with V0 (random ray, larger root)."""
    rng = as_rng(seed)
    V0 = np.asarray(V0, dtype=complex)
    for _ in range(retries):
        w = random_complex(rng, V0.shape)
        try:
            V1 = tangency_partner(spec, z, V0, w)
            chart_X(V1)
        except SingularityError:
            continue
        return V1
    raise GenerationError("tangency_point: no regular tangency partner found")


def tangency_differential_check(
    spec: QuadricSpec,
    z: complex,
    curve: Callable[[float], tuple[np.ndarray, np.ndarray]],
    ts: Sequence[float],
    h: float = 1e-5,
    constraint_tol: float = 1e-9,
) -> float:
    """Max over ts of |X_1^T sqrt(R_z) dX_0/dt + X_0^T sqrt(R_z) dX_1/dt|.

    Derivatives by centred finite differences of the chart points.
    """
    r = sqrt_resolvent_diag(spec, z)
    worst = 0.0
    for t in ts:
        V0, V1 = curve(t)
        res = tangency_residuals(spec, z, V0, V1)[0]
        if abs(res) > constraint_tol:
            raise InconsistencyError(f"curve leaves the tangency variety at t={t}: residual {abs(res):.3e}")
        V0p, V1p = curve(t + h)
        V0m, V1m = curve(t - h)
        dX0 = (chart_X(V0p) - chart_X(V0m)) / (2 * h)
        dX1 = (chart_X(V1p) - chart_X(V1m)) / (2 * h)
        X0, X1 = chart_X(V0), chart_X(V1)
        worst = max(worst, abs(X1 @ (r * dX0) + X0 @ (r * dX1)))
    return worst
