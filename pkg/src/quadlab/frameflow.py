"""Moving-frame state (V, Lambda, R) of an isometric deformation of a generic
quadric, its structure equations restricted to a 1-parameter path, and a
fixed-step RK4 integrator with conservation monitors.

On a path t -> u(t) the 2-form equations pull back to zero, so the path
data (u(t), S_j(t) = R^T d_{u^j} R) can be prescribed freely with S_j skew;
what remains is an ODE for (V, Lambda, R).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .calg import as_rng, orthogonality_defect, principal_sqrt, random_complex, random_complex_orthogonal, random_skew
from .errors import DegeneracyError, DivergenceError, GenerationError
from .quadric import QuadricSpec, chart_dX, chart_G

HARD_LIMIT = 1e-3
LAMBDA_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class DeformationState:
    V: np.ndarray
    Lam: np.ndarray
    R: np.ndarray

    @property
    def n(self) -> int:
        return self.V.size

    def copy(self) -> "DeformationState":
        return DeformationState(self.V.copy(), self.Lam.copy(), self.R.copy())


@dataclass(frozen=True, eq=False)
class PathData:
    """Admissible path on [0, T].

    u^j(t) = sum_k alpha_jk sin(k t) + beta_jk cos(k t) and
    S_j(t) = K0[j] + t K1[j] with K0[j], K1[j] skew.
    """

    T: float
    alpha: np.ndarray  # (n, order)
    beta: np.ndarray  # (n, order)
    K0: np.ndarray  # (n, n, n)
    K1: np.ndarray  # (n, n, n)

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    def _freqs(self):
        return np.arange(1, self.alpha.shape[1] + 1)

    def u(self, t: float) -> np.ndarray:
        k = self._freqs()
        return self.alpha @ np.sin(k * t) + self.beta @ np.cos(k * t)

    def udot(self, t: float) -> np.ndarray:
        k = self._freqs()
        return self.alpha @ (k * np.cos(k * t)) - self.beta @ (k * np.sin(k * t))

    def S(self, t: float) -> np.ndarray:
        return self.K0 + t * self.K1

    def scaled(self, u_factor: complex, s_factor: complex) -> "PathData":
        return replace(
            self,
            alpha=u_factor * self.alpha,
            beta=u_factor * self.beta,
            K0=s_factor * self.K0,
            K1=s_factor * self.K1,
        )


def zero_path(n: int, T: float = 1.0, order: int = 1) -> PathData:
    z = np.zeros((n, order), dtype=complex)
    Z = np.zeros((n, n, n), dtype=complex)
    return PathData(T, z, z.copy(), Z, Z.copy())


def random_path(n: int, seed=None, *, T: float = 1.0, order: int = 2, skew_scale: float = 0.5) -> PathData:
    """Seeded trigonometric path with coefficients of modulus at most 1."""
    rng = as_rng(seed)
    alpha = random_complex(rng, (n, order), 0.0, 1.0) / order
    beta = random_complex(rng, (n, order), 0.0, 1.0) / order
    K0 = np.stack([random_skew(rng, n, skew_scale) for _ in range(n)])
    K1 = np.stack([random_skew(rng, n, skew_scale) for _ in range(n)])
    return PathData(T, alpha, beta, K0, K1)


def prime_integral_residual(spec: QuadricSpec, state: DeformationState) -> complex:
    """Lam^T Lam + G^T A G with G = 2V + (|V|^2 - 1) e_{n+1}.

    Expanded this is Lam^T Lam + 4 V^T I A I V + (|V|^2 - 1)^2 / a_{n+1}.
    """
    G = chart_G(state.V)
    return complex(state.Lam @ state.Lam + np.sum(G * G / spec.a))


def admissible_state(spec: QuadricSpec, seed=None, *, retries: int = 50) -> DeformationState:
    """Seeded (V, Lam, R) on the prime-integral variety with R in O_n(C)."""
    rng = as_rng(seed)
    n = spec.n
    for _ in range(retries):
        V = random_complex(rng, n, 0.1, 1.0)
        if abs(V @ V + 1) < 0.1:
            continue
        G = chart_G(V)
        target = -np.sum(G * G / spec.a)
        w = random_complex(rng, n)
        ww = w @ w
        if abs(target) < 1e-12 or abs(ww) < 1e-3:
            continue
        Lam = w * principal_sqrt(target / ww)
        if np.min(np.abs(Lam)) < 1e-3:
            continue
        R = random_complex_orthogonal(n, rng)
        return DeformationState(V, Lam, R)
    raise GenerationError("admissible_state: retries exhausted")


def _omega(ud: np.ndarray, S: np.ndarray) -> np.ndarray:
    n = ud.size
    idx = np.arange(n)
    rows = S[idx, idx, :] * ud[None, :]  # row j of E_jj S_j D
    return rows + (ud[:, None] * S[idx, :, idx].T)


def omega_along(path: PathData, t: float) -> np.ndarray:
    """omega evaluated on the path tangent: sum_j E_jj S_j D + D S_j E_jj, D = diag(udot)."""
    return _omega(path.udot(t), path.S(t))


def path_tangent(path: PathData, t: float):
    """(udot, sum_j udot_j S_j, omega) at time t."""
    ud = path.udot(t)
    S = path.S(t)
    n = ud.size
    return ud, (ud @ S.reshape(n, n * n)).reshape(n, n), _omega(ud, S)


def tangent_cache(path: PathData, size: int = 8) -> Callable:
    """path_tangent memoised on t; RK4 stages revisit the same times."""
    return lru_cache(maxsize=size)(lambda t: path_tangent(path, t))


def _lam_force(spec: QuadricSpec, V: np.ndarray) -> np.ndarray:
    """2 I A I V + (|V|^2 - 1) V / a_{n+1}."""
    return 2 * V / spec.a[:-1] + (V @ V - 1) * V / spec.a[-1]


def state_velocity(spec: QuadricSpec, state: DeformationState, path: PathData, t: float):
    """(dV/dt, dLam/dt, dR/dt) along the path."""
    return _velocity(spec, state.V, state.Lam, state.R, *path_tangent(path, t))


def _velocity(spec, V, Lam, R, ud, Ssum, om):
    Vdot = R @ (ud * Lam)
    Lamdot = om @ Lam - 2 * ud * (R.T @ _lam_force(spec, V))
    return Vdot, Lamdot, R @ Ssum


def rk4_step(f: Callable, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def pack(state: DeformationState) -> np.ndarray:
    return np.concatenate([state.V, state.Lam, state.R.ravel()])


def unpack(y: np.ndarray, n: int) -> DeformationState:
    return DeformationState(y[:n], y[n : 2 * n], y[2 * n : 2 * n + n * n].reshape(n, n))


def state_rhs(spec: QuadricSpec, path: PathData) -> Callable:
    n = spec.n
    tangent_at = tangent_cache(path)

    def f(t, y, tangent=None):
        tangent = tangent_at(t) if tangent is None else tangent
        Vd, Ld, Rd = _velocity(spec, y[:n], y[n : 2 * n], y[2 * n :].reshape(n, n), *tangent)
        return np.concatenate([Vd, Ld, Rd.ravel()])

    return f


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[DeformationState]
    prime_res: np.ndarray
    orth_res: np.ndarray
    min_lambda: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def prime_drift(self) -> float:
        return float(np.max(self.prime_res))

    @property
    def orth_drift(self) -> float:
        return float(np.max(self.orth_res))


def state_monitors(spec: QuadricSpec, state: DeformationState) -> tuple[float, float, float]:
    return (
        abs(prime_integral_residual(spec, state)),
        orthogonality_defect(state.R),
        float(np.min(np.abs(state.Lam))),
    )


def check_monitors(prime: float, orth: float, lam: float, step: int, limit: float = HARD_LIMIT) -> None:
    if not (prime <= limit and orth <= limit):
        raise DivergenceError(
            f"monitor above {limit:g} at step {step}: prime={prime:.3e}, orth={orth:.3e}", step
        )
    if lam < LAMBDA_FLOOR:
        raise DegeneracyError(f"min |lambda_j| = {lam:.3e} at step {step}")


def integrate_path(
    spec: QuadricSpec,
    state0: DeformationState,
    path: PathData,
    steps: int,
    *,
    limit: float = HARD_LIMIT,
) -> Trajectory:
    """Classical RK4 with fixed step T/steps; no projection back onto invariants."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = spec.n
    h = path.T / steps
    f = state_rhs(spec, path)
    y = pack(state0).astype(complex)
    times = np.linspace(0.0, path.T, steps + 1)
    states = [unpack(y.copy(), n)]
    mons = [state_monitors(spec, states[0])]
    check_monitors(*mons[0], 0, limit)
    for k in range(steps):
        y = rk4_step(f, times[k], y, h)
        st = unpack(y.copy(), n)
        m = state_monitors(spec, st)
        check_monitors(*m, k + 1, limit)
        states.append(st)
        mons.append(m)
    mons = np.array(mons)
    return Trajectory(times, states, mons[:, 0], mons[:, 1], mons[:, 2])


def first_fundamental_form(spec: QuadricSpec, state: DeformationState) -> np.ndarray:
    """g_jk = (d_{u^j} x_0)^T (d_{u^k} x_0) with dV/du = R diag(Lam)."""
    Jv = state.R * state.Lam[None, :]
    root_a = principal_sqrt(spec.a)
    Jx = np.column_stack([root_a * chart_dX(state.V, Jv[:, j]) for j in range(spec.n)])
    return Jx.T @ Jx
