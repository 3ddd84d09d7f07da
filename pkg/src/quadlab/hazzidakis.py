"""Hazzidakis transformation between confocal families of generic quadrics.

With a = a_{n+1}, the target quadric has parameters

    ã_{n+1} = 1/a,    ã_j = ã_{n+1} + 1/(a_j - a) = a_j / (a (a_j - a)),

confocal parameters map by z̃ = ã_{n+1} + 1/(z - a), and the homography
x -> (H'x + e_{n+1}) / x_{n+1} with H' = diag((a - a_j)^{-1/2}) carries the
confocal quadric z onto the confocal quadric z̃. On frame states the map is
Ṽ = iV, R̃ = R, Λ̃ = a Λ, with path data ũ = (i/a) u and S̃_j = -i a S_j.

Square roots are only defined up to sign, so every identity that needs a
branch is resolved by explicit search and the chosen signs are reported.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .backlund import BacklundPair, pair_residuals
from .calg import principal_sqrt
from .errors import BranchError, CommutationError, SingularityError
from .frameflow import DeformationState, PathData
from .quadric import ConfocalParam, QuadricSpec, chart_X, resolvent, sqrt_resolvent_diag, x0_point

POLE_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class HazzidakisMap:
    source: QuadricSpec
    target: QuadricSpec
    H_diag: np.ndarray  # (a_{n+1} - a_j)^{-1/2}, j <= n, principal branches

    @property
    def n(self) -> int:
        return self.source.n

    @property
    def a_last(self) -> complex:
        return self.source.a_last


def target_parameters(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    out = np.empty_like(a)
    out[-1] = 1.0 / a[-1]
    out[:-1] = out[-1] + 1.0 / (a[:-1] - a[-1])
    return out


def transform_spec(spec: QuadricSpec) -> HazzidakisMap:
    """Target quadric and homography data.

    The target is again generic: ã_j = a_j / (a (a_j - a)) vanishes only
    if a_j does, and the map is injective on {a_j}, being an involution.
    """
    target = QuadricSpec(target_parameters(spec.a))
    H = 1.0 / principal_sqrt(spec.a_last - spec.a[:-1])
    return HazzidakisMap(spec, target, H)


def z_map(hmap: HazzidakisMap, z: complex) -> complex:
    a = hmap.a_last
    if abs(z - a) < POLE_EPS * max(1.0, abs(a)):
        raise SingularityError(f"z_map: z = a_(n+1) = {a} is a pole")
    return complex(1.0 / a + 1.0 / (z - a))


def confocal_parameter_identity(hmap: HazzidakisMap, z: complex) -> float:
    """Max of the matrix and entrywise residuals of I R̃_z̃ I = (1 - z/a)^{-1} I R_z I."""
    a = hmap.a_last
    zt = z_map(hmap, z)
    n = hmap.n
    lhs = resolvent(hmap.target, zt)[:n, :n]
    factor = 1.0 / (1.0 - z / a)
    rhs = factor * resolvent(hmap.source, z)[:n, :n]
    matrix_res = float(np.linalg.norm(lhs - rhs))
    entry_lhs = 1.0 - zt / hmap.target.a[:-1]
    entry_rhs = (1.0 - z / hmap.source.a[:-1]) / (1.0 - z / a)
    return max(matrix_res, float(np.max(np.abs(entry_lhs - entry_rhs))))


def constraint_identity(hmap: HazzidakisMap, z: complex) -> float:
    """|1 - z̃/ã_{n+1} - (1 - z/a_{n+1})^{-1}|."""
    zt = z_map(hmap, z)
    return abs((1 - zt / hmap.target.a_last) - 1 / (1 - z / hmap.a_last))


def amatrix_identity(hmap: HazzidakisMap) -> float:
    """Norm of I Ã I - (a I - a^2 I A I) on the leading n-block."""
    a = hmap.a_last
    lhs = 1.0 / hmap.target.a[:-1]
    rhs = a - a * a / hmap.source.a[:-1]
    return float(np.linalg.norm(lhs - rhs))


def homography(hmap: HazzidakisMap, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if abs(x[-1]) < 1e-14:
        raise SingularityError("homography: point lies on the hyperplane x_(n+1) = 0")
    out = np.empty_like(x)
    out[:-1] = hmap.H_diag * x[:-1] / x[-1]
    out[-1] = 1.0 / x[-1]
    return out


class ChartMatch(NamedTuple):
    sigma: np.ndarray  # Ṽ = i diag(sigma) V
    branch: int  # sign of the last coordinate of x̃_0
    residual: float


def chart_correspondence(hmap: HazzidakisMap, V0: np.ndarray, tol: float = 1e-6) -> ChartMatch:
    """Sign pattern sigma with H(x_0(V)) = x̃_0(i sigma V), searched over {±1}^n.

    The last coordinate carries its own branch sign (sqrt(1/a) versus
    1/sqrt(a)); it is searched as well and reported separately.
    """
    V0 = np.asarray(V0, dtype=complex)
    image = homography(hmap, x0_point(hmap.source, V0))
    best = None
    for signs in itertools.product((1, -1), repeat=hmap.n + 1):
        sigma = np.array(signs[:-1])
        cand = x0_point(hmap.target, 1j * sigma * V0)
        cand[-1] *= signs[-1]
        res = float(np.linalg.norm(image - cand))
        if best is None or res < best.residual:
            best = ChartMatch(sigma, signs[-1], res)
    if best.residual > tol:
        raise BranchError(f"chart_correspondence: best sign pattern leaves residual {best.residual:.3e}")
    return best


def transform_state(hmap: HazzidakisMap, state: DeformationState, path: PathData | None = None):
    a = hmap.a_last
    new_state = DeformationState(1j * state.V, a * state.Lam, state.R.copy())
    new_path = None if path is None else path.scaled(1j / a, -1j * a)
    return new_state, new_path


def aligned_target_root(hmap: HazzidakisMap, z: complex) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal of sqrt(R̃_z̃) on the branch transported from the source.

    Transported roots are r_j / r_{n+1} (j <= n) and 1 / r_{n+1}; each
    principal root of the target agrees with them up to a sign tau_j.
    Returns (aligned root, tau).
    """
    r = sqrt_resolvent_diag(hmap.source, z)
    transported = np.append(r[:-1] / r[-1], 1.0 / r[-1])
    principal = sqrt_resolvent_diag(hmap.target, z_map(hmap, z))
    tau = np.where((principal / transported).real >= 0, 1, -1)
    if np.max(np.abs(tau * principal - transported)) > 1e-8 * max(1.0, np.max(np.abs(transported))):
        raise BranchError("target resolvent roots do not match the transported ones up to sign")
    return tau * principal, tau


def transform_pair(hmap: HazzidakisMap, pair: BacklundPair) -> BacklundPair:
    """Tilde pair: both states transported, R1 unchanged, z̃ with principal sqrt."""
    s0, _ = transform_state(hmap, pair.state0)
    s1, _ = transform_state(hmap, pair.state1)
    return BacklundPair(s0, s1, ConfocalParam.principal(z_map(hmap, pair.param.z)))


@dataclass(frozen=True)
class CommutationResult:
    residual: float
    sign1: int
    sign2: int
    root_signs: tuple[int, ...]
    z_tilde: complex

    def signs(self) -> dict:
        return {"sign1": self.sign1, "sign2": self.sign2, "root": list(self.root_signs)}


def best_sign_residual(spec: QuadricSpec, pair: BacklundPair, root=None) -> tuple[float, int, int]:
    """Smallest max(|r1|, |r2|) over the four equation sign choices."""
    best = None
    for s1, s2 in itertools.product((1, -1), repeat=2):
        trial = BacklundPair(pair.state0, pair.state1, pair.param, s1, s2)
        r1, r2 = pair_residuals(spec, trial, root)
        res = max(float(np.linalg.norm(r1)), float(np.linalg.norm(r2)))
        if best is None or res < best[0]:
            best = (res, s1, s2)
    return best


def commutation_check(hmap: HazzidakisMap, pair: BacklundPair, *, fail_above: float = 1e-4) -> CommutationResult:
    """Residual of the pair relations for the Hazzidakis image of a Backlund pair."""
    tilde = transform_pair(hmap, pair)
    root, tau = aligned_target_root(hmap, pair.param.z)
    res, s1, s2 = best_sign_residual(hmap.target, tilde, root)
    if res > fail_above:
        raise CommutationError(f"no sign resolution brings the tilde pair below {fail_above:g} (best {res:.3e})")
    return CommutationResult(res, s1, s2, tuple(int(t) for t in tau), tilde.param.z)
