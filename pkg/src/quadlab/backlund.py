"""Backlund transformation B_z at the level of frame states.

A pair (state0, state1) is linked at confocal parameter z by

    sqrt(z) R0 Lam1 = 2 I sqrt(R_z) I V1 + s (|V1|^2-1) V0 - V0 (|V1|^2+1)
   -sqrt(z) R1 Lam0 = 2 I sqrt(R_z) I V0 + s (|V0|^2-1) V1 - V1 (|V0|^2+1)

with s = sqrt(1 - z/a_{n+1}). Given state0 and an orthogonal R1 the pair is
completed algebraically; R1 itself evolves by a matrix Ricatti equation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .calg import as_rng, cayley, orthogonality_defect, random_complex, random_skew, reflection
from .errors import DegeneracyError, DivergenceError, DomainError, GenerationError, InconsistencyError, SingularityError
from .frameflow import (
    HARD_LIMIT,
    DeformationState,
    PathData,
    Trajectory,
    check_monitors,
    omega_along,
    path_tangent,
    pack,
    prime_integral_residual,
    rk4_step,
    state_monitors,
    state_rhs,
    tangent_cache,
    unpack,
)
from .quadric import ConfocalParam, QuadricSpec, chart_G, sqrt_resolvent_diag, tangency_point

log = logging.getLogger(__name__)

U0_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class BacklundAux:
    M0: np.ndarray
    P0: np.ndarray
    W0: np.ndarray
    U0: complex


@dataclass(frozen=True, eq=False)
class BacklundPair:
    state0: DeformationState
    state1: DeformationState
    param: ConfocalParam
    sign1: int = 1
    sign2: int = 1
    info: dict = field(default_factory=dict, compare=False)


def _require_sqrt_z(param: ConfocalParam) -> None:
    if param.z == 0 or param.sqrt_z == 0:
        raise DomainError("z = 0: the construction divides by sqrt(z)")


def aux_U0(spec: QuadricSpec, z: complex, V0: np.ndarray) -> complex:
    """e^T sqrt(R_z) G0 - |V0|^2 - 1 (no division by sqrt(z), defined at z = 0)."""
    r = sqrt_resolvent_diag(spec, z)
    G0 = chart_G(V0)
    return complex(r[-1] * G0[-1] - (V0 @ V0) - 1)


def aux_W0(spec: QuadricSpec, z: complex, V0: np.ndarray) -> np.ndarray:
    """(I_{1,n} + V0 e^T) sqrt(R_z) e - V0, as an (n+1)-vector."""
    Rs = np.diag(sqrt_resolvent_diag(spec, z))
    e = spec.e_last()
    V0e = spec.embed(V0)
    return (spec.I1n() + np.outer(V0e, e)) @ Rs @ e - V0e


def aux(spec: QuadricSpec, param: ConfocalParam, V0: np.ndarray) -> BacklundAux:
    """M0, P0, W0, U0 as (n+1)-dimensional objects."""
    _require_sqrt_z(param)
    V0 = np.asarray(V0, dtype=complex)
    Rs = np.diag(sqrt_resolvent_diag(spec, param.z)) / param.sqrt_z
    I1 = spec.I1n()
    e = spec.e_last()
    V0e = spec.embed(V0)
    M0 = I1 @ Rs @ (I1 + np.outer(e, V0e))
    P0 = I1 @ Rs @ chart_G(V0)
    return BacklundAux(M0, P0, aux_W0(spec, param.z, V0), aux_U0(spec, param.z, V0))


def _checked_U0(spec, z, V0) -> complex:
    U0 = aux_U0(spec, z, V0)
    if abs(U0) < U0_FLOOR:
        raise SingularityError(f"U0 = {U0:.3e} vanishes: singular Backlund configuration")
    return U0


def pair_rhs(spec: QuadricSpec, z: complex, Va, Vb, root=None) -> np.ndarray:
    """2 I sqrt(R_z) I Va + s (|Va|^2-1) Vb - Vb (|Va|^2+1).

    ``root`` overrides the diagonal of sqrt(R_z) (default: principal roots).
    """
    r = sqrt_resolvent_diag(spec, z) if root is None else np.asarray(root)
    qa = Va @ Va
    return 2 * r[:-1] * Va + r[-1] * (qa - 1) * Vb - Vb * (qa + 1)


def pair_residuals(spec: QuadricSpec, pair: BacklundPair, root=None) -> tuple[np.ndarray, np.ndarray]:
    s0, s1 = pair.state0, pair.state1
    sz, z = pair.param.sqrt_z, pair.param.z
    r1 = pair.sign1 * sz * (s0.R @ s1.Lam) - pair_rhs(spec, z, s1.V, s0.V, root)
    r2 = pair.sign2 * (-sz * (s1.R @ s0.Lam)) - pair_rhs(spec, z, s0.V, s1.V, root)
    return r1, r2


def algebraic_step(spec: QuadricSpec, param: ConfocalParam, state0: DeformationState, R1: np.ndarray):
    """(V1, Lam1) from (V0, Lam0, R0) and the partner frame R1."""
    _require_sqrt_z(param)
    n = spec.n
    V0, Lam0, R0 = state0.V, state0.Lam, state0.R
    sz = param.sqrt_z
    Rs = np.diag(sqrt_resolvent_diag(spec, param.z))
    I1 = spec.I1n()
    e = spec.e_last()
    G0 = chart_G(V0)
    U0 = _checked_U0(spec, param.z, V0)

    R1L = R1 @ Lam0
    V1 = -(sz * R1L + (I1 @ Rs @ G0)[:n]) / U0

    V0e, V1e, R1Le = spec.embed(V0), spec.embed(V1), spec.embed(R1L)
    inner = sz * (spec.A @ G0) - Rs @ ((I1 + np.outer(e, V1e)) @ R1Le)
    num = (I1 + np.outer(V0e, e)) @ inner + V0e * (V1 @ R1L)
    Lam1 = 2 * R0.T @ num[:n] / U0
    return V1, Lam1


def transporter(x: np.ndarray, y: np.ndarray, seed=None, *, retries: int = 20) -> np.ndarray:
    """Orthogonal H built from bilinear reflections with H x = y (needs x^T x = y^T y)."""
    v = x - y
    scale = max(1.0, abs(x @ x))
    if abs(v @ v) > 1e-8 * scale:
        return reflection(v)
    rng = as_rng(seed)
    xx = x @ x
    for _ in range(retries):
        m = random_complex(rng, x.shape)
        mid = m * np.sqrt(xx / (m @ m))
        a, b = x - mid, mid - y
        if abs(a @ a) > 1e-8 * scale and abs(b @ b) > 1e-8 * scale:
            return reflection(b) @ reflection(a)
    raise GenerationError("transporter: every intermediate reflection was isotropic")


def stabilizer_element(x: np.ndarray, seed=None, scale: float = 0.5) -> np.ndarray:
    """Random Q in O_n(C) with Q x = x (Cayley map of a skew K with K x = 0)."""
    rng = as_rng(seed)
    n = x.size
    P = np.eye(n, dtype=complex) - np.outer(x, x) / (x @ x)
    K = P @ random_skew(rng, n, scale) @ P
    return cayley(K)


def seed_pair(
    spec: QuadricSpec,
    param: ConfocalParam,
    state0: DeformationState,
    seed=None,
    *,
    consistency_tol: float = 1e-6,
    retries: int = 10,
) -> BacklundPair:
    """Initial Backlund partner: a tangency point, then a frame R1 with R1 Lam0 = w."""
    _require_sqrt_z(param)
    rng = as_rng(seed)
    V0, Lam0 = state0.V, state0.Lam
    _checked_U0(spec, param.z, V0)
    last_error: Exception | None = None
    for _ in range(retries):
        V1 = tangency_point(spec, param.z, V0, rng)
        w = -pair_rhs(spec, param.z, V0, V1) / param.sqrt_z
        mismatch = abs(w @ w - Lam0 @ Lam0)
        if mismatch > consistency_tol * max(1.0, abs(Lam0 @ Lam0)):
            raise InconsistencyError(
                f"w^T w - Lam0^T Lam0 = {mismatch:.3e}: no orthogonal R1 maps Lam0 to w"
            )
        try:
            R1 = transporter(Lam0, w, rng) @ stabilizer_element(Lam0, rng)
        except (GenerationError, np.linalg.LinAlgError) as exc:
            last_error = exc
            continue
        V1_alg, Lam1 = algebraic_step(spec, param, state0, R1)
        n = spec.n
        log.debug("seed_pair: family dimension n(n-1)/2 + 1 = %d", n * (n - 1) // 2 + 1)
        info = {
            "consistency": float(mismatch),
            "tangency_gap": float(np.linalg.norm(V1_alg - V1)),
            "family_dim": n * (n - 1) // 2 + 1,
        }
        return BacklundPair(state0, DeformationState(V1_alg, Lam1, R1), param, 1, 1, info)
    raise GenerationError(f"seed_pair: retries exhausted ({last_error})")


def aux_blocks(spec: QuadricSpec, param: ConfocalParam, V0: np.ndarray):
    """Leading n-blocks of (M0, P0, W0) together with U0.

    The frames enter the Ricatti equation embedded with a zero last row and
    column, so only these blocks contribute.
    """
    _require_sqrt_z(param)
    r = sqrt_resolvent_diag(spec, param.z)
    q0 = V0 @ V0
    M0 = r[:-1] / param.sqrt_z  # diagonal of the n-block
    P0 = 2 * r[:-1] * V0 / param.sqrt_z
    W0 = (r[-1] - 1) * V0
    U0 = r[-1] * (q0 - 1) - q0 - 1
    return M0, P0, W0, U0


def _ricatti(spec, param, V0, Lam0, R0, R1, ud, om):
    M0, P0, W0, U0 = aux_blocks(spec, param, V0)
    if abs(U0) < U0_FLOOR:
        raise SingularityError(f"U0 = {U0:.3e} vanishes along the path")
    R0D = R0 * ud[None, :]
    R1D = R1 * ud[None, :]
    out = (
        R1 @ om
        + 2 * M0[:, None] * R0D
        - 2 * R1D @ R0.T @ (M0[:, None] * R1)
        + (2 / U0) * np.outer(R1D @ (R0.T @ W0), Lam0 + P0 @ R1)
        - (2 / U0) * np.outer(R1 @ Lam0 + P0, W0 @ R0D)
    )
    return -out


def ricatti_rhs(
    spec: QuadricSpec,
    param: ConfocalParam,
    state0: DeformationState,
    path: PathData,
    t: float,
    R1: np.ndarray,
) -> np.ndarray:
    """dR1/dt from the compact form in terms of M0, P0, W0, U0.

    -dR1 = R1 om + 2 M0 R0 D - 2 R1 D R0^T M0^T R1
           + (2/U0) R1 D R0^T W0 (Lam0^T + P0^T R1) - (2/U0) (R1 Lam0 + P0) W0^T R0 D
    """
    ud, _, om = path_tangent(path, t)
    try:
        return _ricatti(spec, param, state0.V, state0.Lam, state0.R, R1, ud, om)
    except SingularityError as exc:
        raise SingularityError(f"{exc} at t={t}") from exc


def ricatti_rhs_expanded(
    spec: QuadricSpec,
    param: ConfocalParam,
    state0: DeformationState,
    path: PathData,
    t: float,
    R1: np.ndarray,
) -> np.ndarray:
    """dR1/dt written out directly in sqrt(R_z), V0, Lam0 (no auxiliaries)."""
    n = spec.n
    N = n + 1
    sz = param.sqrt_z
    r = sqrt_resolvent_diag(spec, param.z)
    Rs = np.diag(r)
    e = np.eye(N, dtype=complex)[:, -1]
    I1 = np.eye(N, dtype=complex) - np.outer(e, e)

    def up(M):
        out = np.zeros((N, N), dtype=complex)
        out[:n, :n] = M
        return out

    V0 = np.append(state0.V, 0)
    Lam0 = np.append(state0.Lam, 0)
    q0 = V0 @ V0
    G0 = 2 * V0 + (q0 - 1) * e
    R0, R1e = up(state0.R), up(R1)
    d = up(np.diag(path.udot(t)))
    om = up(omega_along(path, t))
    den = e @ Rs @ G0 - q0 - 1
    if abs(den) < U0_FLOOR:
        raise SingularityError(f"vanishing denominator along the path at t={t}")
    left = I1 + np.outer(V0, e)
    right = I1 + np.outer(e, V0)
    col = left @ Rs @ e - V0
    row = e @ Rs @ right - V0
    minus_dR1 = (
        R1e @ om
        + 2 * I1 @ (Rs / sz) @ right @ R0 @ d
        - 2 * R1e @ d @ R0.T @ left @ (Rs / sz) @ R1e
        + 2 * R1e @ d @ R0.T @ np.outer(col, Lam0 + G0 @ (Rs / sz) @ R1e) / den
        - 2 * np.outer(R1e @ Lam0 + I1 @ (Rs / sz) @ G0, row) @ R0 @ d / den
    )
    return -minus_dR1[:n, :n]


def invert_pair(spec: QuadricSpec, pair: BacklundPair):
    """Recover (V0, Lam0) treating state1 as the base and flipping sqrt(z)."""
    base = DeformationState(pair.state1.V, pair.state1.Lam, pair.state1.R)
    return algebraic_step(spec, pair.param.flipped(), base, pair.state0.R)


@dataclass
class BacklundTrajectory:
    base: Trajectory
    param: ConfocalParam
    R1: list[np.ndarray]
    V1: np.ndarray
    Lam1: np.ndarray
    orth_R1: np.ndarray
    pair_res_1: np.ndarray
    pair_res_2: np.ndarray
    prime_res_1: np.ndarray
    dv1_consistency: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.base.times

    def pair_at(self, k: int) -> BacklundPair:
        s1 = DeformationState(self.V1[k], self.Lam1[k], self.R1[k])
        return BacklundPair(self.base.states[k], s1, self.param)

    def max_monitors(self) -> dict[str, float]:
        return {
            "orth_R1": float(np.max(self.orth_R1)),
            "pair_res_1": float(np.max(self.pair_res_1)),
            "pair_res_2": float(np.max(self.pair_res_2)),
            "prime_res_1": float(np.max(self.prime_res_1)),
            "dv1_consistency": float(np.max(self.dv1_consistency)),
        }


def flow_derivative(phi, y: np.ndarray, velocity: np.ndarray, delta: float = 1e-3) -> np.ndarray:
    """d/dt phi(y(t)) for y' = velocity, by a 4th-order central difference along the velocity.

    The step shrinks with |velocity| so the truncation error stays near
    delta^4 whatever the speed of the flow.
    """
    d = delta / max(1.0, float(np.linalg.norm(velocity)))
    vals = [phi(y + c * d * velocity) for c in (-2, -1, 1, 2)]
    return (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * d)


def integrate_backlund(
    spec: QuadricSpec,
    param: ConfocalParam,
    state0: DeformationState,
    path: PathData,
    R1_initial: np.ndarray,
    steps: int,
    *,
    limit: float = HARD_LIMIT,
) -> BacklundTrajectory:
    """RK4 for (base state, R1) jointly; (V1, Lam1) re-derived algebraically each step.

    The V1 consistency monitor compares R1 diag(udot) Lam1 with the
    derivative of V1 along the joint flow, taken by finite differences.
    The base block does not depend on R1, so its samples coincide with
    ``integrate_path`` on the same path and step count.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = spec.n
    nb = 2 * n + n * n
    base_f = state_rhs(spec, path)
    tangent_at = tangent_cache(path)

    def f(t, y):
        tangent = tangent_at(t)
        ud, _, om = tangent
        R1dot = _ricatti(spec, param, y[:n], y[n : 2 * n], y[2 * n : nb].reshape(n, n), y[nb:].reshape(n, n), ud, om)
        return np.concatenate([base_f(t, y[:nb], tangent), R1dot.ravel()])

    h = path.T / steps
    times = np.linspace(0.0, path.T, steps + 1)
    y = np.concatenate([pack(state0), np.asarray(R1_initial, dtype=complex).ravel()])

    states, R1s, V1s, L1s, ys = [], [], [], [], []
    base_mons, mons = [], []
    for k in range(steps + 1):
        if k > 0:
            try:
                y = rk4_step(f, times[k - 1], y, h)
            except SingularityError as exc:
                raise SingularityError(f"step {k} (t={times[k - 1]:.4g}): {exc}") from exc
        st = unpack(y[:nb].copy(), n)
        R1 = y[nb:].reshape(n, n).copy()
        try:
            V1, L1 = algebraic_step(spec, param, st, R1)
        except SingularityError as exc:
            raise SingularityError(f"step {k} (t={times[k]:.4g}): {exc}") from exc
        bm = state_monitors(spec, st)
        check_monitors(*bm, k, limit)
        pair = BacklundPair(st, DeformationState(V1, L1, R1), param)
        r1, r2 = pair_residuals(spec, pair)
        m = (
            orthogonality_defect(R1),
            float(np.linalg.norm(r1)),
            float(np.linalg.norm(r2)),
            abs(prime_integral_residual(spec, pair.state1)),
        )
        if max(m) > limit:
            raise DivergenceError(f"Backlund monitor above {limit:g} at step {k}: {m}", k)
        if np.min(np.abs(L1)) < 1e-10:
            raise DegeneracyError(f"min |lambda_j| of state 1 vanishes at step {k}")
        states.append(st)
        ys.append(y.copy())
        R1s.append(R1)
        V1s.append(V1)
        L1s.append(L1)
        base_mons.append(bm)
        mons.append(m)

    V1a, L1a = np.array(V1s), np.array(L1s)

    def v1_of(yy):
        return algebraic_step(spec, param, unpack(yy[:nb], n), yy[nb:].reshape(n, n))[0]

    consistency = np.empty(steps + 1)
    for k in range(steps + 1):
        dV1 = flow_derivative(v1_of, ys[k], f(times[k], ys[k]))
        predicted = R1s[k] @ (path.udot(times[k]) * L1a[k])
        consistency[k] = np.linalg.norm(dV1 - predicted)
    bm = np.array(base_mons)
    mons = np.array(mons)
    base = Trajectory(times, states, bm[:, 0], bm[:, 1], bm[:, 2])
    return BacklundTrajectory(
        base, param, R1s, V1a, L1a, mons[:, 0], mons[:, 1], mons[:, 2], mons[:, 3], consistency
    )
