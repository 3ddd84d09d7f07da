import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadlab.calg import orthogonality_defect, random_complex, random_skew
from quadlab.errors import DegeneracyError, DivergenceError
from quadlab.frameflow import (
    DeformationState,
    PathData,
    admissible_state,
    first_fundamental_form,
    integrate_path,
    omega_along,
    prime_integral_residual,
    random_path,
    rk4_step,
    state_velocity,
    zero_path,
)
from quadlab.harness.scenario import CaseConfig, gen_case
from quadlab.quadric import QuadricSpec, x0_point

SPEC123 = QuadricSpec(np.array([1, 2, 3]))


def omega_by_definition(path, t):
    """sum_j E_jj S_j D + D S_j E_jj, written with explicit matrices."""
    n = path.n
    D = np.diag(path.udot(t))
    S = path.S(t)
    out = np.zeros((n, n), dtype=complex)
    for j in range(n):
        E = np.zeros((n, n))
        E[j, j] = 1
        out += E @ S[j] @ D + D @ S[j] @ E
    return out


def test_prime_integral_examples():
    Lam = np.array([0.3, 0.7j])
    st0 = DeformationState(np.zeros(2), Lam, np.eye(2))
    assert abs(prime_integral_residual(SPEC123, st0) - (Lam @ Lam + 1 / 3)) < 1e-16
    rng = np.random.default_rng(0)
    state = admissible_state(SPEC123, rng)
    scaled = DeformationState(state.V, 2 * state.Lam, state.R)
    diff = prime_integral_residual(SPEC123, scaled) - prime_integral_residual(SPEC123, state)
    assert abs(diff - 3 * state.Lam @ state.Lam) < 1e-13


def test_prime_integral_expanded_form():
    rng = np.random.default_rng(1)
    for _ in range(100):
        spec = QuadricSpec(random_complex(rng, 4))
        V, Lam = random_complex(rng, 3), random_complex(rng, 3)
        q = V @ V
        expanded = Lam @ Lam + 4 * np.sum(V * V / spec.a[:3]) + (q - 1) ** 2 / spec.a[3]
        got = prime_integral_residual(spec, DeformationState(V, Lam, np.eye(3)))
        assert abs(got - expanded) < 1e-12 * max(1, abs(expanded))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_admissible_state(n):
    rng = np.random.default_rng(n)
    spec = QuadricSpec(random_complex(rng, n + 1))
    for seed in range(20):
        s = admissible_state(spec, seed)
        assert abs(prime_integral_residual(spec, s)) < 1e-12
        assert orthogonality_defect(s.R) < 1e-12
        assert np.min(np.abs(s.Lam)) > 0
    a, b = admissible_state(spec, 5), admissible_state(spec, 5)
    assert np.array_equal(a.V, b.V) and np.array_equal(a.Lam, b.Lam) and np.array_equal(a.R, b.R)


def test_omega_matches_definition_and_cancels():
    rng = np.random.default_rng(2)
    for n in (2, 3, 4):
        path = random_path(n, rng)
        for t in np.linspace(0, 1, 7):
            om = omega_along(path, t)
            assert np.abs(om - omega_by_definition(path, t)).max() < 1e-14
            L = random_complex(rng, n)
            assert abs(L @ om @ L) < 1e-13
    assert np.array_equal(omega_along(zero_path(3), 0.4), np.zeros((3, 3)))
    assert np.array_equal(omega_along(random_path(1, 0), 0.4), np.zeros((1, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 4), st.floats(0, 1))
def test_omega_skew_cancellation_property(seed, n, t):
    rng = np.random.default_rng(seed)
    path = random_path(n, rng)
    L = random_complex(rng, n)
    assert abs(L @ omega_along(path, t) @ L) < 1e-12


def test_velocity_vanishes_without_motion():
    state = admissible_state(SPEC123, 0)
    path = zero_path(2)
    for v in state_velocity(SPEC123, state, path, 0.3):
        assert np.array_equal(v, np.zeros_like(v))


def test_velocity_preserves_invariants_to_first_order():
    rng = np.random.default_rng(3)
    for n in (2, 3, 4):
        spec = QuadricSpec(random_complex(rng, n + 1))
        state = admissible_state(spec, rng)
        path = random_path(n, rng)
        for t in (0.0, 0.4, 0.9):
            Vd, Ld, Rd = state_velocity(spec, state, path, t)
            G = np.append(2 * state.V, state.V @ state.V - 1)
            Gd = np.append(2 * Vd, 2 * state.V @ Vd)
            rate = 2 * state.Lam @ Ld + 2 * np.sum(G * Gd / spec.a)
            assert abs(rate) < 1e-12
            assert np.abs(state.R.T @ Rd + Rd.T @ state.R).max() < 1e-12


def test_velocity_linearity():
    rng = np.random.default_rng(4)
    state = admissible_state(SPEC123, rng)
    path = random_path(2, rng)
    Vd, Ld, Rd = state_velocity(SPEC123, state, path, 0.3)
    c = 0.7 - 0.2j
    Vc, Lc, Rc = state_velocity(SPEC123, state, path.scaled(c, 1), 0.3)
    assert max(np.abs(Vc - c * Vd).max(), np.abs(Lc - c * Ld).max(), np.abs(Rc - c * Rd).max()) < 1e-14
    Vs, _, Rs = state_velocity(SPEC123, state, path.scaled(1, c), 0.3)
    assert np.abs(Vs - Vd).max() < 1e-15
    assert np.abs(Rs - c * Rd).max() < 1e-14


def test_path_generators_are_skew():
    path = random_path(3, 0)
    for t in (0, 0.5, 1):
        S = path.S(t)
        assert np.abs(S + S.transpose(0, 2, 1)).max() == 0


def test_rk4_is_fourth_order_on_linear_ode():
    f = lambda t, y: 1j * y  # noqa: E731
    errs = []
    for steps in (10, 20):
        y = np.array([1.0 + 0j])
        h = 1.0 / steps
        for k in range(steps):
            y = rk4_step(f, k * h, y, h)
        errs.append(abs(y[0] - np.exp(1j)))
    assert 14 < errs[0] / errs[1] < 18


def test_zero_path_gives_constant_trajectory():
    state = admissible_state(SPEC123, 2)
    tr = integrate_path(SPEC123, state, zero_path(2), 20)
    for s in tr.states:
        assert np.array_equal(s.V, state.V) and np.array_equal(s.R, state.R)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_integrated_drift_and_step_halving(n):
    sc = gen_case(CaseConfig(n=n, seed=11, z_count=1))
    tr = integrate_path(sc.spec, sc.state0, sc.path, 1000)
    assert tr.prime_drift < 1e-6
    assert tr.orth_drift < 1e-6
    assert tr.times[-1] == 1.0 and len(tr.states) == 1001
    coarse = integrate_path(sc.spec, sc.state0, sc.path, 50).prime_drift
    fine = integrate_path(sc.spec, sc.state0, sc.path, 100).prime_drift
    assert 3.5 <= np.log2(coarse / fine) <= 4.5


def test_monitors_raise():
    state = admissible_state(SPEC123, 0)
    broken = DeformationState(state.V, state.Lam, state.R + 1e-2)
    with pytest.raises(DivergenceError) as info:
        integrate_path(SPEC123, broken, zero_path(2), 5)
    assert info.value.step == 0
    lam2 = -np.sum(np.append(2 * state.V, state.V @ state.V - 1) ** 2 / SPEC123.a)
    degenerate = DeformationState(state.V, np.array([0, np.sqrt(lam2)]), state.R)
    with pytest.raises(DegeneracyError):
        integrate_path(SPEC123, degenerate, zero_path(2), 5)


def test_first_fundamental_form():
    rng = np.random.default_rng(5)
    state = admissible_state(SPEC123, rng)
    J = state.R * state.Lam[None, :]
    assert np.abs(J.T @ J - np.diag(state.Lam**2)).max() < 1e-12
    g = first_fundamental_form(SPEC123, state)
    assert np.abs(g - g.T).max() < 1e-13
    h = 1e-5
    cols = [(x0_point(SPEC123, state.V + h * J[:, j]) - x0_point(SPEC123, state.V - h * J[:, j])) / (2 * h) for j in range(2)]
    Jx = np.column_stack(cols)
    assert np.abs(Jx.T @ Jx - g).max() < 1e-6 * max(1, np.abs(g).max())


def test_path_data_closed_form_derivative():
    path = random_path(3, 1)
    h = 1e-5
    for t in (0.1, 0.6):
        fd = (path.u(t + h) - path.u(t - h)) / (2 * h)
        assert np.abs(fd - path.udot(t)).max() < 1e-9
    assert isinstance(path, PathData)
    assert random_skew(np.random.default_rng(0), 3).shape == (3, 3)
