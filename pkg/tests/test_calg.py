from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadlab.calg import (
    basis,
    cayley,
    half_binomials,
    isotropic_vector,
    orthogonality_defect,
    principal_sqrt,
    random_complex,
    random_complex_orthogonal,
    reflection,
    sj_block,
    sj_sqrt,
)
from quadlab.errors import DomainError

nonzero_complex = st.complex_numbers(min_magnitude=1e-6, max_magnitude=1e6, allow_nan=False, allow_infinity=False)


def test_principal_sqrt_examples():
    assert principal_sqrt(1) == 1
    assert principal_sqrt(-1) == 1j
    assert principal_sqrt(complex(-1, -0.0)) == 1j
    assert abs(principal_sqrt(4j) - np.sqrt(2) * (1 + 1j)) < 1e-15


def test_principal_sqrt_rejects_zero():
    with pytest.raises(DomainError):
        principal_sqrt(0)
    with pytest.raises(DomainError):
        principal_sqrt(np.array([1.0, 0.0]))


@given(nonzero_complex)
def test_principal_sqrt_branch(a):
    r = principal_sqrt(a)
    assert abs(r * r - a) <= 4e-16 * abs(a)
    assert r.real >= 0
    if r.real == 0:
        assert r.imag > 0


def test_principal_sqrt_vectorised_matches_scalar():
    a = random_complex(np.random.default_rng(1), 50)
    a[0] = -4.0
    vec = principal_sqrt(a)
    assert np.array_equal(vec, [principal_sqrt(x) for x in a])


def test_isotropic_vectors():
    f1 = isotropic_vector(1, 2)
    assert np.allclose(f1, [1 / np.sqrt(2), -1j / np.sqrt(2)], atol=1e-16)
    for p in range(2, 7):
        for j in range(1, p // 2 + 1):
            fj = isotropic_vector(j, p)
            assert abs(fj @ fj) < 1e-16
            for k in range(1, p // 2 + 1):
                assert abs(fj @ isotropic_vector(k, p).conj() - (j == k)) < 1e-15
    with pytest.raises(DomainError):
        isotropic_vector(2, 3)
    with pytest.raises(DomainError):
        basis(0, 3)


def test_jordan_block_small_cases():
    assert np.array_equal(sj_block(1), np.zeros((1, 1)))
    expected = 0.5 * np.array([[1, -1j], [-1j, -1]])
    assert np.allclose(sj_block(2), expected, atol=1e-16)
    assert np.abs(sj_block(2) @ sj_block(2)).max() < 1e-16


@pytest.mark.parametrize("p", range(1, 7))
def test_jordan_block_structure(p):
    J = sj_block(p)
    assert np.abs(J - J.T).max() < 1e-16
    assert np.abs(np.linalg.matrix_power(J, p)).max() < 1e-15
    if p >= 2:
        f = isotropic_vector(1, p).conj()
        krylov = np.column_stack([np.linalg.matrix_power(J, k) @ f for k in range(p)])
        assert np.linalg.matrix_rank(krylov, tol=1e-10) == p
        assert np.abs(np.linalg.matrix_power(J, p - 1) @ f).max() > 1e-3


@pytest.mark.parametrize("p", [0, 7])
def test_jordan_block_size_limits(p):
    with pytest.raises(DomainError):
        sj_block(p)


def test_half_binomials_match_exact_fractions():
    exact = [Fraction(1)]
    for j in range(1, 6):
        exact.append(exact[-1] * (Fraction(1, 2) - j + 1) / j)
    assert half_binomials(6) == [float(c) for c in exact]
    assert half_binomials(3) == [1.0, 0.5, -0.125]


def test_jordan_sqrt_examples():
    assert np.array_equal(sj_sqrt(1, 1), [[1]])
    J = sj_block(2)
    S = sj_sqrt(4, 2)
    assert np.abs(S - (2 * np.eye(2) + J / 4)).max() < 1e-16
    assert np.abs(S @ S - (4 * np.eye(2) + J)).max() < 1e-15
    with pytest.raises(DomainError):
        sj_sqrt(0, 3)


@pytest.mark.parametrize("p", range(1, 7))
def test_jordan_sqrt_squares_back(p):
    rng = np.random.default_rng(p)
    J = sj_block(p)
    for a in random_complex(rng, 200):
        S = sj_sqrt(a, p)
        assert np.abs(S @ S - (a * np.eye(p) + J)).max() < 1e-12
        assert np.abs(S @ J - J @ S).max() < 1e-12


@pytest.mark.parametrize("p", range(1, 7))
def test_jordan_sqrt_wide_modulus_range(p):
    # entries of the root grow like |a|^(1/2 - (p-1)), so for p >= 3 and small
    # |a| the absolute error of the square reflects that size; the error
    # relative to |S|^2 stays at round-off for every p
    rng = np.random.default_rng(10 + p)
    J = sj_block(p)
    mods = 10 ** rng.uniform(-3, 3, 300)
    for a in mods * np.exp(1j * rng.uniform(-np.pi, np.pi, 300)):
        S = sj_sqrt(a, p)
        err = np.abs(S @ S - (a * np.eye(p) + J)).max()
        assert err <= 1e-14 * max(1.0, np.abs(S).max() ** 2)
        if p <= 2:
            assert err < 1e-12


def test_random_complex_orthogonal():
    assert np.array_equal(random_complex_orthogonal(1, 0), [[1]])
    for seed in range(50):
        for n in (2, 3, 4):
            R = random_complex_orthogonal(n, seed)
            assert orthogonality_defect(R) < 1e-12
            assert abs(abs(np.linalg.det(R)) - 1) < 1e-10
    assert np.array_equal(random_complex_orthogonal(3, 7), random_complex_orthogonal(3, 7))
    assert not np.array_equal(random_complex_orthogonal(3, 7), random_complex_orthogonal(3, 8))


def test_cayley_and_reflection():
    assert np.array_equal(cayley(np.zeros((3, 3))), np.eye(3))
    v = random_complex(np.random.default_rng(3), 3)
    H = reflection(v)
    assert orthogonality_defect(H) < 1e-13
    assert np.abs(H @ v + v).max() < 1e-13
    with pytest.raises(DomainError):
        reflection(isotropic_vector(1, 2))


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5))
def test_random_complex_orthogonal_property(seed, n):
    assert orthogonality_defect(random_complex_orthogonal(n, seed)) < 1e-12
