"""Complex-bilinear linear algebra.

Everything here uses the bilinear pairing ``x.T @ y`` (no conjugation), so
"orthogonal" means ``R.T @ R = I`` over the complex numbers.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, GenerationError

MAX_JORDAN_SIZE = 6
CAYLEY_COND_MAX = 10.0


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_complex(rng: np.random.Generator, shape=(), lo: float = 0.3, hi: float = 2.0):
    """Complex samples with modulus uniform in [lo, hi] and uniform argument."""
    r = rng.uniform(lo, hi, shape)
    phi = rng.uniform(-np.pi, np.pi, shape)
    return r * np.exp(1j * phi)


def principal_sqrt(a):
    """Principal square root, argument of the result in (-pi/2, pi/2].

    Works on scalars and arrays. On the negative real axis the root is
    ``+i sqrt(|a|)`` regardless of the sign of a zero imaginary part.
    """
    arr = np.asarray(a, dtype=complex)
    if np.any(arr == 0):
        raise DomainError("principal_sqrt: zero has no branch under the 0 < r rule")
    root = np.sqrt(arr)
    # numpy returns -i*sqrt(r) for -r - 0j; the branch rule wants +i*sqrt(r)
    flip = (root.real == 0) & (root.imag < 0)
    root = np.where(flip, -root, root)
    if np.ndim(a) == 0:
        return complex(root)
    return root


def bnorm2(x) -> complex:
    """Bilinear squared length x.T @ x."""
    x = np.asarray(x)
    return complex(x @ x)


def basis(j: int, p: int) -> np.ndarray:
    """Standard basis vector e_j of C^p, 1-based."""
    if not 1 <= j <= p:
        raise DomainError(f"basis index {j} out of range for dimension {p}")
    e = np.zeros(p, dtype=complex)
    e[j - 1] = 1.0
    return e


def isotropic_vector(j: int, p: int) -> np.ndarray:
    """f_j = (e_{2j-1} - i e_{2j}) / sqrt(2), an isotropic vector of C^p."""
    if j < 1 or 2 * j > p:
        raise DomainError(f"isotropic_vector: need 1 <= j and 2j <= p, got j={j}, p={p}")
    return (basis(2 * j - 1, p) - 1j * basis(2 * j, p)) / np.sqrt(2.0)


# Each block is a sum of outer products u v^T. Tokens: ("f", k) is f_k,
# ("fb", k) its conjugate, ("e", k) the basis vector e_k.
_JORDAN_TERMS = {
    2: [(("f", 1), ("f", 1))],
    3: [(("f", 1), ("e", 3)), (("e", 3), ("f", 1))],
    4: [(("f", 1), ("fb", 2)), (("f", 2), ("f", 2)), (("fb", 2), ("f", 1))],
    5: [
        (("f", 1), ("fb", 2)),
        (("f", 2), ("e", 5)),
        (("e", 5), ("f", 2)),
        (("fb", 2), ("f", 1)),
    ],
    6: [
        (("f", 1), ("fb", 2)),
        (("f", 2), ("fb", 3)),
        (("f", 3), ("f", 3)),
        (("fb", 3), ("f", 2)),
        (("fb", 2), ("f", 1)),
    ],
}


def _token(tok, p):
    kind, k = tok
    if kind == "e":
        return basis(k, p)
    f = isotropic_vector(k, p)
    return f.conj() if kind == "fb" else f


def sj_block(p: int) -> np.ndarray:
    """Symmetric Jordan block J_p (symmetric, nilpotent of order p)."""
    if not 1 <= p <= MAX_JORDAN_SIZE:
        raise DomainError(f"sj_block: size must be in 1..{MAX_JORDAN_SIZE}, got {p}")
    J = np.zeros((p, p), dtype=complex)
    for u, v in _JORDAN_TERMS.get(p, []):
        J += np.outer(_token(u, p), _token(v, p))
    return J


def half_binomials(count: int) -> list[float]:
    """C(1/2, j) for j = 0..count-1 by the product recurrence."""
    out = [1.0]
    for j in range(1, count):
        out.append(out[-1] * (0.5 - j + 1) / j)
    return out[:count]


def sj_sqrt(a: complex, p: int) -> np.ndarray:
    """Square root of a I_p + J_p by the terminating binomial series."""
    if a == 0:
        raise DomainError("sj_sqrt: a = 0 leaves an isotropic kernel; the series is undefined")
    J = sj_block(p)
    root_a = principal_sqrt(a)
    out = np.zeros((p, p), dtype=complex)
    power = np.eye(p, dtype=complex)
    for j, c in enumerate(half_binomials(p)):
        out += c * a ** (-j) * power
        power = power @ J
    return root_a * out


def cayley(K: np.ndarray) -> np.ndarray:
    """(I - K)^{-1} (I + K); complex orthogonal when K is skew."""
    n = K.shape[0]
    eye = np.eye(n, dtype=complex)
    return np.linalg.solve(eye - K, eye + K)


def random_skew(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    M = random_complex(rng, (n, n))
    return scale * 0.5 * (M - M.T)


def random_complex_orthogonal(n: int, seed=None, *, scale: float = 0.5, retries: int = 50) -> np.ndarray:
    """Seeded element of O_n(C) via the Cayley map of a random skew matrix."""
    if n < 1:
        raise DomainError("random_complex_orthogonal: n must be >= 1")
    rng = as_rng(seed)
    eye = np.eye(n, dtype=complex)
    for _ in range(retries):
        K = random_skew(rng, n, scale)
        # the defect of the Cayley image grows with cond(I - K)
        if np.linalg.cond(eye - K) > CAYLEY_COND_MAX:
            continue
        return cayley(K)
    raise GenerationError("random_complex_orthogonal: I - K stayed near-singular")


def reflection(v: np.ndarray) -> np.ndarray:
    """Bilinear Householder map I - 2 v v^T / (v^T v)."""
    vv = v @ v
    if abs(vv) < 1e-14:
        raise DomainError("reflection: vector is isotropic")
    return np.eye(len(v), dtype=complex) - 2.0 * np.outer(v, v) / vv


def orthogonality_defect(R: np.ndarray) -> float:
    """Frobenius norm of R^T R - I."""
    return float(np.linalg.norm(R.T @ R - np.eye(R.shape[0])))
