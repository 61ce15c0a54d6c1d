"""Small dense complex linear-algebra helpers shared by the other modules.

Everything works on plain ``numpy`` arrays (complex128). Routines are thin,
contract-checked wrappers over LAPACK via numpy; dimensions here are 2 or 3,
so clarity beats asymptotics everywhere.
"""

from __future__ import annotations

import numpy as np

HERM_TOL = 1e-12
UNITARY_TOL = 1e-10
STATE_TOL = 1e-10
IMAG_TOL = 1e-10


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(np.asarray(a)).T


def hermitize(a: np.ndarray) -> np.ndarray:
    """Nearest Hermitian matrix, (A + A^dag)/2."""
    a = np.asarray(a, dtype=complex)
    return 0.5 * (a + dagger(a))


def is_hermitian(a: np.ndarray, tol: float = HERM_TOL) -> bool:
    a = np.asarray(a)
    return bool(np.max(np.abs(a - dagger(a))) <= tol)


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    eye = np.eye(u.shape[0])
    return bool(np.max(np.abs(dagger(u) @ u - eye)) <= tol)


def check_state(psi: np.ndarray, tol: float = STATE_TOL) -> np.ndarray:
    """Validate a ket: 1-d, unit norm within ``tol``. Returns it as complex."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > tol:
        raise ValueError(f"state norm {nrm!r} differs from 1 beyond {tol}")
    return psi


def projector(v: np.ndarray) -> np.ndarray:
    """Rank-1 projector |v><v| (v need not be normalized)."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    norm = np.linalg.norm(v)
    if norm < STATE_TOL:
        raise ValueError("cannot project onto a null vector")
    v = v / norm
    return np.outer(v, np.conj(v))


def expectation(op: np.ndarray, state: np.ndarray) -> float:
    """<psi|O|psi> or Tr[rho O] for a Hermitian ``op``.

    ``state`` may be a ket (1-d) or a density matrix (2-d). The value is
    clamped to real; an imaginary part above ``IMAG_TOL`` raises.
    """
    op = np.asarray(op, dtype=complex)
    if not is_hermitian(op, tol=1e-9):
        raise ValueError("expectation expects a Hermitian operator")
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        val = np.vdot(state, op @ state)
    else:
        val = np.trace(state @ op)
    if abs(val.imag) > IMAG_TOL:
        raise ValueError(f"expectation has imaginary part {val.imag:g}")
    return float(val.real)


def eig_hermitian(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix."""
    a = np.asarray(a, dtype=complex)
    if not is_hermitian(a, tol=1e-9):
        raise ValueError("eig_hermitian expects a Hermitian matrix")
    w, v = np.linalg.eigh(hermitize(a))
    return w, v


def project_psd(a: np.ndarray) -> np.ndarray:
    """Project onto the PSD cone: eigendecompose and clip negative eigenvalues."""
    w, v = np.linalg.eigh(hermitize(np.asarray(a, dtype=complex)))
    w = np.clip(w, 0.0, None)
    out = (v * w) @ dagger(v)
    return hermitize(out)


def embed_two_mode(u2: np.ndarray, modes: tuple[int, int], dim: int) -> np.ndarray:
    """Embed a 2x2 block into an identity of size ``dim`` on mode pair ``modes``.

    Raises on out-of-range or repeated mode indices.
    """
    j, k = modes
    if j == k:
        raise ValueError("mode pair must be distinct")
    if not (0 <= j < dim and 0 <= k < dim):
        raise ValueError(f"mode pair {modes} out of range for dim {dim}")
    u2 = np.asarray(u2, dtype=complex)
    if u2.shape != (2, 2):
        raise ValueError("expected a 2x2 block")
    out = np.eye(dim, dtype=complex)
    out[j, j] = u2[0, 0]
    out[j, k] = u2[0, 1]
    out[k, j] = u2[1, 0]
    out[k, k] = u2[1, 1]
    return out


def random_state(dim: int, rng: np.random.Generator, real: bool = False) -> np.ndarray:
    """Haar-ish random ket: normalized iid Gaussian components."""
    x = rng.normal(size=dim)
    if not real:
        x = x + 1j * rng.normal(size=dim)
    return x / np.linalg.norm(x)


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random full-rank density matrix, G G^dag normalized."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real
