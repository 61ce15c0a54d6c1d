"""Qutrit state tomography in three mutually unbiased bases.

Counts are ingested per (basis, outcome) and a density matrix is fit by
maximum likelihood with the factored parametrization rho = L L^dag / Tr,
which is positive and unit-trace for any lower-triangular L, so the
optimizer never leaves the physical set. Uncertainties come from Poisson
bootstrap resampling of the raw counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import hermitize, is_unitary, project_psd

MUB_TOL = 1e-12
PSD_TOL = 1e-10
LOGLIKE_TOL = 1e-9
MAX_ITERS = 5000


def mub_set() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Computational, Fourier, and quadratic-phase bases (columns = states)."""
    omega = np.exp(2j * math.pi / 3.0)
    j = np.arange(3)
    fourier = omega ** np.outer(j, j) / math.sqrt(3.0)
    third = omega ** ((j * j)[:, None] + np.outer(j, j)) / math.sqrt(3.0)
    bases = (np.eye(3, dtype=complex), fourier, third)
    for u in bases:
        if not is_unitary(u, tol=MUB_TOL):
            raise AssertionError("basis construction lost unitarity")
    return bases


@dataclass(frozen=True)
class TomographyData:
    """Counts indexed [basis, outcome], three bases by three outcomes."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.ascontiguousarray(self.counts, dtype=np.int64)
        if c.shape != (3, 3):
            raise ValueError("counts must be a 3x3 table")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        if np.any(c.sum(axis=1) <= 0):
            raise ValueError("every basis needs a positive total")
        object.__setattr__(self, "counts", c)


def born_probabilities(rho: np.ndarray, bases) -> np.ndarray:
    """(3, 3) table of Tr[rho |b_k><b_k|] for the given basis set."""
    probs = np.empty((3, 3))
    for b, u in enumerate(bases):
        # columns are basis states; p_k = <v_k| rho |v_k>
        probs[b] = np.real(np.einsum("ik,ij,jk->k", u.conj(), rho, u))
    return probs


def simulate_counts(
    state: np.ndarray,
    bases,
    shots_per_basis: int,
    seed: int,
) -> TomographyData:
    """Multinomial synthetic counts from Born statistics of ``state``."""
    if shots_per_basis < 1:
        raise ValueError("shots_per_basis must be at least 1")
    state = np.asarray(state, dtype=complex)
    rho = np.outer(state, state.conj()) if state.ndim == 1 else state
    probs = born_probabilities(rho, bases)
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum(axis=1, keepdims=True)
    rng = np.random.default_rng(seed)
    counts = np.stack([rng.multinomial(shots_per_basis, p) for p in probs])
    return TomographyData(counts=counts)


@dataclass(frozen=True)
class MLEResult:
    rho: np.ndarray
    log_likelihood: float
    converged: bool
    n_iters: int


def _log_likelihood(counts: np.ndarray, probs: np.ndarray) -> float:
    mask = counts > 0
    return float(np.sum(counts[mask] * np.log(probs[mask])))


def mle_reconstruct(data: TomographyData, bases) -> MLEResult:
    """Maximum-likelihood density matrix via gradient ascent on L.

    rho(L) = L L^dag / Tr(L L^dag) with L lower triangular. The ascent
    direction is the likelihood gradient pulled back to L and masked to
    the triangle; a backtracking line search guarantees monotone
    likelihood. Stops when one sweep improves by less than 1e-9.
    """
    counts = data.counts.astype(float)
    tril = np.tri(3, dtype=bool)
    ell = np.eye(3, dtype=complex)

    def rho_of(l_mat: np.ndarray) -> np.ndarray:
        a = l_mat @ l_mat.conj().T
        return a / np.trace(a).real

    def loglike_of(l_mat: np.ndarray) -> float:
        probs = np.clip(born_probabilities(rho_of(l_mat), bases), 1e-300, None)
        return _log_likelihood(counts, probs)

    current = loglike_of(ell)
    converged = False
    iters = 0
    prev_ell = None
    prev_grad = None
    for iters in range(1, MAX_ITERS + 1):
        rho = rho_of(ell)
        probs = np.clip(born_probabilities(rho, bases), 1e-300, None)
        grad_rho = np.zeros((3, 3), dtype=complex)
        for b, u in enumerate(bases):
            for k in range(3):
                v = u[:, k]
                grad_rho += (counts[b, k] / probs[b, k]) * np.outer(v, v.conj())
        # scale by total counts so step sizes are shot-count independent
        grad_rho /= counts.sum()
        trace_term = np.real(np.trace(grad_rho @ rho))
        direction = (grad_rho - trace_term * np.eye(3)) @ ell
        direction[~tril] = 0.0
        if np.linalg.norm(direction) < 1e-14:
            converged = True
            break

        # two-point (Barzilai-Borwein) initial step, then backtrack
        s = 1.0
        if prev_ell is not None:
            d_ell = ell - prev_ell
            d_grad = direction - prev_grad
            denom = -np.real(np.sum(d_ell.conj() * d_grad))
            if denom > 1e-30:
                s = float(np.real(np.sum(d_ell.conj() * d_ell)) / denom)
                s = min(max(s, 1e-8), 1e4)
        prev_ell, prev_grad = ell.copy(), direction.copy()

        before = current
        improved = False
        for _ in range(60):
            cand = ell + s * direction
            val = loglike_of(cand)
            if val > current:
                ell, current = cand, val
                improved = True
                break
            s *= 0.5
        if not improved or current - before < LOGLIKE_TOL:
            converged = True
            break

    rho = hermitize(rho_of(ell))
    return MLEResult(
        rho=rho, log_likelihood=current, converged=converged, n_iters=iters
    )


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    rho = hermitize(np.asarray(rho, dtype=complex))
    sigma = hermitize(np.asarray(sigma, dtype=complex))
    for m in (rho, sigma):
        w = np.linalg.eigvalsh(m)
        if w.min() < -PSD_TOL:
            raise ValueError("fidelity requires PSD inputs")
        if abs(np.trace(m).real - 1.0) > 1e-8:
            raise ValueError("fidelity requires unit-trace inputs")
    w, v = np.linalg.eigh(rho)
    sqrt_rho = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    inner = hermitize(sqrt_rho @ sigma @ sqrt_rho)
    lam = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    lam[lam < 1e-14 * max(1.0, lam.max())] = 0.0  # sqrt of fp zeros leaks
    val = float(np.sum(np.sqrt(lam)) ** 2)
    return min(1.0, max(0.0, val))


@dataclass(frozen=True)
class BootstrapResult:
    rho_real_std: np.ndarray
    rho_imag_std: np.ndarray
    fidelity_std: float
    fidelity_mean: float


def bootstrap_uncertainty(
    data: TomographyData,
    bases,
    resamples: int,
    seed: int,
    target: np.ndarray | None = None,
) -> BootstrapResult:
    """Poisson-resample counts, refit, and report element-wise spreads.

    When ``target`` (ket or density matrix) is given, the spread of the
    fidelity against it is reported as well.
    """
    if resamples < 100:
        raise ValueError("need at least 100 resamples")
    rng = np.random.default_rng(seed)
    target_rho = None
    if target is not None:
        target = np.asarray(target, dtype=complex)
        target_rho = (
            np.outer(target, target.conj()) if target.ndim == 1 else target
        )
    rhos = np.empty((resamples, 3, 3), dtype=complex)
    fids = np.empty(resamples)
    for i in range(resamples):
        for _ in range(100):
            resampled = rng.poisson(data.counts)
            if np.all(resampled.sum(axis=1) > 0):
                break
        else:
            raise RuntimeError("could not draw a valid bootstrap resample")
        fit = mle_reconstruct(TomographyData(counts=resampled), bases)
        rhos[i] = fit.rho
        if target_rho is not None:
            fids[i] = fidelity(project_psd_unit(fit.rho), target_rho)
    return BootstrapResult(
        rho_real_std=rhos.real.std(axis=0),
        rho_imag_std=rhos.imag.std(axis=0),
        fidelity_std=float(fids.std()) if target_rho is not None else 0.0,
        fidelity_mean=float(fids.mean()) if target_rho is not None else 0.0,
    )


def project_psd_unit(rho: np.ndarray) -> np.ndarray:
    """Clip tiny negative eigenvalues and renormalize the trace."""
    fixed = project_psd(hermitize(rho))
    return fixed / np.trace(fixed).real
