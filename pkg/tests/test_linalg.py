"""Hermitian/unitary helpers and PSD projection."""

from __future__ import annotations

import numpy as np
import pytest

from cqrn import linalg


def test_dagger_involution():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.allclose(linalg.dagger(linalg.dagger(m)), m)


def test_projector_is_rank_one_idempotent():
    rng = np.random.default_rng(5)
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    p = linalg.projector(v)
    assert np.allclose(p @ p, p, atol=1e-12)
    assert np.isclose(np.trace(p).real, 1.0)
    assert linalg.is_hermitian(p)


def test_projector_rejects_null_vector():
    with pytest.raises(ValueError):
        linalg.projector(np.zeros(3))


@pytest.mark.parametrize("dim", [2, 3, 5])
def test_random_state_normalized(dim):
    rng = np.random.default_rng(dim)
    psi = linalg.random_state(dim, rng)
    assert np.isclose(np.linalg.norm(psi), 1.0)


def test_expectation_on_ket_and_density_agree():
    rng = np.random.default_rng(8)
    psi = linalg.random_state(3, rng)
    obs = rng.normal(size=(3, 3))
    obs = obs + obs.T
    rho = np.outer(psi, psi.conj())
    assert np.isclose(
        linalg.expectation(obs, psi), linalg.expectation(obs, rho), atol=1e-12
    )


def test_expectation_rejects_nonhermitian():
    m = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        linalg.expectation(m, np.array([1.0, 0.0]))


def test_project_psd_fixes_negative_eigenvalue():
    m = np.diag([1.0, -0.5, 0.2])
    p = linalg.project_psd(m)
    w = np.linalg.eigvalsh(p)
    assert w.min() >= -1e-12
    assert np.allclose(p, np.diag([1.0, 0.0, 0.2]), atol=1e-12)


def test_project_psd_idempotent_on_psd_input():
    rng = np.random.default_rng(13)
    rho = linalg.random_density(4, rng)
    assert np.allclose(linalg.project_psd(rho), rho, atol=1e-10)


def test_project_psd_is_frobenius_nearest():
    # any PSD competitor must be at least as far in Frobenius norm
    rng = np.random.default_rng(17)
    a = rng.normal(size=(4, 4))
    a = (a + a.T) / 2
    proj = linalg.project_psd(a)
    d_proj = np.linalg.norm(a - proj)
    for k in range(20):
        comp = linalg.random_density(4, rng) * rng.uniform(0.1, 3.0)
        assert np.linalg.norm(a - comp) >= d_proj - 1e-12


def test_embed_two_mode_acts_only_on_selected_pair():
    u2 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    u = linalg.embed_two_mode(u2, (0, 2), 3)
    vec = np.array([1.0, 2.0, 3.0], dtype=complex)
    out = u @ vec
    assert np.allclose(out, [3.0, 2.0, 1.0])


def test_unitary_check_flags_scaled_matrix():
    assert linalg.is_unitary(np.eye(3))
    assert not linalg.is_unitary(1.5 * np.eye(3))
