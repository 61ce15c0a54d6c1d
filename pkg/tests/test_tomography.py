"""Tests for MUB tomography: bases, synthetic counts, MLE, bootstrap."""

from __future__ import annotations

import math

import numpy as np
import pytest

from cqrn import kcbs, tomography as tom


def psi0_rho() -> np.ndarray:
    psi = kcbs.optimal_state()
    return np.outer(psi, psi.conj())


def random_density(rng: np.random.Generator) -> np.ndarray:
    l_mat = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = l_mat @ l_mat.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------- bases


def test_mub_bases_are_unitary():
    for u in tom.mub_set():
        assert np.allclose(u.conj().T @ u, np.eye(3), atol=1e-12)


@pytest.mark.parametrize("a,b", [(0, 1), (0, 2), (1, 2)])
def test_mub_pairwise_overlaps_are_flat(a, b):
    bases = tom.mub_set()
    overlaps = np.abs(bases[a].conj().T @ bases[b]) ** 2
    assert np.allclose(overlaps, 1.0 / 3.0, atol=1e-12)


# ------------------------------------------------- probabilities, counts


def test_born_probabilities_of_optimal_state():
    probs = tom.born_probabilities(psi0_rho(), tom.mub_set())
    w = 1.0 / math.sqrt(5.0)
    assert np.allclose(probs[0], [w, w, 1.0 - 2.0 * w], atol=1e-12)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_born_probabilities_of_maximally_mixed():
    probs = tom.born_probabilities(np.eye(3) / 3.0, tom.mub_set())
    assert np.allclose(probs, 1.0 / 3.0, atol=1e-12)


def test_born_rows_normalized_for_random_states():
    rng = np.random.default_rng(20240917)
    bases = tom.mub_set()
    for _ in range(30):
        probs = tom.born_probabilities(random_density(rng), bases)
        assert np.all(probs > -1e-12)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-10)


def test_simulate_counts_totals_and_determinism():
    bases = tom.mub_set()
    data = tom.simulate_counts(kcbs.optimal_state(), bases, 5000, seed=5)
    again = tom.simulate_counts(kcbs.optimal_state(), bases, 5000, seed=5)
    other = tom.simulate_counts(kcbs.optimal_state(), bases, 5000, seed=6)
    assert np.all(data.counts.sum(axis=1) == 5000)
    assert np.array_equal(data.counts, again.counts)
    assert not np.array_equal(data.counts, other.counts)


def test_simulate_counts_tracks_born_weights():
    bases = tom.mub_set()
    shots = 100_000
    data = tom.simulate_counts(kcbs.optimal_state(), bases, shots, seed=8)
    freq = data.counts[0] / shots
    w = 1.0 / math.sqrt(5.0)
    for f, p in zip(freq, (w, w, 1.0 - 2.0 * w)):
        sigma = math.sqrt(p * (1.0 - p) / shots)
        assert abs(f - p) < 5.0 * sigma


@pytest.mark.parametrize(
    "counts",
    [
        np.zeros((2, 3), dtype=np.int64),
        np.full((3, 3), -1, dtype=np.int64),
        np.array([[1, 1, 1], [0, 0, 0], [1, 1, 1]], dtype=np.int64),
    ],
)
def test_tomography_data_rejects_bad_counts(counts):
    with pytest.raises(ValueError):
        tom.TomographyData(counts=counts)


def test_simulate_counts_rejects_zero_shots():
    with pytest.raises(ValueError):
        tom.simulate_counts(kcbs.optimal_state(), tom.mub_set(), 0, seed=1)


# ------------------------------------------------------------------ MLE


def test_mle_recovers_pure_state():
    bases = tom.mub_set()
    data = tom.simulate_counts(kcbs.optimal_state(), bases, 100_000, seed=3)
    res = tom.mle_reconstruct(data, bases)
    assert res.converged
    assert tom.fidelity(res.rho, psi0_rho()) >= 0.999


def test_mle_flat_counts_give_maximally_mixed():
    bases = tom.mub_set()
    data = tom.TomographyData(counts=np.full((3, 3), 1000, dtype=np.int64))
    res = tom.mle_reconstruct(data, bases)
    assert np.allclose(res.rho, np.eye(3) / 3.0, atol=1e-3)


def test_mle_output_is_physical():
    rng = np.random.default_rng(77)
    bases = tom.mub_set()
    for _ in range(5):
        data = tom.simulate_counts(random_density(rng), bases, 20_000, seed=9)
        res = tom.mle_reconstruct(data, bases)
        w = np.linalg.eigvalsh(res.rho)
        assert w.min() > -1e-10
        assert abs(np.trace(res.rho).real - 1.0) < 1e-10
        assert np.allclose(res.rho, res.rho.conj().T, atol=1e-12)


def test_mle_beats_the_flat_initial_guess():
    bases = tom.mub_set()
    data = tom.simulate_counts(kcbs.optimal_state(), bases, 10_000, seed=4)
    res = tom.mle_reconstruct(data, bases)
    flat = tom.born_probabilities(np.eye(3) / 3.0, bases)
    baseline = float(np.sum(data.counts * np.log(flat)))
    assert res.log_likelihood >= baseline


def test_mle_reproduces_measured_frequencies():
    # three bases are not informationally complete for arbitrary mixed
    # states, so the universal check is frequency reproduction, not
    # state recovery
    rng = np.random.default_rng(20240918)
    bases = tom.mub_set()
    for trial in range(5):
        rho = random_density(rng)
        data = tom.simulate_counts(rho, bases, 100_000, seed=1000 + trial)
        res = tom.mle_reconstruct(data, bases)
        emp = data.counts / data.counts.sum(axis=1, keepdims=True)
        pred = tom.born_probabilities(res.rho, bases)
        assert np.abs(pred - emp).max() < 1e-5


# ------------------------------------------------------------- fidelity


def test_fidelity_identical_states_is_one():
    assert tom.fidelity(psi0_rho(), psi0_rho()) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_orthogonal_pure_states_is_zero():
    a = np.zeros((3, 3), dtype=complex)
    b = np.zeros((3, 3), dtype=complex)
    a[0, 0] = 1.0
    b[1, 1] = 1.0
    assert tom.fidelity(a, b) == pytest.approx(0.0, abs=1e-12)


def test_fidelity_pure_target_reduces_to_expectation():
    rng = np.random.default_rng(11)
    psi = kcbs.optimal_state()
    for _ in range(20):
        rho = random_density(rng)
        expected = float(np.real(psi.conj() @ rho @ psi))
        assert tom.fidelity(rho, psi0_rho()) == pytest.approx(
            expected, abs=1e-9
        )


def test_fidelity_is_symmetric():
    rng = np.random.default_rng(12)
    for _ in range(10):
        rho, sigma = random_density(rng), random_density(rng)
        assert tom.fidelity(rho, sigma) == pytest.approx(
            tom.fidelity(sigma, rho), abs=1e-9
        )


def test_fidelity_rejects_unnormalized_input():
    with pytest.raises(ValueError):
        tom.fidelity(2.0 * psi0_rho(), psi0_rho())


def test_fidelity_rejects_negative_input():
    bad = np.diag([1.5, -0.5, 0.0]).astype(complex)
    with pytest.raises(ValueError):
        tom.fidelity(bad, psi0_rho())


def test_project_psd_unit_fixes_small_negativity():
    dirty = np.diag([1.001, 0.0001, -0.0011]).astype(complex)
    fixed = tom.project_psd_unit(dirty)
    w = np.linalg.eigvalsh(fixed)
    assert w.min() >= 0.0
    assert abs(np.trace(fixed).real - 1.0) < 1e-12


# ------------------------------------------------------------ bootstrap


def test_bootstrap_requires_enough_resamples():
    data = tom.simulate_counts(kcbs.optimal_state(), tom.mub_set(), 100, seed=2)
    with pytest.raises(ValueError):
        tom.bootstrap_uncertainty(data, tom.mub_set(), resamples=50, seed=1)


def test_bootstrap_is_deterministic_and_sane():
    bases = tom.mub_set()
    data = tom.simulate_counts(kcbs.optimal_state(), bases, 2000, seed=21)
    kwargs = dict(resamples=100, seed=9, target=psi0_rho())
    first = tom.bootstrap_uncertainty(data, bases, **kwargs)
    second = tom.bootstrap_uncertainty(data, bases, **kwargs)
    assert np.array_equal(first.rho_real_std, second.rho_real_std)
    assert first.fidelity_std == second.fidelity_std
    assert 0.0 < first.fidelity_std < 0.05
    assert first.fidelity_mean > 0.97
    assert np.all(first.rho_real_std >= 0.0)
    assert np.all(first.rho_real_std < 0.05)
