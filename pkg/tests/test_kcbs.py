"""Pentagram geometry, witness values, and count-table evaluation."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from cqrn import kcbs

SQRT5 = math.sqrt(5.0)


def test_quantum_minimum_on_optimal_state():
    chi = kcbs.kcbs_value(kcbs.optimal_state())
    assert abs(chi - (5.0 - 4.0 * SQRT5)) < 1e-9


def test_classical_bound_by_exhaustion():
    # all 32 deterministic +/-1 assignments of the five observables
    best = min(
        sum(a[i] * a[(i + 1) % 5] for i in range(5))
        for a in itertools.product((-1, 1), repeat=5)
    )
    assert best == -3


def test_maximally_mixed_state_value():
    chi = kcbs.kcbs_value(np.eye(3) / 3.0)
    assert abs(chi - (-5.0 / 3.0)) < 1e-12


def test_pentagram_adjacent_orthogonality():
    pent = kcbs.pentagram()
    for i in range(5):
        dot = pent.vectors[i] @ pent.vectors[(i + 1) % 5]
        assert abs(dot) < 1e-12


def test_pentagram_equal_born_weights():
    pent = kcbs.pentagram()
    psi0 = kcbs.optimal_state()
    w = np.abs(pent.vectors @ psi0) ** 2
    assert np.allclose(w, 1.0 / SQRT5, atol=1e-12)


def test_random_states_never_beat_quantum_minimum():
    rng = np.random.default_rng(42)
    pent = kcbs.pentagram()
    for _ in range(200):
        psi = rng.normal(size=3) + 1j * rng.normal(size=3)
        psi = psi / np.linalg.norm(psi)
        assert kcbs.kcbs_value(psi, pent) >= 5.0 - 4.0 * SQRT5 - 1e-9


@pytest.mark.parametrize("r_target", [0.99, 0.93, 0.85, 0.6])
def test_misalignment_angle_reproduces_overlap(r_target):
    alpha = kcbs.misalign_for_overlap(r_target)
    pent = kcbs.pentagram(alpha)
    r = kcbs.overlap_r(pent, kcbs.optimal_state())
    assert abs(r - r_target) < 1e-9


def test_misaligned_pair_stays_orthonormal_with_ideal_weights():
    alpha = kcbs.misalign_for_overlap(0.93)
    pent = kcbs.pentagram(alpha)
    psi0 = kcbs.optimal_state()
    a, b = pent.measured_pair(1)
    assert abs(a @ b) < 1e-12
    assert abs(abs(a @ psi0) ** 2 - 1.0 / SQRT5) < 1e-12
    assert abs(abs(b @ psi0) ** 2 - 1.0 / SQRT5) < 1e-12


def test_zero_misalignment_is_identity():
    pent = kcbs.pentagram(0.0)
    assert np.allclose(pent.vprime, pent.vectors[0])
    assert np.allclose(pent.vpartner, pent.vectors[1])


def test_modified_witness_adds_compatibility_penalty():
    terms = np.full(5, 1.0 - 4.0 / SQRT5)
    assert np.isclose(
        kcbs.modified_kcbs(terms, 1.0), 5.0 - 4.0 * SQRT5, atol=1e-12
    )
    assert np.isclose(
        kcbs.modified_kcbs(terms, 0.93), 5.0 - 4.0 * SQRT5 + 0.07, atol=1e-12
    )


def test_expectation_from_joint_signs():
    assert kcbs.expectation_from_joint(0.0, 1.0, 0.0, 0.0) == 1.0
    assert kcbs.expectation_from_joint(0.5, 0.0, 0.5, 0.0) == -1.0


def test_joint_table_term_matches_probabilities():
    w = 1.0 / SQRT5
    probs = np.array([w, 1.0 - 2.0 * w, w, 0.0])
    table = kcbs.JointProbTable(context=1, probs=probs, sigmas=np.zeros(4))
    assert abs(table.term() - (1.0 - 4.0 / SQRT5)) < 1e-12


def test_joint_table_rejects_unnormalized():
    table = kcbs.JointProbTable(
        context=1, probs=np.array([0.5, 0.5, 0.5, 0.0]), sigmas=np.zeros(4)
    )
    with pytest.raises(ValueError):
        table.check_normalized()


def test_efficiency_correction_undoes_detector_bias():
    rng = np.random.default_rng(99)
    eta = np.array([0.85, 0.83, 0.86])
    true_p = np.array([0.45, 0.44, 0.11])
    n = 2_000_000
    clicks = rng.multinomial(n, true_p * eta / (true_p * eta).sum())
    # correction happens on raw click counts; recover the true split
    table = kcbs.efficiency_correct(clicks.astype(float), eta, context=2)
    assert abs(table.probs[0] - true_p[0]) < 5e-3
    assert abs(table.probs[2] - true_p[1]) < 5e-3
    assert abs(table.probs[1] - true_p[2]) < 5e-3
    assert table.probs[3] == 0.0


def test_efficiency_correction_sigma_scales_with_counts():
    eta = np.array([0.85, 0.83, 0.86])
    small = kcbs.efficiency_correct(np.array([45.0, 44.0, 11.0]), eta, 1)
    large = kcbs.efficiency_correct(np.array([4500.0, 4400.0, 1100.0]), eta, 1)
    assert np.all(large.sigmas[:3] < small.sigmas[:3])
    assert small.term_sigma() > 0


def test_evaluate_tables_assembles_result():
    w = 1.0 / SQRT5
    probs = np.array([w, 1.0 - 2.0 * w, w, 0.0])
    sig = np.full(4, 1e-3)
    tables = [
        kcbs.JointProbTable(context=c, probs=probs, sigmas=sig) for c in range(1, 6)
    ]
    res = kcbs.evaluate_tables(tables, r_overlap=0.93, r_sigma=0.01)
    assert abs(res.chi_sum - (5.0 - 4.0 * SQRT5)) < 1e-9
    assert abs(res.chi_modified - (res.chi_sum + 0.07)) < 1e-12
    assert res.chi_sigma > 0


def test_observables_square_to_identity():
    pent = kcbs.pentagram(kcbs.misalign_for_overlap(0.9))
    for a in pent.observables():
        assert np.allclose(a @ a, np.eye(3), atol=1e-12)
