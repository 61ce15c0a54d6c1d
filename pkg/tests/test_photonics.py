"""Monte Carlo experiment model: counts, rates, bits, invariants."""

from __future__ import annotations

import math

import numpy as np
import pytest

from cqrn import kcbs, mesh, photonics

IDEAL_TERM = 1.0 - 4.0 / math.sqrt(5.0)


def make_plan(misalign: float = 0.0) -> mesh.StagePlan:
    pent = kcbs.pentagram(misalign)
    psi0 = kcbs.optimal_state()
    return mesh.build_stage_plan(
        [pent.measured_pair(c) for c in range(1, 6)], psi0
    )


IDEAL_SRC = photonics.SourceParams(pair_prob=1.0, herald_eff=1.0)
IDEAL_CH = photonics.ChannelParams(0.0, 0.0, 0.0, (1.0, 1.0, 1.0), 0.0)
QUIET = photonics.NoiseParams(phase_sigma=0.0, vprime_misalign=0.0)


def test_ideal_terms_within_binomial_error():
    s = photonics.run_simulation(make_plan(), IDEAL_SRC, IDEAL_CH, QUIET, 100_000, seed=21)
    assert s.heralded_rounds == 100_000
    for table in s.joint_tables:
        assert abs(table.term() - IDEAL_TERM) < 3.0 * table.term_sigma()


def test_same_seed_same_summary():
    plan = make_plan()
    a = photonics.run_simulation(plan, IDEAL_SRC, IDEAL_CH, QUIET, 30_000, seed=5)
    b = photonics.run_simulation(plan, IDEAL_SRC, IDEAL_CH, QUIET, 30_000, seed=5)
    assert np.array_equal(a.counts, b.counts)
    assert a.raw_bits == b.raw_bits
    assert a.outcome_totals == b.outcome_totals


def test_different_seed_different_bits():
    plan = make_plan()
    a = photonics.run_simulation(plan, IDEAL_SRC, IDEAL_CH, QUIET, 30_000, seed=5)
    b = photonics.run_simulation(plan, IDEAL_SRC, IDEAL_CH, QUIET, 30_000, seed=6)
    assert not a.raw_bits == b.raw_bits


def test_sharded_run_is_deterministic_and_ordered():
    plan = make_plan()
    merged = photonics.run_simulation(
        plan, IDEAL_SRC, IDEAL_CH, QUIET, 40_000, seed=5, n_shards=4
    )
    again = photonics.run_simulation(
        plan, IDEAL_SRC, IDEAL_CH, QUIET, 40_000, seed=5, n_shards=4
    )
    assert merged.raw_bits == again.raw_bits
    # shard 0 alone reproduces the head of the merged stream
    solo = photonics.run_simulation(
        plan, IDEAL_SRC, IDEAL_CH, QUIET, 10_000, seed=5, n_shards=1
    )
    head = merged.raw_bits.bits[: len(solo.raw_bits)]
    assert np.array_equal(head, solo.raw_bits.bits)


def test_blocks_scheduling_splits_contexts_exactly():
    s = photonics.run_simulation(
        make_plan(), IDEAL_SRC, IDEAL_CH, QUIET, 50_000, seed=3, scheduling="blocks"
    )
    assert np.array_equal(s.context_heralded, np.full(5, 10_000))


def test_no_herald_no_table():
    src = photonics.SourceParams(pair_prob=0.0)
    s = photonics.run_simulation(make_plan(), src, IDEAL_CH, QUIET, 1_000, seed=1)
    assert s.heralded_rounds == 0
    assert s.joint_tables == ()
    assert len(s.raw_bits) == 0
    assert s.outcome_totals["no_click"] == 1_000


def test_postselection_never_emits_double_negative():
    noise = photonics.NoiseParams(phase_sigma=0.02)
    s = photonics.run_simulation(
        make_plan(noise.vprime_misalign), IDEAL_SRC,
        photonics.ChannelParams(0.0, 0.0, 0.0, (0.85, 0.83, 0.86), 1e-5),
        noise, 100_000, seed=8,
    )
    for table in s.joint_tables:
        assert table.probs[3] == 0.0


def test_no_signaling_between_neighbor_contexts():
    # A_2 shows up as port 1 of context 1 and port 0 of context 2
    s = photonics.run_simulation(make_plan(), IDEAL_SRC, IDEAL_CH, QUIET, 200_000, seed=12)
    t1, t2 = s.joint_tables[0], s.joint_tables[1]
    diff = abs(t1.probs[2] - t2.probs[0])
    sigma = math.hypot(t1.sigmas[2], t2.sigmas[0])
    assert diff < 3.0 * sigma


def test_loss_monotonicity_under_common_randomness():
    plan = make_plan()
    src = photonics.SourceParams()
    noise = photonics.NoiseParams()
    base = dict(per_cell_loss_db=0.5, detector_eff=(0.85, 0.83, 0.86), dark_prob=0.0)
    low = photonics.ChannelParams(11.0, 27.0, **base)
    results = []
    for extra in (0.0, 2.0, 4.0):
        ch = photonics.ChannelParams(11.0 + extra, 27.0, **base)
        s = photonics.run_simulation(plan, src, ch, noise, 30_000_000, seed=77)
        results.append(s.coincidences)
    assert results[0] >= results[1] >= results[2]


def test_full_budget_rate_lands_near_target():
    # loss budget plus calibrated herald efficiency: coincidence rate
    # within a factor of two of 282/s
    plan = make_plan(photonics.NoiseParams().vprime_misalign)
    src = photonics.SourceParams()
    s = photonics.run_simulation(
        plan, src, photonics.ChannelParams(), photonics.NoiseParams(),
        150_000_000, seed=4242,
    )
    rate = photonics.detected_rate(s, src)
    assert 141.0 <= rate <= 564.0


def test_detected_rate_rejects_empty_run():
    s = photonics.run_simulation(make_plan(), IDEAL_SRC, IDEAL_CH, QUIET, 100, seed=2)
    object.__setattr__(s, "n_rounds", 0)
    with pytest.raises(ValueError):
        photonics.detected_rate(s, photonics.SourceParams())


def test_raw_bit_map_orders_and_discards():
    mk = lambda i, out: photonics.EventRecord(i, 1, True, (), out, 0.0)
    events = [
        mk(0, "bit1"), mk(1, "aux"), mk(2, "bit0"), mk(3, "multi"),
        mk(4, "bit1"), mk(5, "no_click"),
    ]
    bits, discards = photonics.raw_bit_map(events)
    assert list(bits.bits) == [1, 0, 1]
    assert discards["aux"] == 1 and discards["multi"] == 1
    assert discards["no_click"] == 1


def test_raw_bits_balanced_on_ideal_stream():
    s = photonics.run_simulation(make_plan(), IDEAL_SRC, IDEAL_CH, QUIET, 100_000, seed=31)
    n = len(s.raw_bits)
    ones = s.raw_bits.bits.sum()
    # p0 = p1 exactly, binomial 3 sigma
    assert abs(ones - n / 2) < 3.0 * math.sqrt(n * 0.25)


def test_event_records_expose_round_structure():
    s = photonics.run_simulation(
        make_plan(), IDEAL_SRC, IDEAL_CH, QUIET, 1_000, seed=9, event_budget=50
    )
    assert len(s.events) == 50
    for ev in s.events:
        assert ev.herald
        assert 1 <= ev.context <= 5
        if ev.outcome == "bit0":
            assert ev.clicks == ("m_i",)
        if ev.outcome == "bit1":
            assert ev.clicks == ("m_j",)
        assert ev.timestamp == ev.round_id / IDEAL_SRC.rep_rate


def test_multi_pair_mode_produces_discards():
    noise = photonics.NoiseParams(phase_sigma=0.0, vprime_misalign=0.0, multi_pair=True)
    src = photonics.SourceParams(pair_prob=0.5, herald_eff=1.0)
    s = photonics.run_simulation(make_plan(), src, IDEAL_CH, noise, 50_000, seed=14)
    assert s.outcome_totals["multi"] > 0
    for table in s.joint_tables:
        assert table.probs[3] == 0.0


def test_dark_counts_can_fake_clicks_without_signal():
    # heralded rounds whose photon is always lost; any click is a dark one
    src = photonics.SourceParams(pair_prob=1.0, herald_eff=1.0)
    ch = photonics.ChannelParams(200.0, 0.0, 0.0, (1.0, 1.0, 1.0), 5e-3)
    s = photonics.run_simulation(make_plan(), src, ch, QUIET, 50_000, seed=23)
    clicks = sum(s.outcome_totals[k] for k in ("bit0", "bit1", "aux", "multi"))
    assert clicks > 0
    assert s.outcome_totals["no_click"] > 0


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        photonics.SourceParams(pair_prob=1.5)
    with pytest.raises(ValueError):
        photonics.ChannelParams(source_loss_db=-1.0)
    with pytest.raises(ValueError):
        photonics.NoiseParams(phase_sigma=-0.1)
    with pytest.raises(ValueError):
        photonics.run_simulation(
            make_plan(), IDEAL_SRC, IDEAL_CH, QUIET, 0, seed=1
        )
