"""Monte Carlo model of the heralded-photon contextuality experiment.

Each round is one pump pulse: a Bernoulli pair source, idler-arm heralding,
lossy propagation of the signal through the configured mesh stage for a
randomly scheduled context, Born-rule collapse onto one of three output
ports, detector efficiency and dark counts, and aggregation into count
tables plus a raw bit stream (port m_i -> 0, port m_{i+1} -> 1).

Randomness is drawn from purpose-keyed PCG64 substreams derived from
(seed, shard, purpose), so changing one physical parameter reuses the same
underlying draws for everything else (common random numbers). Loss enters
only as the acceptance threshold on the survival stream, which makes
click sets pathwise monotone in the transmission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kcbs
from .formats import BitStream
from .mesh import StagePlan

OUTCOME_NAMES = ("no_click", "bit0", "bit1", "aux", "multi")
PORT_LABELS = ("m_i", "m_j", "aux")

# purpose ids for the per-shard substreams
_P_CONTEXT, _P_PAIR, _P_HERALD, _P_SURVIVE, _P_COLLAPSE = 0, 1, 2, 3, 4
_P_DETECT, _P_DARK, _P_PHASE = 5, 6, 7
_P_PAIR2, _P_SURVIVE2, _P_COLLAPSE2, _P_DETECT2 = 8, 9, 10, 11

_CHUNK_ROUNDS = 1_000_000


@dataclass(frozen=True)
class SourceParams:
    """Pulsed pair source: repetition rate, pair probability, herald arm."""

    rep_rate: float = 1.25e9
    pair_prob: float = 0.03
    herald_eff: float = 0.25

    def __post_init__(self) -> None:
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be positive")
        if not 0.0 <= self.pair_prob <= 1.0:
            raise ValueError("pair_prob must be in [0, 1]")
        if not 0.0 < self.herald_eff <= 1.0:
            raise ValueError("herald_eff must be in (0, 1]")


@dataclass(frozen=True)
class ChannelParams:
    """Signal-arm losses (dB), per-port detector efficiency, dark counts."""

    source_loss_db: float = 11.0
    mesh_loss_db: float = 27.0
    per_cell_loss_db: float = 0.5
    detector_eff: tuple[float, float, float] = (0.85, 0.83, 0.86)
    dark_prob: float = 1e-7

    def __post_init__(self) -> None:
        if min(self.source_loss_db, self.mesh_loss_db, self.per_cell_loss_db) < 0:
            raise ValueError("losses must be nonnegative")
        if len(self.detector_eff) != 3 or not all(
            0.0 < e <= 1.0 for e in self.detector_eff
        ):
            raise ValueError("need three detector efficiencies in (0, 1]")
        if not 0.0 <= self.dark_prob <= 1.0:
            raise ValueError("dark_prob must be in [0, 1]")

    def transmission(self, n_active_cells: int) -> float:
        total_db = (
            self.source_loss_db
            + self.mesh_loss_db
            + self.per_cell_loss_db * n_active_cells
        )
        return 10.0 ** (-total_db / 10.0)


@dataclass(frozen=True)
class NoiseParams:
    """Imperfection knobs beyond loss.

    phase_sigma is the per-round Gaussian error on every programmed MZI
    phase. vprime_misalign is consumed by the configuration layer when it
    builds the stage plan (it fixes how far the realized v'_1 is turned);
    the default reproduces an ideal overlap R = 0.93. multi_pair enables an
    independent second pair whose extra click makes the round a discard.
    """

    phase_sigma: float = 0.02
    vprime_misalign: float = field(
        default_factory=lambda: kcbs.misalign_for_overlap(0.93)
    )
    multi_pair: bool = False

    def __post_init__(self) -> None:
        if self.phase_sigma < 0:
            raise ValueError("phase_sigma must be nonnegative")
        if self.vprime_misalign < 0:
            raise ValueError("vprime_misalign must be nonnegative")


@dataclass(frozen=True)
class EventRecord:
    """One logged round."""

    round_id: int
    context: int
    herald: bool
    clicks: tuple[str, ...]
    outcome: str
    timestamp: float


@dataclass(frozen=True)
class RunSummary:
    """Aggregated result of a simulation run."""

    n_rounds: int
    heralded_rounds: int
    counts: np.ndarray  # (5, 3) single-click counts per (context, port)
    context_heralded: np.ndarray  # (5,) heralded rounds per context
    outcome_totals: dict[str, int]
    coincidence_rate: float
    raw_bits: BitStream
    joint_tables: tuple[kcbs.JointProbTable, ...]
    events: tuple[EventRecord, ...]
    metadata: dict

    @property
    def coincidences(self) -> int:
        return int(self.counts.sum())

    @property
    def duration_s(self) -> float:
        return self.n_rounds / self.metadata["rep_rate"]


def _stream(seed: int, shard: int, purpose: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, shard, purpose]))
    )


def _stage_cells(plan: StagePlan) -> list[list]:
    per_context = []
    for c in range(1, 6):
        cfg = plan.stage(c)
        per_context.append(sorted(cfg.cells, key=lambda cell: cell.layer))
    sizes = {len(cells) for cells in per_context}
    if len(sizes) != 1:
        raise ValueError("stages must share one active-cell count for the loss model")
    return per_context

def _propagate(cells: list, jitter: np.ndarray | None) -> np.ndarray:
    """Port probabilities for a batch entering on mode 0.

    jitter has shape (batch, 2 * n_cells): additive phase errors in cell
    order, phi1 then phi2 per cell.
    """
    n = jitter.shape[0] if jitter is not None else 1
    amps = np.zeros((n, 3), dtype=complex)
    amps[:, 0] = 1.0
    for k, cell in enumerate(cells):
        p1, p2 = cell.setting.phi1, cell.setting.phi2
        if jitter is not None:
            p1 = p1 + jitter[:, 2 * k]
            p2 = p2 + jitter[:, 2 * k + 1]
        delta = np.asarray(p2 - p1, dtype=float)
        pre = 1j * np.exp(0.5j * np.asarray(p1 + p2, dtype=float))
        s, c = np.sin(delta / 2.0), np.cos(delta / 2.0)
        a, b = cell.modes
        xa = amps[:, a].copy()
        xb = amps[:, b]
        amps[:, a] = pre * (s * xa + c * xb)
        amps[:, b] = pre * (c * xa - s * xb)
    return np.abs(amps) ** 2


def _block_contexts(global_ids: np.ndarray, n_rounds: int) -> np.ndarray:
    # five contiguous blocks; earlier contexts absorb the remainder
    base, extra = divmod(n_rounds, 5)
    bounds = np.cumsum([base + (1 if i < extra else 0) for i in range(5)])
    return np.searchsorted(bounds, global_ids, side="right").astype(np.int8)


def _simulate_shard(
    plan: StagePlan,
    src: SourceParams,
    ch: ChannelParams,
    noise: NoiseParams,
    n_rounds: int,
    total_rounds: int,
    seed: int,
    shard: int,
    offset: int,
    scheduling: str,
    event_budget: int,
) -> dict:
    cells = _stage_cells(plan)
    n_phases = 2 * len(cells[0])
    trans = ch.transmission(len(cells[0]))
    if not 0.0 <= trans <= 1.0:
        raise ValueError(f"derived transmission {trans} outside [0, 1]")
    eta = np.asarray(ch.detector_eff, dtype=float)

    streams = {p: _stream(seed, shard, p) for p in range(12)}

    counts = np.zeros((5, 3), dtype=np.int64)
    context_her = np.zeros(5, dtype=np.int64)
    outcome_totals = np.zeros(5, dtype=np.int64)
    bit_chunks: list[np.ndarray] = []
    events: list[EventRecord] = []

    for start in range(0, n_rounds, _CHUNK_ROUNDS):
        m = min(_CHUNK_ROUNDS, n_rounds - start)
        gids = offset + start + np.arange(m, dtype=np.int64)
        if scheduling == "blocks":
            ctx = _block_contexts(gids, total_rounds)
        else:
            ctx = streams[_P_CONTEXT].integers(0, 5, size=m, dtype=np.int8)

        pair = streams[_P_PAIR].random(m) < src.pair_prob
        herald = np.zeros(m, dtype=bool)
        pidx = np.nonzero(pair)[0]
        if pidx.size:
            herald[pidx] = streams[_P_HERALD].random(pidx.size) < src.herald_eff
        hidx = np.nonzero(herald)[0]
        nh = hidx.size
        outcome_totals[0] += m - nh  # rounds that cannot beat post-selection

        if nh == 0:
            continue
        hctx = ctx[hidx]
        context_her += np.bincount(hctx, minlength=5)

        survived = streams[_P_SURVIVE].random(nh) < trans
        u_col = streams[_P_COLLAPSE].random(nh)
        u_det = streams[_P_DETECT].random((nh, 3))
        dark = streams[_P_DARK].random((nh, 3)) < ch.dark_prob
        jitter = None
        if noise.phase_sigma > 0:
            jitter = streams[_P_PHASE].normal(0.0, noise.phase_sigma, (nh, n_phases))

        probs = np.empty((nh, 3))
        for c in range(5):
            rows = np.nonzero(hctx == c)[0]
            if rows.size == 0:
                continue
            if jitter is None:
                probs[rows] = _propagate(cells[c], None)[0]
            else:
                probs[rows] = _propagate(cells[c], jitter[rows])

        cum = np.cumsum(probs, axis=1)
        cum[:, -1] = 1.0  # guard fp round-off in the last bin
        mode = (u_col[:, None] >= cum).sum(axis=1).astype(np.int8)

        arange = np.arange(nh)
        clicked = survived & (u_det[arange, mode] < eta[mode])
        click_mat = dark.copy()
        click_mat[arange[clicked], mode[clicked]] = True

        if noise.multi_pair:
            pair2 = streams[_P_PAIR2].random(nh) < src.pair_prob
            surv2 = streams[_P_SURVIVE2].random(nh) < trans
            u_col2 = streams[_P_COLLAPSE2].random(nh)
            u_det2 = streams[_P_DETECT2].random(nh)
            mode2 = (u_col2[:, None] >= cum).sum(axis=1).astype(np.int8)
            fired2 = pair2 & surv2 & (u_det2 < eta[mode2])
            click_mat[arange[fired2], mode2[fired2]] = True

        n_clicks = click_mat.sum(axis=1)
        port = np.argmax(click_mat, axis=1).astype(np.int8)
        outcome = np.zeros(nh, dtype=np.int8)  # no_click
        single = n_clicks == 1
        outcome[single & (port == 0)] = 1  # bit0
        outcome[single & (port == 1)] = 2  # bit1
        outcome[single & (port == 2)] = 3  # aux
        outcome[n_clicks >= 2] = 4  # multi

        outcome_totals += np.bincount(outcome, minlength=5)
        keys = hctx[single].astype(np.int64) * 3 + port[single]
        counts += np.bincount(keys, minlength=15).reshape(5, 3)

        bit_rows = single & (port <= 1)
        bit_chunks.append(port[bit_rows].astype(np.uint8))

        if len(events) < event_budget:
            take = min(event_budget - len(events), nh)
            for j in range(take):
                cl = tuple(
                    PORT_LABELS[k] for k in range(3) if click_mat[j, k]
                )
                rid = int(gids[hidx[j]])
                events.append(
                    EventRecord(
                        round_id=rid,
                        context=int(hctx[j]) + 1,
                        herald=True,
                        clicks=cl,
                        outcome=OUTCOME_NAMES[outcome[j]],
                        timestamp=rid / src.rep_rate,
                    )
                )

    bits = (
        np.concatenate(bit_chunks) if bit_chunks else np.zeros(0, dtype=np.uint8)
    )
    return {
        "counts": counts,
        "context_heralded": context_her,
        "outcome_totals": outcome_totals,
        "bits": bits,
        "heralded": int(context_her.sum()),
        "events": events,
    }


def _shard_ranges(n_rounds: int, n_shards: int) -> list[tuple[int, int]]:
    base, extra = divmod(n_rounds, n_shards)
    ranges = []
    start = 0
    for s in range(n_shards):
        size = base + (1 if s < extra else 0)
        ranges.append((start, size))
        start += size
    return ranges


def run_simulation(
    plan: StagePlan,
    src: SourceParams,
    ch: ChannelParams,
    noise: NoiseParams,
    n_rounds: int,
    seed: int,
    scheduling: str = "uniform",
    n_shards: int = 1,
    event_budget: int = 0,
) -> RunSummary:
    """Simulate ``n_rounds`` pump pulses and aggregate the results.

    scheduling "uniform" draws an i.i.d. context per round; "blocks" runs
    the five contexts in contiguous blocks of the global round index (the
    long-dwell acquisition mode). Rounds are split contiguously across
    shards with independently derived substreams; merged counts and the
    (shard, round)-ordered bit stream are deterministic for a fixed
    configuration and seed.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be at least 1")
    if n_shards < 1:
        raise ValueError("n_shards must be at least 1")
    if scheduling not in ("uniform", "blocks"):
        raise ValueError(f"unknown scheduling {scheduling!r}")

    shard_results = []
    for shard, (offset, size) in enumerate(_shard_ranges(n_rounds, n_shards)):
        if size == 0:
            continue
        shard_results.append(
            _simulate_shard(
                plan,
                src,
                ch,
                noise,
                size,
                n_rounds,
                seed,
                shard,
                offset,
                scheduling,
                event_budget,
            )
        )

    counts = np.zeros((5, 3), dtype=np.int64)
    context_her = np.zeros(5, dtype=np.int64)
    totals = np.zeros(5, dtype=np.int64)
    bit_parts = []
    events: list[EventRecord] = []
    heralded = 0
    for res in shard_results:
        counts += res["counts"]
        context_her += res["context_heralded"]
        totals += res["outcome_totals"]
        bit_parts.append(res["bits"])
        heralded += res["heralded"]
        if len(events) < event_budget:
            events.extend(res["events"][: event_budget - len(events)])

    bits = BitStream(
        np.concatenate(bit_parts) if bit_parts else np.zeros(0, dtype=np.uint8)
    )
    tables = []
    for c in range(5):
        if counts[c].sum() > 0:
            tables.append(
                kcbs.efficiency_correct(counts[c], ch.detector_eff, c + 1)
            )
    n_cells = _stage_cells(plan)[0]
    coincidence_rate = counts.sum() / (n_rounds / src.rep_rate)
    outcome_totals = {
        name: int(totals[i]) for i, name in enumerate(OUTCOME_NAMES)
    }
    metadata = {
        "generator": "PCG64",
        "seed": int(seed),
        "n_shards": int(n_shards),
        "scheduling": scheduling,
        "rep_rate": src.rep_rate,
        "pair_prob": src.pair_prob,
        "herald_eff": src.herald_eff,
        "transmission": ch.transmission(len(n_cells)),
        "active_cells": len(n_cells),
        "phase_sigma": noise.phase_sigma,
        "vprime_misalign": noise.vprime_misalign,
        "multi_pair": noise.multi_pair,
        "dark_prob": ch.dark_prob,
        "detector_eff": list(ch.detector_eff),
    }
    return RunSummary(
        n_rounds=n_rounds,
        heralded_rounds=heralded,
        counts=counts,
        context_heralded=context_her,
        outcome_totals=outcome_totals,
        coincidence_rate=float(coincidence_rate),
        raw_bits=bits,
        joint_tables=tuple(tables),
        events=tuple(events),
        metadata=metadata,
    )


def detected_rate(summary: RunSummary, src: SourceParams) -> float:
    """Coincidence events per second of equivalent wall-clock acquisition."""
    if summary.n_rounds == 0:
        raise ValueError("empty run has no rate")
    return summary.coincidences / (summary.n_rounds / src.rep_rate)


def raw_bit_map(events) -> tuple[BitStream, dict[str, int]]:
    """Bits from an event stream: bit0 -> 0, bit1 -> 1, rest discarded.

    Returns the stream plus discard statistics keyed by outcome name.
    """
    bits = []
    discards = {name: 0 for name in OUTCOME_NAMES}
    for ev in events:
        if ev.outcome == "bit0":
            bits.append(0)
        elif ev.outcome == "bit1":
            bits.append(1)
        else:
            discards[ev.outcome] += 1
    return BitStream(np.asarray(bits, dtype=np.uint8)), discards


def event_to_dict(ev: EventRecord) -> dict:
    return {
        "round_id": ev.round_id,
        "context": ev.context,
        "herald": ev.herald,
        "clicks": list(ev.clicks),
        "outcome": ev.outcome,
        "timestamp": ev.timestamp,
    }
