"""Programmable two-mode-coupler mesh: transfer model and synthesis.

Every cell is a Mach-Zehnder unit with two internal phases (phi1, phi2). With
Delta = phi2 - phi1 the single-cell transfer is fixed as

    U = i * exp(i*(phi1+phi2)/2) * [[sin(Delta/2),  cos(Delta/2)],
                                    [cos(Delta/2), -sin(Delta/2)]]

so Delta = pi is BAR (|U00| = 1) and Delta = 0 is CROSS. A mesh configuration
is an ordered list of cells on mode pairs; the mesh unitary is the product of
the embedded cells in propagation order (first listed acts first).

Synthesis targets the three-mode stage used by the experiment: a preparation
stage splitting the input mode into the target qutrit amplitudes with two
rotation cells, and per-context stages routing a chosen pair of measurement
directions onto two detector ports. Detectors are phase-insensitive, so all
unitary equalities here are up to a per-row phase.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .linalg import embed_two_mode

TWO_PI = 2.0 * math.pi
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class MZISetting:
    """Internal phases of one cell, stored mod 2*pi in [0, 2*pi)."""

    phi1: float
    phi2: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "phi1", float(self.phi1) % TWO_PI)
        object.__setattr__(self, "phi2", float(self.phi2) % TWO_PI)

    @property
    def delta(self) -> float:
        return (self.phi2 - self.phi1) % TWO_PI


def mzi_transfer(setting: MZISetting) -> np.ndarray:
    """2x2 transfer matrix of one cell under the fixed convention."""
    half = 0.5 * (setting.phi2 - setting.phi1)
    pref = 1j * np.exp(0.5j * (setting.phi1 + setting.phi2))
    s, c = math.sin(half), math.cos(half)
    return pref * np.array([[s, c], [c, -s]], dtype=complex)


def bar_setting() -> MZISetting:
    """Identity-routing cell (Delta = pi); transfer is diag(-1, 1)."""
    return MZISetting(phi1=0.0, phi2=math.pi)


def cross_setting() -> MZISetting:
    """Full swap cell (Delta = 0)."""
    return MZISetting(phi1=0.5 * math.pi, phi2=0.5 * math.pi)


def rotation_setting(delta: float) -> MZISetting:
    """Cell with mixing angle ``delta`` and a real transfer matrix.

    Choosing phi1 + phi2 = pi cancels the i*exp(...) prefactor to -1, so the
    transfer is the real reflection -[[sin(d/2), cos(d/2)], [cos(d/2),
    -sin(d/2)]]; real cells keep synthesized stages free of stray
    inter-stage phases.
    """
    return MZISetting(phi1=0.5 * (math.pi - delta), phi2=0.5 * (math.pi + delta))


@dataclass(frozen=True)
class MeshCell:
    """One placed cell: id, layer for simultaneity checks, mode pair, phases."""

    cell_id: str
    layer: int
    modes: tuple[int, int]
    setting: MZISetting


@dataclass(frozen=True)
class MeshConfig:
    """Ordered cell list for one stage; cells not listed act as identity."""

    dim: int
    cells: tuple[MeshCell, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(self.cells))
        seen: dict[int, set[int]] = {}
        for cell in self.cells:
            used = seen.setdefault(cell.layer, set())
            overlap = used.intersection(cell.modes)
            if overlap:
                raise ValueError(
                    f"cell {cell.cell_id}: mode {overlap.pop()} already driven "
                    f"in layer {cell.layer}"
                )
            used.update(cell.modes)

    @property
    def n_active(self) -> int:
        return len(self.cells)

    def then(self, other: "MeshConfig") -> "MeshConfig":
        """Concatenate stages: ``self`` first, then ``other``."""
        if other.dim != self.dim:
            raise ValueError("stage dimensions differ")
        shift = 1 + max((c.layer for c in self.cells), default=-1)
        moved = tuple(
            MeshCell(c.cell_id, c.layer + shift, c.modes, c.setting)
            for c in other.cells
        )
        return MeshConfig(dim=self.dim, cells=self.cells + moved)


def mesh_unitary(cfg: MeshConfig) -> np.ndarray:
    """Total transfer matrix: embedded cells multiplied in propagation order."""
    u = np.eye(cfg.dim, dtype=complex)
    for cell in sorted(cfg.cells, key=lambda c: c.layer):
        u = embed_two_mode(mzi_transfer(cell.setting), cell.modes, cfg.dim) @ u
    return u


def synthesize_prep(target: np.ndarray) -> tuple[float, float]:
    """Mixing angles (delta1, delta2) preparing |target| from input mode 0.

    ``target`` must be a unit 3-vector with nonnegative entries. Cell 1 acts
    on modes (0,1), cell 2 on modes (1,2); closed form:

        |amp| = (sin(d1/2), cos(d1/2) sin(d2/2), cos(d1/2) cos(d2/2)).
    """
    t = np.asarray(target, dtype=float)
    if t.shape != (3,) or np.any(t < -1e-12):
        raise ValueError("target must be a nonnegative 3-vector")
    if abs(np.linalg.norm(t) - 1.0) > 1e-10:
        raise ValueError("target must be normalized")
    d1 = 2.0 * math.asin(min(1.0, t[0]))
    rest = math.sqrt(max(0.0, 1.0 - t[0] ** 2))
    if rest < 1e-12:
        d2 = 0.0
    else:
        d2 = 2.0 * math.asin(min(1.0, t[1] / rest))
    return d1, d2


def _givens_zero(a: float, b: float) -> float:
    """Mixing angle whose real cell maps row entries (a, b) to (*, 0).

    Right-multiplying a row (a, b) by the real cell -[[s, c], [c, -s]] gives
    second entry -(a*c - b*s); zero it with delta/2 = atan2(a, b).
    """
    return 2.0 * math.atan2(a, b)


def synthesize_context(
    row_a: np.ndarray, row_b: np.ndarray, dim: int = 3
) -> MeshConfig:
    """Three-cell stage whose unitary has given first two rows, up to phase.

    ``row_a`` and ``row_b`` must be orthonormal real 3-vectors; the returned
    config V satisfies |V[0]| = |row_a|, |V[1]| = |row_b| entrywise with
    row-wise sign freedom (detectors are phase-blind). Raises if the
    elimination leaves residual above ``RESIDUAL_TOL``; a least-squares angle
    polish backs up the closed form before giving up.
    """
    if dim != 3:
        raise ValueError("context synthesis is specific to three modes")
    a = np.asarray(row_a, dtype=float).copy()
    b = np.asarray(row_b, dtype=float).copy()
    for v in (a, b):
        if v.shape != (3,):
            raise ValueError("rows must be 3-vectors")
    if abs(a @ b) > 1e-9 or abs(a @ a - 1) > 1e-9 or abs(b @ b - 1) > 1e-9:
        raise ValueError("rows must be orthonormal")
    c = np.cross(a, b)
    target = np.stack([a, b, c])

    def real_cell(delta: float) -> np.ndarray:
        h = 0.5 * delta
        return -np.array([[math.sin(h), math.cos(h)], [math.cos(h), -math.sin(h)]])

    def residual_of(deltas: tuple[float, float, float]) -> float:
        cfg = _context_config(deltas)
        u = mesh_unitary(cfg)
        return float(np.max(np.abs(np.abs(u) - np.abs(target))))

    def _context_config(deltas: tuple[float, float, float]) -> MeshConfig:
        d1, d2, d3 = deltas
        return MeshConfig(
            dim=3,
            cells=(
                MeshCell("G1", 0, (1, 2), rotation_setting(d1)),
                MeshCell("G2", 1, (0, 1), rotation_setting(d2)),
                MeshCell("G3", 2, (1, 2), rotation_setting(d3)),
            ),
        )

    m = target.copy()
    d1 = _givens_zero(m[0, 1], m[0, 2])
    m = m @ embed_two_mode(real_cell(d1), (1, 2), 3).real
    d2 = _givens_zero(m[0, 0], m[0, 1])
    m = m @ embed_two_mode(real_cell(d2), (0, 1), 3).real
    d3 = _givens_zero(m[1, 1], m[1, 2])

    deltas = (d1, d2, d3)
    if residual_of(deltas) > RESIDUAL_TOL:
        from scipy.optimize import least_squares

        def objective(x: np.ndarray) -> np.ndarray:
            u = mesh_unitary(_context_config(tuple(x)))
            return (np.abs(u) - np.abs(target)).ravel()

        sol = least_squares(objective, x0=np.array(deltas), method="lm")
        deltas = tuple(sol.x)
        if residual_of(deltas) > RESIDUAL_TOL:
            raise ValueError(
                f"context synthesis residual {residual_of(deltas):.2e} above "
                f"{RESIDUAL_TOL}"
            )
    return _context_config(deltas)


# ---------------------------------------------------------------------------
# Stage plans


@dataclass(frozen=True)
class StagePlan:
    """One full run layout: preparation stage plus the five context stages.

    ``contexts[i]`` measures direction pair (i+1, i+2) of the pentagram (with
    6 meaning v'_1) after the shared preparation. Output port convention:
    port 0 carries m_i (outcome -,+), port 1 carries m_{i+1} (outcome +,-),
    port 2 is the auxiliary mode (outcome +,+). ``theta_values`` records the
    rotation-cell mixing angles per stage for provenance.
    """

    prep: MeshConfig
    contexts: tuple[MeshConfig, ...]
    theta_values: dict[str, tuple[float, ...]]

    def stage(self, context: int) -> MeshConfig:
        """Composed prep-then-context configuration for context 1..5."""
        return self.prep.then(self.contexts[context - 1])


def _routing_cells(prefix: str, count: int, start_layer: int) -> tuple[MeshCell, ...]:
    """BAR cells standing in for the route through the hexagonal lattice.

    They implement identity up to mode signs but carry insertion loss, which
    is what the per-cell budget needs them for.
    """
    pairs = ((0, 1), (1, 2))
    return tuple(
        MeshCell(f"{prefix}{k}", start_layer + k, pairs[k % 2], bar_setting())
        for k in range(count)
    )


def build_stage_plan(
    context_pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    target_state: np.ndarray,
    prep_routing: int = 3,
    context_routing: int = 5,
) -> StagePlan:
    """Synthesize the default plan for five measured pairs and a prep target.

    ``context_pairs[c]`` holds the orthonormal (port 0, port 1) directions of
    context c + 1. The defaults give 13 active cells per composed stage
    (3 + 2 in prep, 5 + 3 per context), matching the insertion-loss budget
    of the reference hardware route.
    """
    if len(context_pairs) != 5:
        raise ValueError("expected five context pairs")
    d1, d2 = synthesize_prep(np.abs(target_state))
    route = _routing_cells("PR", prep_routing, 0)
    prep = MeshConfig(
        dim=3,
        cells=route
        + (
            MeshCell("T1", prep_routing, (0, 1), rotation_setting(d1)),
            MeshCell("T2", prep_routing + 1, (1, 2), rotation_setting(d2)),
        ),
    )
    u_prep = mesh_unitary(prep)

    thetas: dict[str, tuple[float, ...]] = {"prep": (d1, d2)}
    contexts = []
    src = np.array([1.0, 0.0, 0.0], dtype=complex)
    for i, (va, vb) in enumerate(context_pairs):
        va = np.asarray(va, dtype=float)
        vb = np.asarray(vb, dtype=float)
        route_c = _routing_cells(f"C{i + 1}R", context_routing, 0)
        pre_mixer = mesh_unitary(MeshConfig(dim=3, cells=route_c)) @ u_prep @ src
        # The mixer must pick out <v_k| relative to the ideal prepared state;
        # absorb the rail phases the real cells introduced on the way here.
        mags = np.abs(pre_mixer)
        if np.min(mags) < 1e-12:
            raise ValueError("prepared state has a dark rail; cannot dephase")
        phases = np.conj(pre_mixer / mags)
        a = (phases * va).real
        b = (phases * vb).real
        mixer = synthesize_context(a / np.linalg.norm(a), b / np.linalg.norm(b))
        shifted = tuple(
            MeshCell(c.cell_id, c.layer + context_routing, c.modes, c.setting)
            for c in mixer.cells
        )
        contexts.append(MeshConfig(dim=3, cells=route_c + shifted))
        thetas[f"context{i + 1}"] = tuple(
            c.setting.delta for c in mixer.cells
        )
    return StagePlan(prep=prep, contexts=tuple(contexts), theta_values=thetas)
