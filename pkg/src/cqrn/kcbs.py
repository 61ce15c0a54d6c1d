"""Five-cycle contextuality model on a qutrit.

Builds the pentagram of measurement directions, the dichotomic observables
A_i = I - 2|v_i><v_i|, and the cyclic witness

    chi = sum_i <A_i A_{i+1}>   (indices mod 5)

whose noncontextual bound is -3 and whose quantum minimum on a qutrit is
5 - 4*sqrt(5) ~= -3.944. A sixth direction v'_1 models the independently
realized copy of the first observable; the modified witness adds the
compatibility penalty [1 - <A_1 A'_1>].

Conventions: contexts are labeled 1..5; context i jointly measures the pair
(A_i, A_{i+1}) with A_6 meaning A'_1. Outcome -1 corresponds to a click on
the projector mode. Post-selection on exactly one click forces P(-,-) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import expectation, hermitize, projector

CHI_QUANTUM_MIN = 5.0 - 4.0 * math.sqrt(5.0)
CHI_CLASSICAL_BOUND = -3.0

# Context i measures directions (PAIR_A[i-1], PAIR_B[i-1]) with 6 = v'_1.
CONTEXT_PAIRS = ((1, 2), (2, 3), (3, 4), (4, 5), (5, 6))


def optimal_state() -> np.ndarray:
    """The qutrit state attaining the quantum minimum of the witness."""
    a = 5.0 ** -0.25
    return np.array([a, a, math.sqrt(1.0 - 2.0 / math.sqrt(5.0))])


def misalign_for_overlap(r_target: float) -> float:
    """Rotation angle (rad) of v'_1 giving ideal overlap R = ``r_target``.

    Uses the weight-preserving rotation of :func:`pentagram`, for which
    R = 1 - 4*p1*(1 - cos alpha) with p1 = 1/sqrt(5) on the optimal state.
    """
    if not 0.0 < r_target <= 1.0:
        raise ValueError("overlap target must be in (0, 1]")
    p1 = 1.0 / math.sqrt(5.0)
    c = 1.0 - (1.0 - r_target) / (4.0 * p1)
    if c < -1.0:
        raise ValueError(f"overlap {r_target} unreachable by a rotation")
    return math.acos(c)


@dataclass(frozen=True)
class PentagramSet:
    """Five cyclic unit directions plus the independently realized v'_1.

    vectors[i] holds |v_{i+1}> for i = 0..4; vprime is |v'_1>. Adjacent
    directions (cyclically) are exactly orthogonal.
    """

    vectors: np.ndarray  # (5, 3) real
    vprime: np.ndarray  # (3,) real
    vpartner: np.ndarray  # (3,) real, second port direction of context 1
    misalign_angle: float = 0.0

    def direction(self, label: int) -> np.ndarray:
        """Direction for label 1..5; label 6 means v'_1."""
        if label == 6:
            return self.vprime
        if not 1 <= label <= 5:
            raise ValueError(f"direction label {label} out of range")
        return self.vectors[label - 1]

    def projectors(self) -> list[np.ndarray]:
        """[Pi_1 .. Pi_5, Pi'_1] as 3x3 matrices."""
        return [projector(self.direction(k)) for k in range(1, 7)]

    def measured_pair(self, context: int) -> tuple[np.ndarray, np.ndarray]:
        """Directions the hardware routes onto the two ports of ``context``.

        Context c measures (v_c, v_{c+1}); context 5 wraps to (v_5, v_1).
        Context 1 uses the realized (v'_1, partner) pair, which stays exactly
        orthogonal. The ideal v_1 always appears in context 5, which is what
        makes the misalignment invisible in single-context statistics.
        """
        if not 1 <= context <= 5:
            raise ValueError(f"context {context} out of range")
        if context == 1:
            return self.vprime, self.vpartner
        return self.vectors[context - 1], self.vectors[context % 5]

    def observables(self) -> list[np.ndarray]:
        """[A_1 .. A_5, A'_1] with A = I - 2 Pi."""
        eye = np.eye(3)
        return [eye - 2.0 * p for p in self.projectors()]


def pentagram(misalign_angle: float = 0.0) -> PentagramSet:
    """Construct the rotated pentagram and the misaligned v'_1.

    The base directions live on a cone around the z axis,

        u_j = (sin t * cos(4 pi j / 5), sin t * sin(4 pi j / 5), cos t),

    with cos^2 t = cos(pi/5) / (1 + cos(pi/5)), which makes consecutive j
    orthogonal. A Householder reflection W mapping (0,0,1) to the optimal
    state then gives v_i = W u_{i-1}, so every |<psi0|v_i>|^2 = 1/sqrt(5).

    v'_1 is v_1 turned by ``misalign_angle`` along the constant-Born-weight
    cone around the optimal state (a rotation about that state as axis, so
    the context-1 pair rides along and stays orthogonal with unchanged
    weights). The rotation is then visible only through the overlap R, never
    in count statistics, and R = 1 - 4 p_1 (1 - cos(misalign_angle)) holds
    exactly.
    """
    cpi5 = math.cos(math.pi / 5.0)
    cos_t = math.sqrt(cpi5 / (1.0 + cpi5))
    sin_t = math.sqrt(1.0 - cos_t * cos_t)
    js = np.arange(5)
    ang = 4.0 * math.pi * js / 5.0
    base = np.stack(
        [sin_t * np.cos(ang), sin_t * np.sin(ang), np.full(5, cos_t)], axis=1
    )

    psi0 = optimal_state()
    z = np.array([0.0, 0.0, 1.0])
    w = z - psi0
    w = w / np.linalg.norm(w)
    house = np.eye(3) - 2.0 * np.outer(w, w)
    vecs = base @ house.T

    v1, v2 = vecs[0], vecs[1]
    if misalign_angle == 0.0:
        vprime, vpartner = v1.copy(), v2.copy()
    else:
        c2 = cos_t * cos_t  # Born weight 1/sqrt(5), also v1 . psi0 squared
        cos_beta = (math.cos(misalign_angle) - c2) / (1.0 - c2)
        if abs(cos_beta) > 1.0:
            raise ValueError("misalignment exceeds the reachable cone angle")
        beta = math.acos(cos_beta)
        vprime = _rotate_about(psi0, v1, beta)
        vpartner = _rotate_about(psi0, v2, beta)
    return PentagramSet(
        vectors=vecs, vprime=vprime, vpartner=vpartner, misalign_angle=misalign_angle
    )


def _rotate_about(axis: np.ndarray, vec: np.ndarray, angle: float) -> np.ndarray:
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    return (
        vec * cos_a
        + np.cross(axis, vec) * sin_a
        + axis * (axis @ vec) * (1.0 - cos_a)
    )


def kcbs_value(state: np.ndarray, pent: PentagramSet | None = None) -> float:
    """Witness value sum_i <A_i A_{i+1}> for a ket or density matrix.

    Uses the cyclic pair (A_5, A_1) for the fifth term (the ideal functional;
    v'_1 does not enter). Adjacent projectors are orthogonal, so each term is
    1 - 2<Pi_i> - 2<Pi_{i+1}>.
    """
    pent = pent if pent is not None else pentagram()
    state = np.asarray(state, dtype=complex)
    probs = np.empty(5)
    for i in range(5):
        v = pent.vectors[i].astype(complex)
        if state.ndim == 1:
            probs[i] = abs(np.vdot(v, state)) ** 2
        else:
            probs[i] = expectation(projector(v), state)
    nxt = np.roll(probs, -1)
    return float(np.sum(1.0 - 2.0 * probs - 2.0 * nxt))


def modified_kcbs(terms: np.ndarray | list[float], r_overlap: float) -> float:
    """chi' = five measured terms plus the compatibility penalty [1 - R]."""
    terms = np.asarray(terms, dtype=float)
    if terms.shape != (5,):
        raise ValueError("expected exactly five correlation terms")
    return float(np.sum(terms) + (1.0 - r_overlap))


def overlap_r(pent: PentagramSet, state: np.ndarray) -> float:
    """Symmetrized overlap R = <(A_1 A'_1 + A'_1 A_1)/2> on ``state``.

    Equals 1 - 2p_1 - 2p'_1 + 4 Re<Pi_1 Pi'_1> and reduces to <A_1 A'_1>
    when the two observables commute.
    """
    a1 = np.eye(3) - 2.0 * projector(pent.direction(1))
    a1p = np.eye(3) - 2.0 * projector(pent.direction(6))
    sym = hermitize(a1 @ a1p)
    return expectation(sym, state)


def expectation_from_joint(
    p_mp: float, p_pp: float, p_pm: float, p_mm: float = 0.0
) -> float:
    """<A_i A_j> from joint outcome probabilities.

    Arguments are P(-,+), P(+,+), P(+,-), P(-,-); post-selected data has
    P(-,-) = 0 by construction.
    """
    return p_pp + p_mm - p_pm - p_mp


@dataclass(frozen=True)
class JointProbTable:
    """Joint click probabilities for one context, with 1-sigma uncertainties.

    Outcome order everywhere is [(-,+), (+,+), (+,-), (-,-)].
    """

    context: int
    probs: np.ndarray  # (4,)
    sigmas: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (4,):
            raise ValueError("expected four outcome probabilities")
        if np.any(p < -1e-12):
            raise ValueError("negative probability")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "sigmas", np.asarray(self.sigmas, dtype=float))

    def check_normalized(self, tol: float = 2e-2) -> None:
        s = float(self.probs.sum())
        if abs(s - 1.0) > tol:
            raise ValueError(f"context {self.context} probabilities sum to {s:.4f}")

    def term(self) -> float:
        p = self.probs
        return expectation_from_joint(p[0], p[1], p[2], p[3])

    def term_sigma(self) -> float:
        """First-order Gaussian propagation assuming independent entries."""
        return float(np.sqrt(np.sum(self.sigmas**2)))


def efficiency_correct(
    counts: np.ndarray | list[float],
    eta: np.ndarray | list[float],
    context: int,
) -> JointProbTable:
    """Joint probabilities from raw single-click counts, detector-corrected.

    ``counts`` is (clicks on m_i, clicks on m_{i+1}, clicks on aux) and
    ``eta`` the matching detector efficiencies. Counts are divided by eta and
    renormalized; mode m_i maps to outcome (-,+), m_{i+1} to (+,-), aux to
    (+,+). Poisson uncertainties (sigma = sqrt(c)) are propagated to the
    corrected probabilities.
    """
    c = np.asarray(counts, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if c.shape != (3,) or eta.shape != (3,):
        raise ValueError("expected three counts and three efficiencies")
    if np.any(c < 0) or np.any(eta <= 0):
        raise ValueError("counts must be nonnegative, efficiencies positive")
    w = c / eta
    tot = w.sum()
    if tot <= 0:
        raise ValueError("no clicks to correct")
    p = w / tot
    # dp_k/dc_m = (delta_km - p_k) / (eta_m * tot); var(c_m) = c_m.
    jac = (np.eye(3) - p[:, None]) / (eta[None, :] * tot)
    var = jac**2 @ c
    sig = np.sqrt(var)
    probs = np.array([p[0], p[2], p[1], 0.0])
    sigmas = np.array([sig[0], sig[2], sig[1], 0.0])
    return JointProbTable(context=context, probs=probs, sigmas=sigmas)


@dataclass(frozen=True)
class KCBSResult:
    """Witness evaluation from five per-context joint tables plus an overlap."""

    terms: np.ndarray  # (5,)
    term_sigmas: np.ndarray  # (5,)
    r_overlap: float
    r_sigma: float = 0.0

    @property
    def chi_sum(self) -> float:
        return float(np.sum(self.terms))

    @property
    def chi_modified(self) -> float:
        return modified_kcbs(self.terms, self.r_overlap)

    @property
    def chi_sigma(self) -> float:
        return float(np.sqrt(np.sum(self.term_sigmas**2) + self.r_sigma**2))


def evaluate_tables(
    tables: list[JointProbTable], r_overlap: float, r_sigma: float = 0.0
) -> KCBSResult:
    """Fold five joint tables into a witness result.

    Tables must cover contexts 1..5 exactly once; each is normalization-checked
    at experimental tolerance.
    """
    if sorted(t.context for t in tables) != [1, 2, 3, 4, 5]:
        raise ValueError("need one table per context 1..5")
    ordered = sorted(tables, key=lambda t: t.context)
    for t in ordered:
        t.check_normalized()
    terms = np.array([t.term() for t in ordered])
    sigmas = np.array([t.term_sigma() for t in ordered])
    return KCBSResult(
        terms=terms, term_sigmas=sigmas, r_overlap=r_overlap, r_sigma=r_sigma
    )
