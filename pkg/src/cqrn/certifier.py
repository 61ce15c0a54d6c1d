"""Min-entropy certification from observed contextuality data.

The adversary model is an ensemble of qutrit states with one shared set
of rank-one analyzers: five cycle projectors plus a drifted copy of the
first one, constrained by a commutator tolerance on neighboring pairs,
an overlap window for the drifted copy, and the observed (worst-case)
five-term cycle value. Eve knows the branch and guesses the post-selected
bit per context.

The guessing probability is bounded two ways:

* ``relaxation_bound`` builds a moment matrix over the words
  {1, Pi_a, G^c, Pi_a G^c} and tests, by alternating projections between
  the PSD cone and the affine/halfspace constraints, whether a candidate
  guessing level is feasible; bisection returns a certified upper bound.
  The product words matter: the per-branch sub-blocks obey the same
  exclusivity geometry as the full state, so a branch in which Eve
  guesses well loses its ability to violate the classical bound. Without
  them the relaxation is vacuous (any guess correlation admits a PSD
  completion).
* ``attack_search`` builds explicit ensembles by see-saw (state eigensteps,
  weight LP, analyzer perturbations) and returns the best guessing value
  found; it can only touch the relaxation bound from below.

Both sides score the same operational quantity: the fraction of
post-selected records Eve guesses, with detector-efficiency mismatch
handed to her as a free reweighting of the second branch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from . import kcbs

N_PI = 6
N_CONTEXTS = 5
N_WORDS = 1 + N_PI + N_CONTEXTS + N_PI * N_CONTEXTS  # 42
EDGES = ((1, 2), (2, 3), (3, 4), (4, 5), (5, 6))  # context pairs
TIE = (1, 6)  # overlap-constrained pair, closes the cycle

FEAS_TOL = 1e-7
MAX_SWEEPS = 150000
STAGNATION_WINDOW = 250
RESIDUAL_EVERY = 8
PROJ_PAIR_FLOOR = -0.125  # min eigenvalue of sym product of projectors


def _word_g(context: int) -> int:
    return N_PI + context  # contexts are 1-based


def _word_t(a: int, context: int) -> int:
    return 1 + N_PI + N_CONTEXTS + (context - 1) * N_PI + (a - 1)


@dataclass(frozen=True)
class CertificationProblem:
    """Observed data and tolerances defining one certification instance."""

    chi_hat: float
    delta: float | None = None
    r_interval: tuple[float, float] = (0.92, 0.94)
    eps_com: float = 0.047
    eta: tuple[float, float, float] = (0.85, 0.83, 0.86)
    n_rounds: float = 1e5
    eps_fin: float = 2e-11

    def __post_init__(self) -> None:
        if not -5.0 <= self.chi_hat <= 5.0:
            raise ValueError("chi_hat must lie in [-5, 5]")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be nonnegative")
        lo, hi = self.r_interval
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError("need 0 < R_lo <= R_hi <= 1")
        if self.eps_com < 0:
            raise ValueError("eps_com must be nonnegative")
        if min(self.eta) <= 0 or max(self.eta) > 1:
            raise ValueError("detector efficiencies must be in (0, 1]")
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be at least 1")
        if not 0.0 < self.eps_fin < 1.0:
            raise ValueError("eps_fin must be a probability")

    @property
    def effective_delta(self) -> float:
        if self.delta is not None:
            return self.delta
        return hoeffding_delta(int(self.n_rounds), self.eps_fin)

    @property
    def chi_worst(self) -> float:
        return worst_case_chi(self.chi_hat, self.effective_delta)

    @property
    def eta_ratio(self) -> tuple[float, float]:
        """Bounds on the branch reweighting from efficiency mismatch."""
        lo, hi = min(self.eta), max(self.eta)
        return lo / hi, hi / lo

    @property
    def overlap_cap(self) -> float:
        """Max |v_a . v_b| on neighboring analyzers from the commutator cap.

        For rank-one projectors onto unit vectors with overlap c the
        commutator has spectral norm c * sqrt(1 - c^2), so the cap is the
        smaller root of c^2 (1 - c^2) = eps_com^2 (saturating at the
        worst case 1/2 when eps_com is large).
        """
        e = self.eps_com
        if e >= 0.5:
            return 1.0
        return math.sqrt(0.5 * (1.0 - math.sqrt(1.0 - 4.0 * e * e)))

    def as_dict(self) -> dict:
        return {
            "chi_hat": self.chi_hat,
            "delta": self.effective_delta,
            "r_interval": list(self.r_interval),
            "eps_com": self.eps_com,
            "eta": list(self.eta),
            "n_rounds": self.n_rounds,
            "eps_fin": self.eps_fin,
        }


@dataclass(frozen=True)
class CertificationResult:
    p_guess_upper: float
    p_guess_attack: float
    h_min: float
    rate: float | None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.5 <= self.p_guess_upper <= 1.0 + 1e-12:
            raise ValueError("p_guess_upper must lie in [1/2, 1]")
        if self.p_guess_attack > self.p_guess_upper + 1e-6:
            raise ValueError("explicit attack exceeded the certified bound")

    def as_dict(self) -> dict:
        return {
            "p_guess_upper": self.p_guess_upper,
            "p_guess_attack": self.p_guess_attack,
            "h_min": self.h_min,
            "rate": self.rate,
            "diagnostics": self.diagnostics,
        }


def hoeffding_delta(n: int, eps_fin: float, n_terms: int = 5) -> float:
    """Finite-size deviation n_terms * sqrt(ln(2/eps)/(2n))."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 < eps_fin < 1.0:
        raise ValueError("eps_fin must be a probability")
    return n_terms * math.sqrt(math.log(2.0 / eps_fin) / (2.0 * n))


def worst_case_chi(chi_hat: float, delta: float) -> float:
    """Shift the observed value toward the classical bound."""
    return chi_hat + delta


# ------------------------------------------------------------------ #
# moment-matrix relaxation                                            #
# ------------------------------------------------------------------ #


def _triangle_maps() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ti, tj = np.triu_indices(N_WORDS)
    pos = np.zeros((N_WORDS, N_WORDS), dtype=np.int64)
    pos[ti, tj] = np.arange(ti.size)
    pos[tj, ti] = pos[ti, tj]
    return ti, tj, pos


_TRI_I, _TRI_J, _TRI_POS = _triangle_maps()
_N_TRI = _TRI_I.size
# isometry weights: off-diagonal entries count twice in Frobenius norm
_ISO = np.where(_TRI_I == _TRI_J, 1.0, math.sqrt(2.0))


def _entry(i: int, j: int) -> int:
    return int(_TRI_POS[i, j])


def _build_equalities() -> tuple[np.ndarray, int, np.ndarray, np.ndarray]:
    """Entry equivalence classes from the word algebra.

    Every affine relation in the adversary class says two triangle entries
    are equal (plus the normalization M[0,0] = 1), so the least-squares
    projection reduces to weighted means over equivalence classes.
    """
    parent = list(range(_N_TRI))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        parent[find(i)] = find(j)

    for w in range(1, N_WORDS):
        # every word is a projector
        union(_entry(w, w), _entry(0, w))
    for c in range(1, N_CONTEXTS + 1):
        g = _word_g(c)
        for a in range(1, N_PI + 1):
            t = _word_t(a, c)
            # Pi_a (Pi_a G) = Pi_a G, G (Pi_a G) = Pi_a G, <Pi_a G> = <T>
            union(_entry(a, t), _entry(0, t))
            union(_entry(g, t), _entry(0, t))
            union(_entry(a, g), _entry(0, t))
        for a in range(1, N_PI + 1):
            for b in range(a + 1, N_PI + 1):
                ta, tb = _word_t(a, c), _word_t(b, c)
                # <(Pi_a G)(Pi_b G)> = <sym(Pi_a Pi_b) G> both ways
                union(_entry(ta, tb), _entry(b, ta))
                union(_entry(ta, tb), _entry(a, tb))
    roots = np.array([find(i) for i in range(_N_TRI)], dtype=np.int64)
    _, class_id = np.unique(roots, return_inverse=True)
    n_classes = int(class_id.max()) + 1
    class_wsq = np.bincount(class_id, weights=_ISO * _ISO, minlength=n_classes)
    order = np.argsort(class_id, kind="stable")
    return class_id, n_classes, class_wsq, order


_EQ_CLASS, _EQ_NCLS, _EQ_WSQ, _EQ_ORDER = _build_equalities()
_EQ_STARTS = np.searchsorted(
    _EQ_CLASS[_EQ_ORDER], np.arange(_EQ_NCLS), side="left"
)
_ENTRY_00 = _entry(0, 0)


def _project_equality_classes(x_iso: np.ndarray) -> np.ndarray:
    sums = np.bincount(_EQ_CLASS, weights=x_iso * _ISO, minlength=_EQ_NCLS)
    means = sums / _EQ_WSQ
    out = _ISO * means[_EQ_CLASS]
    out[_ENTRY_00] = 1.0
    return out


def _equality_residual(x_iso: np.ndarray) -> float:
    vals = (x_iso / _ISO)[_EQ_ORDER]
    hi = np.maximum.reduceat(vals, _EQ_STARTS)
    lo = np.minimum.reduceat(vals, _EQ_STARTS)
    res = float((hi - lo).max(initial=0.0))
    return max(res, abs(float(x_iso[_ENTRY_00]) - 1.0))


@dataclass(frozen=True)
class _Halfspace:
    """a . x <= b on raw triangle entries."""

    entries: np.ndarray
    coeffs: np.ndarray
    bound: float


class _MomentProgram:
    """Constraint system for one certification problem."""

    def __init__(self, prob: CertificationProblem):
        self.prob = prob
        self.chi_wc = prob.chi_worst
        r_lo, r_hi = prob.r_interval
        self.r_min, self.r_max = prob.eta_ratio
        # each neighboring sym product is bounded in norm by c(1+c)/2 at
        # overlap c, so its moment obeys that cap on the full ensemble and,
        # conditioned on either guess branch, in proportion to the branch
        # mass (conditioning on the guess register is a state restriction)
        c_ov = prob.overlap_cap
        cap = 0.5 * (c_ov + c_ov * c_ov)
        branch_cap = cap
        self.edge_cap = cap
        self.branch_cap = branch_cap

        half: list[_Halfspace] = []

        def add(entries: list[int], coeffs: list[float], bound: float) -> None:
            half.append(
                _Halfspace(
                    np.asarray(entries, dtype=np.int64),
                    np.asarray(coeffs, dtype=float),
                    bound,
                )
            )

        # chi constraint: sum of five terms at most chi_wc
        ent, co = [], []
        for a, b in EDGES:
            ent += [_entry(0, a), _entry(0, b), _entry(a, b)]
            co += [-2.0, -2.0, 4.0]
        add(ent, co, self.chi_wc - 5.0)

        # overlap window on the tie pair
        r_ent = [_entry(0, TIE[0]), _entry(0, TIE[1]), _entry(*TIE)]
        add(r_ent, [-2.0, -2.0, 4.0], r_hi - 1.0)
        add(r_ent, [2.0, 2.0, -4.0], 1.0 - r_lo)

        # neighboring analyzers: ensemble and per-branch moments are small,
        # branch caps scale with the branch weight <G> (or 1 - <G>)
        for a, b in EDGES:
            add([_entry(a, b)], [1.0], cap)
            add([_entry(a, b)], [-1.0], cap)
            for ctx in range(1, N_CONTEXTS + 1):
                g0 = _entry(0, _word_g(ctx))
                tt = _entry(_word_t(a, ctx), _word_t(b, ctx))
                add([tt, g0], [1.0, -branch_cap], 0.0)
                add([tt, g0], [-1.0, -branch_cap], 0.0)
                add(
                    [_entry(a, b), tt, g0],
                    [1.0, -1.0, branch_cap],
                    branch_cap,
                )
                add(
                    [_entry(a, b), tt, g0],
                    [-1.0, 1.0, branch_cap],
                    branch_cap,
                )

        # branch copies of the drifted pair stay aligned: <(P1-P1')^2 G> >= 0
        # for both guess branches; their sum is fixed by the overlap window
        p, q = TIE
        for c in range(1, N_CONTEXTS + 1):
            tp, tq = _word_t(p, c), _word_t(q, c)
            b0 = [_entry(0, tp), _entry(0, tq), _entry(tp, tq)]
            add(b0, [-1.0, -1.0, 2.0], 0.0)
            b1 = [
                _entry(0, p),
                _entry(0, q),
                _entry(p, q),
                _entry(0, tp),
                _entry(0, tq),
                _entry(tp, tq),
            ]
            add(b1, [-1.0, -1.0, 2.0, 1.0, 1.0, -2.0], 0.0)

        # commuting positive pairs: product expectations below each factor.
        # Only same-context products are constrained this way; guess
        # projectors for different contexts need not commute (quantum side
        # information), so their cross moments are left to positivity.
        for c in range(1, N_CONTEXTS + 1):
            for a in range(1, N_PI + 1):
                t = _entry(0, _word_t(a, c))
                add([t, _entry(0, a)], [1.0, -1.0], 0.0)
                add([t, _entry(0, _word_g(c))], [1.0, -1.0], 0.0)

        self.halfspaces = half
        self._pack_halfspaces()

    def _pack_halfspaces(self) -> None:
        """Group rows by width for sequential vectorized projection passes."""
        self._hs_groups: list[
            tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]
        ] = []
        by_len: dict[int, list[_Halfspace]] = {}
        for h in self.halfspaces:
            by_len.setdefault(len(h.entries), []).append(h)
        for n, group in sorted(by_len.items()):
            ent = np.stack([h.entries for h in group])
            co = np.stack([h.coeffs for h in group])
            bd = np.array([h.bound for h in group])
            iso_co = co / _ISO[ent]
            norms = np.einsum("ke,ke->k", iso_co, iso_co)
            self._hs_groups.append((ent, iso_co, bd, norms, ent.ravel()))

    def objective_halfspace(self, p: float) -> _Halfspace:
        """p * D - N <= 0 for the record-weighted guessing fraction."""
        ent: list[int] = []
        co: list[float] = []
        for c, (a, b) in enumerate(EDGES, start=1):
            ent += [_entry(0, _word_t(a, c))]
            co += [-1.0]
            ent += [_entry(0, b), _entry(0, _word_t(b, c))]
            co += [-self.r_max, self.r_max]
            ent += [_entry(0, a), _entry(0, b)]
            co += [p, p * self.r_min]
        return _Halfspace(
            np.asarray(ent, dtype=np.int64), np.asarray(co, dtype=float), 0.0
        )

    # ---------------------------------------------------- projections

    @staticmethod
    def _project_equalities(x_iso: np.ndarray) -> np.ndarray:
        return _project_equality_classes(x_iso)

    def _project_halfspaces(
        self, x_iso: np.ndarray, extra, relax: float = 1.0
    ) -> np.ndarray:
        # averaged projection: summed per-row steps are damped by the worst
        # overlap count among violated rows so the map stays nonexpansive
        # averaged projection within each width group: summed steps are
        # damped by the worst overlap count so the map stays nonexpansive;
        # groups are applied in sequence, which resolves overlaps across them
        for ent, iso_co, bd, norms, ent_flat in self._hs_groups:
            vals = np.einsum("ke,ke->k", iso_co, x_iso[ent]) - bd
            np.clip(vals, 0.0, None, out=vals)
            if vals.max(initial=0.0) <= 0.0:
                continue
            steps = (vals / norms)[:, None] * iso_co
            delta = np.bincount(
                ent_flat, weights=steps.ravel(), minlength=x_iso.size
            )
            counts = np.bincount(
                ent[vals > 0.0].ravel(), minlength=x_iso.size
            )
            x_iso -= delta * (relax / max(1, int(counts.max())))
        if extra is not None:
            e = extra.entries
            w = extra.coeffs / _ISO[e]
            val = float(np.dot(w, x_iso[e]) - extra.bound)
            if val > 0.0:
                x_iso[e] -= relax * val / np.dot(w, w) * w
        return x_iso

    @staticmethod
    def _project_boxes(x_iso: np.ndarray) -> np.ndarray:
        x = x_iso / _ISO
        np.clip(x, PROJ_PAIR_FLOOR, 1.0, out=x)
        first_row = _TRI_POS[0, :]
        np.clip(x[first_row], 0.0, 1.0, out=x[first_row])
        return x * _ISO

    @staticmethod
    def _project_psd(x_iso: np.ndarray) -> np.ndarray:
        m = np.zeros((N_WORDS, N_WORDS))
        vals = x_iso / _ISO
        m[_TRI_I, _TRI_J] = vals
        m[_TRI_J, _TRI_I] = vals
        w, v = np.linalg.eigh(m)
        w = np.clip(w, 0.0, None)
        m = (v * w) @ v.T
        return m[_TRI_I, _TRI_J] * _ISO

    def residual(self, x_iso: np.ndarray, extra) -> float:
        x = x_iso / _ISO
        res = _equality_residual(x_iso)
        for ent, iso_co, bd, _, _ in self._hs_groups:
            vals = np.einsum("ke,ke->k", iso_co, x_iso[ent]) - bd
            res = max(res, float(vals.max(initial=0.0)))
        if extra is not None:
            e = extra.entries
            w = extra.coeffs / _ISO[e]
            res = max(res, float(np.dot(w, x_iso[e]) - extra.bound))
        res = max(res, float((PROJ_PAIR_FLOOR - x).max(initial=0.0)))
        first_row = _TRI_POS[0, :]
        res = max(res, float((-x[first_row]).max(initial=0.0)))
        res = max(res, float((x - 1.0).max(initial=0.0)))
        return res

    def honest_start(self) -> np.ndarray:
        """Moment matrix of an in-class device with an idle guesser.

        The drifted copy is rotated about its capped neighbor so the
        constrained edge stays exactly orthogonal while the tie overlap
        lands mid-window.
        """
        psi = kcbs.optimal_state().real
        psi = psi / np.linalg.norm(psi)
        mid = 0.5 * (self.prob.r_interval[0] + self.prob.r_interval[1])
        v = _in_class_vectors(mid)
        proj = [np.outer(v[a], v[a]) for a in range(N_PI)]
        rho = np.outer(psi, psi)
        m = np.zeros((N_WORDS, N_WORDS))
        m[0, 0] = 1.0
        ex = [float(np.trace(rho @ p)) for p in proj]
        for a in range(1, N_PI + 1):
            m[0, a] = m[a, 0] = ex[a - 1]
        for a in range(1, N_PI + 1):
            for b in range(1, N_PI + 1):
                sym = 0.5 * (
                    proj[a - 1] @ proj[b - 1] + proj[b - 1] @ proj[a - 1]
                )
                m[a, b] = float(np.trace(rho @ sym))
        # idle guesser: G = 1 in every context
        for c in range(1, N_CONTEXTS + 1):
            g = _word_g(c)
            m[0, g] = m[g, 0] = 1.0
            m[g, g] = 1.0
            for a in range(1, N_PI + 1):
                t = _word_t(a, c)
                m[0, t] = m[t, 0] = ex[a - 1]
                m[a, g] = m[g, a] = ex[a - 1]
                for w in range(1, N_PI + 1):
                    m[w, t] = m[t, w] = m[w, a] if w != a else ex[a - 1]
        for c in range(1, N_CONTEXTS + 1):
            g = _word_g(c)
            for c2 in range(1, N_CONTEXTS + 1):
                g2 = _word_g(c2)
                if c2 != c:
                    m[g, g2] = 1.0
                for a in range(1, N_PI + 1):
                    t2 = _word_t(a, c2)
                    m[g, t2] = m[t2, g] = ex[a - 1]
                for a in range(1, N_PI + 1):
                    for b in range(1, N_PI + 1):
                        m[_word_t(a, c), _word_t(b, c2)] = m[a, b]
        return m[_TRI_I, _TRI_J] * _ISO

    def solve_feasible(
        self,
        p: float | None,
        x_start: np.ndarray | None = None,
        max_sweeps: int = MAX_SWEEPS,
        relax: float = 1.95,
        hs_relax: float = 1.8,
    ) -> tuple[str, np.ndarray, dict]:
        """Project onto the constraint set, reporting how the run ended.

        Status is "feasible" when the residual reaches tolerance,
        "stagnated" when progress plateaus far above it (the sets have a
        genuine gap), and "budget" when the sweep allowance runs out while
        the residual is still falling.  Callers bounding an adversary must
        treat "budget" as potentially feasible: only a proven plateau may
        shrink the adversary's side of a bracket.
        """
        extra = None if p is None else self.objective_halfspace(p)
        x = self.honest_start() if x_start is None else x_start.copy()
        res = self.residual(x, extra)
        last_probe = res
        sweeps = 0
        while sweeps < max_sweeps:
            sweeps += 1
            step = self._project_equalities(x) - x
            x += relax * step
            x = self._project_boxes(x)
            x = self._project_halfspaces(x, extra, relax=hs_relax)
            step = self._project_psd(x) - x
            x += relax * step
            if sweeps % RESIDUAL_EVERY != 0 and sweeps != max_sweeps:
                continue
            res = self.residual(x, extra)
            if res <= FEAS_TOL:
                return "feasible", x, {"sweeps": sweeps, "residual": res}
            if sweeps % STAGNATION_WINDOW == 0:
                # plateaued far above tolerance: the sets do not meet.
                # Relative progress separates a plateau from a slow tail
                if res > 100.0 * FEAS_TOL and last_probe - res < 1e-3 * res:
                    return "stagnated", x, {"sweeps": sweeps, "residual": res}
                last_probe = res
        return "budget", x, {"sweeps": sweeps, "residual": res}


def _rotate(axis: np.ndarray, vec: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    par = np.dot(axis, vec) * axis
    perp = vec - par
    orth = np.cross(axis, vec)
    out = par + math.cos(angle) * perp + math.sin(angle) * orth
    return out / np.linalg.norm(out)


def _drift_about_neighbor(
    v1: np.ndarray, v5: np.ndarray, psi: np.ndarray, r_target: float
) -> np.ndarray:
    """Copy of v1 rotated about v5 until the tie correlator hits r_target.

    Rotating about the neighboring analyzer keeps that edge exactly
    orthogonal, so the result stays inside the commutator-capped class.
    """
    a1 = float(np.dot(v1, psi)) ** 2

    def r_of(theta: float) -> float:
        v6 = _rotate(v5, v1, theta)
        a6 = float(np.dot(v6, psi)) ** 2
        cross = float(v1 @ v6) * float(psi @ v1) * float(v6 @ psi)
        return 1.0 - 2.0 * a1 - 2.0 * a6 + 4.0 * cross

    lo, hi = 0.0, math.pi / 2.0
    if r_of(hi) > r_target:
        return _rotate(v5, v1, hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if r_of(mid) > r_target:
            lo = mid
        else:
            hi = mid
    return _rotate(v5, v1, 0.5 * (lo + hi))


def relaxation_bound(
    prob: CertificationProblem,
    bisect_tol: float = 1e-4,
    witness: np.ndarray | None = None,
    witness_value: float | None = None,
    max_sweeps: int = MAX_SWEEPS,
) -> tuple[float, dict]:
    """Certified upper bound on the guessing probability via bisection.

    A witness moment matrix (from an explicit attack ensemble) anchors the
    bisection bracket from below: probes at or under its value are feasible
    without solving, so the returned bound can never undercut an attack the
    program provably contains.
    """
    if prob.chi_worst >= -3.0:
        return 1.0, {"reason": "no violation after finite-size shift"}
    program = _MomentProgram(prob)
    t0 = time.time()
    sweeps_total = 0
    lo, hi = 0.5, 1.0
    x_base = None
    if witness is not None and program.residual(witness, None) <= FEAS_TOL:
        x_base = witness.copy()
        if witness_value is not None:
            obj = program.objective_halfspace(min(1.0, witness_value))
            if program.residual(witness, obj) <= FEAS_TOL:
                lo = max(lo, min(1.0, witness_value))
    if x_base is None:
        status, x_base, diag = program.solve_feasible(None, max_sweeps=max_sweeps)
        sweeps_total += diag["sweeps"]
        if status != "feasible":
            # data constraints themselves unreachable: nothing to claim
            return 1.0, {
                "reason": "solver stagnated on the data constraints",
                "sweeps": sweeps_total,
                "residual": diag["residual"],
            }
    # only a proven plateau may lower the adversary's bracket; running out
    # of sweeps counts as "cannot exclude" and keeps the bound on the safe
    # (larger) side
    unresolved = 0
    status, x_feas, diag = program.solve_feasible(
        hi, x_start=x_base, max_sweeps=max_sweeps
    )
    sweeps_total += diag["sweeps"]
    if status != "stagnated":
        unresolved += int(status == "budget")
        return 1.0, {
            "reason": "perfect guessing not excluded",
            "sweeps": sweeps_total,
            "unresolved_probes": unresolved,
        }
    x_warm = x_base
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        status, x_end, diag = program.solve_feasible(
            mid, x_start=x_warm, max_sweeps=max_sweeps
        )
        sweeps_total += diag["sweeps"]
        if status == "stagnated":
            hi = mid
        else:
            lo = mid
            x_warm = x_end
            unresolved += int(status == "budget")
    diagnostics = {
        "sweeps": sweeps_total,
        "bisection_width": hi - lo,
        "chi_worst": prob.chi_worst,
        "edge_cap": program.edge_cap,
        "solve_seconds": time.time() - t0,
        "unresolved_probes": unresolved,
    }
    return hi, diagnostics


# ------------------------------------------------------------------ #
# explicit attack search                                              #
# ------------------------------------------------------------------ #


def _score_parts(
    probs: np.ndarray, r_min: float, r_max: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-branch guessed and total record masses, efficiency-credited.

    Eve gets the generous end of the efficiency band: guessed second-outcome
    records count with weight r_max, the denominator with r_min, matching
    the relaxation objective.
    """
    num = np.zeros(probs.shape[0])
    den = np.zeros(probs.shape[0])
    for a, b in EDGES:
        pa, pb = probs[:, a - 1], probs[:, b - 1]
        num += np.maximum(pa, r_max * pb)
        den += pa + r_min * pb
    return num, den


def _attack_value(
    vectors: np.ndarray,
    states: np.ndarray,
    weights: np.ndarray,
    r_min: float,
    r_max: float,
) -> float:
    """Record-weighted guessing fraction of an explicit ensemble."""
    amps = states @ vectors.T  # (branches, 6)
    num, den = _score_parts(amps * amps, r_min, r_max)
    total_den = float(weights @ den)
    if total_den <= 1e-12:
        return 1.0  # empty record: nothing to extract, nothing to guess
    return float(weights @ num) / total_den


def _branch_stats(vectors: np.ndarray, states: np.ndarray):
    amps = states @ vectors.T
    probs = amps * amps
    chi = np.full(states.shape[0], 5.0)
    for a, b in EDGES:
        pa, pb = probs[:, a - 1], probs[:, b - 1]
        cross = (
            (vectors[a - 1] @ vectors[b - 1])
            * amps[:, a - 1]
            * amps[:, b - 1]
        )
        chi += -2.0 * pa - 2.0 * pb + 4.0 * cross
    p, q = TIE
    r_val = (
        1.0
        - 2.0 * probs[:, p - 1]
        - 2.0 * probs[:, q - 1]
        + 4.0
        * (vectors[p - 1] @ vectors[q - 1])
        * amps[:, p - 1]
        * amps[:, q - 1]
    )
    return probs, chi, r_val


def _branch_guesses(
    probs: np.ndarray, r_min: float, r_max: float
) -> np.ndarray:
    """Per-branch, per-context indicator of guessing the first outcome."""
    guesses = np.zeros((probs.shape[0], N_CONTEXTS))
    for c, (a, b) in enumerate(EDGES):
        guesses[:, c] = probs[:, a - 1] >= r_max * probs[:, b - 1]
    return guesses


def _witness_matrix(
    vectors: np.ndarray,
    states: np.ndarray,
    weights: np.ndarray,
    guesses: np.ndarray,
) -> np.ndarray:
    """Moment matrix of an explicit ensemble, in the packed encoding.

    The guess register is classical (a branch label), so it commutes with
    every analyzer; each word acts on a branch as a 0/1 scalar times a
    projector product, and the ensemble moment matrix is an explicit PSD
    Gram mixture.  Feeding it back as a feasibility witness anchors the
    bisection: the relaxation can never report a bound below an attack it
    provably contains.
    """
    amps = states @ vectors.T  # (branches, 6)
    ovs = vectors @ vectors.T  # (6, 6)
    m = np.zeros((N_WORDS, N_WORDS))
    for e in range(states.shape[0]):
        q = weights[e]
        if q <= 0.0:
            continue
        pe = amps[e] * amps[e]
        sym = ovs * np.outer(amps[e], amps[e])  # <Pi_a Pi_b> per pair
        # scalar factor per word: identity for 1 and Pi, guess bit for G/T
        scal = np.ones(N_WORDS)
        proj = np.full(N_WORDS, -1, dtype=int)  # -1 marks the identity
        for a in range(1, N_PI + 1):
            proj[a] = a - 1
        for c in range(1, N_CONTEXTS + 1):
            scal[_word_g(c)] = guesses[e, c - 1]
            for a in range(1, N_PI + 1):
                t = _word_t(a, c)
                scal[t] = guesses[e, c - 1]
                proj[t] = a - 1
        for i in range(N_WORDS):
            si = scal[i]
            if si == 0.0:
                continue
            pi = proj[i]
            for j in range(i, N_WORDS):
                s = si * scal[j]
                if s == 0.0:
                    continue
                pj = proj[j]
                if pi < 0 and pj < 0:
                    mom = 1.0
                elif pi < 0:
                    mom = pe[pj]
                elif pj < 0:
                    mom = pe[pi]
                else:
                    mom = sym[pi, pj]
                m[i, j] += q * s * mom
    m = m + np.triu(m, 1).T
    return m[_TRI_I, _TRI_J] * _ISO


def _weight_lp(
    num: np.ndarray,
    den: np.ndarray,
    chi: np.ndarray,
    r_val: np.ndarray,
    chi_wc: float,
    r_interval: tuple[float, float],
) -> tuple[np.ndarray, float] | None:
    """Best branch weights for the fractional objective, by LP.

    Charnes-Cooper: maximize num . y with den . y = 1, constraints scaled
    by the homogenization variable t = sum(y).
    """
    n = num.size
    c = np.concatenate([-num, [0.0]])
    a_eq = np.zeros((1, n + 1))
    a_eq[0, :n] = den
    b_eq = np.array([1.0])
    a_ub = np.zeros((3, n + 1))
    a_ub[0, :n] = chi - chi_wc
    a_ub[1, :n] = r_val
    a_ub[1, n] = -r_interval[1]
    a_ub[2, :n] = -r_val
    a_ub[2, n] = r_interval[0]
    # t = sum(y) via two inequalities to keep linprog well-posed
    a_eq2 = np.zeros((1, n + 1))
    a_eq2[0, :n] = 1.0
    a_eq2[0, n] = -1.0
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=np.zeros(3),
        A_eq=np.vstack([a_eq, a_eq2]),
        b_eq=np.concatenate([b_eq, [0.0]]),
        bounds=[(0.0, None)] * (n + 1),
        method="highs",
    )
    if not res.success or res.x[-1] <= 1e-12:
        return None
    y, t = res.x[:n], res.x[-1]
    return y / t, float(-res.fun)


def _cap_overlaps(
    vectors: np.ndarray, cap: float, movable: np.ndarray | None = None
) -> np.ndarray:
    """Nudge neighboring analyzers until every overlap is within the cap."""
    v = vectors.copy()
    if movable is None:
        movable = np.ones(len(v), dtype=bool)
    for _ in range(60):
        worst = 0.0
        for a, b in EDGES:
            va, vb = v[a - 1], v[b - 1]
            ov = float(va @ vb)
            if abs(ov) > cap:
                worst = max(worst, abs(ov) - cap)
                target = math.copysign(cap, ov)
                if movable[b - 1]:
                    vb = vb - (ov - target) * va
                    v[b - 1] = vb / np.linalg.norm(vb)
                elif movable[a - 1]:
                    va = va - (ov - target) * vb
                    v[a - 1] = va / np.linalg.norm(va)
        if worst < 1e-12:
            break
    return v


def _corner_candidates(cap: float) -> list[np.ndarray]:
    """Deterministic analyzer sets built from repeated orthogonal pairs."""
    u = np.array([1.0, 0.0, 0.0])
    w = np.array([0.0, 1.0, 0.0])
    z = np.array([0.0, 0.0, 1.0])
    # alternating chain with a free final analyzer
    corner = np.vstack([u, w, u, w, u, w])
    corner2 = np.vstack([w, u, w, u, w, z])
    return [_cap_overlaps(corner, cap), _cap_overlaps(corner2, cap)]


def _toggle_candidate(r_mid: float) -> np.ndarray:
    """Deterministic toggle chain with a tilted repeat analyzer.

    Without a violation to respect, the best model answers every context
    deterministically.  Tilting the repeated analyzer inside the span of
    the first two steers the tie correlator to the window midpoint while
    an equal mix of the two deterministic states holds the ensemble cycle
    value exactly at the classical boundary.
    """
    u = np.array([1.0, 0.0, 0.0])
    w = np.array([0.0, 1.0, 0.0])
    z = np.array([0.0, 0.0, 1.0])
    s2 = min(1.0, max(0.0, 0.5 * (1.0 - r_mid)))
    v6 = math.sqrt(1.0 - s2) * u + math.sqrt(s2) * w
    return np.vstack([u, w, u, w, z, v6])


def _honest_vectors(r_target: float) -> np.ndarray:
    vecs = kcbs.pentagram().vectors
    psi = kcbs.optimal_state().real
    alpha = kcbs.misalign_for_overlap(r_target)
    v6 = _rotate(psi / np.linalg.norm(psi), vecs[0], alpha)
    return np.vstack([vecs[:5], v6])


def _in_class_vectors(r_target: float) -> np.ndarray:
    """Pentagram plus a drifted copy that respects every edge cap exactly."""
    vecs = kcbs.pentagram().vectors
    psi = kcbs.optimal_state().real
    psi = psi / np.linalg.norm(psi)
    v6 = _drift_about_neighbor(vecs[0], vecs[4], psi, r_target)
    return np.vstack([vecs[:5], v6])


def _deepen_vectors(
    vectors: np.ndarray,
    psi: np.ndarray,
    cap: float,
    movable: np.ndarray | None = None,
    r_window: tuple[float, float] | None = None,
    maxiter: int = 400,
) -> np.ndarray:
    """Minimize the cycle value of psi over analyzer sets within the caps.

    The commutator tolerance leaves each neighboring pair a little overlap
    room, and only the repeatability window limits how far the repeated
    analyzer may drift from the first; the cycle has open ends.  Spending
    both budgets pushes the reachable cycle value below the orthogonal
    optimum, which is what gives the weight LP deep branches.
    """
    if movable is None:
        movable = np.ones(len(vectors), dtype=bool)
    rows = np.flatnonzero(movable)
    if rows.size == 0:
        return vectors.copy()
    base = vectors.copy()

    def unpack(x: np.ndarray) -> np.ndarray:
        v = base.copy()
        v[rows] = x.reshape(rows.size, 3)
        return v

    def cycle_value(x: np.ndarray) -> float:
        _, chi, _ = _branch_stats(unpack(x), psi[None, :])
        return float(chi[0])

    def tie_value(x: np.ndarray) -> float:
        _, _, r_val = _branch_stats(unpack(x), psi[None, :])
        return float(r_val[0])

    cons: list[dict] = []
    for i in range(rows.size):
        sl = slice(3 * i, 3 * i + 3)
        cons.append(
            {"type": "eq", "fun": lambda x, sl=sl: float(x[sl] @ x[sl]) - 1.0}
        )
    for a, b in EDGES:

        def cap_slack(x: np.ndarray, a: int = a, b: int = b) -> float:
            v = unpack(x)
            ov = float(v[a - 1] @ v[b - 1])
            return cap * cap - ov * ov

        cons.append({"type": "ineq", "fun": cap_slack})
    if r_window is not None:
        lo, hi = r_window
        cons.append({"type": "ineq", "fun": lambda x: tie_value(x) - lo})
        cons.append({"type": "ineq", "fun": lambda x: hi - tie_value(x)})

    res = minimize(
        cycle_value,
        base[rows].ravel(),
        method="SLSQP",
        constraints=cons,
        options={"maxiter": maxiter, "ftol": 1e-12},
    )
    v = unpack(res.x)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v = _cap_overlaps(v, cap, movable)
    _, chi_new, _ = _branch_stats(v, psi[None, :])
    _, chi_old, _ = _branch_stats(vectors, psi[None, :])
    if chi_new[0] <= chi_old[0]:
        return v
    return _cap_overlaps(vectors.copy(), cap, movable)


def _improve_states(
    vectors: np.ndarray,
    states: np.ndarray,
    weights: np.ndarray,
    chi_wc: float,
    r_interval: tuple[float, float],
    r_min: float,
    r_max: float,
    iters: int,
) -> tuple[np.ndarray, np.ndarray]:
    """See-saw: eigen-steps on each branch state, then re-weight by LP."""
    projectors = np.einsum("ai,aj->aij", vectors, vectors)
    chi_op = 5.0 * np.eye(3)
    for a, b in EDGES:
        pa, pb = projectors[a - 1], projectors[b - 1]
        chi_op += -2.0 * pa - 2.0 * pb + 2.0 * (pa @ pb + pb @ pa)
    best = states.copy()
    best_w = weights.copy()
    for _ in range(iters):
        probs, chi, r_val = _branch_stats(vectors, best)
        val = _attack_value(vectors, best, best_w, r_min, r_max)
        for e in range(best.shape[0]):
            guess_op = np.zeros((3, 3))
            norm_op = np.zeros((3, 3))
            for a, b in EDGES:
                pa, pb = probs[e, a - 1], probs[e, b - 1]
                if pa >= r_max * pb:
                    guess_op += projectors[a - 1]
                else:
                    guess_op += r_max * projectors[b - 1]
                norm_op += projectors[a - 1] + r_min * projectors[b - 1]
            for mu in (0.0, 0.3, 1.0):
                step = guess_op - val * norm_op - mu * chi_op
                w, v = np.linalg.eigh(step)
                cand = best.copy()
                cand[e] = v[:, -1]
                _, chi_c, r_c = _branch_stats(vectors, cand)
                probs_c = (cand @ vectors.T) ** 2
                num, den = _score_parts(probs_c, r_min, r_max)
                lp = _weight_lp(num, den, chi_c, r_c, chi_wc, r_interval)
                if lp is not None and lp[1] > val + 1e-12:
                    best, best_w, val = cand, lp[0], lp[1]
                    probs, chi, r_val = _branch_stats(vectors, best)
    return best, best_w


def _attack_ensemble(
    prob: CertificationProblem,
    restarts: int = 6,
    seed: int = 0,
    n_branches: int = 6,
) -> tuple[float, tuple[np.ndarray, np.ndarray, np.ndarray] | None]:
    """Best explicit-ensemble guessing value and the ensemble that attains it."""
    chi_wc = prob.chi_worst
    cap = prob.overlap_cap
    r_min, r_max = prob.eta_ratio
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA77AC4]))
    r_mid = 0.5 * (prob.r_interval[0] + prob.r_interval[1])
    best = 0.5
    best_ens: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    psi0 = kcbs.optimal_state().real
    psi0 = psi0 / np.linalg.norm(psi0)
    start = _in_class_vectors(r_mid)
    tie_fixed = np.array([False, True, True, True, True, False])
    deep_inner = _deepen_vectors(start, psi0, cap, movable=tie_fixed)
    deep_free = _deepen_vectors(start, psi0, cap, r_window=prob.r_interval)
    vector_sets = [deep_free, deep_inner, start, _toggle_candidate(r_mid)]
    vector_sets += _corner_candidates(cap)
    for _ in range(max(0, restarts - 1)):
        noise = 0.1 * rng.normal(size=deep_free.shape)
        cand = deep_free + noise
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        vector_sets.append(
            _deepen_vectors(
                cand, psi0, cap, r_window=prob.r_interval, maxiter=80
            )
        )

    for vectors in vector_sets:
        # one deep branch plus one guess branch per context
        states = [psi0]
        states += [vectors[a - 1] for a, _ in EDGES]
        while len(states) < n_branches:
            s = rng.normal(size=3)
            states.append(s / np.linalg.norm(s))
        states = np.vstack(states[:n_branches])
        probs, chi, r_val = _branch_stats(vectors, states)
        num, den = _score_parts(probs, r_min, r_max)
        lp = _weight_lp(num, den, chi, r_val, chi_wc, prob.r_interval)
        if lp is None:
            continue
        weights, val = lp
        states, weights = _improve_states(
            vectors,
            states,
            weights,
            chi_wc,
            prob.r_interval,
            r_min,
            r_max,
            iters=4,
        )
        val = _attack_value(vectors, states, weights, r_min, r_max)
        _, chi_f, r_f = _branch_stats(vectors, states)
        ens_chi = float(weights @ chi_f)
        ens_r = float(weights @ r_f)
        if (
            ens_chi <= chi_wc + 1e-9
            and prob.r_interval[0] - 1e-9 <= ens_r <= prob.r_interval[1] + 1e-9
            and val > best
        ):
            best = val
            best_ens = (vectors.copy(), states.copy(), weights.copy())
    return min(1.0, best), best_ens


def attack_search(
    prob: CertificationProblem,
    restarts: int = 6,
    seed: int = 0,
    n_branches: int = 6,
) -> float:
    """Best explicit-ensemble guessing value found by seeded see-saw."""
    val, _ = _attack_ensemble(
        prob, restarts=restarts, seed=seed, n_branches=n_branches
    )
    return val


# ------------------------------------------------------------------ #
# orchestration                                                       #
# ------------------------------------------------------------------ #


def certified_rate(h_min: float, round_rate: float) -> float:
    """Bits per second from bits per round and the detected-round rate."""
    if round_rate < 0:
        raise ValueError("round_rate must be nonnegative")
    return h_min * round_rate


def certify(
    prob: CertificationProblem,
    round_rate: float | None = None,
    restarts: int = 6,
    seed: int = 7,
    bisect_tol: float = 1e-4,
    max_sweeps: int = MAX_SWEEPS,
) -> CertificationResult:
    """Upper-bound Eve, search for explicit attacks, report min-entropy."""
    p_attack, ensemble = _attack_ensemble(prob, restarts=restarts, seed=seed)
    witness = None
    if ensemble is not None:
        vectors, states, weights = ensemble
        probs = (states @ vectors.T) ** 2
        guesses = _branch_guesses(probs, *prob.eta_ratio)
        witness = _witness_matrix(vectors, states, weights, guesses)
    p_upper, diag = relaxation_bound(
        prob,
        bisect_tol=bisect_tol,
        witness=witness,
        witness_value=p_attack if ensemble is not None else None,
        max_sweeps=max_sweeps,
    )
    h_min = max(0.0, -math.log2(p_upper))
    rate = certified_rate(h_min, round_rate) if round_rate is not None else None
    diag = dict(diag)
    diag["worst_case_chi"] = prob.chi_worst
    diag["delta"] = prob.effective_delta
    return CertificationResult(
        p_guess_upper=p_upper,
        p_guess_attack=p_attack,
        h_min=h_min,
        rate=rate,
        diagnostics=diag,
    )


def rate_curve(
    base: CertificationProblem,
    chi_grid,
    round_rate: float,
    bisect_tol: float = 1e-4,
    max_sweeps: int = MAX_SWEEPS,
) -> list[dict]:
    """h_min and rate along a grid of observed cycle values.

    Tightening chi shrinks the feasible set, so the true bound is monotone;
    solver noise is smoothed by a running minimum taken from the weakest
    violation downward, which preserves validity of every point.
    """
    chi_min = 5.0 - 4.0 * math.sqrt(5.0)
    rows = []
    for chi in chi_grid:
        if not chi_min - 1e-9 <= chi <= -3.0 + 1e-9:
            raise ValueError("grid values must lie in [5 - 4 sqrt 5, -3]")
        prob = CertificationProblem(
            chi_hat=float(chi),
            delta=base.delta,
            r_interval=base.r_interval,
            eps_com=base.eps_com,
            eta=base.eta,
            n_rounds=base.n_rounds,
            eps_fin=base.eps_fin,
        )
        p_upper, diag = relaxation_bound(
            prob, bisect_tol=bisect_tol, max_sweeps=max_sweeps
        )
        rows.append(
            {
                "chi": float(chi),
                "p_guess_upper": p_upper,
                "diagnostics": diag,
            }
        )
    order = sorted(range(len(rows)), key=lambda i: -rows[i]["chi"])
    running = 1.0
    for i in order:
        running = min(running, rows[i]["p_guess_upper"])
        rows[i]["p_guess_upper"] = running
    for row in rows:
        h = max(0.0, -math.log2(row["p_guess_upper"]))
        row["h_min"] = h
        row["rate"] = certified_rate(h, round_rate)
    return rows
