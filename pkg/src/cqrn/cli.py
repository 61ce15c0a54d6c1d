"""Command line front end: configuration, pipeline wiring, and artifacts.

Every subcommand reads a strict JSON config, writes its outputs atomically
under the run directory, and stamps each artifact with the config digest
and seed so any file can be traced back to the run that produced it.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 certification
infeasible (the solver could not reach the data constraints), 4 undersized
or missing input data.  Errors are mirrored as one-line JSON on stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import battery as battery_mod
from . import certifier, extractor, kcbs, mesh, photonics, tomography
from .formats import (
    BitStream,
    atomic_write_text,
    canonical_json,
    write_csv,
    write_json,
    write_jsonl,
)

FORMAT_VERSION = 1
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_DATA = 4

_DATA_DIR = Path(__file__).parent / "data"


class ConfigError(Exception):
    """Invalid or unknown configuration content."""


class DataError(Exception):
    """Missing or undersized input data."""


class InfeasibleError(Exception):
    """Certification could not establish its constraint set."""


# ------------------------------------------------------------------ #
# configuration                                                       #
# ------------------------------------------------------------------ #

_SECTION_KEYS = {
    "": {
        "format_version",
        "seed",
        "output_dir",
        "n_rounds",
        "scheduling",
        "event_budget",
        "source",
        "channel",
        "noise",
        "plan",
        "certifier",
        "extractor",
        "battery",
        "tomo",
        "curve",
    },
    "source": {"rep_rate", "pair_prob", "herald_eff"},
    "channel": {
        "source_loss_db",
        "mesh_loss_db",
        "per_cell_loss_db",
        "detector_eff",
        "dark_prob",
    },
    "noise": {"phase_sigma", "r_target", "multi_pair"},
    "certifier": {
        "chi_hat",
        "delta",
        "r_interval",
        "eps_com",
        "eta",
        "n_rounds",
        "eps_fin",
        "round_rate",
        "bisect_tol",
        "restarts",
        "max_sweeps",
    },
    "extractor": {"eps_sec", "block_bits"},
    "battery": {"block_size", "pattern_len"},
    "tomo": {"shots", "bootstrap", "seed"},
    "curve": {"points", "round_rate", "bisect_tol", "max_sweeps"},
}


def default_config() -> dict:
    """Reference operating configuration of the simulated experiment."""
    return {
        "format_version": FORMAT_VERSION,
        "seed": 7,
        "output_dir": "run",
        "n_rounds": 12_000_000,
        "scheduling": "uniform",
        "event_budget": 200,
        "source": {"rep_rate": 1.25e9, "pair_prob": 0.03, "herald_eff": 0.25},
        # bench channel: fiber and mesh losses zeroed so a few million
        # rounds give usable statistics; the flight losses only rescale
        # the clock, not the heralded statistics
        "channel": {
            "source_loss_db": 0.0,
            "mesh_loss_db": 0.0,
            "per_cell_loss_db": 0.0,
            "detector_eff": [0.85, 0.83, 0.86],
            "dark_prob": 1e-7,
        },
        "noise": {"phase_sigma": 0.02, "r_target": 0.93, "multi_pair": False},
        "plan": "default-kcbs",
        "certifier": {
            "chi_hat": None,
            "delta": None,
            "r_interval": [0.92, 0.94],
            "eps_com": 0.047,
            "eta": [0.85, 0.83, 0.86],
            "n_rounds": 100_000,
            "eps_fin": 2e-11,
            "round_rate": None,
            "bisect_tol": 1e-4,
            "restarts": 6,
            "max_sweeps": certifier.MAX_SWEEPS,
        },
        "extractor": {"eps_sec": extractor.DEFAULT_EPS_SEC, "block_bits": 4096},
        "battery": {"block_size": 128, "pattern_len": 2},
        "tomo": {"shots": 10_000, "bootstrap": 50, "seed": 3},
        "curve": {
            "points": 11,
            "round_rate": 282.0,
            "bisect_tol": 1e-2,
            "max_sweeps": 30_000,
        },
    }


def _check_keys(section: str, doc: dict) -> None:
    allowed = _SECTION_KEYS[section]
    for key in doc:
        if key not in allowed:
            where = section or "top level"
            raise ConfigError(f"unknown key {key!r} in {where}")
        if key in _SECTION_KEYS and isinstance(doc[key], dict):
            _check_keys(key, doc[key])


def load_config(path: str | None) -> dict:
    """Merge a user config over the defaults, rejecting unknown keys."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        user = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys("", user)
    if user.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise ConfigError("unsupported config format_version")
    for key, value in user.items():
        if isinstance(value, dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def _provenance(cfg: dict) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config_sha256": config_digest(cfg),
        "seed": cfg["seed"],
    }


# ------------------------------------------------------------------ #
# run directory plumbing                                              #
# ------------------------------------------------------------------ #


@contextlib.contextmanager
def _run_lock(out_dir: Path):
    """One writer per output directory, via an exclusive lock file."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory is locked by another run: {lock}"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock)


def _threads() -> int:
    raw = os.environ.get("QRNG_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("QRNG_THREADS must be an integer") from None
    if n <= 0:
        return os.cpu_count() or 1
    return n


def _sanitize(obj):
    """Strip wall-clock fields so artifacts are run-to-run identical."""
    if isinstance(obj, dict):
        return {
            k: _sanitize(v)
            for k, v in obj.items()
            if k not in ("solve_seconds",)
        }
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ------------------------------------------------------------------ #
# config -> domain objects                                            #
# ------------------------------------------------------------------ #


def _build_physics(cfg: dict):
    try:
        src = photonics.SourceParams(**cfg["source"])
        ch_doc = dict(cfg["channel"])
        ch_doc["detector_eff"] = tuple(ch_doc["detector_eff"])
        ch = photonics.ChannelParams(**ch_doc)
        noise_doc = dict(cfg["noise"])
        r_target = noise_doc.pop("r_target")
        noise = photonics.NoiseParams(
            vprime_misalign=kcbs.misalign_for_overlap(r_target), **noise_doc
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["plan"] != "default-kcbs":
        raise ConfigError(f"unknown plan {cfg['plan']!r}")
    pent = kcbs.pentagram(noise.vprime_misalign)
    pairs = [pent.measured_pair(c) for c in range(1, 6)]
    plan = mesh.build_stage_plan(pairs, kcbs.optimal_state())
    return src, ch, noise, plan


def _build_problem(cfg: dict) -> certifier.CertificationProblem:
    doc = dict(cfg["certifier"])
    doc.pop("round_rate", None)
    doc.pop("bisect_tol", None)
    doc.pop("restarts", None)
    doc.pop("max_sweeps", None)
    if doc.get("chi_hat") is None:
        raise ConfigError(
            "certifier.chi_hat is unset; run analyze first or set it"
        )
    if doc.get("r_interval") is not None:
        doc["r_interval"] = tuple(doc["r_interval"])
    if doc.get("eta") is not None:
        doc["eta"] = tuple(doc["eta"])
    try:
        return certifier.CertificationProblem(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ------------------------------------------------------------------ #
# subcommands                                                         #
# ------------------------------------------------------------------ #


def cmd_simulate(cfg: dict, out_dir: Path) -> int:
    src, ch, noise, plan = _build_physics(cfg)
    summary = photonics.run_simulation(
        plan,
        src,
        ch,
        noise,
        n_rounds=int(cfg["n_rounds"]),
        seed=int(cfg["seed"]),
        scheduling=cfg["scheduling"],
        n_shards=_threads(),
        event_budget=int(cfg["event_budget"]),
    )
    prov = _provenance(cfg)
    write_jsonl(
        out_dir / "events.jsonl",
        [photonics.event_to_dict(ev) for ev in summary.events],
    )
    counts_rows = [
        [str(c + 1)]
        + [str(int(n)) for n in summary.counts[c]]
        + [str(int(summary.context_heralded[c]))]
        for c in range(5)
    ]
    write_csv(
        out_dir / "counts.csv",
        ["context", "clicks_mi", "clicks_mnext", "clicks_aux", "heralded"],
        counts_rows,
    )
    summary.raw_bits.write(out_dir / "raw_bits.cqrn")
    doc = {
        "provenance": prov,
        "n_rounds": summary.n_rounds,
        "heralded_rounds": summary.heralded_rounds,
        "coincidences": summary.coincidences,
        "coincidence_rate": summary.coincidence_rate,
        "outcome_totals": summary.outcome_totals,
        "raw_bit_count": len(summary.raw_bits),
        "metadata": _sanitize(summary.metadata),
    }
    write_json(out_dir / "summary.json", _sanitize(doc))
    print(
        f"simulated {summary.n_rounds} rounds: "
        f"{summary.heralded_rounds} heralded, "
        f"{summary.coincidences} analyzed clicks, "
        f"{len(summary.raw_bits)} raw bits"
    )
    return EXIT_OK


def _tables_from_counts_csv(path: Path, eta) -> list[kcbs.JointProbTable]:
    rows = [
        line.split(",")
        for line in path.read_text().strip().splitlines()
        if line and not line.startswith(("context", "#"))
    ]
    if len(rows) != 5:
        raise DataError(f"expected five context rows in {path}")
    tables = []
    for row in rows:
        ctx = int(row[0])
        counts = [float(x) for x in row[1:4]]
        tables.append(kcbs.efficiency_correct(counts, eta, ctx))
    return tables


def _tables_from_probs_csv(path: Path) -> tuple[list[kcbs.JointProbTable], float, float]:
    """Joint-probability table file: five context rows plus one overlap row."""
    tables = []
    r_overlap = r_sigma = None
    for line in path.read_text().strip().splitlines():
        if not line or line.startswith(("context", "#")):
            continue
        cells = line.split(",")
        if cells[0] == "overlap":
            r_overlap, r_sigma = float(cells[1]), float(cells[2])
            continue
        ctx = int(cells[0])
        probs = [float(x) for x in cells[1:5]]
        sigmas = [float(x) for x in cells[5:9]]
        tables.append(
            kcbs.JointProbTable(
                context=ctx, probs=np.array(probs), sigmas=np.array(sigmas)
            )
        )
    if len(tables) != 5 or r_overlap is None:
        raise DataError(f"need five context rows and an overlap row in {path}")
    return tables, r_overlap, r_sigma


def cmd_analyze(cfg: dict, out_dir: Path, args) -> int:
    eta = tuple(cfg["channel"]["detector_eff"])
    r_sigma = 0.0
    if args.tables is not None:
        tables, r_overlap, r_sigma = _tables_from_probs_csv(Path(args.tables))
    else:
        counts_path = (
            Path(args.counts) if args.counts else out_dir / "counts.csv"
        )
        if not counts_path.exists():
            raise DataError(f"no counts file at {counts_path}; simulate first")
        tables = _tables_from_counts_csv(counts_path, eta)
        r_overlap = cfg["noise"]["r_target"]
    result = kcbs.evaluate_tables(tables, r_overlap, r_sigma)
    prov = _provenance(cfg)
    table_rows = []
    for t in sorted(tables, key=lambda t: t.context):
        table_rows.append(
            [str(t.context)]
            + [f"{p:.6f}" for p in t.probs]
            + [f"{s:.6f}" for s in t.sigmas]
            + [f"{t.term():.6f}", f"{t.term_sigma():.6f}"]
        )
    write_csv(
        out_dir / "joint_probabilities.csv",
        [
            "context",
            "p_mp",
            "p_pp",
            "p_pm",
            "p_mm",
            "s_mp",
            "s_pp",
            "s_pm",
            "s_mm",
            "term",
            "term_sigma",
        ],
        table_rows,
    )
    doc = {
        "provenance": prov,
        "terms": [float(x) for x in result.terms],
        "term_sigmas": [float(x) for x in result.term_sigmas],
        "r_overlap": result.r_overlap,
        "r_sigma": result.r_sigma,
        "chi_sum": result.chi_sum,
        "chi_modified": result.chi_modified,
        "chi_sigma": result.chi_sigma,
    }
    write_json(out_dir / "kcbs_result.json", _sanitize(doc))
    print(
        f"chi_sum = {result.chi_sum:.4f}, "
        f"chi_modified = {result.chi_modified:.4f} "
        f"+- {result.chi_sigma:.4f} (R = {result.r_overlap:.3f})"
    )
    return EXIT_OK


def cmd_certify(cfg: dict, out_dir: Path, args) -> int:
    cert_cfg = dict(cfg["certifier"])
    if args.from_analysis or cert_cfg.get("chi_hat") is None:
        analysis_path = (
            Path(args.from_analysis)
            if args.from_analysis
            else out_dir / "kcbs_result.json"
        )
        if not analysis_path.exists():
            raise DataError(f"no analysis result at {analysis_path}")
        analysis = json.loads(analysis_path.read_text())
        cert_cfg["chi_hat"] = analysis["chi_sum"]
        cfg = dict(cfg)
        cfg["certifier"] = cert_cfg
    prob = _build_problem(cfg)
    result = certifier.certify(
        prob,
        round_rate=cert_cfg.get("round_rate"),
        restarts=int(cert_cfg.get("restarts", 6)),
        seed=int(cfg["seed"]),
        bisect_tol=float(cert_cfg.get("bisect_tol", 1e-4)),
        max_sweeps=int(cert_cfg.get("max_sweeps", certifier.MAX_SWEEPS)),
    )
    if result.diagnostics.get("reason") == (
        "solver stagnated on the data constraints"
    ):
        raise InfeasibleError(
            "certification constraints unreachable; check the inputs"
        )
    doc = {"provenance": _provenance(cfg), "problem": prob.as_dict()}
    doc.update(result.as_dict())
    write_json(out_dir / "certification.json", _sanitize(doc))
    rate_txt = "" if result.rate is None else f", rate = {result.rate:.1f} bit/s"
    print(
        f"h_min = {result.h_min:.4f} bits/round "
        f"(p_guess <= {result.p_guess_upper:.5f}, "
        f"best attack {result.p_guess_attack:.5f}){rate_txt}"
    )
    return EXIT_OK


def cmd_extract(cfg: dict, out_dir: Path, args) -> int:
    bits_path = Path(args.bits) if args.bits else out_dir / "raw_bits.cqrn"
    cert_path = (
        Path(args.certification)
        if args.certification
        else out_dir / "certification.json"
    )
    if not bits_path.exists():
        raise DataError(f"no raw bit stream at {bits_path}")
    if not cert_path.exists():
        raise DataError(f"no certification result at {cert_path}")
    raw = BitStream.read(bits_path)
    cert = json.loads(cert_path.read_text())
    h_min = float(cert["h_min"])
    ext_cfg = cfg["extractor"]
    try:
        result = extractor.extract_stream(
            raw,
            h_min,
            eps_sec=float(ext_cfg["eps_sec"]),
            master_seed=int(cfg["seed"]),
            block_bits=int(ext_cfg["block_bits"]),
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    result.bits.write(out_dir / "extracted_bits.cqrn")
    out_bits = result.bits
    doc = {"provenance": _provenance(cfg), "output_bits": len(out_bits)}
    doc.update(result.metadata)
    write_json(out_dir / "extraction.json", _sanitize(doc))
    print(
        f"extracted {len(out_bits)} bits from {len(raw)} raw bits "
        f"({result.metadata['bits_per_block']}/block)"
    )
    return EXIT_OK


def cmd_battery(cfg: dict, out_dir: Path, args) -> int:
    bits_path = (
        Path(args.bits) if args.bits else out_dir / "extracted_bits.cqrn"
    )
    if not bits_path.exists():
        raise DataError(f"no bit stream at {bits_path}")
    bits = BitStream.read(bits_path)
    bat_cfg = cfg["battery"]
    try:
        report = battery_mod.run_battery(
            bits.bits,
            block_size=int(bat_cfg["block_size"]),
            pattern_len=int(bat_cfg["pattern_len"]),
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    doc = {"provenance": _provenance(cfg)}
    doc.update(report.as_dict())
    write_json(out_dir / "battery.json", _sanitize(doc))
    width = max(len(r.name) for r in report.results)
    for r in report.results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  p = {r.p_value:.6f}  {status}")
    print(f"{report.n_passed}/{len(report.results)} tests passed")
    return EXIT_OK


def cmd_tomo(cfg: dict, out_dir: Path, args) -> int:
    tomo_cfg = cfg["tomo"]
    bases = tomography.mub_set()
    psi = kcbs.optimal_state()
    rho_true = np.outer(psi, psi.conj())
    if args.counts is not None:
        raw = np.loadtxt(args.counts, delimiter=",", dtype=float)
        counts = np.asarray(raw, dtype=int)
        if counts.shape != (3, 3):
            raise DataError("counts file must hold a 3x3 integer table")
        data = tomography.TomographyData(counts=counts)
    else:
        data = tomography.simulate_counts(
            rho_true,
            bases,
            shots_per_basis=int(tomo_cfg["shots"]),
            seed=int(tomo_cfg["seed"]),
        )
    result = tomography.mle_reconstruct(data, bases)
    fid = tomography.fidelity(result.rho, rho_true)
    boot = tomography.bootstrap_uncertainty(
        data,
        bases,
        resamples=int(tomo_cfg["bootstrap"]),
        seed=int(tomo_cfg["seed"]) + 1,
        target=rho_true,
    )
    doc = {
        "provenance": _provenance(cfg),
        "fidelity": float(fid),
        "fidelity_sigma": float(boot.fidelity_std),
        "log_likelihood": float(result.log_likelihood),
        "iterations": int(result.n_iters),
        "converged": bool(result.converged),
        "rho_real": [[float(x) for x in row] for row in result.rho.real],
        "rho_imag": [[float(x) for x in row] for row in result.rho.imag],
    }
    write_json(out_dir / "tomography.json", _sanitize(doc))
    print(f"reconstructed state fidelity {fid:.4f} +- {boot.fidelity_std:.4f}")
    return EXIT_OK


def _render_svg(points: list[tuple[float, float]], x_label: str, y_label: str) -> str:
    """Minimal polyline plot; data values are embedded verbatim."""
    w, h, m = 640, 420, 60
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x_span = (x1 - x0) or 1.0
    y_span = (y1 - y0) or 1.0

    def sx(x: float) -> float:
        return m + (x - x0) / x_span * (w - 2 * m)

    def sy(y: float) -> float:
        return h - m - (y - y0) / y_span * (h - 2 * m)

    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in points)
    ticks = []
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * x_span
        yv = y0 + frac * y_span
        ticks.append(
            f'<text x="{sx(xv):.1f}" y="{h - m + 18}" font-size="11" '
            f'text-anchor="middle">{xv:.3f}</text>'
        )
        ticks.append(
            f'<text x="{m - 8}" y="{sy(yv):.1f}" font-size="11" '
            f'text-anchor="end">{yv:.3f}</text>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">\n'
        f'<rect width="{w}" height="{h}" fill="white"/>\n'
        f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" '
        'stroke="black"/>\n'
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="#1f6fb2" '
        'stroke-width="2"/>\n'
        + "\n".join(ticks)
        + f'\n<text x="{w / 2:.0f}" y="{h - 12}" font-size="13" '
        f'text-anchor="middle">{x_label}</text>\n'
        f'<text x="16" y="{h / 2:.0f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {h / 2:.0f})">{y_label}</text>\n'
        "</svg>\n"
    )


def cmd_curve(cfg: dict, out_dir: Path, args) -> int:
    curve_cfg = cfg["curve"]
    n_points = int(curve_cfg["points"])
    if n_points < 2:
        raise ConfigError("curve.points must be at least 2")
    cert_cfg = dict(cfg["certifier"])
    if cert_cfg.get("chi_hat") is None:
        cert_cfg["chi_hat"] = -3.92
    base_cfg = dict(cfg)
    base_cfg["certifier"] = cert_cfg
    base = _build_problem(base_cfg)
    chi_min = 5.0 - 4.0 * math.sqrt(5.0)
    grid = np.linspace(-3.0, chi_min, n_points)
    rows = certifier.rate_curve(
        base,
        grid,
        round_rate=float(curve_cfg["round_rate"]),
        bisect_tol=float(curve_cfg["bisect_tol"]),
        max_sweeps=int(curve_cfg.get("max_sweeps", certifier.MAX_SWEEPS)),
    )
    csv_rows = [
        [f"{r['chi']:.6f}", f"{r['p_guess_upper']:.6f}", f"{r['h_min']:.6f}",
         f"{r['rate']:.6f}"]
        for r in rows
    ]
    write_csv(
        out_dir / "rate_curve.csv",
        ["chi", "p_guess_upper", "h_min", "rate_bits_per_s"],
        csv_rows,
    )
    doc = {
        "provenance": _provenance(cfg),
        "round_rate": curve_cfg["round_rate"],
        "points": [
            {k: r[k] for k in ("chi", "p_guess_upper", "h_min", "rate")}
            for r in rows
        ],
    }
    write_json(out_dir / "rate_curve.json", _sanitize(doc))
    svg = _render_svg(
        [(r["chi"], r["rate"]) for r in rows],
        "observed cycle value",
        "certified rate (bit/s)",
    )
    atomic_write_text(out_dir / "rate_curve.svg", svg)
    print(f"wrote {len(rows)}-point curve to {out_dir / 'rate_curve.csv'}")
    return EXIT_OK


def cmd_report(cfg: dict, out_dir: Path) -> int:
    artifacts = {
        "summary": "summary.json",
        "kcbs": "kcbs_result.json",
        "certification": "certification.json",
        "extraction": "extraction.json",
        "battery": "battery.json",
        "tomography": "tomography.json",
        "curve": "rate_curve.json",
    }
    found: dict[str, dict] = {}
    for name, fname in artifacts.items():
        path = out_dir / fname
        if path.exists():
            found[name] = json.loads(path.read_text())
    if not found:
        raise DataError(f"no artifacts found under {out_dir}")
    doc = {"provenance": _provenance(cfg), "artifacts": found}
    write_json(out_dir / "report.json", doc)
    lines = [f"# Run report ({config_digest(cfg)[:12]})", ""]
    if "summary" in found:
        s = found["summary"]
        lines.append(
            f"- simulation: {s['n_rounds']} rounds, "
            f"{s['heralded_rounds']} heralded, "
            f"{s['raw_bit_count']} raw bits"
        )
    if "kcbs" in found:
        k = found["kcbs"]
        lines.append(
            f"- witness: chi_sum = {k['chi_sum']:.4f}, "
            f"chi_modified = {k['chi_modified']:.4f} +- {k['chi_sigma']:.4f}"
        )
    if "certification" in found:
        c = found["certification"]
        rate = c.get("rate")
        rate_txt = "" if rate is None else f", {rate:.1f} bit/s"
        lines.append(
            f"- certification: h_min = {c['h_min']:.4f} bits/round"
            f" (p_guess <= {c['p_guess_upper']:.5f}){rate_txt}"
        )
    if "extraction" in found:
        e = found["extraction"]
        lines.append(
            f"- extraction: {e['output_bits']} bits "
            f"({e['bits_per_block']}/block over {e['n_blocks']} blocks)"
        )
    if "battery" in found:
        b = found["battery"]
        lines.append(
            f"- battery: {b['n_passed']}/{b['n_tests']} tests passed "
            f"on {b['n_bits']} bits"
        )
    if "tomography" in found:
        t = found["tomography"]
        lines.append(
            f"- tomography: fidelity {t['fidelity']:.4f} "
            f"+- {t['fidelity_sigma']:.4f}"
        )
    if "curve" in found:
        pts = found["curve"]["points"]
        lines.append(f"- rate curve: {len(pts)} grid points")
    lines.append("")
    atomic_write_text(out_dir / "report.md", "\n".join(lines))
    print("\n".join(lines[2:]))
    return EXIT_OK


# ------------------------------------------------------------------ #
# entry point                                                         #
# ------------------------------------------------------------------ #


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrng",
        description=(
            "Digital twin of a photonic contextuality-certified QRNG: "
            "simulate, analyze, certify, extract, and validate."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")

    common(sub.add_parser("simulate", help="run the photonic Monte Carlo"))
    p_an = sub.add_parser("analyze", help="counts to witness values")
    common(p_an)
    p_an.add_argument("--counts", help="counts CSV (default: run dir)")
    p_an.add_argument(
        "--tables", help="joint-probability CSV with an overlap row"
    )
    p_ce = sub.add_parser("certify", help="bound the guessing probability")
    common(p_ce)
    p_ce.add_argument(
        "--from-analysis", help="KCBS result JSON to take chi_hat from"
    )
    p_ex = sub.add_parser("extract", help="hash raw bits to certified output")
    common(p_ex)
    p_ex.add_argument("--bits", help="raw bit stream (default: run dir)")
    p_ex.add_argument(
        "--certification", help="certification JSON (default: run dir)"
    )
    p_ba = sub.add_parser("battery", help="statistical tests on a bit stream")
    common(p_ba)
    p_ba.add_argument("--bits", help="bit stream (default: extracted bits)")
    p_to = sub.add_parser("tomo", help="state reconstruction pipeline")
    common(p_to)
    p_to.add_argument("--counts", help="3x3 counts CSV; default simulates")
    common(sub.add_parser("curve", help="certified rate versus cycle value"))
    common(sub.add_parser("report", help="aggregate run artifacts"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["output_dir"] = args.out
        out_dir = Path(cfg["output_dir"])
        with _run_lock(out_dir):
            if args.command == "simulate":
                return cmd_simulate(cfg, out_dir)
            if args.command == "analyze":
                return cmd_analyze(cfg, out_dir, args)
            if args.command == "certify":
                return cmd_certify(cfg, out_dir, args)
            if args.command == "extract":
                return cmd_extract(cfg, out_dir, args)
            if args.command == "battery":
                return cmd_battery(cfg, out_dir, args)
            if args.command == "tomo":
                return cmd_tomo(cfg, out_dir, args)
            if args.command == "curve":
                return cmd_curve(cfg, out_dir, args)
            if args.command == "report":
                return cmd_report(cfg, out_dir)
            raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        _fail("config", str(exc))
        return EXIT_CONFIG
    except DataError as exc:
        _fail("data", str(exc))
        return EXIT_DATA
    except InfeasibleError as exc:
        _fail("infeasible", str(exc))
        return EXIT_INFEASIBLE


def _fail(kind: str, message: str) -> None:
    sys.stderr.write(
        json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n"
    )


if __name__ == "__main__":
    sys.exit(main())
