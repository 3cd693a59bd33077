"""Command-line interface: ``qlyap check|simulate|analyze|replicate``.

Exit codes: 0 success, 1 validation or integration error, 2 simulation
finished without reaching the target, 3 convergence conditions not met.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import REPLICATION_PRESETS, ConfigError, RunConfig, preset
from .errors import IntegrationError, InvariantError, ValidationError
from .propagate import Trajectory, distance_to_target, simulate
from .system import check_conditions

log = logging.getLogger("qlyap")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_CHECKS_FAILED = 3

DEFAULT_OUT = "qlyap_out"
FLOAT_FMT = ".9g"


def _fmt(x: float) -> str:
    s = format(float(x), FLOAT_FMT)
    return "0" if s == "-0" else s


def trajectory_csv(traj: Trajectory) -> str:
    """Header ``t,E,pop_1..pop_n,u_1..u_m``; numbers with 9 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "E"] + [f"pop_{i + 1}" for i in range(traj.n)] + [f"u_{j + 1}" for j in range(traj.m)])
    for k in range(traj.times.size):
        row = [traj.times[k], traj.energies[k], *traj.populations[k], *traj.controls[k]]
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text, encoding="utf-8")
    return p


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def run_check(cfg: RunConfig) -> dict:
    system = cfg.build_system()
    rho0, rhof = cfg.build_states()
    report = check_conditions(system, rho0, rhof, cfg.checks.regularity_tol, cfg.checks.equivalence_tol)
    return report.to_dict() | {"all_ok": report.all_ok}


def _witness_for(cfg: RunConfig, system, rho0, rhof):
    try:
        w = analysis.find_destabilizing_control(
            rho0, rhof, system.controls, cfg.analysis.t, system.h0_diag, cfg.analysis.sample_times
        )
    except ValidationError as exc:
        raise ValidationError(f"destabilizing kick: {exc}") from None
    if w is None:
        raise ValidationError("destabilizing kick: no destabilizing direction exists at the initial state")
    return w.u


def run_simulate(cfg: RunConfig) -> tuple[Trajectory, dict]:
    system = cfg.build_system()
    rho0, rhof = cfg.build_states()
    P = cfg.build_observable()
    sim = cfg.simulation.build()
    witness = _witness_for(cfg, system, rho0, rhof) if sim.kick.mode == "destabilizing_direction" else None
    traj = simulate(system, rho0, P, sim, witness=witness)
    dist = distance_to_target(traj.final_state, rhof)
    summary = {
        "final_time": float(traj.times[-1]),
        "final_populations": [float(x) for x in traj.populations[-1]],
        "final_energy": float(traj.energies[-1]),
        "min_energy": -float(np.trace(rhof @ rhof).real) if P.construction == "negative_target" else None,
        "hilbert_schmidt_distance": dist.hilbert_schmidt,
        "population_distance": dist.population_inf,
        "threshold": cfg.output.threshold,
        "converged": bool(dist.population_inf <= cfg.output.threshold),
    }
    return traj, summary


def run_analyze(cfg: RunConfig) -> dict:
    system = cfg.build_system()
    _, rhof = cfg.build_states()
    P = cfg.build_observable()
    points = analysis.analyze_critical_points(
        rhof, P, system.controls, system.h0_diag, cfg.analysis.t, cfg.analysis.sample_times
    )
    rows = []
    for cp in points:
        rows.append(
            {
                "permutation": [p + 1 for p in cp.permutation],
                "diagonal": [float(x) for x in np.diag(cp.rho_s).real],
                "energy": cp.energy,
                "verdict": cp.verdict,
                "witness": None if cp.witness is None else [float(x) for x in cp.witness],
                "edd": cp.edd_value,
                "witness_time": cp.witness_time,
            }
        )
    rank, regular = analysis.lemma3_rank(P)
    counts = {v: sum(r["verdict"] == v for r in rows) for v in (analysis.MINIMUM, analysis.UNSTABLE, analysis.BLOCKED)}
    return {"lemma3_rank": rank, "lemma3_regular": regular, "counts": counts, "critical_points": rows}


def format_table(result: dict) -> str:
    lines = [f"{'perm':<14}{'E(rho_s)':>12}  {'verdict':<22}{'edd':>12}  witness"]
    for r in result["critical_points"]:
        perm = "(" + ",".join(map(str, r["permutation"])) + ")"
        edd = "" if r["edd"] is None else _fmt(r["edd"])
        wit = "" if r["witness"] is None else "[" + " ".join(f"{x:+.3f}" for x in r["witness"]) + "]"
        lines.append(f"{perm:<14}{r['energy']:>12.6f}  {r['verdict']:<22}{edd:>12}  {wit}")
    c = result["counts"]
    lines.append(
        f"{len(result['critical_points'])} critical points: {c[analysis.MINIMUM]} minimum, "
        f"{c[analysis.UNSTABLE]} unstable, {c[analysis.BLOCKED]} blocked"
    )
    return "\n".join(lines)


def _field_order(traj: Trajectory, cfg: RunConfig):
    """Settling times of the 1-4 and 2-3 fields, if both couplings exist."""
    idx = {tuple(c.pair): j for j, c in enumerate(cfg.system.controls) if c.pair is not None}
    if (1, 4) not in idx or (2, 3) not in idx:
        return None
    t14 = traj.settle_time(idx[(1, 4)], 0.01)
    t23 = traj.settle_time(idx[(2, 3)], 0.01)
    return {"settle_1_4": t14, "settle_2_3": t23, "pass": bool(t14 < t23)}


def replicate_summary(cfg: RunConfig, traj: Trajectory, sim: dict, check: dict, result: dict) -> dict:
    _, rhof = cfg.build_states()
    mask = traj.feedback_mask()
    e = traj.energies[mask]
    bound = -float(np.trace(rhof @ rhof).real)
    mono = float(np.max(np.diff(e))) if e.size > 1 else 0.0
    expect_missing = [] if cfg.name == "four_level_full" else [[1, 3], [1, 4], [2, 4]]
    criteria = {
        "convergence": {"population_distance": sim["population_distance"], "pass": sim["converged"]},
        "theorem2_check": {
            "theorem2_satisfied": check["theorem2_satisfied"],
            "missing_pairs": check["missing_pairs"],
            "pass": sorted(check["missing_pairs"]) == expect_missing,
        },
        "field_order": _field_order(traj, cfg),
        "monotonicity": {
            "max_increase": mono,
            "min_energy": float(np.min(traj.energies)),
            "lower_bound": bound,
            "pass": bool(mono <= 1e-7 and np.min(traj.energies) >= bound - 1e-8),
        },
        "closed_system_invariants": {
            "trace_error": float(np.max(traj.trace_error)),
            "hermiticity_error": float(np.max(traj.hermiticity_error)),
            "spectrum_drift": float(np.max(traj.spectrum_drift)),
            "pass": bool(
                np.max(traj.trace_error) <= 1e-10
                and np.max(traj.hermiticity_error) <= 1e-10
                and np.max(traj.spectrum_drift) <= 1e-8
            ),
        },
        "critical_points": {
            "counts": result["counts"],
            "pass": result["counts"][analysis.BLOCKED] == 0 if check["theorem2_satisfied"] else True,
        },
    }
    return {
        "preset": cfg.name,
        "converged": sim["converged"],
        "theorem2": check["theorem2_satisfied"],
        "criteria": criteria,
    }


def _load(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("arguments", "give either --config or --preset, not both")
    if args.preset:
        return preset(args.preset)
    if args.config:
        return RunConfig.load(args.config)
    raise ConfigError("arguments", "one of --config or --preset is required")


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.output.path or DEFAULT_OUT)


def cmd_check(args) -> int:
    cfg = _load(args)
    rep = run_check(cfg)
    text = _dump(rep)
    print(text, end="")
    if args.out:
        _write(Path(args.out), "check.json", text)
    return EXIT_OK if rep["all_ok"] else EXIT_CHECKS_FAILED


def cmd_simulate(args) -> int:
    cfg = _load(args)
    traj, summary = run_simulate(cfg)
    out = _out_dir(args, cfg)
    _write(out, "trajectory.csv", trajectory_csv(traj))
    _write(out, "simulate.json", _dump(summary))
    print(_dump(summary), end="")
    return EXIT_OK if summary["converged"] else EXIT_NOT_CONVERGED


def cmd_analyze(args) -> int:
    cfg = _load(args)
    result = run_analyze(cfg)
    print(format_table(result))
    if args.out:
        _write(Path(args.out), "analysis.json", _dump(result))
    return EXIT_OK


def cmd_replicate(args) -> int:
    if args.config:
        raise ConfigError("arguments", "replicate takes --preset only")
    if args.preset not in REPLICATION_PRESETS:
        raise ConfigError("preset", f"replicate needs one of {list(REPLICATION_PRESETS)}, got {args.preset!r}")
    cfg = preset(args.preset)
    out = _out_dir(args, cfg)
    check = run_check(cfg)
    traj, sim = run_simulate(cfg)
    result = run_analyze(cfg)
    summary = replicate_summary(cfg, traj, sim, check, result)
    _write(out, "check.json", _dump(check))
    _write(out, "trajectory.csv", trajectory_csv(traj))
    _write(out, "simulate.json", _dump(sim))
    _write(out, "analysis.json", _dump(result))
    _write(out, "summary.json", _dump(summary))
    print(format_table(result))
    print(_dump(summary), end="")
    return EXIT_OK


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "analyze": cmd_analyze, "replicate": cmd_replicate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlyap", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", help="built-in scenario (four_level_ladder, four_level_full, two_level)")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, InvariantError, IntegrationError, OSError) as exc:
        print(f"qlyap: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
