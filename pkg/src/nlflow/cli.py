"""Command-line front end: validate | run | diagnose | denoise | calibrate.

Outputs land under --out (default: config output.dir): a deterministic
report.json (byte-identical across reruns with the same config and seeds),
CSV curves, optional field dumps, and a separate timings.json holding the
wall-clock numbers that must not perturb report bytes.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 usage/config error,
3 runtime abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from .calibrate import CalibrationConstants, calibrate_constants, \
    default_calibration, load_calibration, save_calibration
from .config import ExperimentConfig, parse_config
from .degiorgi import check_recurrence, chebyshev_chain, truncated_energies, \
    verify_corollary1, verify_corollary2, verify_lemma1, verify_lemma2
from .ensembles import lemma_ensemble_run, level_ensemble_run, \
    oscillation_run, recurrence_run, run_many
from .errors import ConfigError, NlflowError
from .fieldio import load_field, save_field
from .flow import FlowProblem, Trajectory, run_flow
from .kernels import make_kernel, validate_kernel
from .oscillation import oscillation_decay, verify_lemma3
from .potentials import validate_potential

__all__ = ["main"]

_VERSION = "0.1.0"


def _thread_count(n_jobs: int) -> int:
    raw = os.environ.get("NLFLOW_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"NLFLOW_THREADS must be an integer, got {raw!r}")
    return max(1, min(n, n_jobs))


def _jsonable(obj):
    """Report payloads: numpy -> python, non-finite floats -> strings."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(payload: dict, path: str) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    with open(path, "w") as fh:
        fh.write(text)


def _ensure_dirs(out_dir: str, *sub: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name in sub:
        os.makedirs(os.path.join(out_dir, name), exist_ok=True)


def _write_curve(path: str, header: str, columns: dict) -> None:
    names = list(columns)
    rows = zip(*(columns[n] for n in names))
    lines = [f"# nlflow curve {header}", ",".join(names)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in rows)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _dissipation_record(traj: Trajectory) -> dict:
    """Per-step monotonicity facts for one trajectory (measured)."""
    l2, energy = traj.l2, traj.energy
    vmin, vmax, mass = traj.vmin, traj.vmax, traj.mass
    l2_scale = max(1.0, float(l2[0]))
    mass_scale = max(1.0, abs(float(mass[0])))
    rec = {
        "n_steps": int(len(traj.step_times) - 1),
        "dt_max": float(np.max(traj.dts)),
        "l2_first": float(l2[0]), "l2_last": float(l2[-1]),
        "energy_first": float(energy[0]), "energy_last": float(energy[-1]),
        "l2_nonincreasing": bool(
            np.all(np.diff(l2) <= 1e-12 * l2_scale)),
        "energy_nonincreasing": bool(np.all(np.diff(energy) <= 1e-10)),
        "bracket_preserved": bool(
            np.all(vmin >= vmin[0] - 1e-12) and
            np.all(vmax <= vmax[0] + 1e-12)),
        "mass_conserved": bool(
            np.max(np.abs(mass - mass[0])) <= 1e-12 * mass_scale),
        "final_min": float(vmin[-1]), "final_max": float(vmax[-1]),
    }
    rec["dissipative"] = bool(
        rec["l2_nonincreasing"] and rec["energy_nonincreasing"] and
        rec["bracket_preserved"] and rec["mass_conserved"])
    return rec


def _lemma_dict(rep) -> dict:
    return _jsonable(dataclasses.asdict(rep))


# --------------------------------------------------------------------------
# subcommands

def _cmd_validate(cfg: ExperimentConfig, out_dir: str) -> int:
    grid = cfg.make_grid()
    kernel = cfg.make_kernel()
    potential = cfg.make_potential()
    k_rep = validate_kernel(kernel)
    p_rep = validate_potential(potential)
    checks = {
        "kernel_symmetric": k_rep.symmetric,
        "kernel_envelope": k_rep.envelope_ok,
        "kernel_truncation": k_rep.truncated_ok,
        "potential_bounds": p_rep.bounds_ok,
        "potential_even": p_rep.even_ok,
        "potential_zero": p_rep.zero_ok,
        "potential_curvature": p_rep.fd_ok,
    }
    passed = all(checks.values())
    report = {
        "command": "validate",
        "version": _VERSION,
        "config": cfg.echo(),
        "grid": {"dimension": grid.dimension, "points": grid.points_per_axis,
                 "side_length": grid.side_length, "spacing": grid.spacing},
        "kernel": dataclasses.asdict(k_rep),
        "potential": dataclasses.asdict(p_rep),
        "checks": checks,
        "passed": passed,
        "provenance": {"checks": "measured"},
    }
    _ensure_dirs(out_dir)
    _write_json(report, os.path.join(out_dir, "report.json"))
    for name, ok in checks.items():
        print(f"validate {name}: {'ok' if ok else 'FAIL'}")
    print(f"validate: {'pass' if passed else 'FAIL'}")
    return 0 if passed else 1


def _cmd_run(cfg: ExperimentConfig, out_dir: str) -> int:
    seeds = list(cfg.get("ensemble.seeds"))
    sample_every = cfg.get("flow.sample_every")
    threads = _thread_count(len(seeds))

    def one(seed: int) -> Trajectory:
        return run_flow(cfg.flow_problem(seed=seed),
                        sample_every=sample_every)

    _ensure_dirs(out_dir, "curves", "fields")
    trajectories = run_many(one, seeds, threads)
    records, notes = [], []
    for seed, traj in zip(seeds, trajectories):
        rec = {"seed": seed}
        rec.update(_dissipation_record(traj))
        records.append(rec)
        _write_curve(
            os.path.join(out_dir, "curves", f"run-seed{seed}.csv"),
            f"seed={seed}",
            {"t": traj.step_times, "l2": traj.l2, "energy": traj.energy,
             "vmin": traj.vmin, "vmax": traj.vmax, "mass": traj.mass})
        final = traj.field(traj.n_samples - 1)
        if traj.grid.dimension == 1:
            save_field(final, os.path.join(out_dir, "fields",
                                           f"final-seed{seed}.csv"))
        elif 0.0 <= rec["final_min"] and rec["final_max"] <= 1.0:
            save_field(final, os.path.join(out_dir, "fields",
                                           f"final-seed{seed}.pgm"))
        else:
            notes.append(f"seed {seed}: final range outside [0,1], "
                         "no PGM dump")
    all_ok = all(r["dissipative"] for r in records)
    report = {
        "command": "run",
        "version": _VERSION,
        "config": cfg.echo(),
        "runs": records,
        "notes": notes,
        "passed": all_ok,
        "provenance": {"runs": "measured"},
    }
    _write_json(report, os.path.join(out_dir, "report.json"))
    for r in records:
        print(f"run seed {r['seed']}: "
              f"{'dissipative' if r['dissipative'] else 'VERDICT FAIL'} "
              f"(l2 {r['l2_first']:.6g} -> {r['l2_last']:.6g})")
    return 0 if all_ok else 1


def _load_reference_constants(cfg: ExperimentConfig) -> CalibrationConstants:
    path = cfg.get("calibration.file")
    if path:
        return load_calibration(path)
    return default_calibration()


def _cmd_diagnose(cfg: ExperimentConfig, out_dir: str) -> int:
    cal = _load_reference_constants(cfg)
    seeds = list(cfg.get("ensemble.seeds"))
    threads = _thread_count(len(seeds))
    k_max = cfg.get("diagnose.k_max")
    levels = cfg.get("diagnose.levels")
    scale = cfg.get("diagnose.scale")
    s = cal.order

    def diagnose_seed(seed: int) -> dict:
        entry: dict = {"seed": seed}
        traj = lemma_ensemble_run(seed)
        entry["lemma1"] = _lemma_dict(
            verify_lemma1(traj, eps0=cal.eps0, order=s))
        entry["corollary1"] = _lemma_dict(
            verify_corollary1(traj, t0=0.5, eps0=cal.eps0, order=s))
        entry["corollary2"] = _lemma_dict(
            verify_corollary2(traj, delta=cal.delta, order=s))

        traj = level_ensemble_run(seed)
        entry["lemma2"] = _lemma_dict(verify_lemma2(
            traj, mu=cal.mu, delta=cal.delta, gamma=cal.gamma,
            lam=cal.lam, order=s))
        entry["lemma3"] = _lemma_dict(verify_lemma3(
            traj, eps=cal.eps, lam=cal.lam, lam_star=cal.lam_star, order=s))

        traj = recurrence_run(seed)
        seq = truncated_energies(traj, k_max=k_max, order=s)
        rec = check_recurrence(seq)
        cheb = chebyshev_chain(traj, k_max=k_max, order=s)
        entry["recurrence"] = {
            "u_levels": seq.values, "monotone":
                bool(np.all(np.diff(seq.values) <= 0.0)),
            "constant": rec.constant, "decayed": rec.decayed,
            "vacuous": rec.vacuous,
            "chebyshev_min_slack": float(np.min(cheb.slack)),
            "chebyshev_ok": cheb.all_nonnegative,
        }

        traj = oscillation_run(seed)
        osc = oscillation_decay(traj, center=(0.0, np.zeros(traj.grid.dimension)),
                                scale=scale, levels=levels, order=s)
        entry["oscillation"] = {
            "alpha": osc.alpha, "r_squared": osc.r_squared,
            "osc": osc.osc, "radii": osc.radii, "degenerate": osc.degenerate,
        }
        return entry

    _ensure_dirs(out_dir, "curves")
    entries = run_many(diagnose_seed, seeds, threads)
    for seed, entry in zip(seeds, entries):
        _write_curve(
            os.path.join(out_dir, "curves", f"recurrence-seed{seed}.csv"),
            f"seed={seed}",
            {"k": np.arange(len(entry["recurrence"]["u_levels"])),
             "u": entry["recurrence"]["u_levels"]})
        _write_curve(
            os.path.join(out_dir, "curves", f"oscillation-seed{seed}.csv"),
            f"seed={seed}",
            {"radius": entry["oscillation"]["radii"],
             "osc": entry["oscillation"]["osc"]})

    lemma_names = ("lemma1", "corollary1", "corollary2", "lemma2", "lemma3")
    counts = {name: {"pass": 0, "fail": 0, "hypothesis-violated": 0}
              for name in lemma_names}
    failures = 0
    for entry in entries:
        for name in lemma_names:
            counts[name][entry[name]["verdict"]] += 1
        if not entry["recurrence"]["monotone"]:
            failures += 1
        if not entry["recurrence"]["chebyshev_ok"]:
            failures += 1
    failures += sum(counts[name]["fail"] for name in lemma_names)
    all_pass = failures == 0
    report = {
        "command": "diagnose",
        "version": _VERSION,
        "config": cfg.echo(),
        "calibration": dataclasses.asdict(cal),
        "runs": entries,
        "summary": {"verdict_counts": counts, "failures": failures,
                    "all_pass": all_pass},
        "provenance": {"runs": "measured", "calibration": "calibrated",
                       "thresholds": cal.provenance},
    }
    _write_json(report, os.path.join(out_dir, "report.json"))
    for name in lemma_names:
        c = counts[name]
        print(f"diagnose {name}: pass={c['pass']} fail={c['fail']} "
              f"hypothesis-violated={c['hypothesis-violated']}")
    print(f"diagnose: {'pass' if all_pass else 'FAIL'} over {len(seeds)} seeds")
    return 0 if all_pass else 1


def _cmd_denoise(cfg: ExperimentConfig, out_dir: str) -> int:
    src = cfg.get("denoise.input")
    if not src:
        raise ConfigError("denoise needs denoise.input=<field file>")
    if not os.path.exists(src):
        raise ConfigError(f"denoise input not found: {src}")
    if cfg.get("kernel.family") != "power-law":
        raise ConfigError(
            "denoise runs the nonlinear flow, which needs the "
            "translation-invariant power-law kernel family")
    noisy = load_field(src)
    # the file's own grid wins; rebuild the kernel at its dimension
    spec = dataclasses.replace(cfg.kernel_spec(),
                               dimension=noisy.grid.dimension)
    problem = FlowProblem(
        kind="nonlinear",
        grid=noisy.grid,
        kernel=make_kernel(spec),
        initial=noisy,
        t_start=0.0,
        t_end=cfg.get("denoise.time"),
        potential=cfg.make_potential(),
        stepper=cfg.get("flow.stepper"),
        strategy=cfg.get("flow.strategy"),
        dt_max=cfg.get("flow.dt_max"))
    traj = run_flow(problem, sample_every=cfg.get("flow.sample_every"))
    out_field = traj.field(traj.n_samples - 1)
    ext = ".pgm" if src.lower().endswith(".pgm") else ".csv"
    _ensure_dirs(out_dir, "curves", "fields")
    rel_out = os.path.join("fields", "denoised" + ext)
    save_field(out_field, os.path.join(out_dir, rel_out))
    _write_curve(os.path.join(out_dir, "curves", "denoise-energy.csv"),
                 "denoise",
                 {"t": traj.step_times, "energy": traj.energy,
                  "l2": traj.l2})
    rec = _dissipation_record(traj)
    range_in = (float(noisy.values.min()), float(noisy.values.max()))
    range_out = (float(out_field.values.min()), float(out_field.values.max()))
    contained = (range_out[0] >= range_in[0] - 1e-12 and
                 range_out[1] <= range_in[1] + 1e-12)
    energy_decreased = rec["energy_last"] < rec["energy_first"] - 1e-14 or \
        rec["energy_first"] == rec["energy_last"] == 0.0
    passed = contained and rec["energy_nonincreasing"]
    report = {
        "command": "denoise",
        "version": _VERSION,
        "config": cfg.echo(),
        "input": src,
        "output": rel_out,
        "range_in": range_in,
        "range_out": range_out,
        "range_contained": contained,
        "energy_strictly_decreased": bool(energy_decreased),
        "flow": rec,
        "passed": passed,
        "provenance": {"flow": "measured"},
    }
    _write_json(report, os.path.join(out_dir, "report.json"))
    print(f"denoise: range {range_in} -> {range_out}, "
          f"energy {rec['energy_first']:.6g} -> {rec['energy_last']:.6g}")
    print(f"denoise: {'pass' if passed else 'FAIL'}")
    return 0 if passed else 1


def _cmd_calibrate(cfg: ExperimentConfig, out_dir: str,
                   seeds_given: bool) -> int:
    kwargs = {}
    if seeds_given:
        seeds = list(cfg.get("ensemble.seeds"))
        kwargs = {"lemma_seeds": seeds, "level_seeds": seeds,
                  "osc_seeds": seeds, "rec_seeds": seeds}
    threads = _thread_count(len(cfg.get("ensemble.seeds")))
    constants = calibrate_constants(order=cfg.get("kernel.s"),
                                    dimension=cfg.get("grid.N"),
                                    threads=threads, **kwargs)
    _ensure_dirs(out_dir)
    save_calibration(constants, os.path.join(out_dir, "calibration.json"))
    report = {
        "command": "calibrate",
        "version": _VERSION,
        "config": cfg.echo(),
        "calibration": dataclasses.asdict(constants),
        "calibration_file": "calibration.json",
        "passed": constants.in_unit_interval(),
        "provenance": constants.provenance,
    }
    _write_json(report, os.path.join(out_dir, "report.json"))
    print(f"calibrate: eps0={constants.eps0:.6g} delta={constants.delta:.6g} "
          f"mu={constants.mu:.6g} gamma={constants.gamma:.6g} "
          f"lam_star={constants.lam_star:.6g}")
    print(f"calibrate: {'pass' if constants.in_unit_interval() else 'FAIL'}")
    return 0 if constants.in_unit_interval() else 1


# --------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlflow",
        description="Nonlocal-flow experiments: validation, dissipation "
                    "runs, regularity diagnostics, denoising, calibration.")
    parser.add_argument("--version", action="version", version=_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
            ("validate", "check kernel/potential invariants"),
            ("run", "seeded flow ensemble with dissipation records"),
            ("diagnose", "lemma detectors, energy ladder, oscillation fits"),
            ("denoise", "nonlinear flow as a denoiser on a field file"),
            ("calibrate", "pin detector constants from the ensembles")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, metavar="PATH",
                       help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", default=None, metavar="LIST",
                       help="seed list like 1..20 or 3,5,9")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="output directory (default: config output.dir)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = parse_config(path=args.config, overrides=args.set,
                           seeds=args.seed)
        out_dir = args.out if args.out is not None else cfg.get("output.dir")
        if args.command == "validate":
            code = _cmd_validate(cfg, out_dir)
        elif args.command == "run":
            code = _cmd_run(cfg, out_dir)
        elif args.command == "diagnose":
            code = _cmd_diagnose(cfg, out_dir)
        elif args.command == "denoise":
            code = _cmd_denoise(cfg, out_dir)
        else:
            code = _cmd_calibrate(cfg, out_dir,
                                  seeds_given=args.seed is not None)
    except ConfigError as exc:
        print(f"nlflow {args.command}: {exc}", file=sys.stderr)
        return 2
    except NlflowError as exc:
        print(f"nlflow {args.command}: aborted: {exc}", file=sys.stderr)
        return 3
    _write_json({"command": args.command,
                 "wall_clock_seconds": time.perf_counter() - t0},
                os.path.join(out_dir, "timings.json"))
    return code


if __name__ == "__main__":
    sys.exit(main())
