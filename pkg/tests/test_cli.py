"""End-to-end CLI checks: exit codes, report files, deterministic reruns."""

import json
import subprocess
import sys

import numpy as np
import pytest

from nlflow.calibrate import load_calibration
from nlflow.cli import main
from nlflow.fieldio import load_field, save_field
from nlflow.grid import Field, Grid


def read_report(out_dir):
    with open(out_dir / "report.json") as fh:
        return json.load(fh)


def noisy_image(path, m=32, seed=5):
    """A smooth blob plus uniform noise, quantized to 8-bit levels."""
    g = Grid(dimension=2, side_length=16.0, points_per_axis=m)
    x = g.node_coords()
    r2 = (x[:, 0] - 8.0) ** 2 + (x[:, 1] - 8.0) ** 2
    base = 0.25 + 0.5 * np.exp(-r2 / 8.0)
    rng = np.random.default_rng(seed)
    vals = np.clip(base + rng.uniform(-0.1, 0.1, g.n_nodes), 0.0, 1.0)
    field = Field(g, np.round(vals * 255.0) / 255.0)
    save_field(field, str(path))
    return field


# ---------------------------------------------------------------------------
# validate

def test_validate_writes_a_report(tmp_path, capsys):
    out = tmp_path / "v"
    rc = main(["validate", "--out", str(out), "--set", "grid.M=64"])
    assert rc == 0
    report = read_report(out)
    assert report["command"] == "validate"
    assert report["passed"] is True
    assert all(report["checks"].values())
    assert "grid.M" not in report["config"]["defaulted_keys"]
    assert "kernel.s" in report["config"]["defaulted_keys"]
    timings = json.loads((out / "timings.json").read_text())
    assert timings["wall_clock_seconds"] >= 0.0
    assert "validate: pass" in capsys.readouterr().out


def test_validate_flags_an_envelope_breach(tmp_path, capsys):
    # a multiplier outside the ellipticity band parses fine but fails the
    # measured envelope check, so the verdict (not the config) trips
    out = tmp_path / "v"
    rc = main(["validate", "--out", str(out),
               "--set", "kernel.multiplier=100.0"])
    assert rc == 1
    report = read_report(out)
    assert report["checks"]["kernel_envelope"] is False
    assert report["checks"]["kernel_symmetric"] is True
    assert report["passed"] is False
    assert "kernel_envelope: FAIL" in capsys.readouterr().out


def test_bad_config_exits_2(tmp_path, capsys):
    out = tmp_path / "v"
    rc = main(["validate", "--out", str(out), "--set", "kernel.s=2.5"])
    assert rc == 2
    assert "order out of (0,2)" in capsys.readouterr().err
    assert not out.exists()          # nothing written on a usage error


def test_runtime_abort_exits_3(tmp_path, capsys):
    # spectral strategy rejects the (default) truncated kernel at run time
    rc = main(["run", "--out", str(tmp_path / "r"), "--seed", "1",
               "--set", "flow.strategy=spectral"])
    assert rc == 3
    assert "aborted" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# run

RUN_ARGS = ["--set", "grid.M=64", "--set", "flow.end=0.1",
            "--set", "flow.sample_every=4",
            "--set", "kernel.family=rough-static",
            "--set", "initial.kind=random"]


def test_run_records_dissipation(tmp_path, capsys):
    out = tmp_path / "r"
    rc = main(["run", "--out", str(out), "--seed", "1..2"] + RUN_ARGS)
    assert rc == 0
    report = read_report(out)
    assert [r["seed"] for r in report["runs"]] == [1, 2]
    for rec in report["runs"]:
        assert rec["dissipative"] is True
        assert rec["l2_last"] <= rec["l2_first"]
        assert rec["mass_conserved"] is True
    lines = (out / "curves" / "run-seed1.csv").read_text().splitlines()
    assert lines[0] == "# nlflow curve seed=1"
    assert lines[1] == "t,l2,energy,vmin,vmax,mass"
    # seeded runs differ, and the final fields land as 1-d CSVs
    a = load_field(str(out / "fields" / "final-seed1.csv"))
    b = load_field(str(out / "fields" / "final-seed2.csv"))
    assert not np.array_equal(a.values, b.values)
    assert "run seed 2: dissipative" in capsys.readouterr().out


def test_run_rerun_is_byte_identical(tmp_path):
    out1, out2 = tmp_path / "one", tmp_path / "two"
    for out in (out1, out2):
        assert main(["run", "--out", str(out), "--seed", "3"] + RUN_ARGS) == 0
    for rel in ("report.json", "curves/run-seed3.csv",
                "fields/final-seed3.csv"):
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()


# ---------------------------------------------------------------------------
# diagnose

def test_diagnose_single_seed(tmp_path, capsys):
    out = tmp_path / "d"
    rc = main(["diagnose", "--out", str(out), "--seed", "1"])
    assert rc == 0
    report = read_report(out)
    assert report["summary"]["all_pass"] is True
    assert report["summary"]["failures"] == 0
    entry = report["runs"][0]
    for name in ("lemma1", "corollary1", "corollary2", "lemma2", "lemma3"):
        assert entry[name]["verdict"] == "pass"
    assert entry["recurrence"]["monotone"] is True
    assert entry["recurrence"]["chebyshev_ok"] is True
    assert entry["oscillation"]["alpha"] > 0.0
    cal = report["calibration"]
    assert 0.0 < cal["lam_star"] < 1.0
    assert (out / "curves" / "recurrence-seed1.csv").exists()
    assert (out / "curves" / "oscillation-seed1.csv").exists()
    assert "diagnose: pass over 1 seeds" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# denoise

def test_denoise_pgm(tmp_path, capsys):
    src = tmp_path / "noisy.pgm"
    noisy = noisy_image(src)
    out = tmp_path / "n"
    rc = main(["denoise", "--out", str(out),
               "--set", f"denoise.input={src}",
               "--set", "denoise.time=0.1"])
    assert rc == 0
    report = read_report(out)
    assert report["passed"] is True
    assert report["range_contained"] is True
    assert report["flow"]["energy_nonincreasing"] is True
    cleaned = load_field(str(out / "fields" / "denoised.pgm"))
    assert cleaned.values.min() >= noisy.values.min() - 1e-12
    assert cleaned.values.max() <= noisy.values.max() + 1e-12
    assert (out / "curves" / "denoise-energy.csv").exists()
    assert "denoise: pass" in capsys.readouterr().out


def test_denoise_rerun_is_byte_identical(tmp_path):
    src = tmp_path / "noisy.pgm"
    noisy_image(src)
    outs = (tmp_path / "one", tmp_path / "two")
    for out in outs:
        rc = main(["denoise", "--out", str(out),
                   "--set", f"denoise.input={src}",
                   "--set", "denoise.time=0.1"])
        assert rc == 0
    for rel in ("report.json", "fields/denoised.pgm",
                "curves/denoise-energy.csv"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()


def test_denoise_csv_signal(tmp_path):
    g = Grid(dimension=1, side_length=16.0, points_per_axis=64)
    rng = np.random.default_rng(11)
    x = g.node_coords()[:, 0]
    vals = np.exp(-((x - 8.0) ** 2) / 4.0) + rng.uniform(-0.2, 0.2, g.n_nodes)
    src = tmp_path / "noisy.csv"
    save_field(Field(g, vals), str(src))
    out = tmp_path / "n"
    rc = main(["denoise", "--out", str(out),
               "--set", f"denoise.input={src}",
               "--set", "denoise.time=0.05"])
    assert rc == 0
    cleaned = load_field(str(out / "fields" / "denoised.csv"))
    assert cleaned.values.min() >= vals.min() - 1e-12
    assert cleaned.values.max() <= vals.max() + 1e-12


def test_denoise_guards(tmp_path, capsys):
    assert main(["denoise", "--out", str(tmp_path / "a")]) == 2
    assert "denoise.input" in capsys.readouterr().err
    assert main(["denoise", "--out", str(tmp_path / "b"),
                 "--set", "denoise.input=/nonexistent.pgm"]) == 2
    src = tmp_path / "noisy.pgm"
    noisy_image(src)
    rc = main(["denoise", "--out", str(tmp_path / "c"),
               "--set", f"denoise.input={src}",
               "--set", "kernel.family=rough-static"])
    assert rc == 2
    assert "power-law" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# calibrate

def test_calibrate_small_ensemble(tmp_path, capsys):
    out = tmp_path / "c"
    rc = main(["calibrate", "--out", str(out), "--seed", "1..2"])
    assert rc == 0
    report = read_report(out)
    assert report["passed"] is True
    constants = load_calibration(str(out / "calibration.json"))
    for value in (constants.eps0, constants.delta, constants.lam_star):
        assert 0.0 < value < 1.0
    assert constants.lam_star == report["calibration"]["lam_star"]
    assert "calibrate: pass" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# plumbing

def test_thread_count_env_is_validated(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NLFLOW_THREADS", "lots")
    rc = main(["run", "--out", str(tmp_path / "r"), "--seed", "1"] + RUN_ARGS)
    assert rc == 2
    assert "NLFLOW_THREADS" in capsys.readouterr().err


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main(["--version"])
    assert exit_info.value.code == 0
    assert "0.1.0" in capsys.readouterr().out


def test_missing_subcommand_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main([])
    assert exit_info.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nlflow.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "0.1.0" in proc.stdout
