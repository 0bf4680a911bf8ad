"""CLI surface: subcommands, artifacts, manifests, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from photonthresh.artifacts import read_pgm, write_pgm
from photonthresh.cli import main


def run_cli(args):
    return main(list(args))


def test_unknown_subcommand_exits_64(capsys):
    assert run_cli(["frobnicate"]) == 64
    assert "unknown subcommand" in capsys.readouterr().err


def test_fisher_example(tmp_path, capsys):
    rc = run_cli(["fisher", "--family", "thermal", "--param", "N", "--N", "1",
                  "--t", "1", "--out-dir", str(tmp_path), "--no-plots"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "J = 0.25" in out
    assert "J0 = 0.5" in out


def test_optimal_threshold_example(tmp_path, capsys):
    rc = run_cli(["optimal-threshold", "--family", "dolp", "--param", "gamma",
                  "--N", "0.1", "--gamma", "0.5", "--out-dir", str(tmp_path),
                  "--no-plots"])
    assert rc == 0
    assert "t_opt = 2" in capsys.readouterr().out


def test_lidar_thresholds_example(tmp_path, capsys):
    rc = run_cli(["lidar-thresholds", "--N", "3", "--g", "0.01",
                  "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 0
    assert "(6, 18)" in capsys.readouterr().out


def test_stats_writes_artifacts_and_manifest(tmp_path):
    rc = run_cli(["stats", "--family", "coherent", "--N", "0.5",
                  "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 0
    assert (tmp_path / "pmf.csv").exists()
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["seed"] == 0
    assert "content_hash" in manifest
    assert manifest["config"]["family"] == "coherent"


def test_reproducibility_byte_identical_csv(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        rc = run_cli(["lidar-classify", "--N", "0.1", "--trials", "50",
                      "--windows-grid", "100", "1000", "--seed", "5",
                      "--out-dir", str(out), "--no-plots"])
        assert rc == 0
    assert (a / "accuracy.csv").read_bytes() == (b / "accuracy.csv").read_bytes()


def test_config_file_overrides_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"N": 2.0, "t": 2}))
    rc = run_cli(["fisher", "--family", "thermal", "--param", "N",
                  "--config", str(cfg), "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 0
    payload = json.loads((tmp_path / "fisher.json").read_text())
    assert payload["t"] == 2
    # explicit flags still win over the config file
    rc = run_cli(["fisher", "--family", "thermal", "--param", "N", "--t", "3",
                  "--config", str(cfg), "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 0
    payload = json.loads((tmp_path / "fisher.json").read_text())
    assert payload["t"] == 3


def test_config_error_exit_code(tmp_path, capsys):
    rc = run_cli(["stats", "--family", "thermal", "--N", "-3",
                  "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 1
    assert "configuration error" in capsys.readouterr().err


def test_dolp_render_writes_images(tmp_path):
    rc = run_cli(["dolp-render", "--width", "16", "--height", "16",
                  "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 0
    for name in ("intensity_8bit.pgm", "intensity_16bit.pgm",
                 "dolp_8bit.pgm", "dolp_16bit.pgm", "stokes.csv",
                 "render_report.json"):
        assert (tmp_path / name).exists(), name
    img = read_pgm(tmp_path / "intensity_16bit.pgm")
    assert img.shape == (16, 16)
    assert img.max() <= 1.0


def test_adaptive_subcommand(tmp_path, capsys):
    rc = run_cli(["adaptive", "--family", "dolp", "--N", "0.5", "--gamma", "0.5",
                  "--windows", "200", "--iterations", "2",
                  "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 0
    trace = json.loads((tmp_path / "trace.json").read_text())
    assert len(trace["iterations"]) == 2
    assert (tmp_path / "trace.csv").exists()


def test_tradespace_subcommand(tmp_path, capsys):
    rc = run_cli(["tradespace", "--N", "200", "--sharpness-grid", "2", "20",
                  "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 0
    lines = (tmp_path / "tradespace.csv").read_text().strip().splitlines()
    assert lines[0] == "sharpness,equivalent_noise"
    assert len(lines) == 4  # two grid points plus the sharp limit


def test_pnrd_compare_subcommand(tmp_path, capsys):
    rc = run_cli(["pnrd-compare", "--N", "3", "--g", "0.01", "--M-max", "24",
                  "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 0
    crossover = json.loads((tmp_path / "crossover.json").read_text())
    assert crossover["N"]["pd_t_opt"] == 6
    assert crossover["g"]["pd_t_opt"] == 18


def test_reproduce_fig9(tmp_path, capsys):
    rc = run_cli(["reproduce", "fig9", "--out-dir", str(tmp_path), "--no-plots"])
    out = capsys.readouterr().out
    assert rc == 0
    checks = json.loads((tmp_path / "checks.json").read_text())
    assert all(checks.values())
    assert "pass" in out


def test_reproduce_fig3(tmp_path):
    rc = run_cli(["reproduce", "fig3", "--out-dir", str(tmp_path), "--no-plots"])
    assert rc == 0
    checks = json.loads((tmp_path / "checks.json").read_text())
    assert checks["L_efficiency_in_[0.64,0.66]"]
    assert checks["U_threshold_ratio_in_[1.25,1.33]"]


def test_pgm_round_trip(tmp_path):
    arr = np.linspace(0, 1, 64).reshape(8, 8)
    write_pgm(tmp_path / "t8.pgm", arr, bits=8)
    write_pgm(tmp_path / "t16.pgm", arr, bits=16)
    assert np.max(np.abs(read_pgm(tmp_path / "t8.pgm") - arr)) <= 0.5 / 255
    assert np.max(np.abs(read_pgm(tmp_path / "t16.pgm") - arr)) <= 0.5 / 65535


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "photonthresh", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "photonthresh" in proc.stdout
