import csv
import json
import subprocess
import sys

import pytest

from adpulse import cli

BASE = """
[system]
b0 = "23.392944 mT"

[[system.nuclei]]
a_x = "1.42 MHz"
a_z = "4.12 MHz"
"""


def run(tmp_path, body, command, *extra, name="cfg.toml"):
    cfg = tmp_path / name
    cfg.write_text(body)
    out = tmp_path / f"out_{command}"
    code = cli.main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_spectroscopy_outputs(tmp_path):
    code, out = run(tmp_path, BASE + '[spectroscopy]\npoints = 61\n', "spectroscopy")
    assert code == 0
    m = manifest(out)
    assert m["status"] == "complete"
    assert m["outputs"] == ["crossings.json", "spectrum.csv"]
    assert "workers" not in json.loads((out / "config.json").read_text())["run"]
    rep = json.loads((out / "crossings.json").read_text())
    assert abs(rep["crossings"][0]["relative_offset"]) < 0.01
    assert (out / "run.log").read_text().endswith("done\n")


def test_spectroscopy_uncoupled_reports_none(tmp_path):
    body = '[system]\nb0 = "0.1 T"\n[[system.nuclei]]\na_x = "0 Hz"\na_z = "100 kHz"\n[spectroscopy]\npoints = 21\n'
    code, out = run(tmp_path, body, "spectroscopy")
    assert code == 0
    assert json.loads((out / "crossings.json").read_text())["crossings"] == "none"


def test_sweep_writes_trace_and_overlay(tmp_path):
    code, out = run(tmp_path, BASE + '[sweep]\nspan = "40 ns"\ndelta_tau = ["2 ns", "1 ns"]\n', "sweep", "--trace-granularity", "step")
    assert code == 0
    assert {"trace_0.csv", "trace_1.csv", "lz_0.csv", "lz_1.csv", "summary.json"} <= set(manifest(out)["outputs"])
    with open(out / "trace_1.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["time_s", "tau_s", "P0", "pol_nucleus_1"]
    assert len(rows) == 1 + 41
    assert (out / "lz_0.csv").read_text().startswith("tau_s,P0_lz\n")


def test_zero_coupling_sweep_overlay_is_flat(tmp_path):
    body = '[system]\nb0 = "0.6 T"\n[[system.nuclei]]\na_x = "0 Hz"\na_z = "500 kHz"\n[sweep]\nspan = "10 ns"\ndelta_tau = ["1 ns"]\n'
    code, out = run(tmp_path, body, "sweep")
    assert code == 0
    with open(out / "lz_0.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(float(r["P0_lz"]) == 1.0 for r in rows)


def test_pulsepol_and_hyperpol(tmp_path):
    body = BASE + '[pulsepol]\nn_cycles = 20\n[hyperpol]\nprotocol = "pulsepol"\nreinit = 3\nn_p = 6\n'
    code, out = run(tmp_path, body, "pulsepol")
    assert code == 0
    assert json.loads((out / "summary.json").read_text())["max_abs_polarization"] > 0.95
    code, out = run(tmp_path, body, "hyperpol")
    assert code == 0
    assert json.loads((out / "summary.json").read_text())["operating_time_s"] > 0


def test_fid_command(tmp_path):
    body = '[system]\nb0 = "23.392944 mT"\n[[system.nuclei]]\na_x = "137 kHz"\na_z = "607 kHz"\n[fid]\npolarization = [0.4]\npoints = 2000\n'
    code, out = run(tmp_path, body, "fid")
    assert code == 0
    doc = json.loads((out / "peaks.json").read_text())
    assert doc["extracted_polarization"][0] == pytest.approx(0.4, abs=0.02)


def test_config_error_exit_code(tmp_path):
    code, out = run(tmp_path, '[system]\nb0 = 0.02\n', "pulsepol")
    assert code == cli.EXIT_CONFIG
    assert not out.exists()


def test_missing_section_is_config_error(tmp_path):
    code, out = run(tmp_path, BASE, "sweep")
    assert code == cli.EXIT_CONFIG
    assert manifest(out)["status"] == "failed"


def test_physics_error_exit_code(tmp_path):
    body = '[system]\nb0 = "0.1 mT"\n[[system.nuclei]]\na_x = "1 MHz"\na_z = "4 MHz"\n'
    code, out = run(tmp_path, body, "pulsepol")
    assert code == cli.EXIT_PHYSICS
    m = manifest(out)
    assert m["status"] == "failed" and m["exit_code"] == 3 and m["partial"]


def test_resolution_error_exit_code(tmp_path):
    body = '[system]\nb0 = "23.392944 mT"\n[[system.nuclei]]\na_x = "137 kHz"\na_z = "607 kHz"\n[fid]\npoints = 100\n'
    code, _ = run(tmp_path, body, "fid")
    assert code == cli.EXIT_PHYSICS


def test_runtime_error_exit_code(tmp_path, monkeypatch):
    def boom(*args):
        raise RuntimeError("disk full")

    monkeypatch.setitem(cli.COMMANDS, "pulsepol", boom)
    code, out = run(tmp_path, BASE, "pulsepol")
    assert code == cli.EXIT_RUNTIME
    assert "disk full" in manifest(out)["error"]


def test_env_override_reaches_command(tmp_path, monkeypatch):
    monkeypatch.setenv("ADPULSE_PULSEPOL__N_CYCLES", "3")
    code, out = run(tmp_path, BASE, "pulsepol")
    assert code == 0
    assert json.loads((out / "summary.json").read_text())["n_cycles"] == 3
    assert json.loads((out / "config.json").read_text())["pulsepol"]["n_cycles"] == 3


def test_seed_flag_changes_noise_only(tmp_path):
    body = '[system]\nb0 = "23.392944 mT"\n[[system.nuclei]]\na_x = "137 kHz"\na_z = "607 kHz"\n[fid]\npoints = 2000\nnoise_std = 0.05\n'
    _, a = run(tmp_path, body, "fid", "--seed", "1")
    a_sig = (a / "fid.csv").read_text()
    _, b = run(tmp_path, body, "fid", "--seed", "2")
    assert (b / "fid.csv").read_text() != a_sig


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(BASE + "[pulsepol]\nn_cycles = 2\n")
    res = subprocess.run([sys.executable, "-m", "adpulse", "pulsepol", "--config", str(cfg), "--out", str(tmp_path / "o")], capture_output=True)
    assert res.returncode == 0
    res = subprocess.run([sys.executable, "-m", "adpulse", "nonsense"], capture_output=True)
    assert res.returncode == 2
