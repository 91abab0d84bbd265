import json
import subprocess
import sys

import pytest

from pxpclassical import cli


def _run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text()) if (out / "manifest.json").exists() else None
    return code, out, manifest


def _manifest_complete(out, manifest):
    assert sorted(p.name for p in out.iterdir()) == manifest["outputs"]


def test_orbit_command(tmp_path):
    code, out, m = _run(tmp_path, "orbit", "--orbit", "z2", "--n-samples", "11")
    assert code == 0 and m["status"] == "ok"
    assert m["summary"]["omega"] == pytest.approx(2.4434, rel=1e-4)
    assert (out / "orbit_trajectory.csv").read_text().splitlines()[0] == "t,site,sx,sy,sz"
    for key in ("config", "tool_version", "wall_time_s", "task_status_counts", "units"):
        assert key in m
    _manifest_complete(out, m)


def test_trace_mk_z2_is_flat(tmp_path):
    code, out, m = _run(tmp_path, "trace-mk", "--orbit", "sigma:2.5131573711557316,1.5707963267948966",
                        "--n-k", "16")
    assert code == 0 and m["summary"]["marginal"]
    rows = (out / "trace_mk.csv").read_text().splitlines()
    assert rows[0] == "k,quarter_trace,max_abs_eig" and len(rows) == 17
    assert all(abs(float(r.split(",")[1]) - 1) < 1e-6 for r in rows[1:])


def test_scan_is_deterministic(tmp_path):
    args = ("scan-stability", "--n-theta", "3", "--n-phi", "4", "--n-k", "8")
    c1, o1, m1 = _run(tmp_path, *args, name="a")
    c2, o2, _ = _run(tmp_path, *args, "--workers", "2", name="b")
    assert c1 == c2 == 0
    assert (o1 / "orbit_table.csv").read_bytes() == (o2 / "orbit_table.csv").read_bytes()
    assert "no-return" in m1["summary"]["status_counts"]
    _manifest_complete(o1, m1)


def test_growth_and_collapse(tmp_path):
    code, out, m = _run(tmp_path, "growth", "--init", "z2", "--N", "8", "--eps", "0.01,0.005",
                        "--n-real", "3", "--periods", "2", "--seed", "5")
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["growth_eps0.005.csv", "growth_eps0.01.csv", "manifest.json"]
    head = (out / "growth_eps0.01.csv").read_text().splitlines()[0]
    assert head == "t,t_over_T,mean_ratio,stderr,n_real,epsilon"
    code, out, m = _run(tmp_path, "collapse", "--N", "8", "--eps", "0.2,0.15,0.1", "--n-real", "3",
                        "--x-end", "0.6", name="col")
    assert code == 0
    assert m["summary"]["fit_convention"] == "squared-norm ratio"
    assert (out / "collapse.csv").read_text().startswith("x,phi,epsilon\n")


def test_collapse_needs_three_eps(tmp_path):
    code, _, m = _run(tmp_path, "collapse", "--N", "8", "--eps", "0.1,0.05", "--n-real", "2")
    assert code == cli.EXIT_CONFIG and m["status"] == "invalid-config"


def test_lyapunov_and_export(tmp_path):
    code, out, m = _run(tmp_path, "lyapunov", "--init", "zn:4", "--horizon", "20")
    assert code == 0 and "lambda_max" in m["summary"]
    code, out, m = _run(tmp_path, "export-trajectory", "--init", "zn:3", "--N", "6", "--t-end", "1",
                        "--n-samples", "3", name="tr")
    assert code == 0 and m["summary"]["energy_drift"] < 1e-9
    assert len((out / "trajectory.csv").read_text().splitlines()) == 1 + 3 * 6


def test_near_z2(tmp_path):
    code, out, m = _run(tmp_path, "near-z2", "--radii", "0.05", "--n-angles", "8")
    assert code == 0
    assert m["summary"]["rings"]["0.05"]["signature"] == [1, -1]


def test_check_exit_codes(tmp_path):
    code, out, m = _run(tmp_path, "check")
    assert code == 0 and m["summary"]["n_failed"] == 0
    code, out, m = _run(tmp_path, "check", "--rtol", "1e-4", "--atol", "1e-6", name="loose")
    assert code == cli.EXIT_CHECK
    rows = (out / "check.csv").read_text().splitlines()
    assert any(r.startswith('dynamics,"energy conservation') and r.endswith("false") for r in rows)


def test_orbit_not_found_is_total_failure(tmp_path):
    code, _, m = _run(tmp_path, "orbit", "--orbit", "sigma:0.3,1.0")
    assert code == cli.EXIT_FAILED and m["status"] == "failed" and m["error"]


def test_partial_failure(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.HANDLERS, "orbit", lambda cfg, out: ({}, ["ok", "failed"]))
    code, _, m = _run(tmp_path, "orbit")
    assert code == cli.EXIT_PARTIAL and m["task_status_counts"] == {"failed": 1, "ok": 1}


def test_config_file_and_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.toml"
    cfg.write_text('n_samples = 7\n[orbit]\norbit = "sigma:2.2,1.57"\nn_samples = 9\n')
    code, out, m = _run(tmp_path, "orbit", "--config", str(cfg))
    assert code == 0 and m["config"]["n_samples"] == 9 and m["config"]["orbit"] == "sigma:2.2,1.57"
    code, out, m = _run(tmp_path, "orbit", "--config", str(cfg), "--n-samples", "5", name="o2")
    assert m["config"]["n_samples"] == 5
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["orbit", "--n-samples", "3"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_invalid_config_diagnostics(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("n_k = 'many'\n")
    code, _, m = _run(tmp_path, "trace-mk", "--config", str(bad))
    assert code == cli.EXIT_CONFIG and m["status"] == "invalid-config"
    assert "n_k" in capsys.readouterr().err
    bad.write_text("bogus = 1\n")
    assert _run(tmp_path, "orbit", "--config", str(bad), name="b2")[0] == cli.EXIT_CONFIG
    bad.write_text("x = [\n")
    assert _run(tmp_path, "orbit", "--config", str(bad), name="b3")[0] == cli.EXIT_CONFIG
    assert _run(tmp_path, "orbit", "--n-samples", "1", name="b4")[0] == cli.EXIT_CONFIG
    assert _run(tmp_path, "growth", "--eps", "0.5", name="b5")[0] == cli.EXIT_CONFIG
    assert _run(tmp_path, "growth", "--init", "nonsense", "--n-real", "2", name="b6")[0] == cli.EXIT_CONFIG


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "pxpclassical.cli", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "scan-stability" in r.stdout
