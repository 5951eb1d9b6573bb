import json
import subprocess
import sys

import pytest

from stackel_lab import __version__, cli


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_metric_certified(tmp_path, capsys):
    code, _, _ = _run(capsys, "metric", "--config", "metric_vandermonde", "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["certificate"]["certified"]
    lines = (tmp_path / "coefficients.csv").read_text().splitlines()
    assert lines[0].startswith("x,y,z,g_x") and len(lines) == 28


def test_metric_signature_violation(capsys):
    code, out, err = _run(capsys, "metric", "--config", "metric_lorentzian")
    assert code == cli.EXIT_CONFIG
    assert "certification failed" in err
    assert not json.loads(out)["certificate"]["certified"]


def test_malformed_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "rows": [1, 2,\n}')
    code, _, err = _run(capsys, "metric", "--config", str(bad))
    assert code == cli.EXIT_CONFIG
    assert "line 3, column 1" in err


def test_missing_config(capsys):
    code, _, err = _run(capsys, "metric", "--config", "no_such_file.json")
    assert code == cli.EXIT_CONFIG and "cannot read" in err


def test_geodesic_outside_start_fails(capsys):
    code, _, err = _run(capsys, "geodesic", "--config", "geodesic_outside")
    assert code == cli.EXIT_CONFIG and err


def test_geodesic_writes_files(tmp_path, capsys):
    code, _, _ = _run(capsys, "geodesic", "--config", "geodesic_vandermonde", "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    assert (tmp_path / "trajectory.csv").read_text().startswith("t,x,y,z")
    sweep = (tmp_path / "drift_sweep.csv").read_text().splitlines()
    assert len(sweep) == 4
    rep = json.loads((tmp_path / "report.json").read_text())
    drifts = [max(r["drift_H"], r["drift_I2"], r["drift_I3"]) for r in rep["tol_sweep"]]
    assert drifts[0] > drifts[-1]


def test_billiard_grazing_warns(capsys):
    code, out, err = _run(capsys, "billiard", "--config", "billiard_grazing")
    assert code == cli.EXIT_OK
    assert "warning" in err
    assert json.loads(out)["grazing"]


def test_billiard_outputs(tmp_path, capsys):
    code, _, _ = _run(capsys, "billiard", "--config", "billiard_vandermonde_a", "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    for name in ("report.json", "trajectory.csv", "bounces.csv", "turning_points.csv"):
        assert (tmp_path / name).is_file()


def test_billiard_zero_bounces(capsys):
    code, out, _ = _run(capsys, "billiard", "--config", "billiard_zero")
    assert code == cli.EXIT_OK
    assert json.loads(out)["result"]["n_bounces"] == 0


def test_web_degenerate(capsys):
    code, out, err = _run(capsys, "web", "--config", "web_degenerate")
    assert code == cli.EXIT_CONFIG
    assert json.loads(out)["error"] == "degenerate"


def test_web_vandermonde(tmp_path, capsys):
    code, _, _ = _run(capsys, "web", "--config", "web_vandermonde", "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["rank"]["rank"] == 2
    assert len((tmp_path / "directions.csv").read_text().splitlines()) == 5


def test_web_curvature_table(tmp_path, capsys):
    code, _, _ = _run(capsys, "web", "--config", "web3_rank1", "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    assert (tmp_path / "curvature.csv").read_text().startswith("h,exists,norm,order")


def test_verify_unknown_selector(capsys):
    code, _, err = _run(capsys, "verify", "bogus")
    assert code == cli.EXIT_CONFIG and "unknown selector" in err


def test_verify_subset(tmp_path, capsys):
    code, out, _ = _run(capsys, "verify", "lines", "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    assert "[PASS] 7." in out
    rep = json.loads((tmp_path / "report.json").read_text())
    assert [c["criterion"] for c in rep["criteria"]] == [7]


def test_bad_arguments(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["metric"])
    assert exc.value.code == cli.EXIT_CONFIG
    assert cli.main(["verify", "lines", "--jobs", "0"]) == cli.EXIT_CONFIG


def test_version_entry_point():
    out = subprocess.run([sys.executable, "-m", "stackel_lab.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == __version__


def test_dumps_is_canonical():
    assert cli.dumps({"b": 0.1 + 0.2, "a": float("nan")}) == '{\n "a": null,\n "b": 0.3\n}\n'
