import csv
import json
import subprocess
import sys

from nlh import cli
from nlh.solver import LinearSolveError


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def data_rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_verify_passes_and_is_byte_identical(capsys):
    code1, out1, _ = run(["verify"], capsys)
    code2, out2, _ = run(["verify"], capsys)
    assert code1 == code2 == 0
    assert out1 == out2 and out1.endswith("checks passed\n")
    assert "FAIL" not in out1


def test_missing_config_is_a_usage_error(tmp_path, capsys):
    code, _, err = run(["accuracy", "--config", str(tmp_path / "nope.ini"),
                        "--out", str(tmp_path / "runs")], capsys)
    assert code == 2 and "does not exist" in err
    assert not (tmp_path / "runs").exists()


def test_bad_key_is_a_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[bistability]\nm = 8\nwavenumber = 3\n")
    code, _, err = run(["bistability", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 2 and "wavenumber" in err
    assert list(tmp_path.iterdir()) == [cfg]


def test_infeasible_run_is_refused_before_writing(tmp_path, capsys):
    cfg = tmp_path / "big.ini"
    cfg.write_text("[accuracy]\nmethods = fem-uniform\nstop = iterations:15\n")
    code, _, err = run(["accuracy", "--config", str(cfg), "--out", str(tmp_path / "runs")], capsys)
    assert code == 2 and "projected" in err and not (tmp_path / "runs").exists()


def test_argparse_errors_map_to_usage(capsys):
    assert cli.main(["accuracy"]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["--help"]) == 0


def test_accuracy_run_writes_manifest_and_tables(tmp_path, capsys):
    cfg = tmp_path / "acc.ini"
    cfg.write_text("[accuracy]\nh0 = 0.2\nmethods = fem-adaptive, fem-uniform\n"
                   "stop = iterations:2\nrate_window = 3\n")
    code, out, _ = run(["accuracy", "--config", str(cfg), "--out", str(tmp_path / "runs")], capsys)
    assert code == 0 and "fem-adaptive" in out
    (run_dir,) = (tmp_path / "runs").iterdir()
    assert run_dir.name.startswith("accuracy-")
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["config"]["h0"] == 0.2
    for name in manifest["outputs"]:
        assert (run_dir / name).exists()
    rates = data_rows(run_dir / "rates.csv")
    assert [r["method"] for r in rates] == ["fem-adaptive", "fem-uniform"]
    trace = data_rows(run_dir / "trace_fem-uniform.csv")
    assert len(trace) == 3 and float(trace[0]["h1_rel"]) > float(trace[2]["h1_rel"])


def test_bistability_run_writes_branches_and_markers(tmp_path, capsys):
    cfg = tmp_path / "bi.ini"
    cfg.write_text("[bistability]\nm = 6\nI_up = 0:400000:3\n"
                   "markers = A:200000:up, B:200000:down, C:300000:up\n")
    code, out, _ = run(["bistability", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 0
    (run_dir,) = [p for p in tmp_path.iterdir() if p.is_dir()]
    rows = data_rows(run_dir / "branches.csv")
    assert [r["branch"] for r in rows] == ["up"] * 3 + ["down"] * 3
    assert all(r["converged"] == "1" for r in rows)
    assert (run_dir / "marker_A.vtk").exists() and (run_dir / "marker_B.vtk").exists()
    # C is continued from the nearest stored up-branch point
    assert (run_dir / "marker_C.vtk").exists()


def test_numerical_failure_exit_code(tmp_path, capsys, monkeypatch):

    def broken(cfg):
        raise LinearSolveError("injected")

    monkeypatch.setattr(cli, "run_accuracy", broken)
    cfg = tmp_path / "acc.ini"
    cfg.write_text("[accuracy]\nh0 = 0.2\n")
    code, _, err = run(["accuracy", "--config", str(cfg), "--out", str(tmp_path / "r")], capsys)
    assert code == 1 and "injected" in err
    (run_dir,) = (tmp_path / "r").iterdir()
    assert json.loads((run_dir / "manifest.json").read_text())["status"] == "failed"


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "nlh.cli", "--help"], capture_output=True,
                         text=True, check=True)
    for cmd in ("accuracy", "bistability", "verify"):
        assert cmd in out.stdout
