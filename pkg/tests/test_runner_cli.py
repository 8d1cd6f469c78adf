import json
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from radvar.cli import main
from radvar.errors import ConfigError
from radvar.experiments import CheckResult
from radvar.partitions import Partition
from radvar.runner import ExperimentConfig, RunReport, emit_report, read_csv, run

FAST = """
[run]
checks = partitions
seed = 3
"""


def test_invalid_epsilon_rejected_before_compute():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("[omega]\nepsilon = 1.5\n")


@pytest.mark.parametrize("text", [
    "[nonsense]\na = 1\n", "[omega]\nwhatever = 1\n", "[run]\nchecks = oracle, nothing\n",
    "[mesh]\nresolution = 0\n", "[variation]\ny_anchor = 1\n", "[domain]\nkind = file\ngraph_file = /no/such\n",
    "[omega]\nsegment = 1/2,1/4\n",
])
def test_config_validation(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(tmp_path / "absent.ini")


def test_config_text_round_trip():
    cfg = ExperimentConfig.from_text(FAST)
    again = ExperimentConfig.from_text(cfg.to_text())
    assert again.digest() == cfg.digest()
    assert cfg.with_overrides(**{"run.seed": 4}).digest() != cfg.digest()


def test_same_config_same_report_hash():
    cfg = ExperimentConfig.from_text(FAST)
    a, b = run(cfg), run(cfg)
    assert a.digest == b.digest
    assert a.passed and [c.name for c in a.checks] == ["partition_suite"]


def test_seed_changes_report():
    cfg = ExperimentConfig.from_text(FAST)
    assert run(cfg).digest != run(cfg.with_overrides(**{"run.seed": 5})).digest


def test_identities_smoke_run():
    cfg = ExperimentConfig.from_text("[run]\nchecks = identities\n[mesh]\nlevels = 0,1\n")
    rep = run(cfg)
    assert rep.passed
    tol = rep.checks[0].tolerances
    assert {"tol", "min_order", "rounding_floor"} <= set(tol)


def test_empty_check_set(tmp_path):
    rep = run(ExperimentConfig.from_text("[run]\nchecks =\n"))
    assert rep.checks == [] and rep.passed
    emit_report(rep, tmp_path)
    assert json.loads((tmp_path / "report.json").read_text())["checks"] == []


def fake(name, passed=True):
    return CheckResult(name, passed, {"value": 1.5, "n": 3}, {"tol": 0.1},
                       {f"{name}_series": [("a", "b"), (1, 0.1), (2, 1e-17)]})


def test_three_checks_three_rows(tmp_path):
    rep = RunReport("abc", 0, [fake("one"), fake("two"), fake("three", False)])
    emit_report(rep, tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert len(data["checks"]) == 3 and data["passed"] is False
    table = (tmp_path / "report.txt").read_text().splitlines()
    assert sum(line.split()[0] in ("one", "two", "three") for line in table) == 3


@given(st.lists(st.tuples(st.integers(-10**6, 10**6),
                          st.floats(allow_nan=False, allow_infinity=False)), min_size=1, max_size=20))
@settings(max_examples=40, deadline=None)
def test_csv_round_trip(tmp_path_factory, rows):
    out = tmp_path_factory.mktemp("csv")
    check = CheckResult("x", True, {}, {}, {"table": [("i", "v")] + rows})
    emit_report(RunReport("h", 0, [check]), out, formats=("csv",))
    back = read_csv(out / "table.csv")
    assert back[0] == ["i", "v"]
    for (i, v), (bi, bv) in zip(rows, back[1:]):
        assert bi == i and float(bv) == v


def test_error_stops_run_and_is_recorded(monkeypatch):
    from radvar import experiments as ex
    from radvar.errors import NoConvergence

    def boom(**kw):
        raise NoConvergence("synthetic")

    monkeypatch.setitem(ex.CHECKS, "partitions", boom)
    cfg = ExperimentConfig.from_text("[run]\nchecks = partitions, oracle\n")
    rep = run(cfg)
    assert [c.name for c in rep.checks] == ["partitions", "oracle"]
    assert "NoConvergence" in rep.checks[0].error
    assert rep.checks[1].error.startswith("skipped")
    assert not rep.passed


def test_cli_run_and_report(tmp_path, capsys):
    cfg = tmp_path / "fast.ini"
    cfg.write_text(FAST)
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out", str(out), "run"]) == 0
    for name in ("report.json", "report.txt", "timings.json", "config.ini", "counterexamples.csv"):
        assert (out / name).exists()
    assert main(["report", str(out)]) == 0
    assert "partition_suite" in capsys.readouterr().out


def test_cli_partitions(tmp_path, capsys):
    out = tmp_path / "p"
    assert main(["--out", str(out), "partitions", "counterexample", "--A", "3", "--lambda", "2"]) == 0
    tau = Partition.from_json((out / "counterexample.json").read_text())
    assert len(tau) == 7
    assert main(["--out", str(out), "partitions", "certify", str(out / "counterexample.json"),
                 "--lambda", "2"]) == 0
    assert '"weakly_regular": true' in capsys.readouterr().out


def test_cli_geometry_kernels_omega(tmp_path):
    out = tmp_path / "g"
    flags = ["--out", str(out)]
    mesh_flags = ["--rtrunc", "100", "--resolution", "0.125"]
    assert main(flags + ["geometry"] + mesh_flags) == 0
    assert main(flags + ["kernels", "build", "--kind", "k", "--y", "0.5", "--mesh",
                         str(out / "mesh.json")]) == 0
    assert (out / "kernel_k.bin").exists() and (out / "kernel_k.json").exists()
    assert main(flags + ["omega", "build", "--segment", "1/4,1/2", "--tol", "1e-3",
                         "--mesh", str(out / "mesh.json")]) == 0
    rows = read_csv(out / "omega_increments.csv")
    assert len(rows) >= 4


def test_cli_measure_and_variation(tmp_path):
    out = tmp_path / "v"
    mesh_flags = ["--rtrunc", "1000", "--resolution", "0.015625"]
    assert main(["--out", str(out), "variation", "bourgain", "--center", "0", "--radius", "0.1"]
                + mesh_flags) == 0
    assert json.loads((out / "bourgain.json").read_text())["ratio"] > 0
    assert main(["--out", str(out), "measure", "exponent"] + mesh_flags) == 0
    slope = json.loads((out / "exponent.json").read_text())["slope"]
    assert slope == pytest.approx(1.0, abs=0.02)


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[omega]\nepsilon = 1.5\n")
    assert main(["--config", str(bad), "run"]) == 2


def test_threads_flag_sets_blas_variables(tmp_path):
    code = ("import os, sys; from radvar.cli import main; "
            "main(['--threads', '2', '--out', sys.argv[1], 'partitions', 'counterexample']); "
            "import numpy; print(os.environ['OPENBLAS_NUM_THREADS'])")
    res = subprocess.run([sys.executable, "-c", code, str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip().endswith("2")
