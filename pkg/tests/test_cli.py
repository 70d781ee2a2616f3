import csv
import io
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from safetab.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--out", str(root / "data"), "--seed", "3", "--n-persons", "1500"]) == EXIT_OK
    assert main(["calibrate", "--mechanism", "dgauss", "--out", str(root / "plans_dg.json")]) == EXIT_OK
    assert main(["calibrate", "--out", str(root / "plans_geo.json")]) == EXIT_OK
    return root


def tabulate_args(root, plans="plans_dg.json", out="out.csv", seed="11", persons=None):
    data = root / "data"
    return [
        "tabulate",
        "--persons", str(persons or data / "persons.csv"),
        "--geo", str(data / "geo.json"),
        "--iterations", str(data / "iterations.json"),
        "--plans", str(root / plans),
        "--out", str(root / out),
        "--seed", seed,
    ]


def test_report_default(capsys):
    assert main(["report"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "(Nation, Detailed)" in out
    assert "15.3" in out and "12.8" in out and "12.2" in out
    assert "Nation/State detailed MOE sweep" in out


def test_report_nation_state_override(capsys):
    assert main(["report", "--moe-nation-state", "8", "--no-sweep"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "sweep" not in out
    pure = next(line for line in out.splitlines() if line.startswith("Pure DP"))
    assert float(pure.split()[2]) < 15.3


def test_report_csv(capsys):
    assert main(["report", "--format", "csv"]) == EXIT_OK
    out = capsys.readouterr().out
    section = out.split("# privacy_loss\n")[1].split("# moe_sweep")[0]
    rows = list(csv.DictReader(io.StringIO(section)))
    assert float(rows[0]["epsilon"]) == pytest.approx(15.31, abs=0.01)


def test_tabulate_deterministic_and_ledger(workspace):
    assert main(tabulate_args(workspace, out="a.csv")) == EXIT_OK
    assert main(tabulate_args(workspace, out="b.csv")) == EXIT_OK
    a, b = (workspace / "a.csv").read_bytes(), (workspace / "b.csv").read_bytes()
    assert a == b
    ledger = json.loads((workspace / "a.csv.ledger.json").read_text())
    assert ledger["mechanism"] == "DiscreteGaussian"
    plans = json.loads((workspace / "plans_dg.json").read_text())
    assert Fraction(ledger["total"]) == sum(Fraction(lv["rho"]) for lv in plans["levels"])
    assert ledger["total_float"] == pytest.approx(1.407062, abs=1e-6)
    assert ledger["approx_dp"]["analytic"] == pytest.approx(12.79, abs=0.01)
    assert ledger["seed"] == 11


def test_tabulate_geometric_ledger(workspace):
    assert main(tabulate_args(workspace, plans="plans_geo.json", out="g.csv")) == EXIT_OK
    ledger = json.loads((workspace / "g.csv.ledger.json").read_text())
    assert ledger["total_float"] == pytest.approx(15.31, abs=0.01)
    assert "approx_dp" not in ledger


def test_missing_persons_file_is_data_error(workspace, capsys):
    code = main(tabulate_args(workspace, out="m.csv", persons=workspace / "nope.csv"))
    assert code == EXIT_DATA
    assert "nope.csv" in capsys.readouterr().err
    assert not (workspace / "m.csv").exists()


def test_malformed_row_is_data_error_without_output(workspace, capsys):
    bad = workspace / "bad.csv"
    text = (workspace / "data" / "persons.csv").read_text().splitlines()
    text.insert(5, "S01C01B001,1000,1,M,300")
    bad.write_text("\n".join(text) + "\n")
    assert main(tabulate_args(workspace, out="x.csv", persons=bad)) == EXIT_DATA
    err = capsys.readouterr().err
    assert f"{bad}:6" in err
    assert not (workspace / "x.csv").exists()
    assert not list(workspace.glob(".x.csv.*"))


def test_inconsistent_plans_is_config_error(workspace, capsys):
    plans = json.loads((workspace / "plans_dg.json").read_text())
    plans["levels"][0]["stability"] = 2
    (workspace / "weak.json").write_text(json.dumps(plans))
    assert main(tabulate_args(workspace, plans="weak.json", out="w.csv")) == EXIT_CONFIG
    assert "stability" in capsys.readouterr().err
    assert not (workspace / "w.csv").exists()


def test_missing_config_is_config_error(workspace):
    assert main(tabulate_args(workspace, plans="absent.json", out="z.csv")) == EXIT_CONFIG


def test_mechanism_guard(workspace):
    args = tabulate_args(workspace, out="q.csv") + ["--mechanism", "geometric"]
    assert main(args) == EXIT_CONFIG


def test_account_command(workspace, capsys):
    assert main(["account", "--plans", str(workspace / "plans_dg.json")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "zCDP rho: 1.407062" in out
    assert main(["account", "--plans", str(workspace / "plans_geo.json")]) == EXIT_OK
    assert "pure DP epsilon: 15.31" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["report", "--gamma", "1.5"],
        ["report", "--moe-nation-state", "0"],
        ["calibrate", "--thresholds", "5,1,9"],
        ["tabulate", "--seed", "-1", "--persons", "a", "--geo", "b", "--iterations", "c", "--plans", "d", "--out", "e"],
        ["generate"],
    ],
)
def test_bad_flags_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "safetab.cli", "report", "--no-sweep"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "Pure DP" in proc.stdout
