from __future__ import annotations

import csv
import io
import json

import pytest

from conftest import field_paths
from mdiqcc.cli import build_parser, main
from mdiqcc.model import load_counts


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_field_fixture(capsys, example_config):
    counts, errors = field_paths("14p1")
    code, out, err = _run(capsys, "analyze", "--config", str(example_config),
                          "--counts", str(counts), "--errors", str(errors))
    assert code == 0
    report = json.loads(out)
    assert report["rate_per_pulse"] == pytest.approx(2.99e-8, rel=0.01)
    assert report["rate_per_second"] == pytest.approx(report["rate_per_pulse"] * 2.5e8)
    assert err == ""


def test_analyze_writes_to_out(tmp_path, capsys, example_config):
    counts, errors = field_paths("21p5")
    out_file = tmp_path / "r.json"
    code, out, _ = _run(capsys, "analyze", "--config", str(example_config), "--counts",
                        str(counts), "--errors", str(errors), "--out", str(out_file),
                        "--rep-rate", "1e9", "--grid", "8")
    assert code == 0 and out == ""
    data = json.loads(out_file.read_text())
    assert data["rate_per_second"] == pytest.approx(data["rate_per_pulse"] * 1e9)


def test_analyze_infeasible_exit_code(tmp_path, capsys, example_config):
    counts, errors = field_paths("21p5")
    code, out, err = _run(capsys, "analyze", "--config", str(example_config), "--counts",
                          str(counts), "--errors", str(errors), "--epsilon", "1e-300")
    assert code == 3
    assert "no secure key" in err


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text('{"source": {"mu_z": 0.1}}')
    counts, errors = field_paths("14p1")
    code, out, err = _run(capsys, "analyze", "--config", str(bad), "--counts", str(counts))
    assert code == 2
    assert err.startswith("error:") and out == ""


def test_missing_counts_is_usage_error(capsys, example_config):
    code, _, err = _run(capsys, "analyze", "--config", str(example_config))
    assert code == 2 and "--counts" in err


def test_forward_gains_csv(capsys):
    code, out, _ = _run(capsys, "forward-gains", "--loss-db", "10")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["combo", "gain", "error_gain"]
    assert {r[0] for r in rows[1:]} >= {"zzz", "xxx", "ooo", "oxx_sym"}


def test_simulate_writes_ledger(tmp_path, capsys, example_config):
    out = tmp_path / "counts.csv"
    code, _, _ = _run(capsys, "simulate", "--config", str(example_config), "--pulses", "1e6",
                      "--seed", "4", "--out", str(out))
    assert code == 0
    ledger = load_counts(out, tmp_path / "counts_errors.csv")
    assert ledger.n("zzz") > 0


def test_simulate_budget_file(tmp_path, capsys, example_config):
    budgets = tmp_path / "b.json"
    budgets.write_text(json.dumps({"yyy": 5000, "zzz": 7000}))
    code, out, _ = _run(capsys, "simulate", "--config", str(example_config),
                        "--budget-file", str(budgets))
    assert code == 0
    assert "yyy,5000.0" in out or "yyy,5000," in out


def test_simulate_rejects_fractional_budget(tmp_path, capsys, example_config):
    budgets = tmp_path / "b.json"
    budgets.write_text(json.dumps({"yyy": 1.5}))
    code, _, err = _run(capsys, "simulate", "--config", str(example_config),
                        "--budget-file", str(budgets))
    assert code == 2 and "integer" in err


def test_simulate_is_deterministic(capsys, example_config):
    args = ("simulate", "--config", str(example_config), "--pulses", "200000", "--seed", "8")
    _, a, _ = _run(capsys, *args)
    _, b, _ = _run(capsys, *args)
    assert a == b


def test_hom_scan_origin(capsys):
    code, out, _ = _run(capsys, "hom-scan", "--pulses", "2e8", "--delays", "0")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1
    assert float(rows[0]["qber_x"]) == pytest.approx(0.375, abs=0.03)


def test_hom_scan_grid_shape(capsys):
    code, out, _ = _run(capsys, "hom-scan", "--pulses", "1e5", "--delays", "0:2:1")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 9


def test_non_numeric_loss_is_usage_error(capsys):
    code, _, err = _run(capsys, "forward-gains", "--loss-db", "6:9:3")
    assert code == 2 and "--loss-db" in err


def test_bad_range_is_usage_error(capsys):
    code, _, err = _run(capsys, "hom-scan", "--delays", "0:2:0")
    assert code == 2 and "step" in err


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["analyze", "--help"])
    out = capsys.readouterr().out
    for flag in ("--config", "--counts", "--errors", "--seed", "--pulses", "--loss-db",
                 "--epsilon", "--rep-rate", "--out", "--grid", "--budget-file"):
        assert flag in out


def test_optimize_json(capsys):
    code, out, _ = _run(capsys, "optimize", "--loss-db", "6", "--pulses", "1e13",
                        "--budget", "40")
    assert code == 0
    data = json.loads(out)
    assert data["rate"] > 0 and data["seed"] == 0


def test_keyrate_curve_columns(capsys):
    code, out, _ = _run(capsys, "keyrate-curve", "--loss-db", "6:9:3", "--budget", "24")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["loss_db", "rate_4int", "rate_3int", "rate_infinite"]
    assert [float(r["loss_db"]) for r in rows] == [6.0, 9.0]


def test_compare_json_keys(capsys):
    code, out, _ = _run(capsys, "compare", "--loss-db", "6", "--pulses", "1e13", "--budget", "30")
    assert code == 0
    data = json.loads(out)
    assert set(data) == {"loss_db", "pulses", "rate_4int", "rate_3int", "ratio"}
    assert data["loss_db"] == 6.0 and data["rate_4int"] > 0
