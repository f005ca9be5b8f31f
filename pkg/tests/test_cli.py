import csv
import io
import json
import subprocess
import sys

import pytest

from dnpr import cli


def _run(argv, capsys):
    code = cli.run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


ESTIMATE = ["estimate", "--n", "1000000", "--m", "100", "--b", "64", "--alpha", "1",
            "--c", "3.14159265", "--theta", "spike:1", "--trials", "200", "--seed", "7"]


def test_estimate_row_carries_plan(capsys):
    code, out, _ = _run(ESTIMATE, capsys)
    assert code == 0
    row = next(csv.DictReader(io.StringIO(out)))
    assert (row["b0"], row["btilde"], row["k"], row["istar"]) == ("11", "5", "22", "22")
    assert float(row["delta"]) == pytest.approx(1e-3)
    assert row["regime"] == "intermediate"
    # The solver bound is a Bayes bound for the matched prior, so a fixed spike may sit below it.
    assert float(row["mean_risk"]) > 0 and float(row["tail_bias"]) == 0.0


def test_same_argv_same_bytes(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.run(ESTIMATE + ["--out", str(a)]) == 0
    assert cli.run(ESTIMATE + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_json_mirror(capsys):
    code, out, _ = _run(ESTIMATE[:-4] + ["--trials", "10", "--seed", "1", "--format", "json"], capsys)
    assert code == 0
    rec = json.loads(out)[0]
    assert rec["k"] == 22 and rec["trials"] == 10


@pytest.mark.parametrize("theta", ["spike:3", "poly:0.5:0.5", "poly:0.5:0.5:50", "prior:insufficient:2",
                                   "prior:auto:1"])
def test_theta_grammar(theta):
    cli.parse_theta(theta)


@pytest.mark.parametrize("theta", ["spike", "spike:x", "poly:1", "prior:weird:1", "wave:1", "poly:0.5:2"])
def test_bad_theta_exits_one(theta, capsys):
    code, _, err = _run(["estimate", "--n", "100", "--m", "2", "--b", "64", "--theta", theta], capsys)
    assert code == 1
    assert "theta" in err or "rho" in err


def test_missing_flag_prints_usage(capsys):
    code, _, err = _run(["estimate", "--n", "100"], capsys)
    assert code == 1
    assert "usage:" in err


@pytest.mark.parametrize("argv", [
    ["estimate", "--n", "0", "--m", "2", "--b", "64"],
    ["estimate", "--n", "100", "--m", "2", "--b", "3"],
    ["estimate", "--n", "100", "--m", "2", "--b", "64", "--bogus", "1"],
    ["bounds", "--n", "100", "--m", "2", "--b", "64", "--gamma", "0"],
    ["sweep", "--axis", "mb", "--from", "64", "--to", "640", "--points", "3", "--n", "100", "--b", "64"],
    ["sweep", "--axis", "mb", "--from", "64", "--to", "640", "--n", "100"],
    ["quantizer-check", "--delta", "-1"],
    ["nonsense"],
])
def test_validation_errors_exit_one(argv, capsys):
    assert _run(argv, capsys)[0] == 1


def test_unwritable_output_exits_one(tmp_path, capsys):
    code, _, err = _run(["bounds", "--n", "100", "--m", "2", "--b", "64", "--out",
                         str(tmp_path / "missing" / "x.csv")], capsys)
    assert code == 1 and "cannot write" in err


def test_bounds_output(capsys):
    code, out, _ = _run(["bounds", "--n", "1000000", "--m", "100", "--b", "64"], capsys)
    row = next(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert float(row["solver_value"]) >= float(row["closed_form_value"])


def test_sweep_output(capsys):
    code, out, _ = _run(["sweep", "--axis", "b", "--from", "64", "--to", "1024", "--points", "4",
                         "--n", "1000000", "--m", "16", "--trials", "5"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 4
    assert [int(r["b"]) for r in rows] == [64, 161, 406, 1024]


def test_quantizer_check_passes(capsys):
    code, out, _ = _run(["quantizer-check", "--delta", "0.01", "--clamp", "1", "--samples", "20000",
                         "--seed", "3"], capsys)
    assert code == 0
    assert next(csv.DictReader(io.StringIO(out)))["pass"] == "True"


def test_quantizer_check_failure_exits_two(capsys, monkeypatch):
    monkeypatch.setattr(cli.quantizer, "error_law_check",
                        lambda *a, **k: {"ks_pvalue": 0.0, "corr": 0.5, "mse_ratio": 2.0,
                                         "max_index": 0, "levels": 2})
    assert _run(["quantizer-check", "--delta", "0.01"], capsys)[0] == 2


def test_regime_record(tmp_path, capsys):
    rows = tmp_path / "rows.csv"
    code, out, _ = _run(["regime", "--which", "insufficient", "--alpha", "1", "--trials", "50",
                         "--seed", "7", "--rows-out", str(rows)], capsys)
    rec = next(csv.DictReader(io.StringIO(out)))
    assert float(rec["expected_exponent"]) == -2.0
    assert code == (0 if rec["pass"] == "True" else 2)
    assert len(rows.read_text().splitlines()) == 6


def test_regime_failure_exits_two(capsys, monkeypatch):
    real = cli.harness.regime_experiment

    def fake(*args, **kwargs):
        res = real(*args, **kwargs)
        res["pass"] = False
        return res

    monkeypatch.setattr(cli.harness, "regime_experiment", fake)
    assert _run(["regime", "--which", "sufficient", "--trials", "5"], capsys)[0] == 2


def test_experiment_file(tmp_path, capsys):
    out = tmp_path / "b.json"
    spec = {"format_version": 1, "command": "bounds",
            "parameters": {"n": 1000000, "m": 100, "b": 64, "alpha": 1},
            "output": {"path": str(out), "format": "json"}}
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(spec))
    assert cli.run(["experiment", str(path)]) == 0
    assert json.loads(out.read_text())[0]["regime"] == "intermediate"


@pytest.mark.parametrize("patch", [{"format_version": 2}, {"extra": 1}, {"command": "plot"},
                                   {"output": {"path": "x", "colour": "red"}},
                                   {"parameters": {"n": 100, "m": 2, "b": 64, "nope": 3}}])
def test_experiment_file_rejections(tmp_path, capsys, patch):
    spec = {"format_version": 1, "command": "bounds", "parameters": {"n": 100, "m": 2, "b": 64}}
    spec.update(patch)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(spec))
    assert _run(["experiment", str(path)], capsys)[0] == 1


def test_experiment_file_unreadable(tmp_path, capsys):
    path = tmp_path / "exp.json"
    path.write_text("{not json")
    assert _run(["experiment", str(path)], capsys)[0] == 1
    assert _run(["experiment", str(tmp_path / "none.json")], capsys)[0] == 1


@pytest.mark.parametrize("sub", ["estimate", "sweep", "regime", "bounds", "quantizer-check", "experiment"])
def test_help_states_bit_units(sub, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run([sub, "--help"])
    assert exc.value.code == 0
    assert "bits" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dnpr", "bounds", "--n", "1000", "--m", "2", "--b", "64"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.startswith("n,m,b,alpha,regime")
