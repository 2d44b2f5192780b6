import csv
import io
import json
import subprocess
import sys

import pytest

from seqsample.cli import build_parser, main, resolve


def run(*args):
    out = io.StringIO()
    code = main(list(args), out)
    return code, out.getvalue()


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_oracle_row():
    code, text = run("oracle", "--instance", "newsvendor4.inst", "--x", "1,2,3,4")
    assert code == 0
    header, row = rows(text)
    values = dict(zip(header, row))
    assert float(values["gap"]) == pytest.approx(70.3)
    assert float(values["sigma_IID"]) == pytest.approx(24.219000805152966)
    assert float(values["sigma_2I"]) == pytest.approx(24.219000805152966 / 2 ** 0.5)
    assert float(values["sigma_AV"]) == pytest.approx(9.226862955522858)


def test_oracle_anova():
    code, text = run("oracle", "--instance", "newsvendor4.inst", "--x", "1,2,3,4", "--anova")
    values = dict(zip(*rows(text)))
    assert code == 0 and values["eligible"] == "1"


def test_bad_alpha(capsys):
    code, _ = run("sequential", "--instance", "capacity4.inst", "--alpha", "1.5", "--h-prime", "0.3")
    assert code != 0
    assert "--alpha must lie in (0, 1)" in capsys.readouterr().err


def test_missing_instance(capsys):
    code, _ = run("solve")
    assert code == 2
    assert "--instance is required" in capsys.readouterr().err


def test_unknown_instance(capsys):
    code, _ = run("solve", "--instance", "nowhere.inst")
    assert code == 2
    assert "nowhere.inst" in capsys.readouterr().err


def test_wrong_x_length(capsys):
    code, _ = run("assess", "--instance", "capacity4.inst", "--x", "1,2,3")
    assert code == 2
    assert "expected 2 values" in capsys.readouterr().err


def test_argparse_errors_exit_nonzero():
    with pytest.raises(SystemExit) as err:
        build_parser().parse_args(["solve", "--method", "QMC"])
    assert err.value.code == 2


def test_solve_exact_and_exports(tmp_path):
    lp_path = tmp_path / "ef.lp"
    code, text = run("solve", "--instance", "capacity4.inst", "--exact", "--export-lp", str(lp_path))
    values = dict(zip(*rows(text)))
    assert code == 0
    assert float(values["value"]) == pytest.approx(97.12275)
    assert values["x"] == "8.75;6.75"
    assert lp_path.read_text().startswith("Minimize")


def test_solve_sample_dump(tmp_path):
    path = tmp_path / "s.csv"
    code, _ = run("solve", "--instance", "newsvendor4.inst", "--n", "10", "--method", "AV", "--dump-samples",
                  str(path))
    assert code == 0
    assert len(rows(path.read_text())) == 11


def test_assess_repeatable():
    args = ("assess", "--instance", "capacity4.inst", "--x", "7,8", "--n", "20", "--method", "LHS", "--seed", "4")
    assert run(*args) == run(*args)


def test_seed_from_environment(monkeypatch):
    args = ("assess", "--instance", "capacity4.inst", "--x", "7,8", "--n", "20")
    monkeypatch.setenv("SEQSAMPLE_SEED", "11")
    from_env = run(*args)
    assert from_env == run(*args, "--seed", "11")
    assert from_env != run(*args, "--seed", "12")


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"instance": "capacity4.inst", "x": "7,8", "n": 20, "seed": 3}))
    base = run("assess", "--config", str(cfg))
    assert base == run("assess", "--instance", "capacity4.inst", "--x", "7,8", "--n", "20", "--seed", "3")
    assert run("assess", "--config", str(cfg), "--seed", "4") != base
    args = build_parser().parse_args(["assess", "--config", str(cfg), "--n", "40"])
    assert resolve(args, "assess")["n"] == 40


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"instance": "capacity4.inst", "replications": 3}))
    code, _ = run("solve", "--config", str(cfg))
    assert code == 2
    assert "unknown option" in capsys.readouterr().err


def test_calibrate_then_sequential(tmp_path):
    code, text = run("calibrate", "--instance", "capacity4.inst", "--n1", "20", "--method", "AV",
                     "--calibration-reps", "5")
    assert code == 0
    h_prime = dict(zip(*rows(text)))["h_prime"]
    out = tmp_path / "run.csv"
    code, _ = run("sequential", "--instance", "capacity4.inst", "--n1", "20", "--method", "AV", "--h-prime",
                  h_prime, "--output", str(out))
    assert code == 0
    trace, summary = out.read_text().split("# summary\n")
    assert rows(trace)[0][:3] == ["method", "assess", "replication"]
    srow = dict(zip(*rows(summary)))
    assert srow["terminated"] == "1"
    assert float(srow["ci_upper"]) > 0


def test_sequential_calibrate_flag():
    code, text = run("sequential", "--instance", "capacity4.inst", "--n1", "20", "--calibrate",
                     "--calibration-reps", "4")
    assert code == 0 and "# summary" in text


def test_sequential_cap_out_exit_code():
    code, text = run("sequential", "--instance", "capacity4.inst", "--n1", "8", "--h-prime", "0", "--eps", "2e-12",
                     "--eps-prime", "1e-12", "--cap", "2", "--seed", "1")
    assert code == 3
    srow = dict(zip(*rows(text.split("# summary\n")[1])))
    assert srow["terminated"] == "0"


def test_experiment(tmp_path):
    code, _ = run("experiment", "--instance", "capacity4.inst", "--n1", "20", "--replications", "3",
                  "--pairs", "IID:A2RP,LHS:SRP", "--calibration-reps", "4", "--outdir", str(tmp_path),
                  "--compare-x", "7,8")
    assert code == 0
    table = rows((tmp_path / "table4.csv").read_text())
    assert [r[:2] for r in table[1:]] == [["IID", "A2RP"], ["LHS", "SRP"]]
    assert (tmp_path / "table6.csv").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "seqsample", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("solve", "assess", "oracle", "calibrate", "sequential", "experiment"):
        assert cmd in proc.stdout
