import json
import subprocess
import sys

import pytest

from milrlab.cli import build_parser, main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_list(capsys):
    code, out, _ = _run(capsys, "run", "--list")
    assert code == 0 and "cc-sim" in out and "wrapper-identity" in out


def test_milr_demo(capsys, tmp_path):
    code, out, _ = _run(capsys, "--seed", "3", "milr-demo", "--lam", "16", "--instances", "2", "--d", "5",
                        "--out", str(tmp_path / "demo.json"))
    data = json.loads(out)
    assert code == 0 and data["lambda_prime"] == 1 and all(r["ok"] for r in data["instances"])
    assert json.loads((tmp_path / "demo.json").read_text()) == data


def test_fpc_gen_and_trace(capsys, tmp_path):
    cb = str(tmp_path / "cb.bin")
    code, out, _ = _run(capsys, "fpc-gen", "--n", "10", "--k", "2", "--out", cb)
    assert code == 0 and json.loads(out)["n"] == 10
    code, out, _ = _run(capsys, "fpc-trace", cb, "--coalition", "3,7", "--pirate", "majority")
    res = json.loads(out)
    assert code == 0 and res["marking_ok"] and set(res["accused"]) <= {3, 7} and res["accused"]


def test_fpc_trace_word(capsys, tmp_path):
    cb = str(tmp_path / "cb.bin")
    _, out, _ = _run(capsys, "fpc-gen", "--n", "5", "--k", "1", "--length-constant", "2", "--out", cb)
    d = json.loads(out)["d"]
    word = tmp_path / "w.txt"
    word.write_text("0" * d + "\n")
    code, out, _ = _run(capsys, "fpc-trace", cb, "--word", str(word))
    assert code == 0 and json.loads(out)["accused"] == []
    code, _, err = _run(capsys, "fpc-trace", cb, "--word", "01")
    assert code == 1 and "milrlab: error:" in err


def test_fpc_gen_needs_out(capsys):
    code, _, err = _run(capsys, "fpc-gen", "--n", "5", "--k", "1")
    assert code == 1 and "--out" in err


def test_experiment_command_writes_files(capsys, tmp_path):
    out = tmp_path / "cc.csv"
    code, stdout, _ = _run(capsys, "cc-sim", "--n", "65", "--k-grid", "0,65", "--trials", "50", "--seed", "4",
                           "--out", str(out))
    summary = json.loads(stdout)
    assert code == 0 and summary["params"]["n"] == 65 and summary["seed"] == 4
    assert out.exists() and json.loads(out.with_suffix(".json").read_text()) == summary


def test_global_flags_either_side(capsys):
    a = _run(capsys, "--seed", "9", "fpc-bench", "--n", "8", "--k", "2", "--length-constant", "2", "--trials", "2")
    b = _run(capsys, "fpc-bench", "--n", "8", "--k", "2", "--length-constant", "2", "--trials", "2", "--seed", "9")
    assert a == b and json.loads(a[1])["seed"] == 9


def test_run_with_config(capsys, tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("experiment = fpc-bench\nseed = 11\ntrials = 2\nn = 8\nk = 2\nlength_constant = 2\n")
    code, out, _ = _run(capsys, "--config", str(conf), "run")
    assert code == 0 and json.loads(out)["seed"] == 11
    code, out, _ = _run(capsys, "--config", str(conf), "run", "--set", "n=9", "--trials", "1")
    data = json.loads(out)
    assert data["params"]["n"] == 9 and data["trials"] == 1
    code, out, _ = _run(capsys, "--config", str(conf), "fpc-bench", "--seed", "12")
    assert json.loads(out)["seed"] == 12


def test_config_errors_report_line(capsys, tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("experiment = fpc-bench\nseed = 1\ntrials = 2\npirat = majority\n")
    code, _, err = _run(capsys, "--config", str(conf), "run")
    assert code == 1 and "line 4: unknown key 'pirat'" in err and "did you mean 'pirate'?" in err
    code, _, err = _run(capsys, "run", "fpc-bench", "--trials", "-3")
    assert code == 1 and "trials must be nonnegative" in err
    code, _, err = _run(capsys, "--config", str(conf), "cc-sim")
    assert code == 1 and "names experiment" in err
    code, _, err = _run(capsys, "run")
    assert code == 1 and "experiment id" in err
    code, _, err = _run(capsys, "--config", str(tmp_path / "missing.conf"), "run")
    assert code == 1 and "cannot read config" in err


def test_bad_set_syntax(capsys):
    code, _, err = _run(capsys, "run", "cc-sim", "--set", "n")
    assert code == 1 and "KEY=VALUE" in err


def test_every_experiment_command_has_flags():
    parser = build_parser()
    args = parser.parse_args(["ada-game", "--domain-factor", "5", "--games", "one"])
    assert args.domain_factor == "5" and args.games == "one"


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "milrlab.cli", "run", "--list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "leak-game" in proc.stdout
