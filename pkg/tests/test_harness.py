import json
from fractions import Fraction

import pytest

from milrlab import harness as h
from milrlab.harness import ConfigError

FAST = {
    "milr-roundtrip": {"lambdas": "16", "exhaustive_max": 4},
    "universality": {"lambdas": "4"},
    "extractor-check": {},
    "deficiency": {"shapes": "2x4", "s_max": 2},
    "fpc-bench": {"n": 12, "k": 2, "length_constant": 5},
    "da-attack": {"arm": "subsample", "n": 12, "c": 3, "collusion": 2, "length_constant": 3},
    "ada-game": {"t": 3, "domain_factor": 10, "length_constant": 2, "games": "one,space", "space_points": 2},
    "wrapper-identity": {"t": 3, "domain_factor": 4, "collusion": 2, "lam": 8},
    "cc-sim": {"n": 65, "k_grid": "0,8,65"},
    "leak-game": {"n": 4, "s": 16},
}


def _cfg(exp_id, trials=3, seed=5, jobs=1, **extra):
    return h.build_config(exp_id, {"seed": seed, "trials": trials, "jobs": jobs, **FAST[exp_id], **extra})


def test_registry_covers_criteria():
    ids = {e.id for e in h.list_experiments()}
    assert len(ids) >= 8 and ids == set(FAST)
    assert set().union(*(set(e.criterion.split(",")) for e in h.list_experiments())) >= {str(i) for i in range(1, 10)}


def test_unknown_experiment_suggests():
    with pytest.raises(ConfigError, match="did you mean 'cc-sim'"):
        h.get_experiment("cc-sin")


@pytest.mark.parametrize("exp_id", sorted(FAST))
def test_runs_are_byte_identical(exp_id):
    a = h.run_experiment(_cfg(exp_id))
    b = h.run_experiment(_cfg(exp_id))
    assert a.csv_text == b.csv_text and a.csv_text.count("\n") > 1
    assert a.summary == b.summary and a.summary["status"] == "ok"
    assert "\r" not in a.csv_text


@pytest.mark.parametrize("exp_id", ["fpc-bench", "cc-sim", "leak-game", "deficiency"])
def test_parallel_matches_serial(exp_id):
    assert h.run_experiment(_cfg(exp_id, jobs=1)).csv_text == h.run_experiment(_cfg(exp_id, jobs=2)).csv_text


def test_seed_changes_output():
    assert h.run_experiment(_cfg("fpc-bench", seed=1)).csv_text != h.run_experiment(_cfg("fpc-bench", seed=2)).csv_text


def test_zero_trials(tmp_path):
    out = tmp_path / "sub" / "r.csv"
    res = h.run_experiment(_cfg("fpc-bench", trials=0), out=out)
    exp = h.get_experiment("fpc-bench")
    assert out.read_bytes() == (",".join(exp.columns) + "\n").encode()
    summary = json.loads((tmp_path / "sub" / "r.json").read_text())
    assert summary["status"] == "no-data" and summary["rows"] == 0 and summary["criteria"] == {}
    assert res.rows == []


def test_files_match_memory(tmp_path):
    res = h.run_experiment(_cfg("cc-sim"), out=tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_bytes() == res.csv_text.encode()
    summary = json.loads(res.summary_path.read_text())
    assert set(summary) == {"id", "params", "seed", "trials", "status", "rows", "aggregates", "criteria"}
    assert summary["id"] == "cc-sim" and summary["seed"] == 5
    assert h.summary_path_for(tmp_path / "x.out").name == "x.out.json"


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(h.MilrLabError):
        h.run_experiment(_cfg("cc-sim"), out=blocker / "r.csv")


def test_format_cell():
    assert h.format_cell(True) == "1" and h.format_cell(False) == "0"
    assert h.format_cell(0.1) == "0.1"
    assert h.format_cell(Fraction(1, 32)) == "1/32"
    assert h.format_cell((3, 1)) == "3 1" and h.format_cell(frozenset({3, 1})) == "1 3"


def test_validate_minimal():
    cfg = h.validate_config("experiment = cc-sim\nseed = 3\ntrials = 10\n")
    assert (cfg.experiment, cfg.seed, cfg.trials, cfg.jobs, cfg.out) == ("cc-sim", 3, 10, 1, None)
    assert cfg.params["n"] == 1025 and cfg.params["target"] == "majority"


def test_validate_full(tmp_path):
    text = """
# comment
experiment = "fpc-bench"
seed = 7   # trailing comment
trials = 4
jobs = 2
out = 'res/x.csv'
gamma = 1/20
pirate = "minority"
length-constant = 5
"""
    p = tmp_path / "c.conf"
    p.write_text(text)
    cfg = h.load_config(p)
    assert cfg.jobs == 2 and cfg.out == "res/x.csv"
    assert cfg.params["gamma"] == 0.05 and cfg.params["pirate"] == "minority"
    assert cfg.params["length_constant"] == 5.0


@pytest.mark.parametrize("text, line, pattern", [
    ("experiment = cc-sim\nseed = 1\ntrials = -5\n", 3, "trials must be nonnegative"),
    ("experiment = fpc-bench\nseed = 1\ntrials = 5\npirat = majority\n", 4, "did you mean 'pirate'"),
    ("experiment = cc-sim\nseed = 1\ntrials = 5\nn = 1.5\n", 4, "must be an integer"),
    ("experiment = cc-sim\nseed = 1\ntrials = 5\ntarget = xor\n", 4, "must be one of"),
    ("experiment = cc-sim\nseed = 1\ntrials = 5\nseed = 2\n", 4, "duplicate key"),
    ("experiment = cc-sim\n[table]\n", 2, "tables are not supported"),
    ("experiment = cc-sim\nseed 1\n", 2, "expected 'key = value'"),
    ("experiment = cc-sim\nseed = 'x\n", 2, "unterminated"),
    ("experiment = cc-sim\nseed = 1\ntrials = 5\njobs = 0\n", 4, "jobs must be positive"),
    ("experiment = fpc-bench\nseed = 1\ntrials = 5\ngamma = 2\n", 4, "strictly between"),
])
def test_config_errors_carry_lines(text, line, pattern):
    with pytest.raises(ConfigError, match=pattern) as info:
        h.validate_config(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}: ")


def test_missing_keys():
    with pytest.raises(ConfigError, match="missing required key 'experiment'"):
        h.validate_config("seed = 1\ntrials = 2\n")
    with pytest.raises(ConfigError, match="missing required key 'seed'"):
        h.validate_config("experiment = cc-sim\ntrials = 2\n")
    with pytest.raises(ConfigError, match="missing required key 'trials'"):
        h.validate_config("experiment = cc-sim\nseed = 2\n")


def test_validation_precedes_trials(tmp_path):
    out = tmp_path / "never.csv"
    with pytest.raises(ConfigError):
        h.validate_config(f"experiment = cc-sim\nseed = 1\ntrials = 5\nout = {out}\nk_grid = 0,x\n")
    assert not out.exists()


def test_helpers():
    assert h.int_list("1, 2;3") == [1, 2, 3]
    with pytest.raises(ConfigError):
        h.int_list("1,a")
    assert list(h.chunked(range(5), 2)) == [[0, 1], [2, 3], [4]]
    pmap, pool = h.ordered_map(1)
    assert pool is None and list(pmap(abs, [-1, 2])) == [1, 2]
