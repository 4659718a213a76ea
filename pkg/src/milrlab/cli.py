"""Command-line entry point.

Experiment subcommands take one flag per registered parameter, plus
``--trials``; ``--config FILE`` supplies defaults that flags override.
``run`` executes a config file as is.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fingerprinting as fp
from . import milr
from .errors import MilrLabError
from .harness import (ConfigError, build_config, get_experiment, list_experiments, parse_config_text,
                      run_experiment)
from .streams import trial_rng

# subcommand -> experiment id
EXPERIMENT_COMMANDS = {
    "leak-game": "leak-game",
    "extractor-check": "extractor-check",
    "fpc-bench": "fpc-bench",
    "da-attack": "da-attack",
    "ada-game": "ada-game",
    "cc-sim": "cc-sim",
}


def _global_flags(parser, suppress: bool):
    # subcommand copies are suppressed so a flag given before the subcommand survives
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="master seed (default 0)")
    parser.add_argument("--jobs", type=int, default=default, help="worker processes (default 1)")
    parser.add_argument("--out", default=default, help="output path (CSV for experiments)")
    parser.add_argument("--config", default=default, help="flat key = value config file")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="milrlab", description="MILR encryption and lower-bound workbench")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("milr-demo", parents=[common], help="encrypt and decrypt a random vector under a few instances")
    p.add_argument("--lam", type=int, default=32)
    p.add_argument("--instances", type=int, default=4)
    p.add_argument("--d", type=int, default=16)

    p = sub.add_parser("fpc-gen", parents=[common], help="generate a fingerprinting codebook file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--length-constant", type=float, default=fp.DEFAULT_LENGTH_CONSTANT)
    p.add_argument("--threshold-constant", type=float, default=fp.DEFAULT_THRESHOLD_CONSTANT)

    p = sub.add_parser("fpc-trace", parents=[common], help="trace a pirate word against a codebook")
    p.add_argument("codebook")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--word", help="pirate word as a 0/1 string, or a file holding one ('-' for stdin)")
    src.add_argument("--coalition", help="comma-separated users whose rows feed --pirate")
    p.add_argument("--pirate", default="majority", choices=sorted(fp.PIRATES))

    for cmd, exp_id in EXPERIMENT_COMMANDS.items():
        exp = get_experiment(exp_id)
        p = sub.add_parser(cmd, parents=[common], help=exp.description)
        _experiment_flags(p, exp)

    p = sub.add_parser("run", parents=[common], help="run an experiment from a config file, or list experiments")
    p.add_argument("experiment", nargs="?", help="experiment id (overrides the config)")
    p.add_argument("--trials", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a parameter")
    p.add_argument("--list", action="store_true", help="list registered experiments")
    return parser


def _experiment_flags(p, exp):
    p.add_argument("--trials", type=int, help=f"trial count (default {exp.default_trials})")
    for key, spec in exp.params.items():
        if spec.kind is bool:
            p.add_argument(_flag(key), dest=key, choices=("true", "false"), help=spec.help or None)
        else:
            p.add_argument(_flag(key), dest=key, help=(spec.help or f"default {spec.default}"))


def _config_values(path) -> tuple[dict, dict]:
    """Values and their line numbers from a config file."""
    if not path:
        return {}, {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    entries = parse_config_text(text)
    return {k: v for k, v, _ in entries}, {k: no for k, _, no in entries}


def _experiment_config(exp_id: str, args, overrides: dict):
    values, lines = _config_values(getattr(args, "config", None))
    if values.get("experiment", exp_id) != exp_id:
        raise ConfigError(f"config names experiment {values['experiment']!r} but the command runs {exp_id!r}")
    values.pop("experiment", None)
    exp = get_experiment(exp_id)
    values.setdefault("trials", exp.default_trials)
    values.setdefault("seed", 0)
    if args.seed is not None:
        values["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        values["jobs"] = args.jobs
    if getattr(args, "out", None) is not None:
        values["out"] = args.out
    given = {k: v for k, v in overrides.items() if v is not None}
    values.update(given)
    return build_config(exp_id, values, {k: no for k, no in lines.items() if k not in given})


def _emit(result):
    print(json.dumps(result.summary, indent=2, sort_keys=True, default=str))
    if result.csv_path is not None:
        print(f"wrote {result.csv_path} and {result.summary_path}", file=sys.stderr)


def cmd_experiment(args, exp_id):
    exp = get_experiment(exp_id)
    overrides = {k: getattr(args, k) for k in exp.params if getattr(args, k, None) is not None}
    overrides["trials"] = args.trials
    _emit(run_experiment(_experiment_config(exp_id, args, overrides)))
    return 0


def cmd_run(args):
    if args.list:
        for exp in list_experiments():
            tag = f" [criterion {exp.criterion}]" if exp.criterion else ""
            print(f"{exp.id:18s} {exp.description}{tag}")
        return 0
    cfg_values, _ = _config_values(getattr(args, "config", None))
    exp_id = args.experiment or cfg_values.get("experiment")
    if not exp_id:
        raise ConfigError("give an experiment id or a config with an 'experiment' key")
    overrides = {"trials": args.trials}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip().replace("-", "_")] = value.strip()
    _emit(run_experiment(_experiment_config(str(exp_id), args, overrides)))
    return 0


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def cmd_milr_demo(args):
    rng = trial_rng(_seed(args))
    keys = [milr.gen(args.lam, rng) for _ in range(args.instances)]
    params = [milr.param(args.lam, rng) for _ in range(args.instances)]
    msgs = rng.integers(0, 2, size=(args.instances, args.d), dtype=np.uint8)
    rows = []
    for x, p, m in zip(keys, params, msgs):
        c = milr.enc_vec(x, p, m, rng)
        back = milr.dec_vec(x, p, c)
        rows.append({"key": x.bitstring, "hash": p.hash.serialize(), "message": "".join(map(str, m)),
                     "decrypted": "".join(map(str, back)), "ok": bool(np.array_equal(back, m))})
    out = {"lam": args.lam, "lambda_prime": milr.lambda_prime_for(args.lam), "instances": rows}
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if all(r["ok"] for r in rows) else 1


def cmd_fpc_gen(args):
    if not args.out:
        raise ConfigError("fpc-gen needs --out for the codebook file")
    cb = fp.fpc_gen(args.n, args.k, args.gamma, trial_rng(_seed(args)), args.length_constant, args.threshold_constant)
    cb.save(args.out)
    print(json.dumps({"n": cb.n, "d": cb.d, "k": cb.k, "gamma": cb.gamma, "threshold": cb.threshold,
                      "path": args.out}))
    return 0


def _read_word(spec: str) -> np.ndarray:
    if spec == "-":
        text = sys.stdin.read()
    elif set(spec) <= {"0", "1"}:
        text = spec
    else:
        text = Path(spec).read_text()
    text = "".join(text.split())
    if not text or set(text) - {"0", "1"}:
        raise ConfigError("pirate word must be a string of 0s and 1s")
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")


def cmd_fpc_trace(args):
    cb = fp.Codebook.load(args.codebook)
    if args.word is not None:
        word = _read_word(args.word)
        coalition = None
    else:
        coalition = [int(x) for x in args.coalition.split(",") if x.strip()]
        word = fp.get_pirate(args.pirate)(cb.rows(coalition), trial_rng(_seed(args)))
    res = fp.fpc_trace(cb, word)
    out = {"accused": sorted(res.accused), "top": res.top(), "top_score": float(res.scores[res.top()]),
           "threshold": cb.threshold, "marking_ok": fp.check_marking(cb, word, coalition)}
    print(json.dumps(out))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in EXPERIMENT_COMMANDS:
            return cmd_experiment(args, EXPERIMENT_COMMANDS[args.command])
        if args.command == "run":
            return cmd_run(args)
        return {"milr-demo": cmd_milr_demo, "fpc-gen": cmd_fpc_gen, "fpc-trace": cmd_fpc_trace}[args.command](args)
    except (MilrLabError, OSError) as exc:
        print(f"milrlab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
