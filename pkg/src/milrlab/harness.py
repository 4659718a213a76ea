"""Experiment configuration, deterministic execution and result files.

A config is flat ``key = value`` text.  The reserved keys are ``experiment``,
``seed``, ``trials``, ``jobs`` and ``out``; every other key must be a
parameter of the chosen experiment.  Values are ints, floats, ``true`` /
``false`` or strings (optionally quoted).

Trials draw from streams derived from the master seed and the trial index,
and results are collected in trial order, so the CSV is byte-identical for
any ``jobs`` value.
"""

from __future__ import annotations

import concurrent.futures
import csv
import difflib
import io
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Iterable

from .errors import InvalidParameter, MilrLabError

RESERVED = ("experiment", "seed", "trials", "jobs", "out")


class ConfigError(InvalidParameter):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class Param:
    kind: type
    default: Any
    help: str = ""
    check: Callable[[Any], str | None] | None = None
    choices: tuple | None = None

    def coerce(self, name: str, value, line=None):
        if self.kind is bool:
            if isinstance(value, bool):
                out = value
            elif isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
                out = value.lower() in ("true", "1")
            else:
                raise ConfigError(f"{name} must be true or false, got {value!r}", line, name)
        elif self.kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ConfigError(f"{name} must be an integer, got {value!r}", line, name)
            try:
                out = int(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be an integer, got {value!r}", line, name) from None
        elif self.kind is float:
            try:
                out = float(Fraction(value)) if isinstance(value, str) and "/" in value else float(value)
            except (TypeError, ValueError, ZeroDivisionError):
                raise ConfigError(f"{name} must be a number, got {value!r}", line, name) from None
            if not math.isfinite(out):
                raise ConfigError(f"{name} must be finite", line, name)
        else:
            out = str(value)
        if self.choices is not None and out not in self.choices:
            raise ConfigError(f"{name} must be one of {', '.join(map(str, self.choices))}; got {out!r}", line, name)
        if self.check is not None:
            msg = self.check(out)
            if msg:
                raise ConfigError(f"{name} {msg}", line, name)
        return out


def positive(v):
    return None if v > 0 else "must be positive"


def nonnegative(v):
    return None if v >= 0 else "must be nonnegative"


def unit_open(v):
    return None if 0 < v < 1 else "must lie strictly between 0 and 1"


@dataclass
class Experiment:
    """A registered experiment.

    ``rows(params, seed, trials, pmap)`` yields CSV rows in a fixed order,
    using ``pmap`` (an order-preserving map) for independent work units.
    ``summarize(rows, params, trials)`` returns ``(aggregates, criteria)``.
    """

    id: str
    description: str
    params: dict
    columns: tuple
    rows: Callable
    summarize: Callable
    criterion: str = ""
    default_trials: int = 100


REGISTRY: dict[str, Experiment] = {}


def register(exp: Experiment) -> Experiment:
    if exp.id in REGISTRY:
        raise InvalidParameter(f"experiment {exp.id!r} registered twice")
    REGISTRY[exp.id] = exp
    return exp


def get_experiment(exp_id: str) -> Experiment:
    _load_registry()
    try:
        return REGISTRY[exp_id]
    except KeyError:
        hint = difflib.get_close_matches(exp_id, REGISTRY, n=1)
        extra = f"; did you mean {hint[0]!r}?" if hint else ""
        raise ConfigError(f"unknown experiment {exp_id!r}{extra}", key="experiment") from None


def _load_registry():
    from . import experiments  # noqa: F401  (registers on import)


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    trials: int
    params: dict = field(default_factory=dict)
    jobs: int = 1
    out: str | None = None


_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_\-]*)\s*=\s*(.*?)\s*$")


def _parse_value(raw: str, line: int):
    if raw == "":
        raise ConfigError("missing value", line)
    if raw[0] in "\"'":
        if len(raw) < 2 or raw[-1] != raw[0]:
            raise ConfigError("unterminated string", line)
        return raw[1:-1]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    return raw


def _strip_comment(text: str) -> str:
    out, quote = [], None
    for ch in text:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def parse_config_text(text: str) -> list[tuple[str, Any, int]]:
    entries, seen = [], {}
    for no, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw).strip()
        if not body:
            continue
        if body.startswith("[") and body.endswith("]"):
            raise ConfigError("tables are not supported; use flat key = value lines", no)
        m = _LINE.match(body)
        if not m:
            raise ConfigError(f"expected 'key = value', got {body!r}", no)
        key = m.group(1).replace("-", "_")
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", no, key)
        seen[key] = no
        entries.append((key, _parse_value(m.group(2), no), no))
    return entries


def build_config(exp_id: str, values: dict, lines: dict | None = None) -> ExperimentConfig:
    """Validate reserved and experiment parameters; ``lines`` maps keys to source lines."""
    lines = lines or {}
    exp = get_experiment(exp_id)
    for key in ("seed", "trials"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}", key=key)
    seed = Param(int, 0, check=nonnegative).coerce("seed", values["seed"], lines.get("seed"))
    trials = Param(int, 0, check=nonnegative).coerce("trials", values["trials"], lines.get("trials"))
    jobs = Param(int, 1, check=positive).coerce("jobs", values.get("jobs", 1), lines.get("jobs"))
    out = values.get("out")
    params = {}
    for key, value in values.items():
        if key in RESERVED:
            continue
        if key not in exp.params:
            hint = difflib.get_close_matches(key, list(exp.params) + list(RESERVED), n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"unknown key {key!r} for experiment {exp.id!r}{extra}", lines.get(key), key)
        params[key] = exp.params[key].coerce(key, value, lines.get(key))
    for key, spec in exp.params.items():
        params.setdefault(key, spec.default)
    return ExperimentConfig(exp.id, seed, trials, params, jobs, None if out is None else str(out))


def validate_config(text: str) -> ExperimentConfig:
    entries = parse_config_text(text)
    values = {k: v for k, v, _ in entries}
    lines = {k: no for k, _, no in entries}
    if "experiment" not in values:
        raise ConfigError("missing required key 'experiment'", key="experiment")
    return build_config(str(values["experiment"]), values, lines)


def load_config(path) -> ExperimentConfig:
    return validate_config(Path(path).read_text())


# --- execution -------------------------------------------------------------

def ordered_map(jobs: int):
    """An order-preserving map over ``jobs`` worker processes (plain ``map`` for 1)."""
    if jobs <= 1:
        return map, None
    pool = concurrent.futures.ProcessPoolExecutor(max_workers=jobs)

    def pmap(fn, items):
        return pool.map(fn, list(items))
    return pmap, pool


def format_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (list, tuple, frozenset, set)):
        return " ".join(map(str, sorted(v) if isinstance(v, (set, frozenset)) else v))
    return str(v)


@dataclass
class RunResult:
    experiment: str
    csv_text: str
    summary: dict
    csv_path: Path | None = None
    summary_path: Path | None = None

    @property
    def rows(self) -> list[dict]:
        return list(csv.DictReader(io.StringIO(self.csv_text)))


def summary_path_for(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json") if csv_path.suffix == ".csv" else Path(str(csv_path) + ".json")


def run_experiment(cfg: ExperimentConfig, out=None) -> RunResult:
    """Run every trial, stream CSV rows, then write the JSON summary.

    ``out`` overrides ``cfg.out``; with neither, results stay in memory.
    """
    exp = get_experiment(cfg.experiment)
    target = out if out is not None else cfg.out
    csv_path = Path(target) if target else None
    if csv_path is not None:
        try:
            csv_path.parent.mkdir(parents=True, exist_ok=True)
            fh = open(csv_path, "w", newline="")
        except OSError as exc:
            raise MilrLabError(f"cannot write {csv_path}: {exc}") from exc
    else:
        fh = None
    buf = io.StringIO()
    sinks = [buf] + ([fh] if fh else [])
    writers = [csv.writer(s, lineterminator="\n") for s in sinks]
    for w in writers:
        w.writerow(exp.columns)
    collected = []
    pmap, pool = ordered_map(cfg.jobs)
    try:
        if cfg.trials > 0:
            for row in exp.rows(cfg.params, cfg.seed, cfg.trials, pmap):
                cells = [format_cell(row[c]) for c in exp.columns]
                for w in writers:
                    w.writerow(cells)
                if fh:
                    fh.flush()
                collected.append(row)
    finally:
        if pool is not None:
            pool.shutdown()
        if fh:
            fh.close()
    if collected:
        aggregates, criteria = exp.summarize(collected, cfg.params, cfg.trials)
        status = "ok"
    else:
        aggregates, criteria, status = {}, {}, "no-data"
    summary = {
        "id": exp.id,
        "params": cfg.params,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "status": status,
        "rows": len(collected),
        "aggregates": aggregates,
        "criteria": criteria,
    }
    result = RunResult(exp.id, buf.getvalue(), summary)
    if csv_path is not None:
        sp = summary_path_for(csv_path)
        sp.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
        result.csv_path, result.summary_path = csv_path, sp
    return result


def _json_default(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if hasattr(v, "item"):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def list_experiments() -> list[Experiment]:
    _load_registry()
    return [REGISTRY[k] for k in sorted(REGISTRY)]


def int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def int_list_check(v):
    try:
        int_list(v)
    except ConfigError as exc:
        return str(exc)
    return None


def chunked(items: Iterable, size: int):
    batch = []
    for x in items:
        batch.append(x)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch
