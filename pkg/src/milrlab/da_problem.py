"""The decoded-average (DA) problem.

A dataset is ``n`` MILR keys.  A query pairs every key with a public
parameter and a bitwise encryption of a d-bit plaintext; its answer is the
coordinate-wise mean of the decrypted plaintexts (the *dav*).  Solvers first
shrink the dataset to a summary and later answer queries from the summary
alone.

The fingerprinting attack encrypts codewords as the query, rounds the
solver's answer and traces it.  Accurate answers round to a word obeying the
marking condition for the retained keys, so tracing points at them.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import milr
from .errors import (
    ContractViolation,
    InsufficientSample,
    InvalidInput,
    InvalidParameter,
    StreamProtocolError,
)
from .fingerprinting import check_marking, fpc_gen, fpc_trace
from .streams import derive_seed, trial_rng

ACCURACY = 0.1
SUBSAMPLE_CONSTANT = 48.0
DP_SAMPLE_CONSTANT = 4.0


@dataclass(frozen=True, eq=False)
class DADataset:
    keys: tuple

    def __post_init__(self):
        if not self.keys:
            raise InvalidInput("dataset needs at least one key")
        if len({k.lam for k in self.keys}) != 1:
            raise InvalidInput("all keys must share lambda")

    @property
    def n(self) -> int:
        return len(self.keys)

    @property
    def lam(self) -> int:
        return self.keys[0].lam

    @property
    def key_values(self) -> np.ndarray:
        return np.array([k.value for k in self.keys], dtype=np.uint64)


def gen_dataset(n: int, lam: int, rng) -> DADataset:
    return DADataset(tuple(milr.gen(lam, rng) for _ in range(n)))


@dataclass(frozen=True, eq=False)
class DAQuery:
    """Public parameters plus an (n, d) grid of bit ciphertexts."""

    params: tuple
    nonces: np.ndarray
    masked: np.ndarray

    def __post_init__(self):
        if self.nonces.ndim != 2 or self.nonces.shape != self.masked.shape:
            raise InvalidInput("ciphertext arrays must both have shape (n, d)")
        if self.nonces.shape[0] != len(self.params):
            raise InvalidInput("need one parameter per ciphertext row")
        if len({(p.lam, p.lambda_prime) for p in self.params}) != 1:
            raise InvalidInput("parameters must share lambda and lambda_prime")

    @property
    def n(self) -> int:
        return self.nonces.shape[0]

    @property
    def d(self) -> int:
        return self.nonces.shape[1]

    @property
    def lam(self) -> int:
        return self.params[0].lam

    @property
    def lambda_prime(self) -> int:
        return self.params[0].lambda_prime

    @property
    def multipliers(self) -> np.ndarray:
        return np.array([p.hash.multiplier for p in self.params], dtype=np.uint64)

    @property
    def pairs(self) -> list:
        return [(p, milr.VecCiphertext(self.nonces[i], self.masked[i])) for i, p in enumerate(self.params)]


def gen_params(n: int, lam: int, rng, lambda_prime=None) -> tuple:
    return tuple(milr.param(lam, rng, lambda_prime) for _ in range(n))


def make_query(keys, params, plaintext, rng) -> DAQuery:
    """Encrypt row i of the (n, d) plaintext under key i and parameter i."""
    ds = keys if isinstance(keys, DADataset) else DADataset(tuple(keys))
    plaintext = np.asarray(plaintext, dtype=np.uint8)
    if plaintext.ndim != 2 or plaintext.shape[0] != ds.n or len(params) != ds.n:
        raise InvalidInput("plaintext must be (n, d) with one row and one parameter per key")
    if plaintext.shape[1] < 1:
        raise InvalidInput("plaintext vectors must have length d >= 1")
    if np.any(plaintext > 1):
        raise InvalidInput("plaintext entries must be bits")
    if params[0].lam != ds.lam:
        raise InvalidInput("parameters do not match the key width")
    mult = np.array([p.hash.multiplier for p in params], dtype=np.uint64)
    nonces, masked = milr.enc_rows(ds.key_values, mult, ds.lam, params[0].lambda_prime, plaintext, rng)
    return DAQuery(tuple(params), nonces, masked)


def decrypt_rows(key_values, query: DAQuery, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    return milr.dec_rows(key_values, query.multipliers[rows], query.lam, query.lambda_prime,
                         query.nonces[rows], query.masked[rows])


def dav(dataset: DADataset, query: DAQuery) -> np.ndarray:
    if dataset.n != query.n:
        raise InvalidInput(f"dataset has {dataset.n} keys, query has {query.n} records")
    bits = decrypt_rows(dataset.key_values, query, np.arange(dataset.n))
    return bits.sum(axis=0, dtype=np.int64) / dataset.n


def max_error(answer, truth) -> float:
    return float(np.max(np.abs(np.asarray(answer, dtype=float) - np.asarray(truth, dtype=float))))


# --- summaries and solvers --------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    epsilon: float
    delta: float
    scale: float


@dataclass(frozen=True, eq=False)
class Summary:
    """Retained ``(index, key)`` pairs plus optional noise settings."""

    n: int
    retained: tuple
    noise: NoiseConfig | None = None

    def __post_init__(self):
        idx = [i for i, _ in self.retained]
        if len(set(idx)) != len(idx):
            raise ContractViolation("retained indices must be distinct")
        if any(not 0 <= i < self.n for i in idx):
            raise ContractViolation("retained index outside the dataset")

    @property
    def indices(self) -> np.ndarray:
        return np.array([i for i, _ in self.retained], dtype=np.int64)

    @property
    def key_values(self) -> np.ndarray:
        return np.array([k.value for _, k in self.retained], dtype=np.uint64)

    @property
    def declared_retention(self) -> frozenset:
        return frozenset(int(i) for i, _ in self.retained)

    @property
    def bit_size(self) -> int:
        index_bits = max(1, (self.n - 1).bit_length())
        lam = self.retained[0][1].lam if self.retained else 0
        noise_bits = 3 * 64 if self.noise else 0
        return len(self.retained) * (index_bits + lam) + noise_bits

    def serialize(self) -> str:
        index_bits = max(1, (self.n - 1).bit_length())
        return "".join(format(i, f"0{index_bits}b") + k.bitstring for i, k in self.retained)


def _sample_summary(dataset: DADataset, c: int, rng, noise=None) -> Summary:
    picked = np.sort(rng.choice(dataset.n, size=c, replace=False))
    return Summary(dataset.n, tuple((int(i), dataset.keys[i]) for i in picked), noise)


def subsample_count(d: int) -> int:
    return math.ceil(SUBSAMPLE_CONSTANT * math.log(20 * d))


def subsample_preprocess(dataset: DADataset, c: int, rng) -> Summary:
    if not 1 <= c <= dataset.n:
        raise InvalidParameter(f"sample count {c} outside 1..{dataset.n}")
    return _sample_summary(dataset, c, rng)


def subsample_answer(summary: Summary, query: DAQuery) -> np.ndarray:
    if not summary.retained:
        raise InvalidInput("summary holds no keys")
    if summary.n != query.n:
        raise InvalidInput("summary and query disagree on n")
    bits = decrypt_rows(summary.key_values, query, summary.indices)
    return bits.sum(axis=0, dtype=np.int64) / len(summary.retained)


def dp_sample_count(epsilon: float, delta: float, d: int, constant: float = DP_SAMPLE_CONSTANT) -> int:
    return math.ceil((constant / epsilon) * math.sqrt(2 * d * math.log(1 / delta)) * math.log(40 * d))


def dp_scale(c: int, epsilon: float, delta: float, d: int) -> float:
    """Laplace scale ``1 / (c * eps0)`` with ``eps0 = eps / (2 sqrt(2 d ln(1/delta)))``."""
    return 2 * math.sqrt(2 * d * math.log(1 / delta)) / (c * epsilon)


def dp_preprocess(dataset: DADataset, epsilon: float, delta: float, d: int, rng,
                  sample_constant: float = DP_SAMPLE_CONSTANT) -> Summary:
    if epsilon <= 0 or not 0 < delta < 1 or d < 1:
        raise InvalidParameter("need epsilon > 0, 0 < delta < 1 and d >= 1")
    c = dp_sample_count(epsilon, delta, d, sample_constant)
    if c > dataset.n:
        raise InsufficientSample(f"DP solver needs {c} keys, dataset has {dataset.n}")
    return _sample_summary(dataset, c, rng, NoiseConfig(epsilon, delta, dp_scale(c, epsilon, delta, d)))


def dp_answer(summary: Summary, query: DAQuery, rng) -> np.ndarray:
    if summary.noise is None:
        raise InvalidInput("summary carries no noise configuration")
    mean = subsample_answer(summary, query)
    noisy = mean + rng.laplace(0.0, summary.noise.scale, size=mean.shape)
    return np.clip(noisy, 0.0, 1.0)


class Solver:
    """Two-phase solver: ``preprocess`` once, then ``answer`` any number of queries."""

    name = "solver"

    def preprocess(self, dataset: DADataset, rng) -> Summary:
        raise NotImplementedError

    def answer(self, summary: Summary, query: DAQuery, rng) -> np.ndarray:
        raise NotImplementedError


class SubsampleSolver(Solver):
    name = "subsample"

    def __init__(self, c: int):
        self.c = c

    def preprocess(self, dataset, rng):
        return subsample_preprocess(dataset, self.c, rng)

    def answer(self, summary, query, rng):
        return subsample_answer(summary, query)


class DPSolver(Solver):
    name = "dp"

    def __init__(self, epsilon: float, delta: float, d: int, sample_constant: float = DP_SAMPLE_CONSTANT):
        self.epsilon, self.delta, self.d = epsilon, delta, d
        self.sample_constant = sample_constant

    @property
    def c(self) -> int:
        return dp_sample_count(self.epsilon, self.delta, self.d, self.sample_constant)

    def preprocess(self, dataset, rng):
        return dp_preprocess(dataset, self.epsilon, self.delta, self.d, rng, self.sample_constant)

    def answer(self, summary, query, rng):
        return dp_answer(summary, query, rng)


class FullSolver(Solver):
    """Keeps every key and answers exactly."""

    name = "full"

    def preprocess(self, dataset, rng):
        return Summary(dataset.n, tuple(enumerate(dataset.keys)))

    def answer(self, summary, query, rng):
        return subsample_answer(summary, query)


# --- streaming ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParamSegment:
    params: tuple


@dataclass(frozen=True, eq=False)
class CoordinateSegment:
    j: int
    nonces: np.ndarray
    masked: np.ndarray


def query_stream(query: DAQuery) -> Iterator:
    """The query in streaming order: all parameters, then one block per coordinate."""
    yield ParamSegment(query.params)
    for j in range(query.d):
        yield CoordinateSegment(j, query.nonces[:, j], query.masked[:, j])


@dataclass
class MemoryMeter:
    """Tracks the working-state size of a streaming solver, in bits."""

    peak_bits: int = 0
    samples: list = field(default_factory=list)

    def charge(self, bits: int) -> None:
        self.samples.append(bits)
        self.peak_bits = max(self.peak_bits, bits)


def stream_memory_bound(summary: Summary, lam: int) -> int:
    """Declared bound: retained keys, their multipliers and hashed keys, and O(1) words."""
    index_bits = max(1, (summary.n - 1).bit_length())
    lp = milr.lambda_prime_for(lam)
    return len(summary.retained) * (index_bits + 2 * lam + lp) + 4 * 64


def stream_answer(summary: Summary, stream: Iterable, meter: MemoryMeter | None = None) -> Iterator[float]:
    """Emit the subsample estimate one coordinate at a time.

    Only the retained rows of each segment are read; everything else is
    dropped as it passes.
    """
    if not summary.retained:
        raise InvalidInput("summary holds no keys")
    meter = meter if meter is not None else MemoryMeter()
    rows = summary.indices
    r = len(rows)
    index_bits = max(1, (summary.n - 1).bit_length())
    it = iter(stream)
    head = next(it, None)
    if not isinstance(head, ParamSegment):
        raise StreamProtocolError("stream must open with the parameter segment")
    if len(head.params) != summary.n:
        raise StreamProtocolError("parameter segment does not cover every key")
    lam, lp = head.params[0].lam, head.params[0].lambda_prime
    mult = np.array([head.params[i].hash.multiplier for i in rows], dtype=np.uint64)
    hk = milr.hashed_keys(summary.key_values, mult, lam, lp)
    state = r * (index_bits + lam + lp)
    meter.charge(state + lam * r)  # multipliers held while hashing
    expected = 0
    for seg in it:
        if not isinstance(seg, CoordinateSegment) or seg.j != expected:
            raise StreamProtocolError(f"expected coordinate segment {expected}")
        if seg.nonces.shape != (summary.n,) or seg.masked.shape != (summary.n,):
            raise StreamProtocolError(f"coordinate segment {expected} does not cover every key")
        bits = milr.prf_cipher.dec_bits(hk, lp, seg.nonces[rows], seg.masked[rows])
        meter.charge(state + 2 * 64)  # running count and coordinate index
        yield int(bits.sum(dtype=np.int64)) / r
        expected += 1
    if expected == 0:
        raise StreamProtocolError("stream carries no coordinate segments")


def stream_answer_all(summary: Summary, stream: Iterable, meter: MemoryMeter | None = None) -> np.ndarray:
    return np.array(list(stream_answer(summary, stream, meter)), dtype=np.float64)


# --- fingerprinting attack ---------------------------------------------

@dataclass(frozen=True)
class CodeParams:
    collusion: int
    gamma: float
    length_constant: float = 100.0


@dataclass(frozen=True)
class AttackRow:
    trial: int
    experiment: int
    accused: tuple
    target_hit: bool
    marking_ok: bool
    max_error: float

    def csv_row(self) -> dict:
        return {
            "trial": self.trial,
            "experiment": self.experiment,
            "accused_indices": " ".join(map(str, self.accused)),
            "target_hit": int(self.target_hit),
            "marking_ok": int(self.marking_ok),
            "max_error": f"{self.max_error:.6f}",
        }


REPORT_COLUMNS = ("trial", "experiment", "accused_indices", "target_hit", "marking_ok", "max_error")


@dataclass
class AttackRecord:
    n: int
    target: int
    rows: list
    freq1: np.ndarray
    freq2: np.ndarray

    @property
    def retained_hit_rate(self) -> float:
        exp1 = [r for r in self.rows if r.experiment == 1]
        return sum(r.target_hit for r in exp1) / max(1, len(exp1))

    @property
    def target_freq1(self) -> float:
        return float(self.freq1[self.target])

    @property
    def target_freq2(self) -> float:
        return float(self.freq2[self.target])


def attack_trial(solver: Solver, n: int, lam: int, code: CodeParams, seed: int, trial: int,
                 experiment: int, target: int = 0, hidden_zero: bool = False) -> AttackRow:
    """One run of the attack; experiment 2 swaps the target's codeword for the spare one.

    Seeds depend on the trial only, so both experiments see the same keys,
    codebook and solver randomness.
    """
    setup, solve, enc_rng, noise = (trial_rng(seed, trial, tag) for tag in range(4))
    dataset = gen_dataset(n, lam, setup)
    params = gen_params(n, lam, setup)
    # rows 0..n-1 belong to the users, row n is the spare codeword
    cb = fpc_gen(n + 1, code.collusion, code.gamma, setup, code.length_constant)
    summary = solver.preprocess(dataset, solve)
    if not isinstance(summary, Summary):
        raise ContractViolation("solver did not return a Summary with declared retention")
    retained = summary.declared_retention
    plain = cb.matrix[:n].copy()
    if experiment == 2:
        plain[target] = cb.matrix[n]
    if hidden_zero:
        hidden = [i for i in range(n) if i not in retained]
        plain[hidden] = 0
    query = make_query(dataset, params, plain, enc_rng)
    answer = solver.answer(summary, query, noise)
    truth = plain.sum(axis=0, dtype=np.int64) / n
    word = (np.asarray(answer) >= 0.5).astype(np.uint8)
    accused = tuple(sorted(fpc_trace(cb, word).accused))
    if experiment == 1:
        hit = any(i in retained for i in accused)
    else:
        hit = target in accused
    return AttackRow(trial, experiment, accused, hit, check_marking(cb, word, range(n + 1)), max_error(answer, truth))


def _freq(rows, n) -> np.ndarray:
    f = np.zeros(n + 1)
    for r in rows:
        for i in r.accused:
            f[i] += 1
    return f[:n] / max(1, len(rows))


def fpc_attack(solver: Solver, n: int, lam: int, code: CodeParams, rng, trials: int = 100,
               target: int | None = None, hidden_zero: bool = False, map_fn=map) -> AttackRecord:
    """Both experiments over ``trials`` runs each.

    Without an explicit target, ``i*`` is the index accused most often in
    experiment 1 (lowest index on ties).  ``map_fn`` must preserve order.
    """
    if not hasattr(solver, "preprocess") or not hasattr(solver, "answer"):
        raise ContractViolation("solver must expose preprocess and answer")
    seed = derive_seed(int(rng.integers(0, 1 << 63)))

    def run(exp, tgt):
        job = functools.partial(attack_trial, solver, n, lam, code, seed,
                                experiment=exp, target=tgt, hidden_zero=hidden_zero)
        return list(map_fn(job, range(trials)))

    rows1 = run(1, target if target is not None else 0)
    freq1 = _freq(rows1, n)
    tgt = int(np.argmax(freq1)) if target is None else target
    rows2 = run(2, tgt)
    return AttackRecord(n, tgt, rows1 + rows2, freq1, _freq(rows2, n))


def dp_attack_config(epsilon: float, delta: float, d: int, collusion: int, gamma: float,
                     sample_constant: float = DP_SAMPLE_CONSTANT) -> tuple[int, CodeParams]:
    """Dataset size and code parameters so the codebook length equals the solver's d.

    ``n`` is exactly the DP solver's sample count, so every key is retained.
    """
    from .fingerprinting import code_length

    n = dp_sample_count(epsilon, delta, d, sample_constant)
    lc = d / (collusion * collusion * math.log((n + 1) / gamma))
    while code_length(n + 1, collusion, gamma, lc) > d:
        lc = math.nextafter(lc, 0.0)
    return n, CodeParams(collusion, gamma, lc)
