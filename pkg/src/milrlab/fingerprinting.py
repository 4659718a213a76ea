"""Tardos fingerprinting codes: generation, tracing and pirate strategies.

Column ``j`` of the codebook carries a secret bias ``p_j``; user ``i``'s bit
is Bernoulli(``p_j``).  A pirate word is traced by the usual asymmetric score
and every user scoring above ``Z`` is accused.

The binary file format is a little-endian header ``(n, d, k, gamma, Z)`` as
``<QQQdd``, then ``d`` float64 biases, then the row-major bit matrix packed
with ``numpy.packbits``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput, InvalidParameter

DEFAULT_LENGTH_CONSTANT = 100.0
DEFAULT_THRESHOLD_CONSTANT = 20.0
_HEADER = struct.Struct("<QQQdd")


def code_length(n: int, k: int, gamma: float, length_constant: float = DEFAULT_LENGTH_CONSTANT) -> int:
    return max(1, math.ceil(length_constant * k * k * math.log(n / gamma)))


def accusation_threshold(n: int, k: int, gamma: float,
                         threshold_constant: float = DEFAULT_THRESHOLD_CONSTANT) -> float:
    return threshold_constant * k * math.log(n / gamma)


def cutoff_angle(k: int) -> float:
    return math.asin(math.sqrt(1.0 / (300.0 * k)))


def bias_cutoff(k: int) -> float:
    """Smallest admissible column bias, ``sin^2`` of the cutoff angle."""
    return 1.0 / (300.0 * k)


@dataclass(frozen=True, eq=False)
class Codebook:
    n: int
    d: int
    k: int
    gamma: float
    matrix: np.ndarray = field(repr=False)
    biases: np.ndarray = field(repr=False)
    threshold: float

    def __post_init__(self):
        if self.matrix.shape != (self.n, self.d):
            raise InvalidInput(f"matrix shape {self.matrix.shape} does not match ({self.n}, {self.d})")
        if self.biases.shape != (self.d,):
            raise InvalidInput("need one bias per column")
        if self.d < 1 or self.threshold <= 0:
            raise InvalidParameter("need d >= 1 and a positive threshold")

    def row(self, i: int) -> np.ndarray:
        return self.matrix[i]

    def rows(self, users) -> np.ndarray:
        return self.matrix[np.asarray(list(users), dtype=np.int64)]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(self.n, self.d, self.k, self.gamma, self.threshold))
            fh.write(self.biases.astype("<f8").tobytes())
            fh.write(np.packbits(self.matrix, axis=None).tobytes())

    @classmethod
    def load(cls, path) -> "Codebook":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise InvalidInput("codebook file is truncated")
        n, d, k, gamma, threshold = _HEADER.unpack_from(raw)
        off = _HEADER.size
        need = off + 8 * d + (n * d + 7) // 8
        if len(raw) != need:
            raise InvalidInput(f"codebook file has {len(raw)} bytes, expected {need}")
        biases = np.frombuffer(raw, dtype="<f8", count=d, offset=off).astype(np.float64)
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8, offset=off + 8 * d), count=n * d)
        return cls(n, d, k, gamma, bits.reshape(n, d), biases, threshold)


@dataclass(frozen=True, eq=False)
class TraceResult:
    accused: frozenset
    scores: np.ndarray

    def top(self) -> int:
        """Index of the highest-scoring user."""
        return int(np.argmax(self.scores))


def fpc_gen(n: int, k: int, gamma: float, rng: np.random.Generator,
            length_constant: float = DEFAULT_LENGTH_CONSTANT,
            threshold_constant: float = DEFAULT_THRESHOLD_CONSTANT) -> Codebook:
    if not 1 <= k <= n:
        raise InvalidParameter(f"need 1 <= k <= n, got k={k}, n={n}")
    if not 0 < gamma < 1:
        raise InvalidParameter(f"gamma must lie in (0, 1), got {gamma}")
    if length_constant <= 0 or threshold_constant <= 0:
        raise InvalidParameter("length and threshold constants must be positive")
    d = code_length(n, k, gamma, length_constant)
    lo = cutoff_angle(k)
    r = rng.uniform(lo, math.pi / 2 - lo, size=d)
    biases = np.clip(np.sin(r) ** 2, bias_cutoff(k), 1 - bias_cutoff(k))
    matrix = (rng.random((n, d)) < biases).astype(np.uint8)
    return Codebook(n, d, k, gamma, matrix, biases, accusation_threshold(n, k, gamma, threshold_constant))


def _as_word(cb: Codebook, word) -> np.ndarray:
    w = np.asarray(word, dtype=np.uint8).reshape(-1)
    if w.shape[0] != cb.d:
        raise InvalidInput(f"word has length {w.shape[0]}, codebook length is {cb.d}")
    return w


def score_weights(biases: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column score for a matching one and for a zero under a pirate one."""
    return np.sqrt((1 - biases) / biases), -np.sqrt(biases / (1 - biases))


def fpc_scores(cb: Codebook, word) -> np.ndarray:
    w = _as_word(cb, word).astype(bool)
    pos, neg = score_weights(cb.biases[w])
    sub = cb.matrix[:, w].astype(np.float64)
    return sub @ (pos - neg) + neg.sum()


def fpc_trace(cb: Codebook, word) -> TraceResult:
    scores = fpc_scores(cb, word)
    return TraceResult(frozenset(np.flatnonzero(scores > cb.threshold).tolist()), scores)


def check_marking(cb: Codebook, word, users=None) -> bool:
    """Every position of ``word`` agrees with some row at that position.

    Rows range over all users by default; pass ``users`` to restrict the
    witnesses to a coalition instead.
    """
    w = _as_word(cb, word)
    rows = cb.matrix if users is None else cb.rows(users)
    return marking_holds(rows, w)


def marking_holds(rows: np.ndarray, word) -> bool:
    rows = np.asarray(rows)
    if rows.shape[0] == 0:
        return False
    has1 = rows.any(axis=0)
    has0 = (rows == 0).any(axis=0)
    w = np.asarray(word).astype(bool)
    return bool(np.all(np.where(w, has1, has0)))


def _rows(rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.uint8))
    if rows.shape[0] < 1:
        raise InvalidInput("a pirate needs at least one row")
    return rows


def pirate_majority(rows, rng=None) -> np.ndarray:
    rows = _rows(rows)
    ones = rows.sum(axis=0, dtype=np.int64)
    return (2 * ones >= rows.shape[0]).astype(np.uint8)


def pirate_minority(rows, rng=None) -> np.ndarray:
    # The rarer bit among the bits actually present; a unanimous column is copied.
    rows = _rows(rows)
    ones = rows.sum(axis=0, dtype=np.int64)
    zeros = rows.shape[0] - ones
    out = (ones < zeros).astype(np.uint8)
    out[ones == 0] = 0
    out[zeros == 0] = 1
    return out


def pirate_random_row(rows, rng: np.random.Generator) -> np.ndarray:
    rows = _rows(rows)
    pick = rng.integers(0, rows.shape[0], size=rows.shape[1])
    return rows[pick, np.arange(rows.shape[1])]


PIRATES = {
    "majority": pirate_majority,
    "minority": pirate_minority,
    "random_row": pirate_random_row,
}


def get_pirate(name: str):
    try:
        return PIRATES[name]
    except KeyError:
        raise InvalidParameter(f"unknown pirate {name!r}; choose from {sorted(PIRATES)}") from None


@dataclass(frozen=True)
class FpcTrial:
    coalition: tuple
    accused: tuple
    marking_ok: bool
    caught: bool
    false_accusation: bool

    @property
    def completeness_failure(self) -> bool:
        return self.marking_ok and not self.accused


def run_fpc_trial(n: int, k: int, gamma: float, pirate: str, rng: np.random.Generator,
                  length_constant: float = DEFAULT_LENGTH_CONSTANT, coalition_size=None) -> FpcTrial:
    """Fresh codebook, random coalition, pirate word, trace."""
    size = k if coalition_size is None else coalition_size
    if not 1 <= size <= n:
        raise InvalidParameter("coalition size must be in 1..n")
    gen_rng, pick_rng, pirate_rng = (np.random.default_rng(s) for s in rng.integers(0, 1 << 63, size=3))
    cb = fpc_gen(n, k, gamma, gen_rng, length_constant)
    coalition = tuple(sorted(pick_rng.choice(n, size=size, replace=False).tolist()))
    word = get_pirate(pirate)(cb.rows(coalition), pirate_rng)
    res = fpc_trace(cb, word)
    accused = tuple(sorted(res.accused))
    inside = set(coalition)
    return FpcTrial(
        coalition=coalition,
        accused=accused,
        marking_ok=check_marking(cb, word),
        caught=any(i in inside for i in accused),
        false_accusation=any(i not in inside for i in accused),
    )
