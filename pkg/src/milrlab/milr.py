"""Multi-instance leakage-resilient (MILR) bit encryption and its leakage game.

The scheme hashes a lambda-bit key down to lambda' bits with a per-instance
universal hash (the public parameter) and encrypts under the hashed key with
the base PRF cipher.

The leakage game samples ``n`` keys and parameters, lets a preprocessor
compress the keys into an ``s``-bit summary, and then gives a distinguisher
oracle access to either ``E1`` (honest encryptions) or ``E0`` (encryptions of
zero on the hidden set ``J``).  ``J`` is not constructive in general, so
preprocessors here *declare* which key indices their summary depends on and
``J`` is the complement of that declaration.  This is a harness idealisation
of the existential hidden set, not a security argument.

Indices are 0-based throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np

from . import prf_cipher
from .errors import ContractViolation, InvalidInput, InvalidParameter
from .prf_cipher import DEFAULT_PRF, BitCiphertext
from .streams import as_rng, derive_seed, spawn
from .universal_hash import (
    HashFunc,
    SUPPORTED_LAMBDAS,
    eval_hash,
    eval_hash_many,
    sample_hash,
    sample_multipliers,
)

E0 = "E0"
E1 = "E1"


def lambda_prime_for(lam: int) -> int:
    """Hashed-key width used by default: a tenth of lambda, at least one bit."""
    return max(1, lam // 10)


def tau_bar(lam: int, s: int) -> int:
    """Leakage budget ``ceil(2s / lam) + 4``: key instances a summary of s bits may compromise."""
    if lam < 1 or s < 0:
        raise InvalidParameter("tau_bar needs lambda >= 1 and s >= 0")
    return -(-2 * s // lam) + 4


@dataclass(frozen=True)
class SecretKey:
    value: int
    lam: int

    def __post_init__(self):
        if not 0 <= self.value < (1 << self.lam):
            raise InvalidInput(f"key does not fit in {self.lam} bits")

    @property
    def bitstring(self) -> str:
        return format(self.value, f"0{self.lam}b")


@dataclass(frozen=True)
class PublicParam:
    hash: HashFunc

    @property
    def lam(self) -> int:
        return self.hash.lam

    @property
    def lambda_prime(self) -> int:
        return self.hash.lambda_prime


@dataclass(frozen=True, eq=False)
class VecCiphertext:
    """Bitwise encryption of a d-bit vector: one nonce and one masked bit per position."""

    nonces: np.ndarray
    masked: np.ndarray

    def __post_init__(self):
        if self.nonces.shape != self.masked.shape or self.nonces.ndim != 1:
            raise InvalidInput("nonce and masked-bit arrays must be 1-d and equally long")

    def __len__(self):
        return self.nonces.shape[0]

    def __getitem__(self, j) -> BitCiphertext:
        return BitCiphertext(int(self.nonces[j]), int(self.masked[j]))

    def __eq__(self, other):
        if not isinstance(other, VecCiphertext):
            return NotImplemented
        return np.array_equal(self.nonces, other.nonces) and np.array_equal(self.masked, other.masked)

    def hex(self) -> str:
        return "".join(f"{int(r):016x}{int(b):x}" for r, b in zip(self.nonces, self.masked))


def gen(lam: int, rng) -> SecretKey:
    if lam not in SUPPORTED_LAMBDAS:
        raise InvalidParameter(f"unsupported lambda={lam}; choose from {SUPPORTED_LAMBDAS}")
    return SecretKey(int(sample_multipliers(lam, as_rng(rng))), lam)


def param(lam: int, rng, lambda_prime: int | None = None) -> PublicParam:
    lp = lambda_prime_for(lam) if lambda_prime is None else lambda_prime
    return PublicParam(sample_hash(lam, lp, as_rng(rng)))


def _hashed(x: SecretKey, p: PublicParam) -> prf_cipher.BaseKey:
    if x.lam != p.lam:
        raise InvalidInput(f"key width {x.lam} does not match parameter width {p.lam}")
    return prf_cipher.BaseKey(eval_hash(p.hash, x.value), p.lambda_prime)


def enc(x: SecretKey, p: PublicParam, m: int, rng, prf=DEFAULT_PRF) -> BitCiphertext:
    return prf_cipher.enc_base(_hashed(x, p), m, as_rng(rng), prf)


def dec(x: SecretKey, p: PublicParam, c: BitCiphertext, prf=DEFAULT_PRF) -> int:
    return prf_cipher.dec_base(_hashed(x, p), c, prf)


def enc_vec(x: SecretKey, p: PublicParam, v, rng, prf=DEFAULT_PRF) -> VecCiphertext:
    v = np.asarray(v, dtype=np.uint8).reshape(-1)
    if v.size < 1:
        raise InvalidInput("vector length must be at least 1")
    if np.any(v > 1):
        raise InvalidInput("vector entries must be bits")
    key = _hashed(x, p)
    nonces, masked = prf_cipher.enc_bits(key.value, key.width, v, as_rng(rng), prf)
    return VecCiphertext(nonces, masked)


def dec_vec(x: SecretKey, p: PublicParam, c: VecCiphertext, d: int | None = None, prf=DEFAULT_PRF) -> np.ndarray:
    if d is not None and len(c) != d:
        raise InvalidInput(f"ciphertext has length {len(c)}, expected {d}")
    key = _hashed(x, p)
    return prf_cipher.dec_bits(key.value, key.width, c.nonces, c.masked, prf)


# Batched forms over many (key, parameter) instances.  Keys and multipliers
# are uint64 arrays of shape (n,); messages are (n, d) bit arrays.

def hashed_keys(key_values, multipliers, lam: int, lambda_prime: int) -> np.ndarray:
    return eval_hash_many(multipliers, key_values, lam, lambda_prime)


def enc_rows(key_values, multipliers, lam, lambda_prime, messages, rng, prf=DEFAULT_PRF):
    """Encrypt row ``i`` of ``messages`` under instance ``i``; returns (nonces, masked)."""
    messages = np.asarray(messages, dtype=np.uint8)
    hk = hashed_keys(key_values, multipliers, lam, lambda_prime)
    hk = hk.reshape(hk.shape + (1,) * (messages.ndim - hk.ndim))
    return prf_cipher.enc_bits(hk, lambda_prime, messages, rng, prf)


def dec_rows(key_values, multipliers, lam, lambda_prime, nonces, masked, prf=DEFAULT_PRF):
    hk = hashed_keys(key_values, multipliers, lam, lambda_prime)
    hk = hk.reshape(hk.shape + (1,) * (np.ndim(nonces) - hk.ndim))
    return prf_cipher.dec_bits(hk, lambda_prime, nonces, masked, prf)


@dataclass(frozen=True)
class Leakage:
    """Output of a preprocessor: the summary bits and the key indices it depends on."""

    summary: str
    retained: frozenset

    def __post_init__(self):
        if set(self.summary) - {"0", "1"}:
            raise ContractViolation("summary must be a string of '0'/'1' characters")


@dataclass(frozen=True)
class LeakageGame:
    n: int
    lam: int
    lambda_prime: int
    s: int
    keys: tuple
    params: tuple
    summary: str
    hidden_set: frozenset
    mode: str

    def __post_init__(self):
        if self.mode not in (E0, E1):
            raise InvalidParameter(f"mode must be E0 or E1, got {self.mode!r}")
        if len(self.summary) > self.s:
            raise ContractViolation(f"summary has {len(self.summary)} bits, budget is {self.s}")
        if not self.hidden_set <= frozenset(range(self.n)):
            raise InvalidInput("hidden set must be a subset of the key indices")
        if self.n - len(self.hidden_set) > tau_bar(self.lam, self.s):
            raise ContractViolation("hidden set is smaller than n - tau_bar(lambda, s)")

    @cached_property
    def key_values(self) -> np.ndarray:
        return np.array([k.value for k in self.keys], dtype=np.uint64)

    @cached_property
    def multipliers(self) -> np.ndarray:
        return np.array([p.hash.multiplier for p in self.params], dtype=np.uint64)


def oracle_query(game: LeakageGame, j: int, m, rng, prf=DEFAULT_PRF):
    """Answer one oracle call; ``m`` is a bit or a bit vector."""
    if not 0 <= j < game.n:
        raise InvalidInput(f"oracle index {j} outside 0..{game.n - 1}")
    if game.mode == E0 and j in game.hidden_set:
        m = 0 if np.ndim(m) == 0 else np.zeros(np.shape(m), dtype=np.uint8)
    if np.ndim(m) == 0:
        return enc(game.keys[j], game.params[j], int(m), rng, prf)
    return enc_vec(game.keys[j], game.params[j], m, rng, prf)


def oracle_query_rows(game: LeakageGame, messages, rng, prf=DEFAULT_PRF):
    """One oracle call per instance at once; ``messages`` has shape (n, w)."""
    messages = np.array(messages, dtype=np.uint8)
    if messages.shape[0] != game.n:
        raise InvalidInput("need one message row per key instance")
    if game.mode == E0 and game.hidden_set:
        messages[sorted(game.hidden_set)] = 0
    return enc_rows(game.key_values, game.multipliers, game.lam, game.lambda_prime, messages, rng, prf)


@dataclass
class LeakageTranscript:
    n: int
    lam: int
    lambda_prime: int
    s: int
    mode: str
    hidden_set: list
    queries: list = field(default_factory=list)
    output_bit: int | None = None
    seed: int | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "lambda": self.lam,
                "lambda_prime": self.lambda_prime,
                "s": self.s,
                "mode": self.mode,
                "hidden_set": self.hidden_set,
                "queries": self.queries,
                "output_bit": self.output_bit,
                "seed": self.seed,
            },
            sort_keys=True,
        )


Preprocessor = Callable[[list, np.random.Generator], Leakage]
Distinguisher = Callable[[str, list, Callable], int]


def run_distinguisher_game(
    preprocessor: Preprocessor,
    distinguisher: Distinguisher,
    n: int,
    lam: int,
    s: int,
    mode: str,
    rng,
    lambda_prime: int | None = None,
    prf=DEFAULT_PRF,
) -> LeakageTranscript:
    """Play one round of the bounded-preprocessing security game.

    ``rng`` may be an int seed (recorded in the transcript) or a Generator.
    The setup, preprocessor and oracle draw from separate child streams, so
    E0 and E1 runs with the same seed see identical keys, summaries and nonces.
    """
    seed = rng if isinstance(rng, (int, np.integer)) else None
    setup_rng, pre_rng, oracle_rng = spawn(as_rng(rng), 3)
    lp = lambda_prime_for(lam) if lambda_prime is None else lambda_prime
    keys = [gen(lam, setup_rng) for _ in range(n)]
    params = [param(lam, setup_rng, lp) for _ in range(n)]
    leak = preprocessor(list(keys), pre_rng)
    if not isinstance(leak, Leakage):
        raise ContractViolation("preprocessor must return a Leakage with declared retention")
    if len(leak.summary) > s:
        raise ContractViolation(f"preprocessor emitted {len(leak.summary)} bits, budget is {s}")
    retained = frozenset(int(i) for i in leak.retained)
    if not retained <= frozenset(range(n)):
        raise ContractViolation("declared retention names indices outside the key range")
    if len(retained) > tau_bar(lam, s):
        raise ContractViolation(
            f"declared retention of {len(retained)} keys exceeds tau_bar={tau_bar(lam, s)}"
        )
    game = LeakageGame(n, lam, lp, s, tuple(keys), tuple(params), leak.summary,
                       frozenset(range(n)) - retained, mode)
    transcript = LeakageTranscript(n, lam, lp, s, mode, sorted(game.hidden_set), seed=None if seed is None else int(seed))

    def oracle(j: int, m):
        c = oracle_query(game, j, m, oracle_rng, prf)
        transcript.queries.append({
            "j": int(j),
            "m": int(m) if np.ndim(m) == 0 else [int(b) for b in np.ravel(m)],
            "ciphertext_hex": c.hex(),
        })
        return c

    bit = distinguisher(leak.summary, list(params), oracle)
    if bit not in (0, 1):
        raise ContractViolation("distinguisher must output a bit")
    transcript.output_bit = int(bit)
    return transcript


def retain_nothing(keys, rng) -> Leakage:
    return Leakage("", frozenset())


@dataclass(frozen=True)
class StoreKeys:
    """Preprocessor that copies the listed keys verbatim into the summary."""

    indices: tuple

    def __call__(self, keys, rng) -> Leakage:
        return Leakage("".join(keys[i].bitstring for i in self.indices), frozenset(self.indices))


def estimate_advantage(preprocessor, distinguisher, n, lam, s, trials, seed, lambda_prime=None) -> float:
    """``Pr[out=1 | E1] - Pr[out=1 | E0]`` over ``trials`` shared-seed pairs."""
    ones = {E0: 0, E1: 0}
    for t in range(trials):
        for mode in (E0, E1):
            tr = run_distinguisher_game(preprocessor, distinguisher, n, lam, s, mode,
                                        derive_seed(seed, t), lambda_prime)
            ones[mode] += tr.output_bit
    return (ones[E1] - ones[E0]) / max(trials, 1)


def summary_from_bits(bits: Iterable[int]) -> str:
    return "".join("1" if b else "0" for b in bits)
