"""Adaptive data analysis games, mechanisms and the MILR wrappers.

Three games are played for ``k`` adaptive rounds:

* ``game_one``: the game samples ``t`` points of ``[N]``; the mechanism sees them.
* ``game_two``: the mechanism selects its ``t`` points.
* ``game_space``: the adversary describes a distribution, the mechanism keeps
  an ``s``-bit summary of it and answers from the summary.

The outcome is 1 when some answer misses the true mean by more than 1/10.

Mechanisms and adversaries own their random generators, so two games built
from the same seeds replay the same randomness.  Transcripts record a
SHA-256 digest of each query's values over the distribution support, which
makes transcripts from different games comparable byte for byte.

The wrappers turn a space-bounded mechanism into a selecting mechanism
(``wrap_a``, ``wrap_b``, ``wrap_c``) or the game-two adversary into a
space-game adversary (``wrap_b_adversary``).  Keys are MILR keys; a query is
encrypted position by position and a domain element ``(j, x)`` evaluates it
by decrypting position ``j`` under key ``x``.  Query values in {-1, 0, 1} are
encrypted as two bits ``(nonzero, negative)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import milr
from .errors import ContractViolation, InvalidInput, InvalidParameter
from .fingerprinting import DEFAULT_LENGTH_CONSTANT, fpc_gen, fpc_trace
from .prf_cipher import DEFAULT_PRF, dec_bits
from .universal_hash import eval_hash_many

ACCURACY = 0.1
DEFAULT_DOMAIN_FACTOR = 2000


def _check_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.int8)
    if np.any((v < -1) | (v > 1)):
        raise InvalidInput("query values must lie in {-1, 0, 1}")
    return v


def clamp(a: float) -> float:
    return float(min(1.0, max(-1.0, a)))


# --- queries and distributions ------------------------------------------

@dataclass(frozen=True, eq=False)
class QueryFn:
    """A query on ``[N]`` given by its value table."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values))

    @property
    def N(self) -> int:
        return self.values.shape[0]

    def evaluate(self, points) -> np.ndarray:
        return self.values[np.asarray(points, dtype=np.int64)]

    def mean(self) -> float:
        return int(self.values.sum(dtype=np.int64)) / self.N


def encode_ternary(values) -> np.ndarray:
    """(N,) values in {-1,0,1} -> (N, 2) bits ``(nonzero, negative)``."""
    v = _check_values(values)
    return np.stack([(v != 0), (v < 0)], axis=-1).astype(np.uint8)


def decode_ternary(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int8)
    return (bits[..., 0] * (1 - 2 * bits[..., 1])).astype(np.int8)


@dataclass(frozen=True, eq=False)
class EncryptedQuery:
    """``f(j, x) = Dec(x, p_j, c_j)``; described by the parameters and ciphertexts."""

    lam: int
    lambda_prime: int
    multipliers: np.ndarray
    nonces: np.ndarray
    masked: np.ndarray
    prf: object = DEFAULT_PRF

    def evaluate(self, points) -> np.ndarray:
        """Points are (m, 2) rows ``(j, x)``."""
        pts = np.asarray(points, dtype=np.uint64).reshape(-1, 2)
        j = pts[:, 0].astype(np.int64)
        hk = eval_hash_many(self.multipliers[j], pts[:, 1], self.lam, self.lambda_prime)
        bits = dec_bits(hk[:, None], self.lambda_prime, self.nonces[j], self.masked[j], self.prf)
        return decode_ternary(bits)

    def description_hex(self) -> str:
        return "".join(f"{int(r):016x}{int(b):x}" for r, b in zip(self.nonces.ravel(), self.masked.ravel()))

    def digest(self) -> str:
        """SHA-256 over the parameters, nonces and masked bits."""
        h = hashlib.sha256()
        for arr in (self.multipliers, self.nonces, self.masked):
            h.update(np.ascontiguousarray(arr, dtype="<u8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class Distribution:
    """Uniform distribution over explicit support points.

    Points are ints (the domain ``[N]``) or ``(j, x)`` rows; ``element_bits``
    is the size of one serialized point.
    """

    points: np.ndarray
    element_bits: int

    @classmethod
    def uniform_domain(cls, N: int) -> "Distribution":
        return cls(np.arange(N, dtype=np.int64), max(1, math.ceil(math.log2(N))))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def description_bits(self) -> int:
        return self.size * self.element_bits

    def point_index(self, rows) -> np.ndarray:
        """The coordinate label of each support row (``j`` for pair points)."""
        p = self.points[np.asarray(rows, dtype=np.int64)]
        return p[:, 0].astype(np.int64) if p.ndim == 2 else p.astype(np.int64)

    def serialize_point(self, row: int) -> str:
        p = self.points[row]
        if self.points.ndim == 2:
            jbits = self.element_bits - self._key_bits
            return format(int(p[0]), f"0{jbits}b") + format(int(p[1]), f"0{self._key_bits}b")
        return format(int(p), f"0{self.element_bits}b")

    @property
    def _key_bits(self) -> int:
        return self.element_bits - max(1, math.ceil(math.log2(self.size)))

    def evaluate(self, query) -> np.ndarray:
        return query.evaluate(self.points)

    def expectation(self, query) -> float:
        return int(self.evaluate(query).sum(dtype=np.int64)) / self.size


def query_digest(values) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype=np.int8).tobytes()).hexdigest()


# --- transcripts --------------------------------------------------------

@dataclass(frozen=True)
class RoundRecord:
    digest: str
    answer: float
    true: float

    @property
    def error(self) -> float:
        return abs(self.answer - self.true)


@dataclass
class GameTranscript:
    kind: str
    size: int
    k: int
    rounds: list = field(default_factory=list)
    outcome: int = 0
    notes: dict = field(default_factory=dict)

    def recompute_outcome(self) -> int:
        return int(any(r.error > ACCURACY for r in self.rounds))

    def header_line(self) -> str:
        key = "s" if self.kind == "space" else "t"
        return json.dumps({"game": self.kind, key: self.size, "k": self.k, **self.notes}, sort_keys=True)

    def body_lines(self) -> list[str]:
        lines = [json.dumps({"round": i, "query": r.digest, "answer": r.answer, "true": r.true}, sort_keys=True)
                 for i, r in enumerate(self.rounds)]
        lines.append(json.dumps({"outcome": self.outcome}))
        return lines

    def body_bytes(self) -> bytes:
        """Rounds and outcome only; the header names the game kind and differs across games."""
        return ("\n".join(self.body_lines()) + "\n").encode()

    def to_jsonl(self) -> str:
        return "\n".join([self.header_line()] + self.body_lines()) + "\n"

    @property
    def max_error(self) -> float:
        return max((r.error for r in self.rounds), default=0.0)

    def first_failure(self):
        return next((i for i, r in enumerate(self.rounds) if r.error > ACCURACY), None)


def _record(tr: GameTranscript, digest: str, answer: float, true: float) -> None:
    tr.rounds.append(RoundRecord(digest, answer, true))


# --- mechanisms for games one and two ----------------------------------

class Mechanism:
    """Natural mechanisms implement ``answer(values_on_sample)``; others
    implement ``answer_full(query, sample)``."""

    natural = True
    name = "mechanism"

    def __init__(self, rng=None):
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def select(self, N: int, t: int) -> np.ndarray:
        return np.sort(self.rng.choice(N, size=t, replace=False))

    def answer(self, values: np.ndarray) -> float:
        raise NotImplementedError

    def answer_full(self, query: QueryFn, sample: np.ndarray) -> float:
        raise NotImplementedError


class EmpiricalMechanism(Mechanism):
    name = "empirical"

    def answer(self, values):
        return int(values.sum(dtype=np.int64)) / values.shape[0]


class GaussianMechanism(Mechanism):
    """Empirical mean plus Gaussian noise; an uncalibrated baseline."""

    name = "gaussian"

    def __init__(self, sigma: float = 0.1, rng=None):
        super().__init__(rng)
        if sigma < 0:
            raise InvalidParameter("sigma must be nonnegative")
        self.sigma = sigma

    def answer(self, values):
        return int(values.sum(dtype=np.int64)) / values.shape[0] + self.rng.normal(0.0, self.sigma)


class OmniscientMechanism(Mechanism):
    """Sees the whole query and answers its true mean."""

    natural = False
    name = "omniscient"

    def answer_full(self, query, sample):
        return query.mean()


def _game_rounds(tr, mech, adv, N, k, sample):
    for _ in range(k):
        q = QueryFn(adv.next_query())
        if q.N != N:
            raise ContractViolation(f"adversary issued a query over {q.N} points, domain is {N}")
        if mech.natural:
            a = mech.answer(q.values[sample])
        else:
            a = mech.answer_full(q, sample)
        a = clamp(a)
        _record(tr, query_digest(q.values), a, q.mean())
        adv.observe(a)
    tr.outcome = tr.recompute_outcome()
    return tr


def _rounds(adv, k):
    if k is None:
        k = getattr(adv, "rounds", None)
        if k is None:
            raise InvalidParameter("k must be given for adversaries without a round plan")
    if k < 1:
        raise InvalidParameter("k must be at least 1")
    return k


def game_one(mech: Mechanism, adv, t: int, k=None, domain_factor: int = DEFAULT_DOMAIN_FACTOR,
             rng=None) -> GameTranscript:
    if t < 1:
        raise InvalidParameter("t must be at least 1")
    k = _rounds(adv, k)
    N = domain_factor * t
    rng = rng if rng is not None else np.random.default_rng(0)
    sample = rng.integers(0, N, size=t)
    adv.start(N)
    tr = GameTranscript("one", t, k)
    return _game_rounds(tr, mech, adv, N, k, sample)


def game_two(mech: Mechanism, adv, t: int, k=None, domain_factor: int = DEFAULT_DOMAIN_FACTOR,
             rng=None) -> GameTranscript:
    if t < 1:
        raise InvalidParameter("t must be at least 1")
    k = _rounds(adv, k)
    N = domain_factor * t
    sample = np.asarray(mech.select(N, t), dtype=np.int64)
    if sample.shape != (t,) or len(set(sample.tolist())) != t or np.any((sample < 0) | (sample >= N)):
        raise ContractViolation(f"mechanism must select {t} distinct points of [{N}]")
    adv.start(N)
    tr = GameTranscript("two", t, k)
    return _game_rounds(tr, mech, adv, N, k, sample)


# --- space-bounded mechanisms ------------------------------------------

@dataclass(frozen=True, eq=False)
class SpaceSummary:
    bits: str
    retained: frozenset
    rows: np.ndarray


class SpaceMechanism:
    name = "space"

    def __init__(self, rng=None):
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def preprocess(self, dist: Distribution) -> SpaceSummary:
        raise NotImplementedError

    def answer(self, summary: SpaceSummary, query) -> float:
        raise NotImplementedError


def _stored_summary(dist: Distribution, rows) -> SpaceSummary:
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    bits = "".join(dist.serialize_point(int(r)) for r in rows)
    return SpaceSummary(bits, frozenset(dist.point_index(rows).tolist()), dist.points[rows])


class KeySubsampleMechanism(SpaceMechanism):
    """Stores as many support points as fit in s bits; answers their empirical mean."""

    name = "keysub"

    def __init__(self, s: int, rng=None):
        super().__init__(rng)
        self.s = s

    def capacity(self, dist: Distribution) -> int:
        return self.s // dist.element_bits

    def preprocess(self, dist):
        m = self.capacity(dist)
        if m < 1:
            raise InvalidParameter(f"s={self.s} cannot hold one {dist.element_bits}-bit point")
        if m >= dist.size:
            return _stored_summary(dist, np.arange(dist.size))
        return _stored_summary(dist, self.rng.choice(dist.size, size=m, replace=False))

    def answer(self, summary, query):
        v = query.evaluate(summary.rows)
        return int(v.sum(dtype=np.int64)) / v.shape[0]


class ReplayMechanism(SpaceMechanism):
    """Stores the whole description and answers exact expectations."""

    name = "replay"

    def preprocess(self, dist):
        return _stored_summary(dist, np.arange(dist.size))

    def answer(self, summary, query):
        v = query.evaluate(summary.rows)
        return int(v.sum(dtype=np.int64)) / v.shape[0]


def game_space(mech: SpaceMechanism, adv, s: int, k=None, rng=None) -> GameTranscript:
    k = _rounds(adv, k)
    dist = adv.distribution()
    z = mech.preprocess(dist)
    if len(z.bits) > s:
        raise ContractViolation(f"summary has {len(z.bits)} bits, budget is {s}")
    tr = GameTranscript("space", s, k)
    for _ in range(k):
        f = adv.next_query()
        vals = dist.evaluate(f)
        a = clamp(mech.answer(z, f))
        _record(tr, query_digest(vals), a, int(vals.sum(dtype=np.int64)) / dist.size)
        adv.observe(a)
    tr.outcome = tr.recompute_outcome()
    return tr


# --- adversaries ---------------------------------------------------------

class FixedAdversary:
    """Replays a fixed list of queries; useful for tests."""

    def __init__(self, queries):
        self.queries = [np.asarray(q, dtype=np.int8) for q in queries]
        self.rounds = len(self.queries)
        self.answers: list = []

    def start(self, N):
        self._i = 0
        self.answers = []

    def next_query(self):
        q = self.queries[min(self._i, len(self.queries) - 1)]
        self._i += 1
        return q

    def observe(self, a):
        self.answers.append(a)


class IFPCAdversary:
    """Interactive fingerprinting attack.

    Phase 1 issues the code columns as +-1 queries and rounds each answer to
    a pirate bit (``a >= 0 -> 1``).  Phase 2 traces the pirate word to an
    accused set R.  Every later round is the challenge query, -1 on R and 0
    elsewhere.  The adversary never sees the sample, only answers.

    The accusation threshold scales with the code length (``0.2 * L``
    times ``k ln(N/gamma)``, the classic value at ``L = 100``) so that
    shortened codes still accuse.
    """

    def __init__(self, N: int, collusion_bound: int, gamma: float = 0.05,
                 length_constant: float = DEFAULT_LENGTH_CONSTANT, rng=None,
                 threshold_constant: float | None = None):
        self.N = N
        self.rng = rng if rng is not None else np.random.default_rng(0)
        tc = 0.2 * length_constant if threshold_constant is None else threshold_constant
        self.codebook = fpc_gen(N, collusion_bound, gamma, self.rng, length_constant, tc)
        self.rounds = self.codebook.d + 1
        self._reset()

    def _reset(self):
        self._round = 0
        self._word = np.zeros(self.codebook.d, dtype=np.uint8)
        self.accused: frozenset | None = None
        self.challenge: np.ndarray | None = None

    def start(self, N):
        if N != self.N:
            raise ContractViolation(f"adversary was built for N={self.N}, game domain is {N}")
        self._reset()

    def next_query(self):
        d = self.codebook.d
        if self._round < d:
            return (2 * self.codebook.matrix[:, self._round].astype(np.int8) - 1)
        if self.challenge is None:
            res = fpc_trace(self.codebook, self._word)
            self.accused = res.accused
            self.challenge = np.zeros(self.N, dtype=np.int8)
            self.challenge[sorted(res.accused)] = -1
        return self.challenge

    def observe(self, a):
        if self._round < self.codebook.d:
            self._word[self._round] = 1 if a >= 0 else 0
        self._round += 1

    @property
    def pirate_word(self) -> np.ndarray:
        return self._word.copy()


# --- MILR wrappers --------------------------------------------------------

def pair_distribution(key_values: np.ndarray, lam: int) -> Distribution:
    """Uniform over ``{(j, x_j)}``; one point costs ``lam + ceil(log2 n)`` bits."""
    n = key_values.shape[0]
    pts = np.stack([np.arange(n, dtype=np.uint64), key_values.astype(np.uint64)], axis=1)
    return Distribution(pts, lam + max(1, math.ceil(math.log2(n))))


class _WrapperCore:
    """State shared by the wrappers: keys, the distribution, summary and parameters.

    Randomness is drawn from the wrapper's own generator in a fixed order
    (keys, parameters, then one encryption per round), whichever side of the
    game the wrapper sits on.
    """

    def __init__(self, lam: int, rng, lambda_prime=None, prf=DEFAULT_PRF):
        if lam not in milr.SUPPORTED_LAMBDAS:
            raise InvalidParameter(f"unsupported lambda={lam}")
        self.lam = lam
        self.lambda_prime = milr.lambda_prime_for(lam) if lambda_prime is None else lambda_prime
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.prf = prf
        self.key_values = None
        self.multipliers = None
        self.dist = None

    def sample_keys(self, N: int) -> Distribution:
        self.key_values = milr.sample_multipliers(self.lam, self.rng, size=N).astype(np.uint64)
        self.dist = pair_distribution(self.key_values, self.lam)
        return self.dist

    def sample_params(self) -> None:
        N = self.key_values.shape[0]
        self.multipliers = milr.sample_multipliers(self.lam, self.rng, size=N).astype(np.uint64)

    def encrypt(self, messages) -> EncryptedQuery:
        nonces, masked = milr.enc_rows(self.key_values, self.multipliers, self.lam, self.lambda_prime,
                                       messages, self.rng, self.prf)
        return self._query(nonces, masked)

    def _query(self, nonces, masked) -> EncryptedQuery:
        return EncryptedQuery(self.lam, self.lambda_prime, self.multipliers, nonces, masked, self.prf)


def _check_retention(retained, lam, s, t=None):
    budget = milr.tau_bar(lam, s)
    if len(retained) > budget:
        raise ContractViolation(f"mechanism retains {len(retained)} points, budget tau_bar={budget}")
    if t is not None and len(retained) > t:
        raise ContractViolation(f"mechanism retains {len(retained)} points, more than t={t}")


def _selection(retained, N, t) -> np.ndarray:
    # I first, padded with the lowest unused indices up to t points.
    chosen = sorted(retained)
    pad = (j for j in range(N) if j not in retained)
    while len(chosen) < t:
        chosen.append(next(pad))
    return np.array(sorted(chosen), dtype=np.int64)


class _SpaceWrapperMechanism(Mechanism):
    def __init__(self, space_mech: SpaceMechanism, lam: int, s: int, rng=None, lambda_prime=None,
                 prf=DEFAULT_PRF):
        self.space_mech = space_mech
        self.s = s
        self.core = _WrapperCore(lam, rng, lambda_prime, prf)
        self.summary = None
        self.retained = frozenset()
        self.sample = None
        self.last_query = None
        self.ciphertext_log: list[str] = []

    def select(self, N, t):
        dist = self.core.sample_keys(N)
        self.summary = self.space_mech.preprocess(dist)
        if len(self.summary.bits) > self.s:
            raise ContractViolation(f"summary has {len(self.summary.bits)} bits, budget is {self.s}")
        self.core.sample_params()
        self.retained = self.summary.retained
        _check_retention(self.retained, self.core.lam, self.s, t)
        self.sample = _selection(self.retained, N, t)
        return self.sample

    def _respond(self, f):
        self.last_query = f
        self.ciphertext_log.append(f.digest())
        return self.space_mech.answer(self.summary, f)


class WrapA(_SpaceWrapperMechanism):
    """Natural: sees the query only on its selection and encrypts 0 outside I."""

    natural = True
    name = "wrap_a"

    def answer(self, values):
        N = self.core.key_values.shape[0]
        q = np.zeros(N, dtype=np.int8)
        inside = np.isin(self.sample, sorted(self.retained))
        q[self.sample[inside]] = values[inside]
        return self._respond(self.core.encrypt(encode_ternary(q)))


class WrapB(_SpaceWrapperMechanism):
    """Sees the whole query and encrypts every position."""

    natural = False
    name = "wrap_b"

    def answer_full(self, query, sample):
        return self._respond(self.core.encrypt(encode_ternary(query.values)))


class WrapC(_SpaceWrapperMechanism):
    """Encrypts only through a MILR leakage-game oracle in the given mode.

    ``E0`` zeroes messages on the hidden set ``J = [N] minus I`` and ``E1``
    encrypts honestly.
    """

    natural = False
    name = "wrap_c"

    def __init__(self, space_mech, lam, s, mode, rng=None, lambda_prime=None, prf=DEFAULT_PRF):
        super().__init__(space_mech, lam, s, rng, lambda_prime, prf)
        if mode not in (milr.E0, milr.E1):
            raise InvalidParameter(f"mode must be E0 or E1, got {mode!r}")
        self.mode = mode
        self.oracle = None

    def select(self, N, t):
        sample = super().select(N, t)
        core = self.core
        hidden = frozenset(range(N)) - self.retained
        keys = tuple(milr.SecretKey(int(v), core.lam) for v in core.key_values)
        params = tuple(milr.PublicParam(milr.HashFunc(int(m), core.lam, core.lambda_prime))
                       for m in core.multipliers)
        self.oracle = milr.LeakageGame(N, core.lam, core.lambda_prime, self.s, keys, params,
                                       self.summary.bits, hidden, self.mode)
        return sample

    def answer_full(self, query, sample):
        nonces, masked = milr.oracle_query_rows(self.oracle, encode_ternary(query.values), self.core.rng,
                                                self.core.prf)
        return self._respond(self.core._query(nonces, masked))


def wrap_a(space_mech, lam, s, rng=None, **kw) -> WrapA:
    return WrapA(space_mech, lam, s, rng, **kw)


def wrap_b(space_mech, lam, s, rng=None, **kw) -> WrapB:
    return WrapB(space_mech, lam, s, rng, **kw)


def wrap_c(space_mech, lam, s, mode, rng=None, **kw) -> WrapC:
    return WrapC(space_mech, lam, s, mode, rng, **kw)


class WrappedAdversary:
    """The game-two adversary playing the space game through the WrapB translation."""

    def __init__(self, adv, N: int, lam: int, rng=None, lambda_prime=None, prf=DEFAULT_PRF):
        self.adv = adv
        self.N = N
        self.core = _WrapperCore(lam, rng, lambda_prime, prf)
        self.rounds = getattr(adv, "rounds", None)
        self.last_query = None
        self.ciphertext_log: list[str] = []

    def distribution(self) -> Distribution:
        dist = self.core.sample_keys(self.N)
        self.adv.start(self.N)
        return dist

    def next_query(self):
        if self.core.multipliers is None:
            self.core.sample_params()
        q = QueryFn(self.adv.next_query())
        self.last_query = self.core.encrypt(encode_ternary(q.values))
        self.ciphertext_log.append(self.last_query.digest())
        return self.last_query

    def observe(self, a):
        self.adv.observe(a)


def wrap_b_adversary(adv, N: int, lam: int, rng=None, **kw) -> WrappedAdversary:
    return WrappedAdversary(adv, N, lam, rng, **kw)


def space_budget(lam: int, N: int, points: int) -> int:
    """Bits needed to store ``points`` pairs ``(j, x_j)`` out of N."""
    return points * (lam + max(1, math.ceil(math.log2(N))))
