"""Exact small-parameter checks of block-wise hashing of dense sources.

Everything here enumerates.  Sources are explicit probability tables over
t-tuples of lambda-bit blocks, hash tuples are enumerated in full, and the
resulting statistical distances are exact rationals.  Instances beyond the
enumeration regime are refused rather than approximated.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidInput, InvalidParameter, PreconditionViolation, TooLarge
from .universal_hash import IRREDUCIBLE, eval_hash_many

EXACT_STATE_BITS = 20
JOINT_BITS = 24
FLOAT_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """A distribution over ``({0,1}^lam)^t`` given by its support and weights.

    ``support`` is an int array of shape (m, t) (one row per outcome, one
    column per block); ``weights`` holds m Fractions summing to one.
    """

    t: int
    lam: int
    support: np.ndarray
    weights: tuple

    def __post_init__(self):
        if self.t < 1 or self.lam < 1:
            raise InvalidParameter("need t >= 1 and lambda >= 1")
        if self.t * self.lam > EXACT_STATE_BITS:
            raise TooLarge(f"t*lambda = {self.t * self.lam} exceeds the exact regime of {EXACT_STATE_BITS} bits")
        if self.support.ndim != 2 or self.support.shape[1] != self.t:
            raise InvalidInput("support must have shape (m, t)")
        if self.support.shape[0] != len(self.weights) or not self.weights:
            raise InvalidInput("need one weight per support row and a nonempty support")
        if np.any(self.support < 0) or np.any(self.support >= (1 << self.lam)):
            raise InvalidInput(f"blocks must be {self.lam}-bit values")
        if any(w < 0 for w in self.weights):
            raise InvalidInput("weights must be nonnegative")
        total = sum(self.weights)
        if isinstance(total, Fraction) and all(isinstance(w, Fraction) for w in self.weights):
            if total != 1:
                raise InvalidInput(f"weights sum to {total}, not 1")
        elif abs(float(total) - 1.0) > 1e-12:
            raise InvalidInput(f"weights sum to {float(total)}, not 1")
        if len({tuple(r) for r in self.support.tolist()}) != len(self.weights):
            raise InvalidInput("support rows must be distinct")

    @classmethod
    def from_mapping(cls, t: int, lam: int, table: Mapping[tuple, object]) -> "SourceSpec":
        items = [(k, v) for k, v in table.items() if v != 0]
        support = np.array([list(k) for k, _ in items], dtype=np.int64).reshape(len(items), t)
        return cls(t, lam, support, tuple(v for _, v in items))

    def as_mapping(self) -> dict:
        return {tuple(r): w for r, w in zip(self.support.tolist(), self.weights)}

    def integer_weights(self) -> tuple[np.ndarray, int]:
        """Weights as int64 numerators over a common denominator D."""
        fracs = [Fraction(w) for w in self.weights]
        denom = math.lcm(*(f.denominator for f in fracs))
        if denom > 1 << 40:
            raise TooLarge("weights need a common denominator above 2^40")
        return np.array([f.numerator * (denom // f.denominator) for f in fracs], dtype=np.int64), denom


def uniform_source(t: int, lam: int) -> SourceSpec:
    grid = np.array(list(itertools.product(range(1 << lam), repeat=t)), dtype=np.int64)
    w = Fraction(1, 1 << (t * lam))
    return SourceSpec(t, lam, grid, (w,) * len(grid))


def flat_source(t: int, lam: int, support) -> SourceSpec:
    """Uniform distribution over the given tuples."""
    support = np.asarray(support, dtype=np.int64).reshape(-1, t)
    w = Fraction(1, len(support))
    return SourceSpec(t, lam, support, (w,) * len(support))


def bit_fixing_source(t: int, lam: int, fixed: Mapping[int, int]) -> SourceSpec:
    """Fixed blocks at the given indices, independent uniform blocks elsewhere."""
    ranges = [[fixed[i]] if i in fixed else range(1 << lam) for i in range(t)]
    return flat_source(t, lam, list(itertools.product(*ranges)))


def min_entropy(src: SourceSpec) -> float:
    return -math.log2(max(src.weights))


def marginal(src: SourceSpec, blocks) -> dict:
    out: dict = {}
    cols = list(blocks)
    for row, w in zip(src.support[:, cols].tolist(), src.weights):
        key = tuple(row)
        out[key] = out.get(key, 0) + w
    return out


def _subsets(t: int):
    for r in range(1, t + 1):
        yield from itertools.combinations(range(t), r)


def density_deficit(src: SourceSpec) -> float:
    """Smallest delta for which the source is (1 - delta)-dense."""
    worst = 0.0
    for blocks in _subsets(src.t):
        h = -math.log2(max(marginal(src, blocks).values()))
        worst = max(worst, 1.0 - h / (len(blocks) * src.lam))
    return worst


def is_dense(src: SourceSpec, delta: float) -> bool:
    """True iff every nonempty block subset keeps min-entropy >= (1 - delta)|I| lam."""
    for blocks in _subsets(src.t):
        h = -math.log2(max(marginal(src, blocks).values()))
        if h < (1.0 - delta) * len(blocks) * src.lam - FLOAT_SLACK:
            return False
    return True


def fixed_blocks(src: SourceSpec) -> list[int]:
    return [i for i in range(src.t) if len(np.unique(src.support[:, i])) == 1]


def is_k_dense(src: SourceSpec, k: int, delta: float) -> bool:
    """Fixed on at most k blocks and (1 - delta)-dense on the others."""
    fixed = fixed_blocks(src)
    if len(fixed) > k:
        return False
    free = [i for i in range(src.t) if i not in fixed]
    if not free:
        return True
    rest = SourceSpec.from_mapping(len(free), src.lam, marginal(src, free))
    return is_dense(rest, delta)


def is_bit_fixing(src: SourceSpec, k: int) -> bool:
    """Fixed on at most k blocks and exactly uniform on the rest."""
    fixed = fixed_blocks(src)
    if len(fixed) > k:
        return False
    free = (src.t - len(fixed)) * src.lam
    return len(src.weights) == 1 << free and all(w == Fraction(1, 1 << free) for w in src.weights)


def statistical_distance(a, b):
    """Half the L1 distance between two tables (dicts or equally shaped arrays)."""
    if isinstance(a, Mapping) and isinstance(b, Mapping):
        keys = set(a) | set(b)
        return sum(abs(a.get(k, 0) - b.get(k, 0)) for k in keys) / 2
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise InvalidInput(f"outcome spaces differ: {a.shape} vs {b.shape}")
    if a.dtype == object or b.dtype == object:
        return sum(abs(x - y) for x, y in zip(a.ravel(), b.ravel())) / 2
    return float(np.abs(a - b).sum()) / 2


@dataclass(frozen=True, eq=False)
class JointLaw:
    """Exact law of ``(G, G(Y))``: ``P(g, u) = counts[g, u] / (2^(t*lam) * denom)``.

    Row ``g`` enumerates multiplier tuples with block 0 most significant;
    column ``u`` packs the t output blocks the same way.
    """

    t: int
    lam: int
    lambda_prime: int
    counts: np.ndarray
    denom: int

    def probability(self, g: int, u: int) -> Fraction:
        return Fraction(int(self.counts[g, u]), (1 << (self.t * self.lam)) * self.denom)

    def total(self) -> Fraction:
        return Fraction(int(self.counts.sum()), (1 << (self.t * self.lam)) * self.denom)

    def distance_to_uniform(self) -> Fraction:
        """Exact ``Delta[(G, G(Y)), (G, U)]``."""
        scale = 1 << (self.t * self.lambda_prime)
        dev = int(np.abs(self.counts * scale - self.denom).sum())
        return Fraction(dev, 2 * (1 << (self.t * self.lam)) * self.denom * scale)

    def collision_probability(self) -> Fraction:
        sq = sum(int(c) * int(c) for c in self.counts.ravel() if c)
        return Fraction(sq, ((1 << (self.t * self.lam)) * self.denom) ** 2)


@functools.lru_cache(maxsize=8)
def _block_table(lam: int, lambda_prime: int) -> np.ndarray:
    a = np.arange(1 << lam, dtype=np.uint64)
    return eval_hash_many(a[:, None], a[None, :], lam, lambda_prime).astype(np.int64)


def hashed_joint_distribution(src: SourceSpec, lambda_prime: int) -> JointLaw:
    if src.lam not in IRREDUCIBLE:
        raise InvalidParameter(f"no hash family tabulated for lambda={src.lam}")
    if not 1 <= lambda_prime <= src.lam:
        raise InvalidParameter("need 1 <= lambda_prime <= lambda")
    if 2 * src.t * src.lam > JOINT_BITS:
        raise TooLarge(f"2*t*lambda = {2 * src.t * src.lam} exceeds {JOINT_BITS}")
    t, lam, lp = src.t, src.lam, lambda_prime
    table = _block_table(lam, lp)
    w, denom = src.integer_weights()
    if denom * len(w) > 1 << 52:
        raise TooLarge("weights too fine for exact float accumulation")
    n_out = 1 << (t * lp)
    # outputs[g_0, ..., g_{t-1}, row]
    outputs = np.zeros((1,) * t + (len(w),), dtype=np.int64)
    for i in range(t):
        block = table[:, src.support[:, i]]
        shape = [1] * t + [len(w)]
        shape[i] = 1 << lam
        outputs = (outputs << lp) | block.reshape(shape)
    outputs = np.broadcast_to(outputs, (1 << lam,) * t + (len(w),)).reshape(-1, len(w))
    n_g = outputs.shape[0]
    counts = np.empty((n_g, n_out), dtype=np.int64)
    chunk = max(1, (1 << 22) // max(len(w), 1))
    for start in range(0, n_g, chunk):
        part = outputs[start:start + chunk]
        flat = part + (np.arange(part.shape[0], dtype=np.int64) * n_out)[:, None]
        acc = np.bincount(flat.ravel(), weights=np.broadcast_to(w, part.shape).ravel().astype(np.float64),
                          minlength=part.shape[0] * n_out)
        counts[start:start + part.shape[0]] = acc.reshape(part.shape[0], n_out).astype(np.int64)
    return JointLaw(t, lam, lp, counts, denom)


def leftover_bound(lam: int, lambda_prime: int, t: int, delta: float) -> float:
    return math.sqrt(2.0 ** (-(1 - delta) * lam + lambda_prime + math.log2(t)))


def side_condition(lam: int, lambda_prime: int, t: int, delta: float) -> bool:
    return (1 - delta) * lam > lambda_prime + math.log2(t) + 1


@dataclass(frozen=True)
class LeftoverCheck:
    distance: Fraction
    bound: float
    side_condition_met: bool
    passed: bool


def check_leftover_bound(src: SourceSpec, delta: float, lambda_prime: int) -> LeftoverCheck:
    if not 0 <= delta < 1 or not is_dense(src, delta):
        raise PreconditionViolation(f"source is not (1 - {delta})-dense")
    dist = hashed_joint_distribution(src, lambda_prime).distance_to_uniform()
    bound = leftover_bound(src.lam, lambda_prime, src.t, delta)
    return LeftoverCheck(dist, bound, side_condition(src.lam, lambda_prime, src.t, delta),
                         float(dist) <= bound + FLOAT_SLACK)


def pair_collision_probability(src: SourceSpec, lambda_prime: int) -> Fraction:
    """``Pr_{G,Y,Y'}[G(Y) = G(Y')]`` from exact per-block universality.

    Blocks that agree always collide; blocks that differ collide with
    probability ``2^-lambda_prime`` independently.
    """
    w, denom = src.integer_weights()
    eq = (src.support[:, None, :] == src.support[None, :, :]).sum(axis=2)
    total = Fraction(0)
    outer = np.outer(w, w)
    for c in range(src.t + 1):
        mass = int(outer[eq == c].sum())
        if mass:
            total += Fraction(mass, denom * denom) / (1 << (lambda_prime * (src.t - c)))
    return total


def pair_collision_bound(src: SourceSpec, lambda_prime: int, delta: float) -> float:
    t, lam, lp = src.t, src.lam, lambda_prime
    return 2.0 ** (-lp * t) * (1 + 2.0 ** (-(1 - delta) * lam + lp + math.log2(t) + 1))


# --- min-entropy deficiency of conditioned uniform keys -----------------

@dataclass(frozen=True)
class DeficiencyResult:
    violating_mass: Fraction
    bound: Fraction
    buckets: int

    @property
    def holds(self) -> bool:
        return self.violating_mass < self.bound


def deficiency_experiment(F: Callable, n: int, lam: int, s: int, s_prime: int) -> DeficiencyResult:
    """Mass of leakage values z whose conditioned key law has ``H_inf < n*lam - s'``.

    ``F`` maps an int array of packed key tuples (block 0 most significant)
    to an int array of s-bit leakage values.
    """
    total_bits = n * lam
    if total_bits > EXACT_STATE_BITS:
        raise TooLarge(f"n*lambda = {total_bits} exceeds the exact regime")
    if s < 0 or s_prime < s:
        raise InvalidParameter("need 0 <= s <= s'")
    xs = np.arange(1 << total_bits, dtype=np.int64)
    z = np.asarray(F(xs), dtype=np.int64)
    if z.shape != xs.shape or np.any(z < 0) or np.any(z >= (1 << s)):
        raise InvalidInput(f"leakage function must return {s}-bit values, one per input")
    sizes = np.bincount(z)
    sizes = sizes[sizes > 0]
    # H_inf(X_z) = log2 |bucket| for a uniform prior.
    threshold = total_bits - s_prime
    bad = sizes[sizes < (1 << threshold)] if threshold >= 0 else sizes[:0]
    return DeficiencyResult(Fraction(int(bad.sum()), 1 << total_bits),
                            Fraction(2) ** (s - s_prime), len(sizes))


def bit_projection(s: int, n: int, lam: int) -> Callable:
    """Leak the first s bits of the packed key tuple."""
    shift = n * lam - s

    def F(xs):
        return xs >> shift
    return F


def parity_leak(s: int, n: int, lam: int) -> Callable:
    """Leak s parities; parity r covers the bit positions congruent to r mod s."""
    total = n * lam

    def F(xs):
        out = np.zeros_like(xs)
        for r in range(s):
            par = np.zeros_like(xs)
            for pos in range(r, total, s):
                par ^= (xs >> pos) & 1
            out |= par << r
        return out
    return F


def truncated_sum(s: int, n: int, lam: int) -> Callable:
    """Leak the sum of the key blocks modulo 2^s."""
    mask = (1 << lam) - 1

    def F(xs):
        acc = np.zeros_like(xs)
        for i in range(n):
            acc += (xs >> (i * lam)) & mask
        return acc & ((1 << s) - 1)
    return F


def clipped_identity(s: int, n: int, lam: int) -> Callable:
    """Reveal small inputs exactly and lump everything else together.

    Creates singleton buckets, so some leakage values carry heavy deficiency.
    """
    cap = (1 << s) - 1

    def F(xs):
        return np.minimum(xs, cap)
    return F


def sample_bit_fixing(fixed: Mapping[int, int], t: int, lambda_prime: int, rng) -> tuple:
    for i, v in fixed.items():
        if not 0 <= i < t:
            raise InvalidInput(f"fixed index {i} outside 0..{t - 1}")
        if not 0 <= v < (1 << lambda_prime):
            raise InvalidInput(f"fixed value {v} is not a {lambda_prime}-bit string")
    draws = rng.integers(0, 1 << lambda_prime, size=t)
    return tuple(int(fixed.get(i, draws[i])) for i in range(t))


# --- a reproducible corpus of dense sources -----------------------------

@dataclass(frozen=True, eq=False)
class CorpusEntry:
    source_id: str
    source: SourceSpec
    delta: float
    lambda_prime: int


def _random_flat(t, lam, drop_bits, rng):
    size = 1 << (t * lam - drop_bits)
    packed = rng.choice(1 << (t * lam), size=size, replace=False)
    rows = [[(int(p) >> ((t - 1 - i) * lam)) & ((1 << lam) - 1) for i in range(t)] for p in packed]
    return flat_source(t, lam, rows)


def _skewed(t, lam, rng):
    # Uniform, except one point carries double weight and another none.
    base = uniform_source(t, lam)
    m = len(base.weights)
    heavy, empty = rng.choice(m, size=2, replace=False)
    w = [Fraction(1, m)] * m
    w[heavy] = Fraction(2, m)
    w[empty] = Fraction(0)
    keep = [i for i in range(m) if w[i] != 0]
    return SourceSpec(t, lam, base.support[keep], tuple(w[i] for i in keep))


def _correlated(lam, rng):
    # Y1 uniform, Y2 = Y1 xor N with N flat on half of the block values.
    noise = rng.choice(1 << lam, size=1 << (lam - 1), replace=False)
    rows = [(y, y ^ int(v)) for y in range(1 << lam) for v in noise]
    return flat_source(2, lam, rows)


def standard_corpus(seed: int = 2024) -> list[CorpusEntry]:
    """Dense sources with 2*t*lambda <= 24, each paired with its exact density
    deficit delta and the extreme lambda' values meeting
    ``(1 - delta) lambda > lambda' + log t + 1``."""
    rng = np.random.default_rng(seed)
    sources = []
    for lam in (4, 6, 8, 10, 12):
        sources.append((f"uniform-t1-l{lam}", uniform_source(1, lam)))
    for lam in (6, 8, 10, 12):
        sources.append((f"flat-t1-l{lam}-d1", _random_flat(1, lam, 1, rng)))
        sources.append((f"flat-t1-l{lam}-d2", _random_flat(1, lam, 2, rng)))
    for lam in (5, 6):
        sources.append((f"uniform-t2-l{lam}", uniform_source(2, lam)))
        sources.append((f"flat-t2-l{lam}-d1", _random_flat(2, lam, 1, rng)))
        sources.append((f"skewed-t2-l{lam}", _skewed(2, lam, rng)))
        sources.append((f"correlated-t2-l{lam}", _correlated(lam, rng)))
    sources.append(("uniform-t3-l4", uniform_source(3, 4)))
    sources.append(("skewed-t3-l4", _skewed(3, 4, rng)))

    corpus = []
    for sid, src in sources:
        delta = density_deficit(src)
        ok = [lp for lp in range(1, src.lam + 1) if side_condition(src.lam, lp, src.t, delta)]
        # smallest and largest admissible output width
        for lp in sorted({ok[0], ok[-1]}) if ok else ():
            corpus.append(CorpusEntry(f"{sid}-lp{lp}", src, delta, lp))
    return corpus
