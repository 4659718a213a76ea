"""Multiply-then-truncate universal hashing over GF(2^lambda).

``h_a(x)`` is the low ``lambda_prime`` bits of the field product ``a * x``.
For ``x != y`` the map ``a -> a * (x ^ y)`` is a bijection of the field, so
exactly ``2^(lambda - lambda_prime)`` multipliers collide and the collision
probability is exactly ``2^-lambda_prime``.

Field elements are ints whose bit ``i`` is the coefficient of ``x^i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numba
import numpy as np

from .errors import InvalidInput, InvalidParameter

# Reduction polynomials, including the leading x^lambda term.
IRREDUCIBLE = {
    1: 0b11,                 # x + 1
    2: 0b111,                # x^2 + x + 1
    3: 0b1011,               # x^3 + x + 1
    4: 0x13,                 # x^4 + x + 1
    5: 0x25,                 # x^5 + x^2 + 1
    6: 0x43,                 # x^6 + x + 1
    7: 0x83,                 # x^7 + x + 1
    8: 0x11B,                # x^8 + x^4 + x^3 + x + 1
    9: 0x211,                # x^9 + x^4 + 1
    10: 0x409,               # x^10 + x^3 + 1
    11: 0x805,               # x^11 + x^2 + 1
    12: 0x1053,              # x^12 + x^6 + x^4 + x + 1
    13: 0x201B,              # x^13 + x^4 + x^3 + x + 1
    14: 0x4443,              # x^14 + x^10 + x^6 + x + 1
    15: 0x8003,              # x^15 + x + 1
    16: 0x1002B,             # x^16 + x^5 + x^3 + x + 1
    32: 0x1_0000_008D,       # x^32 + x^7 + x^3 + x^2 + 1
    64: 0x1_0000_0000_0000_001B,  # x^64 + x^4 + x^3 + x + 1
}

SUPPORTED_LAMBDAS = tuple(sorted(IRREDUCIBLE))


def _check_lambda(lam: int) -> None:
    if lam not in IRREDUCIBLE:
        raise InvalidParameter(f"no irreducible polynomial tabulated for lambda={lam}")


def gf_mul(a: int, b: int, lam: int) -> int:
    """Product of two field elements in GF(2^lam)."""
    _check_lambda(lam)
    modulus = IRREDUCIBLE[lam]
    top = 1 << lam
    acc = 0
    while b:
        if b & 1:
            acc ^= a
        b >>= 1
        a <<= 1
        if a & top:
            a ^= modulus
    return acc


@dataclass(frozen=True)
class HashFunc:
    multiplier: int
    lam: int
    lambda_prime: int

    def __post_init__(self):
        _check_lambda(self.lam)
        if not 1 <= self.lambda_prime <= self.lam:
            raise InvalidParameter("need 1 <= lambda_prime <= lambda")
        if not 0 <= self.multiplier < (1 << self.lam):
            raise InvalidInput("multiplier is not a field element")

    @property
    def modulus(self) -> int:
        return IRREDUCIBLE[self.lam]

    def serialize(self) -> str:
        return f"{self.lam}:{self.lambda_prime}:{self.multiplier:0{(self.lam + 3) // 4}x}"

    @classmethod
    def parse(cls, text: str) -> "HashFunc":
        lam, lp, mult = text.split(":")
        return cls(int(mult, 16), int(lam), int(lp))


def sample_hash(lam: int, lambda_prime: int, rng: np.random.Generator) -> HashFunc:
    _check_lambda(lam)
    if not 1 <= lambda_prime <= lam:
        raise InvalidParameter("need 1 <= lambda_prime <= lambda")
    return HashFunc(int(sample_multipliers(lam, rng)), lam, lambda_prime)


def sample_multipliers(lam: int, rng: np.random.Generator, size=None):
    """Uniform field elements as uint64 (an array when ``size`` is given)."""
    _check_lambda(lam)
    return rng.integers(0, 1 << lam, size=size, dtype=np.uint64, endpoint=False)


def eval_hash(h: HashFunc, x: int) -> int:
    if not 0 <= x < (1 << h.lam):
        raise InvalidInput(f"input does not fit in {h.lam} bits")
    return gf_mul(h.multiplier, x, h.lam) & ((1 << h.lambda_prime) - 1)


@numba.njit(cache=True)
def _mul_trunc(a, x, lam, low_poly, field_mask, out_mask, out):
    one = np.uint64(1)
    for i in range(a.shape[0]):
        ai = a[i]
        xi = x[i]
        acc = np.uint64(0)
        for _ in range(lam):
            if ai & one:
                acc ^= xi
            ai >>= one
            carry = (xi >> np.uint64(lam - 1)) & one
            xi = (xi << one) & field_mask
            if carry:
                xi ^= low_poly
        out[i] = acc & out_mask


def eval_hash_many(multipliers, xs, lam: int, lambda_prime: int) -> np.ndarray:
    """Vectorised ``eval_hash``; multipliers and inputs broadcast together."""
    _check_lambda(lam)
    if not 1 <= lambda_prime <= lam:
        raise InvalidParameter("need 1 <= lambda_prime <= lambda")
    a, x = np.broadcast_arrays(np.asarray(multipliers, dtype=np.uint64), np.asarray(xs, dtype=np.uint64))
    field_mask = (1 << lam) - 1
    if lam < 64 and (np.any(a > field_mask) or np.any(x > field_mask)):
        raise InvalidInput(f"inputs do not fit in {lam} bits")
    shape = a.shape
    a = np.ascontiguousarray(a).reshape(-1)
    x = np.ascontiguousarray(x).reshape(-1)
    out = np.empty_like(a)
    _mul_trunc(
        a, x, lam,
        np.uint64(IRREDUCIBLE[lam] & field_mask),
        np.uint64(field_mask),
        np.uint64((1 << lambda_prime) - 1),
        out,
    )
    return out.reshape(shape)


def collision_prob_exact(lam: int, lambda_prime: int, x: int, y: int) -> Fraction:
    """Exact ``Pr_a[h_a(x) = h_a(y)]`` by enumerating every multiplier (lambda <= 16)."""
    if x == y:
        raise InvalidInput("collision probability needs x != y")
    if lam > 16:
        raise InvalidParameter("exhaustive enumeration is limited to lambda <= 16")
    _check_lambda(lam)
    a = np.arange(1 << lam, dtype=np.uint64)
    hx = eval_hash_many(a, x, lam, lambda_prime)
    hy = eval_hash_many(a, y, lam, lambda_prime)
    return Fraction(int(np.count_nonzero(hx == hy)), 1 << lam)
