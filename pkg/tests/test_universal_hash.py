from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from milrlab.errors import InvalidInput, InvalidParameter
from milrlab.universal_hash import (IRREDUCIBLE, SUPPORTED_LAMBDAS, HashFunc, collision_prob_exact, eval_hash,
                                    eval_hash_many, gf_mul, sample_hash, sample_multipliers)

X = sympy.Symbol("x")


def _poly(v: int) -> sympy.Poly:
    coeffs = [int(b) for b in bin(v)[2:]] if v else [0]
    return sympy.Poly(coeffs, X, modulus=2)


def _to_int(p: sympy.Poly) -> int:
    return sum(1 << i for (i,), c in p.terms() if c % 2)


def sympy_gf_mul(a: int, b: int, lam: int) -> int:
    return _to_int((_poly(a) * _poly(b)).rem(_poly(IRREDUCIBLE[lam])))


@pytest.mark.parametrize("lam", SUPPORTED_LAMBDAS)
def test_table_polynomials_are_irreducible(lam):
    p = _poly(IRREDUCIBLE[lam])
    assert p.degree() == lam
    assert p.is_irreducible


@pytest.mark.parametrize("lam", [3, 8, 13, 32, 64])
@given(data=st.data())
def test_gf_mul_matches_polynomial_arithmetic(lam, data):
    a = data.draw(st.integers(0, (1 << lam) - 1))
    b = data.draw(st.integers(0, (1 << lam) - 1))
    assert gf_mul(a, b, lam) == sympy_gf_mul(a, b, lam)


def test_worked_example_gf16():
    # (x + 1)(x^2 + 1) = x^3 + x^2 + x + 1 needs no reduction
    assert gf_mul(0x3, 0x5, 4) == 0xF
    assert eval_hash(HashFunc(0x3, 4, 2), 0x5) == 0b11


def test_zero_and_identity_multipliers():
    for x in range(256):
        assert eval_hash(HashFunc(0, 8, 3), x) == 0
        assert eval_hash(HashFunc(1, 8, 8), x) == x


@pytest.mark.parametrize("lam", [4, 8, 16, 32, 64])
def test_vectorised_matches_scalar(lam, rng):
    a = sample_multipliers(lam, rng, size=300)
    x = sample_multipliers(lam, rng, size=300)
    for lp in sorted({1, max(1, lam // 10), lam // 2, lam}):
        got = eval_hash_many(a, x, lam, lp)
        want = [eval_hash(HashFunc(int(m), lam, lp), int(v)) for m, v in zip(a, x)]
        assert got.tolist() == want


@given(st.integers(0, 2**12 - 1), st.integers(0, 2**12 - 1), st.integers(0, 2**12 - 1), st.integers(1, 12))
def test_linearity(a, x, y, lp):
    h = HashFunc(a, 12, lp)
    assert eval_hash(h, x ^ y) == eval_hash(h, x) ^ eval_hash(h, y)


def _brute_collision(lam, lp, x, y):
    mask = (1 << lp) - 1
    hits = sum((gf_mul(a, x, lam) & mask) == (gf_mul(a, y, lam) & mask) for a in range(1 << lam))
    return Fraction(hits, 1 << lam)


def test_collision_examples():
    assert collision_prob_exact(4, 2, 0x3, 0x5) == Fraction(4, 16) == _brute_collision(4, 2, 0x3, 0x5)
    assert collision_prob_exact(8, 1, 7, 200) == Fraction(1, 2)
    assert collision_prob_exact(6, 6, 1, 2) == Fraction(1, 64)


@given(st.integers(1, 12).flatmap(lambda lam: st.tuples(
    st.just(lam), st.integers(1, lam), st.integers(0, (1 << lam) - 1), st.integers(0, (1 << lam) - 1))))
def test_universality(args):
    lam, lp, x, y = args
    if x == y:
        with pytest.raises(InvalidInput):
            collision_prob_exact(lam, lp, x, y)
    else:
        assert collision_prob_exact(lam, lp, x, y) == Fraction(1, 1 << lp)


def test_sample_hash_uniform_over_multipliers():
    rng = np.random.default_rng(5)
    draws = sample_multipliers(8, rng, size=100_000)
    counts = np.bincount(draws.astype(np.int64), minlength=256)
    p = 1 / 256
    sigma = np.sqrt(100_000 * p * (1 - p))
    # each count within 3 sigma, allowing a couple of the 256 cells to stray
    assert np.count_nonzero(np.abs(counts - 100_000 * p) > 3 * sigma) <= 3
    assert np.all(np.abs(counts - 100_000 * p) < 5 * sigma)


def test_sample_hash_shape(rng):
    h = sample_hash(8, 1, rng)
    assert h.lam == 8 and h.lambda_prime == 1 and 0 <= h.multiplier < 256


def test_serialisation_round_trip():
    h = HashFunc(0xBEEF, 16, 3)
    assert h.serialize() == "16:3:beef"
    assert HashFunc.parse(h.serialize()) == h


def test_errors(rng):
    with pytest.raises(InvalidParameter):
        sample_hash(17, 1, rng)
    with pytest.raises(InvalidParameter):
        sample_hash(8, 9, rng)
    with pytest.raises(InvalidInput):
        eval_hash(HashFunc(1, 4, 2), 16)
    with pytest.raises(InvalidInput):
        eval_hash_many([16], [1], 4, 2)
