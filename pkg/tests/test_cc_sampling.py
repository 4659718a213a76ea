import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from milrlab import cc_sampling as cc
from milrlab.errors import InvalidInput, InvalidParameter


def _inst(alice, bob, lam=2, target="majority"):
    return cc.CCInstance(len(alice), lam, np.array(alice, dtype=np.uint64), np.array(bob, dtype=np.uint64), target)


def test_eval_examples():
    assert cc.eval_target(_inst([0b10], [0b11])) == 1
    assert cc.eval_target(_inst([3, 1, 2], [0, 0, 0])) == 0
    assert cc.eval_target(_inst([1], [1], lam=1)) == 1
    assert cc.eval_target(_inst([1], [0], lam=1)) == 0
    # tie goes to 1
    assert cc.eval_target(_inst([1, 1], [1, 0], lam=1)) == 1
    assert cc.eval_target(_inst([1, 2, 2], [2, 2, 1], target="sum3")) == (2 + 4 + 2) % 3


@given(st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=50))
def test_parity64(values):
    got = cc.parity64(np.array(values, dtype=np.uint64))
    assert got.tolist() == [bin(v).count("1") % 2 for v in values]


def test_instance_validation(rng):
    with pytest.raises(InvalidInput):
        _inst([4], [0], lam=2)
    with pytest.raises(InvalidInput):
        _inst([3], [0], target="sum3")
    with pytest.raises(InvalidParameter):
        _inst([0], [0], target="xor")
    with pytest.raises(InvalidInput):
        cc.CCInstance(2, 2, np.zeros(2, dtype=np.uint64), np.zeros(3, dtype=np.uint64))


def test_protocol_endpoints(rng):
    inst = cc.random_instance(33, 16, rng)
    assert all(cc.sampling_protocol(inst, 33, rng) == cc.eval_target(inst) for _ in range(5))
    with pytest.raises(InvalidParameter):
        cc.sampling_protocol(inst, 34, rng)
    assert cc.simulate_success(33, 16, 33, 200, rng) == 200
    s0 = cc.simulate_success(33, 16, 0, 20000, rng)
    assert abs(s0 / 20000 - 0.5) < 0.02
    s3 = cc.simulate_success(9, 4, 0, 30000, rng, "sum3")
    assert abs(s3 / 30000 - 1 / 3) < 0.02


def test_vectorised_matches_scalar_protocol(rng):
    # both implementations estimate the same success probability
    n, lam, k, T = 31, 8, 7, 6000
    scalar = 0
    for _ in range(T):
        inst = cc.random_instance(n, lam, rng)
        scalar += cc.sampling_protocol(inst, k, rng) == cc.eval_target(inst)
    vec = cc.simulate_success(n, lam, k, T, rng)
    p = (scalar + vec) / (2 * T)
    assert abs(scalar - vec) / T <= 4 * math.sqrt(2 * p * (1 - p) / T)


def test_advantage_matches_gaussian_oracle():
    # sampled and full sums are jointly normal with correlation sqrt(k/n), so
    # P(same sign) ~ 1/2 + arcsin(sqrt(k/n)) / pi
    n, k, T = 1025, 65, 10_000
    got = cc.simulate_success(n, 16, k, T, np.random.default_rng(8)) / T
    want = 0.5 + math.asin(math.sqrt(k / n)) / math.pi
    assert abs(got - want) <= 3 * math.sqrt(want * (1 - want) / T) + 0.01


def test_curve_and_fit():
    pts = cc.advantage_curve(1025, 16, [0, 16, 64, 256, 1024, 1025], 4000, np.random.default_rng(1))
    assert [p.k for p in pts] == [0, 16, 64, 256, 1024, 1025]
    assert cc.monotone_within(pts)
    assert pts[-1].success == 1.0 and pts[-1].halfwidth == 0
    assert abs(pts[0].success - 0.5) <= 3 * pts[0].sigma + 0.01
    fit = cc.fit_sqrt_law(pts, 1025)
    assert 0.4 < fit.c < 0.7 and fit.r_squared > 0.9
    assert len(fit.residuals) == 6
    with pytest.raises(InvalidParameter):
        cc.advantage_curve(10, 4, [11], 5, np.random.default_rng(1))


def test_fit_needs_positive_k():
    with pytest.raises(InvalidInput):
        cc.fit_sqrt_law([cc.CurvePoint(0, 10, 5)], 10)


def test_monotone_flags_drop():
    pts = [cc.CurvePoint(0, 10000, 9000), cc.CurvePoint(5, 10000, 5000)]
    assert not cc.monotone_within(pts)


def test_curve_map_fn_independent():
    a = cc.advantage_curve(65, 8, [1, 9, 65], 300, np.random.default_rng(2))
    b = cc.advantage_curve(65, 8, [1, 9, 65], 300, np.random.default_rng(2), map_fn=lambda f, xs: [f(x) for x in xs])
    assert a == b
