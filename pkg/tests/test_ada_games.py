import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from milrlab import ada_games as ag
from milrlab import milr
from milrlab.errors import ContractViolation, InvalidInput, InvalidParameter
from milrlab.experiments import _identity_job
from milrlab.streams import trial_rng


class _ConstantMechanism(ag.Mechanism):
    def __init__(self, value):
        super().__init__()
        self.value = value

    def answer(self, values):
        return self.value


class _Recorder(ag.Mechanism):
    def __init__(self):
        super().__init__()
        self.seen = []

    def answer(self, values):
        self.seen.append(values.copy())
        return 0.0


@given(arrays(np.int8, st.integers(1, 40), elements=st.integers(-1, 1)))
def test_ternary_round_trip(values):
    bits = ag.encode_ternary(values)
    assert bits.shape == (values.shape[0], 2)
    assert np.array_equal(ag.decode_ternary(bits), values)


def test_query_validation():
    with pytest.raises(InvalidInput):
        ag.QueryFn([0, 2])
    q = ag.QueryFn([1, -1, 0, 1])
    assert q.N == 4 and q.mean() == 0.25 and q.evaluate([0, 1]).tolist() == [1, -1]


def test_omniscient_never_fails(rng):
    queries = [rng.integers(-1, 2, size=200) for _ in range(5)]
    for play in (ag.game_one, ag.game_two):
        tr = play(ag.OmniscientMechanism(rng), ag.FixedAdversary(queries), 2, domain_factor=100, rng=rng)
        assert tr.outcome == 0 and tr.max_error == 0


def test_constant_one_fails_round_one():
    q = np.array([1, -1] * 50, dtype=np.int8)
    tr = ag.game_one(_ConstantMechanism(1.0), ag.FixedAdversary([q, q]), 5, domain_factor=20)
    assert tr.outcome == 1 and tr.first_failure() == 0
    assert tr.rounds[0].true == 0.0 and tr.rounds[0].answer == 1.0


def test_answers_clamped():
    q = np.zeros(10, dtype=np.int8)
    tr = ag.game_one(_ConstantMechanism(7.0), ag.FixedAdversary([q]), 1, domain_factor=10)
    assert tr.rounds[0].answer == 1.0


def test_natural_confinement(rng):
    # two queries that agree on the sample get identical answers
    mech = _Recorder()
    N = 50
    game_rng = np.random.default_rng(5)
    sample = np.random.default_rng(5).integers(0, N, size=5)
    q1 = rng.integers(-1, 2, size=N).astype(np.int8)
    q2 = rng.integers(-1, 2, size=N).astype(np.int8)
    q2[sample] = q1[sample]
    ag.game_one(mech, ag.FixedAdversary([q1, q2]), 5, domain_factor=10, rng=game_rng)
    assert mech.seen[0].shape == (5,)
    assert np.array_equal(mech.seen[0], mech.seen[1])
    assert np.array_equal(ag.EmpiricalMechanism().answer(mech.seen[0]), ag.EmpiricalMechanism().answer(mech.seen[1]))


class _BadSelect(ag.OmniscientMechanism):
    def __init__(self, sel):
        super().__init__()
        self.sel = sel

    def select(self, N, t):
        return np.array(self.sel)


def test_game_two_selection_contract():
    adv = ag.FixedAdversary([np.zeros(20, dtype=np.int8)])
    tr = ag.game_two(_BadSelect([0, 1]), adv, 2, domain_factor=10)
    assert tr.outcome == 0
    for sel in ([0], [0, 0], [0, 20], [0, 1, 2]):
        with pytest.raises(ContractViolation):
            ag.game_two(_BadSelect(sel), adv, 2, domain_factor=10)


def test_game_errors():
    adv = ag.FixedAdversary([np.zeros(5, dtype=np.int8)])
    with pytest.raises(ContractViolation):
        ag.game_one(ag.EmpiricalMechanism(), adv, 1, domain_factor=10)
    with pytest.raises(InvalidParameter):
        ag.game_one(ag.EmpiricalMechanism(), adv, 0)
    with pytest.raises(InvalidParameter):
        ag.game_one(ag.EmpiricalMechanism(), adv, 1, k=0, domain_factor=5)


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=10))
def test_outcome_recomputes(pairs):
    tr = ag.GameTranscript("one", 3, len(pairs))
    for a, t in pairs:
        tr.rounds.append(ag.RoundRecord("x", a, t))
    tr.outcome = int(any(abs(a - t) > 0.1 for a, t in pairs))
    assert tr.recompute_outcome() == tr.outcome


def test_transcript_jsonl():
    q = np.array([1, 0, -1, 0], dtype=np.int8)
    tr = ag.game_one(ag.OmniscientMechanism(), ag.FixedAdversary([q, q]), 2, domain_factor=2)
    lines = [json.loads(x) for x in tr.to_jsonl().splitlines()]
    assert lines[0] == {"game": "one", "k": 2, "t": 2}
    assert [x["round"] for x in lines[1:3]] == [0, 1]
    assert lines[1]["query"] == ag.query_digest(q) and lines[-1] == {"outcome": 0}


def test_empirical_loses_to_ifpc():
    # t=10, domain factor 100, 20 runs: adversary wins at least 2/3 of the time
    wins = 0
    for run in range(20):
        adv = ag.IFPCAdversary(1000, 10, 0.05, 25, trial_rng(9, run, 0))
        assert adv.rounds == adv.codebook.d + 1
        tr = ag.game_one(ag.EmpiricalMechanism(), adv, 10, domain_factor=100, rng=trial_rng(9, run, 1))
        wins += tr.outcome
    assert wins >= 2 / 3 * 20


def test_ifpc_against_omniscient():
    adv = ag.IFPCAdversary(1000, 10, 0.05, 25, np.random.default_rng(4))
    tr = ag.game_one(ag.OmniscientMechanism(), adv, 10, domain_factor=100)
    assert tr.outcome == 0
    assert len(adv.accused) <= 5
    assert abs(tr.rounds[-1].true) <= 0.1


def test_keysub_capacity_and_replay(rng):
    keys = milr.sample_multipliers(3, rng, size=20).astype(np.uint64)
    dist = ag.pair_distribution(keys, 3)
    assert dist.element_bits == 3 + 5 and dist.description_bits == 20 * 8
    mech = ag.KeySubsampleMechanism(8 * 4 + 7, rng)
    z = mech.preprocess(dist)
    assert mech.capacity(dist) == 4 and len(z.rows) == 4 and len(z.bits) == 32
    assert z.retained == frozenset(int(j) for j in z.rows[:, 0])
    full = ag.KeySubsampleMechanism(dist.description_bits, rng).preprocess(dist)
    assert full.retained == frozenset(range(20))
    with pytest.raises(InvalidParameter):
        ag.KeySubsampleMechanism(7, rng).preprocess(dist)


def test_replay_wins_space_game(rng):
    adv = ag.wrap_b_adversary(ag.IFPCAdversary(40, 4, 0.1, 2, rng), 40, 8, rng)
    tr = ag.game_space(ag.ReplayMechanism(), adv, 10**6)
    assert tr.outcome == 0


def test_space_overflow(rng):
    adv = ag.wrap_b_adversary(ag.FixedAdversary([np.zeros(10, dtype=np.int8)]), 10, 8, rng)
    with pytest.raises(ContractViolation):
        ag.game_space(ag.ReplayMechanism(), adv, 10)


def test_space_true_values_exact(rng):
    # the expectation of an encrypted query under the pair distribution is the plain mean
    for n in (8, 33, 64):
        qs = [rng.integers(-1, 2, size=n).astype(np.int8) for _ in range(3)]
        wadv = ag.wrap_b_adversary(ag.FixedAdversary(qs), n, 16, rng)
        dist = wadv.distribution()
        assert dist.description_bits == n * (16 + max(1, math.ceil(math.log2(n))))
        for q in qs:
            f = wadv.next_query()
            assert np.array_equal(dist.evaluate(f), q)
            assert dist.expectation(f) == ag.QueryFn(q).mean()
            wadv.observe(0.0)


def test_keysub_loses_space_game():
    # reduced scale (t=5, domain factor 40); the full-scale run is in the acceptance suite
    wins = 0
    for run in range(12):
        N, lam = 200, 3
        s = ag.space_budget(lam, N, 5)
        adv = ag.IFPCAdversary(N, 5, 0.05, 10, trial_rng(11, run, 0))
        wrapped = ag.wrap_b_adversary(adv, N, lam, trial_rng(11, run, 3))
        tr = ag.game_space(ag.KeySubsampleMechanism(s, trial_rng(11, run, 1)), wrapped, s)
        wins += tr.outcome
    assert wins >= 2 / 3 * 12


def test_wrapper_identities():
    params = {"t": 5, "domain_factor": 4, "length_constant": 0.5, "gamma": 0.1, "collusion": 3,
              "lam": 8, "space_points": 3}
    for trial in range(4):
        row = _identity_job(params, 99, trial)
        for check in ("c1_vs_a", "c0_vs_b", "c0_vs_a_ciphertexts", "c1_vs_b_ciphertexts",
                      "two_vs_space", "two_vs_space_ciphertexts"):
            assert row[check], (trial, check)


class _OverDeclaring(ag.SpaceMechanism):
    # stores nothing but claims every index as retained
    def preprocess(self, dist):
        return ag.SpaceSummary("", frozenset(range(dist.size)), dist.points[:0])

    def answer(self, summary, query):
        return 0.0


def test_wrapper_retention_budget(rng):
    lam, N, s = 8, 40, 0
    assert N > milr.tau_bar(lam, s)
    adv = ag.FixedAdversary([np.zeros(N, dtype=np.int8)])
    with pytest.raises(ContractViolation):
        ag.game_two(ag.wrap_b(_OverDeclaring(), lam, s, rng), adv, N, domain_factor=1)
    # within tau_bar but more than t points
    small = ag.SpaceSummary("", frozenset(range(3)), np.zeros((0, 2)))
    with pytest.raises(ContractViolation):
        ag._check_retention(small.retained, lam, s, t=2)
    with pytest.raises(InvalidParameter):
        ag.wrap_c(_OverDeclaring(), lam, s, "E2", rng)


def test_gaussian_baseline(rng):
    m = ag.GaussianMechanism(0.0, rng)
    assert m.answer(np.array([1, 1, -1, -1], dtype=np.int8)) == 0.0
    with pytest.raises(InvalidParameter):
        ag.GaussianMechanism(-1.0)
