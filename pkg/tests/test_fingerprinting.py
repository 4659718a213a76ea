import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from milrlab import fingerprinting as fp
from milrlab.errors import InvalidInput, InvalidParameter


def _book(matrix, biases, threshold=1.0):
    matrix = np.asarray(matrix, dtype=np.uint8)
    return fp.Codebook(matrix.shape[0], matrix.shape[1], 1, 0.05, matrix, np.asarray(biases, dtype=float), threshold)


def test_code_length_and_threshold():
    assert fp.code_length(50, 4, 0.05) == math.ceil(100 * 16 * math.log(1000)) == 11053
    assert fp.accusation_threshold(50, 4, 0.05) == pytest.approx(80 * math.log(1000))


def test_generation_shape_and_bias_range(rng):
    cb = fp.fpc_gen(20, 3, 0.1, rng, length_constant=5)
    assert cb.matrix.shape == (20, cb.d) and cb.d == fp.code_length(20, 3, 0.1, 5)
    lo = math.sin(fp.cutoff_angle(3)) ** 2
    assert np.all(cb.biases >= lo - 1e-15) and np.all(cb.biases <= 1 - lo + 1e-15)
    assert set(np.unique(cb.matrix)) <= {0, 1}


def test_generation_errors(rng):
    with pytest.raises(InvalidParameter):
        fp.fpc_gen(3, 4, 0.1, rng)
    with pytest.raises(InvalidParameter):
        fp.fpc_gen(3, 1, 1.0, rng)


def test_score_example():
    cb = _book([[1, 0, 1, 0], [0, 1, 0, 1]], [0.5] * 4)
    scores = fp.fpc_scores(cb, [1, 0, 1, 0])
    assert scores[0] == pytest.approx(2.0)
    assert scores[1] == pytest.approx(-2.0)
    zero = fp.fpc_trace(cb, [0, 0, 0, 0])
    assert np.all(zero.scores == 0) and zero.accused == frozenset()


@given(st.integers(0, 2**32))
def test_scores_match_definition(seed):
    rng = np.random.default_rng(seed)
    cb = fp.fpc_gen(6, 2, 0.2, rng, length_constant=0.5)
    word = rng.integers(0, 2, size=cb.d)
    want = np.zeros(cb.n)
    for i in range(cb.n):
        for j in range(cb.d):
            p = cb.biases[j]
            if word[j]:
                want[i] += math.sqrt((1 - p) / p) if cb.matrix[i, j] else -math.sqrt(p / (1 - p))
    assert np.allclose(fp.fpc_scores(cb, word), want)
    res = fp.fpc_trace(cb, word)
    assert res.accused == frozenset(np.flatnonzero(want > cb.threshold).tolist())


def test_length_mismatch(rng):
    cb = _book([[1, 0]], [0.5, 0.5])
    with pytest.raises(InvalidInput):
        fp.fpc_trace(cb, [1, 0, 1])


def test_marking_examples():
    cb = _book([[0, 0], [1, 1]], [0.5, 0.5])
    assert fp.check_marking(cb, [0, 1])
    assert fp.check_marking(cb, cb.row(0))
    assert not fp.check_marking(cb, [0, 1], users=[0])
    const = _book([[0, 1], [0, 0]], [0.5, 0.5])
    assert not fp.check_marking(const, [1, 0])


def test_pirate_examples(rng):
    row = np.array([[1, 0, 1, 1]], dtype=np.uint8)
    for name, pirate in fp.PIRATES.items():
        assert pirate(row, rng).tolist() == [1, 0, 1, 1], name
    assert fp.pirate_majority([[0, 0], [1, 1]]).tolist() == [1, 1]
    assert fp.pirate_minority([[0, 0], [1, 1]]).tolist() == [0, 0]
    assert fp.pirate_minority([[0, 1, 1], [0, 1, 0], [0, 1, 0]]).tolist() == [0, 1, 1]
    with pytest.raises(InvalidParameter):
        fp.get_pirate("nope")


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 30)), elements=st.integers(0, 1)),
       st.sampled_from(sorted(fp.PIRATES)), st.integers(0, 2**32))
def test_pirates_respect_marking(rows, name, seed):
    word = fp.get_pirate(name)(rows, np.random.default_rng(seed))
    assert fp.marking_holds(rows, word)


def test_save_load_round_trip(tmp_path, rng):
    cb = fp.fpc_gen(7, 2, 0.1, rng, length_constant=1)
    path = tmp_path / "cb.bin"
    cb.save(path)
    back = fp.Codebook.load(path)
    assert (back.n, back.d, back.k, back.gamma, back.threshold) == (cb.n, cb.d, cb.k, cb.gamma, cb.threshold)
    assert np.array_equal(back.matrix, cb.matrix) and np.array_equal(back.biases, cb.biases)
    assert path.stat().st_size == 40 + 8 * cb.d + (cb.n * cb.d + 7) // 8
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(InvalidInput):
        fp.Codebook.load(path)


def test_majority_pirate_is_caught():
    # completeness oracle: a colluder is accused in at least 90% of trials
    rng = np.random.default_rng(21)
    trials = [fp.run_fpc_trial(50, 4, 0.05, "majority", rng) for _ in range(60)]
    assert sum(t.caught for t in trials) >= 0.9 * len(trials)
    assert all(t.marking_ok for t in trials)
    assert sum(t.false_accusation for t in trials) <= 0.05 * 60 + 3 * math.sqrt(0.05 * 60)


def test_trial_fields(rng):
    t = fp.run_fpc_trial(10, 2, 0.1, "random_row", rng, length_constant=5)
    assert len(t.coalition) == 2 and set(t.accused) <= set(range(10))
    assert t.completeness_failure == (t.marking_ok and not t.accused)
