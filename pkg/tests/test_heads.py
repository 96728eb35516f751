import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onenet.gradcheck import gradient_check
from onenet.graph import ContractError, Graph
from onenet.heads import (
    TagSet,
    classification_loss,
    crf_log_partition,
    crf_loss,
    crf_sequence_score,
    domain_logits,
    viterbi_decode,
)
from onenet.layers import declare_dense
from onenet.params import ParameterStore


# independent oracles ------------------------------------------------------------

def brute_score(E, T, labels, mode="additive"):
    total, prev = 0.0, T.shape[0] - 1
    for i, y in enumerate(labels):
        if mode == "additive":
            total += T[prev][y] + E[i][y]
        else:
            total += T[prev][y] * E[i][y]
        prev = y
    return total


def all_labelings(n, num_labels):
    return itertools.product(range(num_labels), repeat=n)


def brute_log_z(E, T, mode="additive"):
    scores = [brute_score(E, T, y, mode) for y in all_labelings(*E.shape)]
    m = max(scores)
    return m + math.log(sum(math.exp(s - m) for s in scores))


def brute_argmax(E, T):
    best, best_y = -math.inf, None
    for y in all_labelings(*E.shape):
        s = brute_score(E, T, y)
        if s > best:  # strict: earlier (lexicographically lower) labelings win ties
            best, best_y = s, list(y)
    return best_y


def random_crf(rng, n, num_labels, scale=1.0):
    return rng.normal(size=(n, num_labels)) * scale, rng.normal(size=(num_labels + 1, num_labels)) * scale


# sequence score -----------------------------------------------------------------

def test_single_token_score_is_emission():
    E = np.array([[0.3, -1.2, 2.5]])
    T = np.zeros((4, 3))
    T[:3] = 7.0  # only the START row matters for n = 1
    for y in range(3):
        assert crf_sequence_score(E, T, [y]) == E[0, y]


def test_zero_scores():
    E, T = np.zeros((3, 3)), np.zeros((4, 3))
    for y in all_labelings(3, 3):
        assert crf_sequence_score(E, T, list(y)) == 0.0


def test_integer_score_matches_direct_sum():
    rng = np.random.default_rng(0)
    E = rng.integers(-5, 6, size=(3, 3)).astype(float)
    T = rng.integers(-5, 6, size=(4, 3)).astype(float)
    labels = [2, 0, 1]
    expected = T[3, 2] + E[0, 2] + T[2, 0] + E[1, 0] + T[0, 1] + E[2, 1]
    assert crf_sequence_score(E, T, labels) == expected


def test_out_of_range_label():
    with pytest.raises(ValueError):
        crf_sequence_score(np.zeros((2, 3)), np.zeros((4, 3)), [0, 3])


def test_multiplicative_mode_matches_literal_product():
    rng = np.random.default_rng(5)
    E, T = random_crf(rng, 3, 3)
    for y in all_labelings(3, 3):
        assert crf_sequence_score(E, T, list(y), "multiplicative") == pytest.approx(
            brute_score(E, T, y, "multiplicative"), abs=1e-12)
    assert crf_log_partition(E, T, "multiplicative") == pytest.approx(
        brute_log_z(E, T, "multiplicative"), abs=1e-10)


# log partition --------------------------------------------------------------------

def test_single_token_partition():
    E = np.array([[0.5, 1.0, -2.0]])
    T = np.ones((4, 3))
    T[3] = 0.0
    assert crf_log_partition(E, T) == pytest.approx(math.log(sum(math.exp(e) for e in E[0])), abs=1e-14)


def test_zero_partition_counts_labelings():
    assert crf_log_partition(np.zeros((2, 3)), np.zeros((4, 3))) == pytest.approx(math.log(9), abs=1e-14)


def test_partition_matches_enumeration_n4():
    rng = np.random.default_rng(42)
    E, T = random_crf(rng, 4, 3, scale=2.0)
    assert abs(crf_log_partition(E, T) - brute_log_z(E, T)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 4), num_labels=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_normalization(n, num_labels, seed):
    E, T = random_crf(np.random.default_rng(seed), n, num_labels, scale=3.0)
    log_z = crf_log_partition(E, T)
    total = sum(math.exp(crf_sequence_score(E, T, list(y)) - log_z) for y in all_labelings(n, num_labels))
    assert abs(total - 1.0) < 1e-9


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 4), pos=st.integers(0, 3), c=st.floats(-50, 50), seed=st.integers(0, 2**32 - 1))
def test_emission_shift_invariance(n, pos, c, seed):
    pos = pos % n
    E, T = random_crf(np.random.default_rng(seed), n, 3)
    shifted = E.copy()
    shifted[pos] += c
    assert crf_log_partition(shifted, T) == pytest.approx(crf_log_partition(E, T) + c, abs=1e-9)
    assert viterbi_decode(shifted, T) == viterbi_decode(E, T)


# loss -------------------------------------------------------------------------------

def loss_value(E, T, gold, mode="additive"):
    g = Graph()
    return float(crf_loss(g, g.input(E), g.input(T), gold, mode).value)


def test_single_label_loss_is_zero():
    rng = np.random.default_rng(1)
    E, T = random_crf(rng, 3, 1)
    assert loss_value(E, T, [0, 0, 0]) == pytest.approx(0.0, abs=1e-12)


def test_dominant_gold_loss_is_zero():
    E = np.zeros((3, 3))
    for i, y in enumerate([1, 2, 0]):
        E[i, y] = 1e3
    assert loss_value(E, np.zeros((4, 3)), [1, 2, 0]) == pytest.approx(0.0, abs=1e-12)


def test_loss_matches_brute_force_probability():
    rng = np.random.default_rng(3)
    E, T = random_crf(rng, 3, 3)
    gold = (0, 2, 1)
    expected = -(brute_score(E, T, gold) - brute_log_z(E, T))
    assert loss_value(E, T, list(gold)) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_loss_is_non_negative(seed, n):
    rng = np.random.default_rng(seed)
    E, T = random_crf(rng, n, 3, scale=5.0)
    gold = list(rng.integers(0, 3, size=n))
    assert loss_value(E, T, gold) >= -1e-12


def test_invalid_bio_gold_rejected():
    tags = TagSet(["time"])
    g = Graph()
    E, T = g.input(np.zeros((2, 3))), g.input(np.zeros((4, 3)))
    with pytest.raises(ContractError, match="BIO"):
        crf_loss(g, E, T, tags.encode(["O", "I-time"]), tagset=tags)


def test_crf_loss_gradient_3x3():
    rng = np.random.default_rng(7)
    store = ParameterStore()
    store.declare("E", (3, 3), init="zeros")
    store.declare("T", (4, 3), init="zeros")
    store.allocate()
    E, T = random_crf(rng, 3, 3)
    store.assign("E", E)
    store.assign("T", T)

    for mode in ("additive", "multiplicative"):
        def build(s):
            g = Graph(s)
            return g, crf_loss(g, g.param("E"), g.param("T"), [1, 2, 0], mode)

        report = gradient_check(build, store, step=1e-5, tolerance=1e-4)
        assert report.passed, report.lines()


# Viterbi ----------------------------------------------------------------------------

def test_zero_transitions_give_per_position_argmax():
    rng = np.random.default_rng(9)
    E = rng.normal(size=(5, 4))
    assert viterbi_decode(E, np.zeros((5, 4))) == list(np.argmax(E, axis=1))


def test_forbidden_transition_is_never_taken():
    tags = TagSet(["time"])
    o, b, i = tags.encode(["O", "B-time", "I-time"])
    T = np.zeros((4, 3))
    T[o, i] = -1e6
    T[tags.start, i] = -1e6
    E = np.array([[5.0, 0.0, 0.0], [0.0, 0.0, 9.0], [0.0, 0.0, 9.0]])
    path = viterbi_decode(E, T)
    labels = tags.decode(path)
    for prev, cur in zip(["START"] + labels, labels):
        assert not (prev in ("START", "O") and cur == "I-time")


def test_viterbi_ties_go_to_lowest_index():
    assert viterbi_decode(np.zeros((3, 3)), np.zeros((4, 3))) == [0, 0, 0]


def test_viterbi_matches_brute_force_n4():
    rng = np.random.default_rng(11)
    E, T = random_crf(rng, 4, 3)
    assert viterbi_decode(E, T) == brute_argmax(E, T)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), num_labels=st.integers(1, 5))
def test_viterbi_beats_random_labelings(seed, n, num_labels):
    rng = np.random.default_rng(seed)
    E, T = random_crf(rng, n, num_labels)
    best = crf_sequence_score(E, T, viterbi_decode(E, T))
    samples = rng.integers(0, num_labels, size=(1000, n))
    for y in samples:
        assert best >= crf_sequence_score(E, T, list(y)) - 1e-12
    if num_labels ** n <= 256:
        assert viterbi_decode(E, T) == brute_argmax(E, T)


# classifiers --------------------------------------------------------------------------

def cls_loss(logits, gold):
    g = Graph()
    return float(classification_loss(g, g.input(np.asarray(logits, dtype=float)), gold).value)


def test_uniform_logits_loss_is_log_classes():
    assert cls_loss(np.zeros(5), 3) == pytest.approx(math.log(5), abs=1e-15)
    assert cls_loss(np.zeros(5), 3) == pytest.approx(1.6094, abs=1e-4)


def test_saturated_gold_loss():
    logits = np.zeros(4)
    logits[2] = 1e3
    assert cls_loss(logits, 2) == pytest.approx(0.0, abs=1e-12)


def test_loss_matches_scalar_recomputation():
    expected = -math.log(math.exp(2.0) / (math.exp(1.0) + math.exp(2.0) + math.exp(0.5)))
    assert cls_loss([1.0, 2.0, 0.5], 1) == pytest.approx(expected, abs=1e-15)


def test_gold_out_of_range():
    with pytest.raises(ContractError):
        cls_loss([0.0, 1.0], 2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 7))
def test_loss_invariant_to_non_gold_permutation(seed, k):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=k) * 3
    gold = int(rng.integers(k))
    others = [j for j in range(k) if j != gold]
    perm = list(range(k))
    shuffled = list(rng.permutation(others))
    for a, b in zip(others, shuffled):
        perm[a] = b
    assert cls_loss(logits[perm], gold) == pytest.approx(cls_loss(logits, gold), abs=1e-12)


def _domain_store(num_classes, hidden=4, seed=0, zero=False):
    store = ParameterStore()
    declare_dense(store, "domain", hidden, num_classes, "domain-head")
    store.allocate(seed)
    if zero:
        store.flat[:] = 0.0
    return store


def test_zero_domain_head_is_uniform():
    store = _domain_store(5, zero=True)
    g = Graph(store)
    h = g.input(np.random.default_rng(0).normal(size=(3, 4)))
    logits = domain_logits(g, h)
    assert logits.value.shape == (5,)
    probs = np.exp(logits.value) / np.exp(logits.value).sum()
    np.testing.assert_allclose(probs, np.full(5, 0.2), atol=1e-15)


def test_sum_pooling_doubles_for_repeated_sequence():
    store = _domain_store(3, seed=4)
    row = np.array([0.2, -0.4, 0.9, 0.1])
    W, b = store["domain.W"], store["domain.b"]
    for reps in (1, 2):
        g = Graph(store)
        logits = domain_logits(g, g.input(np.tile(row, (reps, 1))))
        expected = [sum(W[k, j] * reps * row[j] for j in range(4)) + b[k] for k in range(3)]
        np.testing.assert_allclose(logits.value, expected, atol=1e-14)


def test_tagset_layout():
    tags = TagSet(["date", "time"])
    assert tags.labels == ["O", "B-date", "I-date", "B-time", "I-time"]
    assert tags.start == 5
    assert tags.decode(tags.encode(["B-time", "I-time", "O"])) == ["B-time", "I-time", "O"]
    with pytest.raises(ContractError):
        tags.encode(["B-city"])
