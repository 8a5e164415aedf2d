"""
Tests for the count-based deleted-interpolation model and its EM weight estimation.
"""
import os
import sys
import math
import random
import tempfile

import numpy as np

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from utils.corpus_utils import NGramCountTable, NormalizationPolicy, Vocabulary, count_corpus, normalize
from utils.countlm_utils import (CountLM, countlm_prob, estimate_jm_weights, read_weight_buckets,
                                 truncated_mixture_em, write_weight_buckets)
from utils.errors import UsageError


def _corpus(lines, vocab):
    return [normalize(line, vocab, NormalizationPolicy()) for line in lines]


def _random_lines(seed, words, sentences, weights=None):
    rng = random.Random(seed)
    return [" ".join(rng.choices(words, weights, k=rng.randint(1, 8))) for _ in range(sentences)]


def _unigram_table(vocab):
    table = NGramCountTable(1)
    table.add((vocab.lookup("a"),), 2)
    table.add((vocab.lookup("b"),), 1)
    table.add((vocab.eos_id,), 1)
    return table.finalize()


def test_single_em_iteration_by_hand():
    vocab = Vocabulary(["a", "b"])
    lm = CountLM(_unigram_table(vocab), order=1, vocab=vocab)
    assert lm.vocab_size == 4
    report = estimate_jm_weights(lm, _corpus(["a b"], vocab), max_iterations=1)
    assert report.events == 3
    weights = lm.weights[lm.bucket(4)]
    assert math.isclose(weights[0], 4 / 9, abs_tol=1e-12)
    assert math.isclose(weights[1], 5 / 9, abs_tol=1e-12)


def test_interpolated_probability_by_hand():
    vocab = Vocabulary(["a", "b"])
    lm = CountLM(_unigram_table(vocab), order=1, vocab=vocab,
                 weights={b: np.array([0.2, 0.8]) for b in range(8)})
    expected = 0.2 * 0.25 + 0.8 * 0.5
    assert math.isclose(math.exp(countlm_prob(lm, (), vocab.lookup("a"))), expected)
    assert math.isclose(lm.prob((), vocab.unk_id), 0.2 * 0.25)


def test_exact_normalization_on_complete_tables():
    vocab = Vocabulary()
    sequences = _corpus(_random_lines(5, list("abcdef"), 60), vocab)
    lm = CountLM(count_corpus(sequences, 3), vocab=vocab,
                 weights={b: np.array([0.1, 0.2, 0.3, 0.4]) for b in range(8)})
    outcomes = lm.predictable_ids() + [vocab.unk_id]
    histories = [(), (vocab.bos_id,), (vocab.lookup("a"),), (vocab.lookup("a"), vocab.lookup("b")),
                 (vocab.bos_id, vocab.lookup("c")), (vocab.lookup("f"), vocab.lookup("f"))]
    for history in histories:
        total = math.fsum(lm.prob(history, w) for w in outcomes)
        assert abs(total - 1.0) < 1e-6, (history, total)


def test_em_log_likelihood_non_decreasing():
    vocab = Vocabulary()
    words = list("abcdefgh")
    train = _corpus(_random_lines(1, words, 80), vocab)
    heldout = _corpus(_random_lines(2, words, 30), vocab)
    lm = CountLM(count_corpus(train, 3), vocab=vocab)
    report = estimate_jm_weights(lm, heldout, max_iterations=50, tolerance=0.0)
    assert report.results
    for result in report.results.values():
        trace = result.log_likelihoods
        assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:])), trace
        assert abs(result.weights.sum() - 1.0) < 1e-12


def test_em_matches_grid_search():
    words = list("abcdefghij")
    vocab = Vocabulary(words)
    train_weights = [10, 8, 6, 5, 4, 3, 2, 2, 1, 1]
    train = _corpus(_random_lines(3, words, 200, train_weights), vocab)
    heldout = _corpus(_random_lines(4, words, 100), vocab)
    lm = CountLM(count_corpus(train, 1), order=1, vocab=vocab)
    estimate_jm_weights(lm, heldout, max_iterations=2000, tolerance=1e-12)
    learned = lm.weights[lm.bucket(lm.table.history_total(()))][0]

    events = [(s.ids[i]) for s in heldout for i in range(1, len(s.ids))]
    total = lm.table.history_total(())
    relative = np.array([lm.table.count((w,)) / total for w in events])
    uniform = 1.0 / lm.vocab_size
    grid = np.linspace(0.0, 1.0, 1001)
    likelihoods = [np.sum(np.log(g * uniform + (1 - g) * relative)) for g in grid[1:-1]]
    best = grid[1:-1][int(np.argmax(likelihoods))]
    assert abs(learned - best) < 0.02, (learned, best)


def test_truncated_components_keep_monotone_em():
    probs = np.array([[0.1, 0.5, 0.0], [0.1, 0.2, 0.6], [0.1, 0.0, 0.0], [0.1, 0.3, 0.9]])
    active = np.array([[True, True, False], [True, True, True], [True, False, False], [True, True, True]])
    result = truncated_mixture_em(probs, active, max_iterations=40, tolerance=0.0)
    trace = result.log_likelihoods
    assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))


def test_query_locality():
    vocab = Vocabulary()
    train = _corpus(_random_lines(6, list("abcdefgh"), 50), vocab)
    table = count_corpus(train, 3)
    lm = CountLM(table, vocab=vocab)
    scored = _corpus(["a b c", "h g"], vocab)
    table.track_access()
    for sentence in scored:
        lm.sentence_logprob(sentence)
    windows = set()
    for sentence in scored:
        ids = sentence.ids
        windows.update(ids[i:j] for i in range(len(ids)) for j in range(i, len(ids) + 1))
    assert table.access_log
    assert set(table.access_log) <= windows


def test_empty_buckets_fall_back():
    vocab = Vocabulary()
    train = _corpus(["a b", "a b", "a c"], vocab)
    lm = CountLM(count_corpus(train, 2), vocab=vocab)
    report = estimate_jm_weights(lm, _corpus(["a b"], vocab))
    assert report.fallbacks
    for bucket, source in report.fallbacks.items():
        assert np.array_equal(lm.weights[bucket], lm.weights[source])


def test_weight_file_round_trip():
    vocab = Vocabulary()
    train = _corpus(_random_lines(8, list("abcd"), 30), vocab)
    lm = CountLM(count_corpus(train, 2), boundaries=(0, 2, 16), vocab=vocab)
    estimate_jm_weights(lm, _corpus(_random_lines(9, list("abcd"), 10), vocab))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "weights.tsv")
        write_weight_buckets(lm, path)
        order, boundaries, weights = read_weight_buckets(path)
        assert order == 2 and boundaries == (0.0, 2.0, 16.0, math.inf)
        for bucket in range(lm.num_buckets):
            assert np.array_equal(weights[bucket], lm.weights[bucket])


def test_rejects_bad_configuration():
    vocab = Vocabulary()
    table = count_corpus(_corpus(["a b"], vocab), 2)
    for kwargs in ({"order": 3}, {"boundaries": (1, 5)}, {"weights": {0: np.array([0.5, 0.6, 0.1])}}):
        try:
            CountLM(table, vocab=vocab, **kwargs)
            assert False, f"accepted {kwargs}"
        except UsageError:
            pass


if __name__ == "__main__":
    tests = [value for name, value in sorted(globals().items()) if name.startswith("test_") and callable(value)]
    print("🧪 Testing count-LM utilities")
    print("=" * 50)
    for test in tests:
        test()
        print(f"✅ {test.__name__}")
    print(f"\n✅ All {len(tests)} count-LM tests passed!")
