"""
Tests for counts-of-counts estimation and modified Kneser-Ney smoothing.

The Kneser-Ney oracle below recomputes interpolated probabilities
directly from raw sentences, independently of the trainer.
"""
import os
import sys
import math
import random
import tempfile
from collections import Counter, defaultdict

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from utils.corpus_utils import NGramCountTable, NormalizationPolicy, Vocabulary, count_corpus, normalize
from utils.errors import DiscountUndefinedError, IllConditionedFitError, UndefinedPerplexityError
from utils.smoothing_utils import (CountOfCounts, SentenceScorer, UniformModel, coc_law_points, estimate_alpha,
                                   extrapolate_count_of_counts, kn_discounts, perplexity, read_arpa,
                                   read_coc_file, train_kn, write_arpa, write_coc_file)

FIXTURE = ["a b", "a b", "a c"]


def _corpus(lines, vocab=None):
    vocab = vocab or Vocabulary()
    return [normalize(line, vocab, NormalizationPolicy()) for line in lines], vocab


def _law_coc(alpha, lo=1, hi=40, top=1e12):
    """Counts-of-counts that follow log F(c) - log F(c+1) = alpha / c exactly."""
    frequencies = {lo: top}
    for c in range(lo, hi):
        frequencies[c + 1] = frequencies[c] * math.exp(-alpha / c)
    return CountOfCounts(2, frequencies)


class KneserNeyOracle:
    """Interpolated modified Kneser-Ney computed from scratch for one query at a time."""

    def __init__(self, sequences, n, words, bos=0):
        self.n, self.bos, self.words = n, bos, sorted(words)
        raw = [Counter() for _ in range(n)]
        for ids in sequences:
            for i in range(1, len(ids)):
                for k in range(1, n + 1):
                    if i - k + 1 >= 0:
                        raw[k - 1][tuple(ids[i - k + 1:i + 1])] += 1
        self.counts = []
        for k in range(1, n + 1):
            if k == n:
                table = Counter(raw[k - 1])
            else:
                left = defaultdict(set)
                for gram in raw[k]:
                    left[gram[1:]].add(gram[0])
                table = Counter({g: (c if g[0] == bos else len(left[g])) for g, c in raw[k - 1].items()})
            table.pop((bos,), None)
            self.counts.append(+table)
        self.discounts = []
        for table in self.counts:
            f = Counter(table.values())
            y = f[1] / (f[1] + 2 * f[2])
            d3 = 3 - 4 * y * f[4] / f[3] if f[3] else 2 - 3 * y * f[3] / f[2]
            self.discounts.append((1 - 2 * y * f[2] / f[1], 2 - 3 * y * f[3] / f[2], d3))

    def _d(self, k, c):
        d1, d2, d3 = self.discounts[k - 1]
        return 0.0 if c == 0 else min(d1 if c == 1 else d2 if c == 2 else d3, c)

    def prob(self, history, word):
        history = tuple(history)[-(self.n - 1):] if self.n > 1 else ()
        k = len(history) + 1
        if k == 1:
            table = self.counts[0]
            total = sum(table.values())
            gamma = sum(self._d(1, c) for c in table.values()) / total
            c = table.get((word,), 0)
            return (c - self._d(1, c)) / total + gamma / len(self.words)
        table = self.counts[k - 1]
        extensions = {g: c for g, c in table.items() if g[:-1] == history}
        lower = self.prob(history[1:], word)
        if not extensions:
            return lower
        total = sum(extensions.values())
        gamma = sum(self._d(k, c) for c in extensions.values()) / total
        c = extensions.get(history + (word,), 0)
        return (c - self._d(k, c)) / total + gamma * lower


def test_discounts_hand_values():
    coc = CountOfCounts(2, {1: 2, 2: 2, 3: 1})
    d1, d2, d3 = kn_discounts(coc)
    assert math.isclose(d1, 1 / 3) and math.isclose(d2, 1.5) and math.isclose(d3, 3.0)


def test_discount_undefined_without_singletons():
    coc = CountOfCounts(1, {2: 5, 3: 1})
    try:
        kn_discounts(coc)
        assert False, "missing F(1) accepted"
    except DiscountUndefinedError as e:
        assert e.order == 1
    assert kn_discounts(coc, fallback_discount=0.5) == (0.5, 0.5, 0.5)


def test_fixture_hand_probabilities():
    sequences, vocab = _corpus(FIXTURE)
    model = train_kn(count_corpus(sequences, 2), vocab)
    a, b = vocab.lookup("a"), vocab.lookup("b")
    p_b = 0.4 / 5 + 0.76 / 5
    assert math.isclose(math.exp(model.logprob((), b)), p_b, abs_tol=1e-12)
    expected = 0.5 / 3 + (1.5 + 1 / 3) / 3 * p_b
    assert math.isclose(math.exp(model.logprob((a,), b)), expected, abs_tol=1e-12)
    assert model.logprob((), vocab.bos_id) == -math.inf


def _zipf_lines(seed, vocabulary=200, sentences=200):
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(vocabulary)]
    weights = [1.0 / (i + 1) for i in range(vocabulary)]
    return [" ".join(rng.choices(words, weights, k=rng.randint(1, 10))) for _ in range(sentences)]


def test_matches_oracle_on_fixture():
    sequences, vocab = _corpus(FIXTURE)
    model = train_kn(count_corpus(sequences, 2), vocab)
    oracle = KneserNeyOracle([s.ids for s in sequences], 2, model.predictable_ids())
    for context in [(vocab.bos_id,), (vocab.lookup("a"),), (vocab.lookup("b"),), (vocab.lookup("c"),)]:
        for w in model.predictable_ids():
            assert math.isclose(math.exp(model.logprob(context, w)), oracle.prob(context, w), abs_tol=1e-10), \
                (context, w)


def test_matches_oracle_on_trigrams():
    sequences, vocab = _corpus(_zipf_lines(3))
    model = train_kn(count_corpus(sequences, 3), vocab)
    oracle = KneserNeyOracle([s.ids for s in sequences], 3, model.predictable_ids())
    w0, w1, w2 = (vocab.lookup(f"w{i}") for i in range(3))
    contexts = [(vocab.bos_id,), (vocab.bos_id, w0), (w0, w0), (w1, w0), (w2, w1), (w0,)]
    for context in contexts:
        for w in model.predictable_ids()[:60]:
            assert math.isclose(math.exp(model.logprob(context, w)), oracle.prob(context, w), abs_tol=1e-10), \
                (context, w)


def test_normalization_on_zipf_corpora():
    for seed in (11, 12):
        sequences, vocab = _corpus(_zipf_lines(seed))
        model = train_kn(count_corpus(sequences, 3), vocab, fallback_discount=0.5)
        assert len(model.predictable_ids()) <= 204
        for context in model.contexts():
            total = math.fsum(math.exp(model.logprob(context, w)) for w in model.predictable_ids())
            assert abs(total - 1.0) < 1e-6, (context, total)


def test_arpa_round_trip():
    sequences, vocab = _corpus(FIXTURE)
    model = train_kn(count_corpus(sequences, 2), vocab)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.arpa")
        write_arpa(model, path)
        loaded, loaded_vocab = read_arpa(path)
        for context in [(), (vocab.lookup("a"),), (vocab.bos_id,)]:
            for w in model.predictable_ids():
                mapped = tuple(loaded_vocab.lookup(vocab.token(i)) for i in context)
                got = loaded.logprob(mapped, loaded_vocab.lookup(vocab.token(w)))
                assert abs(got - model.logprob(context, w)) < 1e-5


def test_alpha_recovered_from_law():
    coc = _law_coc(1.5)
    fit = estimate_alpha(coc, (2, 20))
    assert abs(fit.alpha - 1.5) < 1e-9
    for c, y in coc_law_points(coc, (2, 20)):
        assert abs(y - c / 1.5) < 1e-6


def test_extrapolation_doubles_for_log_two():
    coc = CountOfCounts(2, {2: 100, 3: 50, 4: 30})
    filled = extrapolate_count_of_counts(coc, math.log(2), target_c=1)
    assert filled.frequency(1) == 200
    assert filled.is_extrapolated(1) and not filled.is_extrapolated(2)


def test_extrapolation_noop_when_observed():
    coc = CountOfCounts(2, {1: 10, 2: 4})
    assert extrapolate_count_of_counts(coc, 1.0, target_c=1).frequencies == coc.frequencies


def test_ill_conditioned_fit():
    try:
        estimate_alpha(CountOfCounts(2, {2: 10, 3: 10, 4: 5}), (2, 4))
        assert False, "flat counts-of-counts accepted"
    except IllConditionedFitError as e:
        assert e.count_value == 2


def _cutoff_table():
    """External bigram table without singletons; unigram counts intact."""
    vocab = Vocabulary(["a", "b", "c", "d", "e", "f", "g"])
    ids = {t: vocab.lookup(t) for t in "abcdefg"}
    table = NGramCountTable(2, external=True)
    for token, count in zip("abcdefg", (1, 1, 1, 2, 2, 3, 4)):
        table.add((ids[token],), count)
    table.add((vocab.eos_id,), 5)
    for ngram, count in [(("<s>", "a"), 2), (("a", "b"), 2), (("b", "c"), 2), (("c", "d"), 3),
                         (("d", "e"), 3), (("e", "f"), 4), (("f", "</s>"), 5)]:
        table.add(tuple(vocab.lookup(t) for t in ngram), count)
    return table.finalize(), vocab


def test_training_after_extrapolation():
    counts, vocab = _cutoff_table()
    top = CountOfCounts.from_table(counts, 2)
    assert top.frequency(1) == 0
    try:
        train_kn(counts, vocab)
        assert False, "training without F(1) succeeded"
    except DiscountUndefinedError as e:
        assert e.order == 2
    filled = extrapolate_count_of_counts(top, math.log(2), target_c=1)
    assert filled.frequency(1) == 6
    model = train_kn(counts, vocab, coc_override={2: filled})
    assert model.metadata["smoothing"] == "KN-from-counts"
    d1, d2, d3 = model.metadata["discounts"][2]
    assert math.isclose(d1, 0.5) and math.isclose(d2, 1.0) and math.isclose(d3, 2.0)
    for context in model.contexts():
        total = math.fsum(math.exp(model.logprob(context, w)) for w in model.predictable_ids())
        assert abs(total - 1.0) < 1e-6


def test_coc_file_round_trip():
    coc = extrapolate_count_of_counts(CountOfCounts(3, {2: 40, 3: 20}), 1.0)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "coc.tsv")
        write_coc_file([coc], path)
        loaded = read_coc_file(path)[3]
        assert loaded.frequencies == coc.frequencies
        assert loaded.is_extrapolated(1)


def test_unigram_fallback_discount():
    sequences, vocab = _corpus(["a"])
    model = train_kn(count_corpus(sequences, 1), vocab, fallback_discount=0.5)
    a = vocab.lookup("a")
    assert math.isclose(math.exp(model.logprob((), a)), 0.25 + 0.5 / 3, abs_tol=1e-12)
    assert math.isclose(math.exp(model.logprob((), vocab.unk_id)), 1 / 6, abs_tol=1e-12)


def test_uniform_model_perplexity():
    vocab = Vocabulary(["a", "b", "c"])
    scorer = UniformModel(range(1, len(vocab)))
    sequences, _ = _corpus(["a b", "c"], vocab)
    report = perplexity(scorer, sequences)
    assert math.isclose(report.perplexity, len(vocab) - 1)
    assert report.tokens == 5
    assert math.isclose(scorer.sentence_logprob(sequences[0]), -3 * math.log(len(vocab) - 1))


def test_perplexity_skip_mode_and_empty():
    sequences, vocab = _corpus(FIXTURE)
    model = train_kn(count_corpus(sequences, 2), vocab)
    unseen = normalize("a zzz", vocab)
    report = perplexity(model, [unseen], oov_mode="skip")
    assert report.oovs == 1 and report.skipped == 1 and report.tokens == 2
    try:
        perplexity(model, [])
        assert False, "empty corpus gave a perplexity"
    except UndefinedPerplexityError:
        pass

class MaximumLikelihoodModel(SentenceScorer):
    """Unsmoothed relative frequencies of the top order."""

    def __init__(self, table):
        self.table = table

    def conditional_logprob(self, prefix, word):
        history = tuple(prefix)[-(self.table.order - 1):]
        count = self.table.count(history + (word,))
        return math.log(count / self.table.history_total(history)) if count else -math.inf


def test_training_perplexity_mle_below_kn():
    sequences, vocab = _corpus(FIXTURE)
    table = count_corpus(sequences, 2)
    mle = perplexity(MaximumLikelihoodModel(table), sequences)
    kn = perplexity(train_kn(table, vocab), sequences)
    assert math.isclose(mle.perplexity, (2 / 3 * 2 / 3 * 1 / 3) ** (-1 / 9))
    assert mle.perplexity <= kn.perplexity


def test_hand_traced_perplexity():
    sequences, vocab = _corpus(FIXTURE)
    model = train_kn(count_corpus(sequences, 2), vocab)
    test, _ = _corpus(["a b", "a c"], vocab)
    # unigram continuation estimates: a, b, c -> 1.16/5 and </s> -> 0.76/5
    # after <s>: D(3+) = 3 removes the whole count, so P(a | <s>) is the unigram estimate
    # after a: D(2) = 1.5 and D(1) = 1/3 leave 11/18 for the unigram
    p_a = 1.16 / 5
    traced = [[p_a, 3 / 18 + 11 / 18 * p_a, 0.5 / 2 + 1.5 / 2 * 0.152],
              [p_a, 4 / 18 + 11 / 18 * p_a, 2 / 3 + 1 / 3 * 0.152]]
    assert math.isclose(traced[1][1], 0.364) and math.isclose(traced[0][2], 0.364)
    for sentence, expected in zip(test, traced):
        got = model.token_logprobs(sentence)
        assert all(math.isclose(g, math.log(p), rel_tol=1e-9) for g, p in zip(got, expected)), (got, expected)
    logprob = math.fsum(math.log(p) for row in traced for p in row)
    report = perplexity(model, test)
    assert report.tokens == 6
    assert math.isclose(report.perplexity, math.exp(-logprob / 6), rel_tol=1e-9)


def _markov_lines(seed, words=30, sentences=400):
    """Each word is followed by a fixed successor 80% of the time."""
    rng = random.Random(seed)
    lines = []
    for _ in range(sentences):
        current = rng.randrange(words)
        tokens = [current]
        for _ in range(rng.randint(2, 9)):
            current = (current * 7 + 3) % words if rng.random() < 0.8 else rng.randrange(words)
            tokens.append(current)
        lines.append(" ".join(f"w{t}" for t in tokens))
    return lines


def test_heldout_bigram_beats_unigram():
    sequences, vocab = _corpus(_markov_lines(31))
    heldout, _ = _corpus(_markov_lines(32, sentences=100), vocab)
    unigram = train_kn(count_corpus(sequences, 1), vocab, fallback_discount=0.5)
    bigram = train_kn(count_corpus(sequences, 2), vocab, fallback_discount=0.5)
    assert perplexity(bigram, heldout).perplexity <= perplexity(unigram, heldout).perplexity


def test_extrapolation_with_four_gram_alpha():
    filled = extrapolate_count_of_counts(CountOfCounts(4, {2: 10 ** 6, 3: 10 ** 5}), 2.42, target_c=1)
    assert filled.frequency(1) == round(10 ** 6 * math.exp(2.42))
    assert abs(filled.frequency(1) - 11_246_000) < 1_000


def test_extrapolate_then_refit_alpha():
    coc = _law_coc(1.5, lo=3)
    alpha = estimate_alpha(coc, (3, 20)).alpha
    filled = extrapolate_count_of_counts(coc, alpha, target_c=1)
    assert filled.is_extrapolated(1) and filled.is_extrapolated(2)
    assert abs(estimate_alpha(filled, (1, 20)).alpha - alpha) < 1e-6



if __name__ == "__main__":
    tests = [value for name, value in sorted(globals().items()) if name.startswith("test_") and callable(value)]
    print("🧪 Testing smoothing utilities")
    print("=" * 50)
    for test in tests:
        test()
        print(f"✅ {test.__name__}")
    print(f"\n✅ All {len(tests)} smoothing tests passed!")
