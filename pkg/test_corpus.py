"""
Tests for vocabulary, normalization and N-gram counting.
Run directly (python test_corpus.py) or through pytest.
"""
import os
import sys
import gzip
import tempfile
from collections import Counter

# Add the project root to the Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from utils.corpus_utils import (NUMBER, UNK, NGramCountTable, NormalizationPolicy, TokenSequence, Vocabulary,
                                apply_cutoff, count_corpus, count_corpus_parallel, merge_tables, normalize,
                                normalize_tokens, prediction_windows, read_count_file, read_count_files,
                                read_text_corpus, render, sniff_count_order, write_count_file)
from utils.errors import CountFileError, InputFormatError

SENTENCES = ["a b", "a b", "a c"]


def _sequences(lines, vocab=None, policy=NormalizationPolicy()):
    vocab = vocab or Vocabulary()
    return [normalize(line, vocab, policy) for line in lines], vocab


def test_reserved_ids():
    vocab = Vocabulary(["x"])
    assert (vocab.bos_id, vocab.eos_id, vocab.unk_id, vocab.number_id) == (0, 1, 2, 3)
    assert vocab.lookup("x") == 4
    assert vocab.lookup("never") == vocab.unk_id
    vocab.freeze()
    assert vocab.add("new") == vocab.unk_id
    assert "new" not in vocab


def test_normalization_policy():
    policy = NormalizationPolicy(lowercase=True, map_numbers=True)
    assert normalize_tokens("The 3,000 Cats , <s>", policy) == ["the", NUMBER, "cats", ",", UNK]
    keep_case = NormalizationPolicy(lowercase=False, map_numbers=False, keep_punctuation=False)
    assert normalize_tokens("The 3,000 Cats , .", keep_case) == ["The", "3,000", "Cats"]


def test_normalize_bounds_and_empty():
    vocab = Vocabulary()
    sequence = normalize("x y", vocab)
    assert sequence.ids[0] == vocab.bos_id and sequence.ids[-1] == vocab.eos_id
    assert len(sequence) == 4
    assert render(sequence, vocab) == "x y"
    assert normalize("   ", vocab) is None


def test_prediction_windows():
    vocab = Vocabulary(["a", "b"])
    sequence = TokenSequence.from_words([4, 5], vocab)
    windows = list(prediction_windows(sequence, 2))
    assert windows == [(0, 4), (4, 5), (5, 1)]


def test_count_corpus_totals():
    sequences, vocab = _sequences(SENTENCES)
    table = count_corpus(sequences, 2)
    a, b, c = vocab.lookup("a"), vocab.lookup("b"), vocab.lookup("c")
    assert table.count((a,)) == 3 and table.count((b,)) == 2 and table.count((c,)) == 1
    assert table.count((vocab.eos_id,)) == 3
    assert table.count((vocab.bos_id, a)) == 3
    assert table.total_tokens == 9
    assert table.sentences == 3
    assert table.history_total((a,)) == 3
    assert table.check_prefix_consistency() == []


def test_finalized_table_is_immutable():
    table = NGramCountTable(1)
    table.add((4,))
    table.finalize()
    try:
        table.add((4,))
        assert False, "finalized table accepted an update"
    except RuntimeError:
        pass


def test_shard_merge_equals_single_pass():
    lines = [f"w{i % 7} w{(i * 3) % 5} w{i % 2}" for i in range(40)]
    sequences, _ = _sequences(lines)
    single = count_corpus(sequences, 3)
    shards = merge_tables([count_corpus(sequences[:13], 3), count_corpus(sequences[13:], 3)])
    assert shards == single
    assert count_corpus_parallel(sequences, 3, workers=1) == single


def test_cutoff_marks_external():
    sequences, vocab = _sequences(SENTENCES)
    table = apply_cutoff(count_corpus(sequences, 2), 2, orders=[2])
    assert table.external
    assert table.count((vocab.lookup("a"), vocab.lookup("c"))) == 0
    assert table.count((vocab.lookup("c"),)) == 1


def test_open_vocabulary_threshold():
    vocab = Vocabulary.build_open_vocabulary(Counter({"x": 3, "y": 1, "z": 2}), unk_threshold=1)
    assert "x" in vocab and "z" in vocab and "y" not in vocab
    assert vocab.frozen


def test_vocabulary_save_load():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "vocab.txt")
        Vocabulary(["b", "a"]).save(path)
        loaded = Vocabulary.load(path)
        assert list(loaded)[4:] == ["b", "a"]
        with open(path, "w", encoding="utf-8") as f:
            f.write("a\n<s>\n")
        try:
            Vocabulary.load(path)
            assert False, "vocabulary without reserved header accepted"
        except InputFormatError:
            pass


def test_count_file_sorted_and_readable():
    sequences, vocab = _sequences(SENTENCES)
    table = count_corpus(sequences, 2)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "counts.2.gz")
        write_count_file(table, 2, path, vocab)
        with gzip.open(path, "rt", encoding="utf-8") as f:
            keys = [line.split("\t")[0].encode("utf-8") for line in f]
        assert keys == sorted(keys)
        assert sniff_count_order(path) == 2
        read_vocab = Vocabulary()
        loaded, report = read_count_file(path, 2, read_vocab)
        assert loaded.external
        assert report.accepted == table.num_entries(2) and not report.rejected
        assert loaded.count((read_vocab.lookup("a"), read_vocab.lookup("b"))) == 2


def test_count_file_rejections():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "bad.counts")
        with open(path, "w", encoding="utf-8") as f:
            f.write("a b\t3\n")
            f.write("a\t2\n")
            f.write("a c\tx\n")
            for i in range(7):
                f.write(f"c{i} d\t1\n")
        table, report = read_count_file(path, 2, Vocabulary(), max_reject_ratio=0.5)
        assert report.accepted == 8 and len(report.rejected) == 2
        assert report.rejected[0][0] == 2
        try:
            read_count_file(path, 2, Vocabulary(), max_reject_ratio=0.01)
            assert False, "rejection ratio above the limit accepted"
        except CountFileError:
            pass


def test_sharded_count_files_merge():
    with tempfile.TemporaryDirectory() as tmp:
        first, second = os.path.join(tmp, "s1"), os.path.join(tmp, "s2")
        with open(first, "w", encoding="utf-8") as f:
            f.write("a b\t2\n")
        with open(second, "w", encoding="utf-8") as f:
            f.write("a b\t3\nb c\t1\n")
        vocab = Vocabulary()
        merged, reports = read_count_files([first, second], 2, vocab)
        assert merged.count((vocab.lookup("a"), vocab.lookup("b"))) == 5
        assert len(reports) == 2


def test_read_text_corpus_skips_blank_lines():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "text.txt")
        with open(path, "w", encoding="utf-8") as f:
            f.write("a b\n\n c \n")
        corpus = read_text_corpus(path, Vocabulary())
        assert len(corpus) == 2

def test_numbers_map_to_one_macro_word():
    vocab = Vocabulary()
    sequence = normalize("It costs 25 dollars .", vocab)
    assert [vocab.token(i) for i in sequence.ids] == ["<s>", "it", "costs", NUMBER, "dollars", ".", "</s>"]
    repeated = normalize("a 3.5 b 3.5 a", vocab)
    assert repeated.words[1] == repeated.words[3] == vocab.number_id
    assert set(repeated.words) == {vocab.lookup("a"), vocab.lookup("b"), vocab.number_id}


def test_normalize_is_idempotent():
    vocab = Vocabulary()
    for line in ["The 3,000 Cats , <s>", "It costs 25 dollars .", "a A a", "$number </s> x"]:
        once = normalize(line, vocab)
        assert normalize(render(once, vocab), vocab) == once


def test_repeated_word_counts():
    sequences, vocab = _sequences(["a a a"])
    table = count_corpus(sequences, 3)
    a = vocab.lookup("a")
    assert table.count((a, a, a)) == 1
    assert table.count((a, a)) == 2
    assert table.count((a,)) == 3


def test_count_file_write_read_identity():
    lines = [f"w{i % 7} w{(i * 3) % 5} w{i % 2}" for i in range(40)]
    sequences, vocab = _sequences(lines)
    table = count_corpus(sequences, 3)
    with tempfile.TemporaryDirectory() as tmp:
        for k in (1, 2, 3):
            path = os.path.join(tmp, f"counts.{k}")
            write_count_file(table, k, path, vocab)
            loaded, report = read_count_file(path, k, vocab)
            assert not report.rejected
            assert loaded.raw(k) == {ngram: c for ngram, c in table.raw(k).items() if c > 0}


def test_parallel_counting_equals_serial():
    lines = [f"w{i % 7} w{(i * 3) % 5} w{i % 2} w{i % 11}" for i in range(60)]
    sequences, _ = _sequences(lines)
    serial = count_corpus(sequences, 3)
    for workers in (2, 3):
        assert count_corpus_parallel(sequences, 3, workers=workers) == serial



if __name__ == "__main__":
    tests = [value for name, value in sorted(globals().items()) if name.startswith("test_") and callable(value)]
    print("🧪 Testing corpus utilities")
    print("=" * 50)
    for test in tests:
        test()
        print(f"✅ {test.__name__}")
    print(f"\n✅ All {len(tests)} corpus tests passed!")
