"""
End-to-end tests of the command-line pipeline and of configuration resolution.
Each test works in its own temporary directory.
"""
import io
import os
import sys
import json
import math
import random
import tempfile
from contextlib import redirect_stdout

import pandas as pd

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import app
from utils.config_utils import PipelineConfig
from utils.errors import UsageError
from utils.io_utils import MANIFEST_SUFFIX
from utils.mert_utils import read_weights
from utils.rerank_utils import DECODER_SCORE, read_nbest, read_selection
from utils.smoothing_utils import CountOfCounts, write_coc_file


def _zipf_lines(seed, vocabulary=50, sentences=300):
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(vocabulary)]
    weights = [1.0 / (i + 1) for i in range(vocabulary)]
    return [" ".join(rng.choices(words, weights, k=rng.randint(2, 9))) for _ in range(sentences)]


def _write(path, lines):
    with open(path, "w", encoding="utf-8") as f:
        f.write("".join(line + "\n" for line in lines))
    return path


NBEST = [
    "0 ||| w0 w1 w2 ||| tm=-2 ||| -3",
    "0 ||| w1 w0 w2 ||| tm=-1.5 ||| -3.5",
    "0 ||| w0 w0 w0 ||| tm=-3 ||| -2.5",
    "1 ||| w3 w1 w0 w4 ||| tm=-4 ||| -6",
    "1 ||| w3 w0 w1 w4 ||| tm=-5 ||| -5",
    "2 ||| w2 w5 w0 ||| tm=-1 ||| -4",
    "2 ||| w2 w0 w5 ||| tm=-2 ||| -4.5",
]
REFERENCES = ["w0 w1 w2", "w3 w0 w1 w4", "w2 w5 w0"]


def _train(tmp):
    corpus = _write(os.path.join(tmp, "train.txt"), _zipf_lines(1))
    prefix = os.path.join(tmp, "train")
    assert app.main(["count", "--corpus", corpus, "--order", "3", "--output", prefix]) == 0
    arpa = os.path.join(tmp, "kn.arpa")
    counts = [app.count_file_path(prefix, k) for k in (1, 2, 3)]
    assert app.main(["train-kn", "--counts", *counts, "--vocab", prefix + app.VOCAB_SUFFIX, "--output", arpa]) == 0
    return prefix, arpa


def test_count_writes_orders_vocab_and_manifest():
    with tempfile.TemporaryDirectory() as tmp:
        prefix, arpa = _train(tmp)
        for k in (1, 2, 3):
            assert os.path.isfile(app.count_file_path(prefix, k))
        with open(app.count_file_path(prefix, 1) + MANIFEST_SUFFIX, encoding="utf-8") as f:
            manifest = json.load(f)
        assert manifest["command"] == "count" and manifest["parameters"]["order"] == 3
        assert all(entry["sha256"] for entry in manifest["outputs"])
        assert os.path.isfile(arpa + MANIFEST_SUFFIX)


def test_perplexity_report():
    with tempfile.TemporaryDirectory() as tmp:
        _, arpa = _train(tmp)
        heldout = _write(os.path.join(tmp, "heldout.txt"), _zipf_lines(2, sentences=40))
        report_path = os.path.join(tmp, "ppl.json")
        assert app.main(["ppl", "--corpus", heldout, "--model", arpa, "--output", report_path]) == 0
        with open(report_path, encoding="utf-8") as f:
            report = json.load(f)
        assert 1.0 < report["perplexity"] < 60.0
        assert report["sentences"] == 40
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            assert app.main(["ppl", "--corpus", heldout, "--model", arpa]) == 0
        assert buffer.getvalue().startswith("ppl\t")


def test_score_tune_rerank_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        _, arpa = _train(tmp)
        nbest = _write(os.path.join(tmp, "dev.nbest"), NBEST)
        references = _write(os.path.join(tmp, "dev.ref"), REFERENCES)
        scored = os.path.join(tmp, "dev.scored.nbest")
        assert app.main(["score", "--nbest", nbest, "--model", arpa, "--feature", "lm", "--output", scored]) == 0
        lists = read_nbest(scored)
        assert [len(l) for l in lists] == [3, 2, 2]
        assert all(h.features["lm"] < 0 for l in lists for h in l.hypotheses)

        weights = os.path.join(tmp, "weights.tsv")
        assert app.main(["mert", "--nbest", scored, "--references", references, "--restarts", "2",
                         "--seed", "7", "--output", weights]) == 0
        tuned = read_weights(weights)
        assert tuned.weights[DECODER_SCORE] == 1.0 and set(tuned.weights) == {DECODER_SCORE, "lm", "tm"}
        trace = pd.read_csv(weights + ".log", sep="\t", header=None)
        assert trace.shape[1] == 3 and trace[1].is_monotonic_increasing

        selection = os.path.join(tmp, "best.txt")
        assert app.main(["rerank", "--nbest", scored, "--weights", weights, "--output", selection]) == 0
        assert [segment for segment, _ in read_selection(selection)] == ["0", "1", "2"]

        report = os.path.join(tmp, "bleu.json")
        assert app.main(["bleu", "--candidates", selection, "--references", references, "--output", report]) == 0
        with open(report, encoding="utf-8") as f:
            assert 0.0 <= json.load(f)["bleu"] <= 1.0


def test_plot_coc_recovers_alpha():
    frequencies = {1: 1e12}
    for c in range(1, 40):
        frequencies[c + 1] = frequencies[c] * 2.718281828459045 ** (-1.5 / c)
    with tempfile.TemporaryDirectory() as tmp:
        coc = os.path.join(tmp, "law.coc")
        write_coc_file([CountOfCounts(2, frequencies)], coc)
        points, html = os.path.join(tmp, "points.tsv"), os.path.join(tmp, "law.html")
        assert app.main(["plot-coc", "--coc", coc, "--output", points, "--html", html]) == 0
        frame = pd.read_csv(points, sep="\t")
        assert list(frame.columns) == ["order", "c", "inverse_log_ratio", "alpha", "fitted"]
        assert abs(frame["alpha"].iloc[0] - 1.5) < 1e-6
        with open(html, encoding="utf-8") as f:
            assert "plotly" in f.read()


def test_exit_statuses():
    with tempfile.TemporaryDirectory() as tmp:
        assert app.main(["count", "--order", "3"]) == UsageError.exit_status == 2
        assert app.main(["count", "--corpus", os.path.join(tmp, "missing.txt"), "--output", "x"]) == 2
        weights = _write(os.path.join(tmp, "w.tsv"), ["tm\t1", "decoder_score\t1"])
        bad = _write(os.path.join(tmp, "bad.nbest"), ["0 ||| a b ||| tm=1"])
        assert app.main(["rerank", "--nbest", bad, "--weights", weights, "--output", os.path.join(tmp, "o")]) == 3
        flat = os.path.join(tmp, "flat.coc")
        write_coc_file([CountOfCounts(2, {2: 10, 3: 10, 4: 5})], flat)
        assert app.main(["plot-coc", "--coc", flat, "--alpha-range", "2,4", "--output", os.path.join(tmp, "p")]) == 4
        try:
            app.main(["no-such-command"])
            assert False, "unknown command accepted"
        except SystemExit as e:
            assert e.code == 2


def test_config_precedence():
    with tempfile.TemporaryDirectory() as tmp:
        config_file = _write(os.path.join(tmp, "run.env"), ["RERANK_ORDER=4", "RERANK_CUTOFF=3", "RERANK_BOGUS=1"])
        environ = {"RERANK_ORDER": "2", "RERANK_CUTOFF": "2", "RERANK_SEED": "9", "RERANK_LOWERCASE": "no"}
        config = PipelineConfig.resolve({"order": "5", "cutoff": None}, config_file, environ)
        assert (config.order, config.cutoff, config.seed, config.lowercase) == (5, 3, 9, False)
        assert PipelineConfig.resolve({}, None, {}).order == 3


def test_config_rejects_bad_values():
    for environ in ({"RERANK_ORDER": "three"}, {"RERANK_MODEL_TYPE": "rnn"}, {"RERANK_THREADS": "0"},
                    {"RERANK_LOWERCASE": "maybe"}):
        try:
            PipelineConfig.resolve({}, None, environ)
            assert False, f"accepted {environ}"
        except UsageError:
            pass
    config = PipelineConfig.resolve({"fixed_weights": "decoder_score=1.0,lm=0.5"}, None, {})
    assert config.fixed_weight_map() == {DECODER_SCORE: 1.0, "lm": 0.5}
    try:
        PipelineConfig.resolve({}, os.path.join(tempfile.gettempdir(), "no-such-config.env"), {})
        assert False, "missing config file accepted"
    except UsageError:
        pass

def test_count_maps_singletons_to_unknown_by_default():
    with tempfile.TemporaryDirectory() as tmp:
        corpus = _write(os.path.join(tmp, "small.txt"), ["a b a", "a b zzz"])
        prefix, kept = os.path.join(tmp, "small"), os.path.join(tmp, "kept")
        assert app.main(["count", "--corpus", corpus, "--order", "2", "--output", prefix]) == 0
        with open(app.count_file_path(prefix, 1), encoding="utf-8") as f:
            unigrams = dict(line.rstrip("\n").split("\t") for line in f)
        assert unigrams["<unk>"] == "1" and "zzz" not in unigrams
        assert unigrams["a"] == "3" and unigrams["b"] == "2"
        with open(prefix + app.VOCAB_SUFFIX, encoding="utf-8") as f:
            assert "zzz" not in f.read().split()
        assert app.main(["count", "--corpus", corpus, "--order", "2", "--unk-threshold", "0", "--output", kept]) == 0
        with open(app.count_file_path(kept, 1), encoding="utf-8") as f:
            unigrams = dict(line.rstrip("\n").split("\t") for line in f)
        assert unigrams["zzz"] == "1" and "<unk>" not in unigrams


def _ppl(tmp, name, args):
    path = os.path.join(tmp, name + ".json")
    assert app.main(["ppl", *args, "--output", path]) == 0
    with open(path, encoding="utf-8") as f:
        return json.load(f)["perplexity"]


def test_mixture_model_type():
    with tempfile.TemporaryDirectory() as tmp:
        _, arpa = _train(tmp)
        other = os.path.join(tmp, "other.arpa")
        corpus = _write(os.path.join(tmp, "other.txt"), _zipf_lines(5, sentences=150))
        assert app.main(["train-kn", "--corpus", corpus, "--order", "2", "--output", other]) == 0
        heldout = _write(os.path.join(tmp, "heldout.txt"), _zipf_lines(2, sentences=40))
        components = ["--model-type", "mixture", "--components", f"arpa:{arpa}", f"arpa:{other}"]

        first = _ppl(tmp, "first", ["--corpus", heldout, "--model", arpa])
        second = _ppl(tmp, "second", ["--corpus", heldout, "--model", other])
        mixed = _ppl(tmp, "mixed", ["--corpus", heldout, *components, "--mixture-weights", "0.5,0.5"])
        # log of an average is at least the average of the logs
        assert mixed <= math.sqrt(first * second) * (1 + 1e-9)

        with_uniform = ["--corpus", heldout, "--model-type", "mixture", "--components", f"arpa:{arpa}", "uniform:"]
        even = _ppl(tmp, "even", with_uniform)
        tuned = _ppl(tmp, "tuned", [*with_uniform, "--heldout", heldout])
        assert tuned <= even * (1 + 1e-9)

        nbest = _write(os.path.join(tmp, "dev.nbest"), NBEST)
        one_best = _write(os.path.join(tmp, "one_best.txt"), ["0 ||| w0 w1 w2", "1 ||| w3 w0 w1 w4"])
        static, dynamic = os.path.join(tmp, "static.nbest"), os.path.join(tmp, "dynamic.nbest")
        mixture = ["--nbest", nbest, "--model-type", "mixture", "--components", f"arpa:{arpa}", "uniform:",
                   "--feature", "lm"]
        assert app.main(["score", *mixture, "--output", static]) == 0
        assert app.main(["score", *mixture, "--mixture-mode", "dynamic", "--one-best", one_best,
                         "--output", dynamic]) == 0
        static_lists, dynamic_lists = read_nbest(static), read_nbest(dynamic)
        values = [[[h.features["lm"] for h in l.hypotheses] for l in lists] for lists in (static_lists, dynamic_lists)]
        assert values[0][2] == values[1][2]
        assert values[0][0] != values[1][0]
        assert all(v < 0 for segment in values[1] for v in segment)

        assert app.main(["ppl", "--corpus", heldout, "--model-type", "mixture", "--components", f"rnn:{arpa}"]) == 2
        assert app.main(["ppl", "--corpus", heldout, *components, "--mixture-weights", "0.7,0.7"]) == 2



if __name__ == "__main__":
    tests = [value for name, value in sorted(globals().items()) if name.startswith("test_") and callable(value)]
    print("🧪 Testing command-line pipeline")
    print("=" * 50)
    for test in tests:
        test()
        print(f"✅ {test.__name__}")
    print(f"\n✅ All {len(tests)} CLI tests passed!")
