"""
Demo script for the N-best Reranking Toolkit.
Run this script to see the whole pipeline on synthetic data: language model
training, LM features on N-best lists, MERT tuning and reranking.
"""
import os
import sys
import random
import logging
from dotenv import load_dotenv

# Add the project root to the Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from utils.corpus_utils import NormalizationPolicy, Vocabulary, count_corpus, normalize
from utils.countlm_utils import CountLM, estimate_jm_weights
from utils.io_utils import export_report_to_markdown
from utils.mert_utils import MertProblem, bleu, optimize, oracle_select
from utils.rerank_utils import DECODER_SCORE, Hypothesis, NBestList, WeightVector, add_lm_feature, loglinear_select
from utils.smoothing_utils import perplexity, train_kn
from utils.taglm_utils import estimate_static_weights, mix_components

# Load environment variables
load_dotenv()

# Configure logging
logging.basicConfig(
    level=os.getenv("RERANK_LOG_LEVEL", "WARNING").upper(),
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

SUBJECTS = ["the cat", "a dog", "the old man", "my friend", "the committee"]
VERBS = ["sees", "likes", "visits", "calls", "approves"]
OBJECTS = ["the house", "a new plan", "the garden", "her brother", "the report"]


def make_sentence(rng: random.Random) -> str:
    return f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)}"


def garble(tokens, rng: random.Random):
    """A plausible decoder error: swapped neighbours or a dropped word."""
    tokens = list(tokens)
    if rng.random() < 0.5 and len(tokens) > 2:
        i = rng.randrange(len(tokens) - 1)
        tokens[i], tokens[i + 1] = tokens[i + 1], tokens[i]
    else:
        del tokens[rng.randrange(len(tokens))]
    return tokens


def make_nbest(rng: random.Random, segments: int = 15, size: int = 8):
    """N-best lists whose decoder score prefers garbled output about half of the time."""
    lists, references = [], []
    for s in range(segments):
        reference = make_sentence(rng).split()
        candidates = [reference] + [garble(reference, rng) for _ in range(size - 1)]
        scored = [(rng.gauss(-5.0, 1.0) - (0.0 if c is reference else rng.uniform(-1.0, 0.5)), c) for c in candidates]
        scored.sort(key=lambda item: -item[0])
        hypotheses = [Hypothesis(str(s), tokens, {"tm": rng.gauss(-3.0, 1.0), DECODER_SCORE: score}, rank)
                      for rank, (score, tokens) in enumerate(scored)]
        lists.append(NBestList(str(s), hypotheses))
        references.append(reference)
    return lists, references


def demo_pipeline(seed: int = 0):
    """
    Demonstrate the toolkit end to end on synthetic data.

    Args:
        seed (int): Seed for data generation and MERT restarts
    """
    rng = random.Random(seed)
    policy = NormalizationPolicy()
    vocab = Vocabulary()

    print("📦 Training language models...")
    train = [normalize(make_sentence(rng), vocab, policy) for _ in range(400)]
    heldout = [normalize(make_sentence(rng), vocab, policy) for _ in range(100)]
    vocab.freeze()
    table = count_corpus(train, 3)
    kn = train_kn(table, vocab)
    countlm = CountLM(table, vocab=vocab)
    report = estimate_jm_weights(countlm, heldout)
    print(f"   Modified KN perplexity:   {perplexity(kn, heldout).perplexity:.3f}")
    print(f"   Count-LM perplexity:      {perplexity(countlm, heldout).perplexity:.3f} "
          f"({report.events} held-out events)")

    mixture_weights = estimate_static_weights([kn, countlm], heldout).weights
    mixture = mix_components([kn, countlm], weights=mixture_weights)
    print(f"   Mixture weights:          {[round(w, 3) for w in mixture_weights]}")
    print(f"   Mixture perplexity:       {perplexity(mixture, heldout).perplexity:.3f}")

    print("\n📝 Scoring N-best lists...")
    lists, references = make_nbest(rng)
    lists, diagnostics = add_lm_feature(lists, mixture, "lm", vocab, policy)
    print(f"   {len(lists)} lists, {sum(len(l) for l in lists)} hypotheses, {len(diagnostics)} scoring failures")

    first_best = [l.hypotheses[0].tokens for l in lists]
    baseline, _ = bleu(first_best, references)
    oracle, _ = bleu([h.tokens for h in oracle_select(lists, references)], references)

    print("\n🎯 Tuning weights with MERT...")
    initial = WeightVector({"lm": 0.0, "tm": 0.0})
    result = optimize(MertProblem(lists, references, initial, restarts=4, seed=seed))
    reranked = [loglinear_select(l, result.weights).best.tokens for l in lists]
    tuned, _ = bleu(reranked, references)

    print("\n" + "=" * 80)
    print("📊 RESULTS")
    print("=" * 80)
    print(f"   Decoder 1-best BLEU: {baseline:.4f}")
    print(f"   Reranked BLEU:       {tuned:.4f}")
    print(f"   Oracle BLEU:         {oracle:.4f}")
    for name in result.weights.names():
        print(f"   weight {name:<14} {result.weights.weights[name]: .4f}")

    report_path = "demo_report.md"
    export_report_to_markdown("N-best Reranking Demo", [
        {"heading": "Language models", "rows": [
            ("KN perplexity", f"{perplexity(kn, heldout).perplexity:.3f}"),
            ("Mixture weights", [round(w, 3) for w in mixture_weights]),
        ]},
        {"heading": "Reranking", "rows": [
            ("Decoder 1-best BLEU", f"{baseline:.4f}"),
            ("Reranked BLEU", f"{tuned:.4f}"),
            ("Oracle BLEU", f"{oracle:.4f}"),
            ("MERT evaluations", result.evaluations),
        ]},
    ], report_path)
    print(f"\n✅ Markdown report exported to: {report_path}")


def main():
    """Main demo function."""
    print("🚀 N-best Reranking Toolkit Demo")
    print("=" * 80)
    try:
        demo_pipeline(int(os.getenv("RERANK_SEED", "0")))
        print("✅ Demo completed successfully!")
    except KeyboardInterrupt:
        print("\n⏹️  Demo interrupted by user")
    except Exception as e:
        logger.error(f"Demo failed: {str(e)}")
        print(f"❌ Demo failed: {str(e)}")


if __name__ == "__main__":
    main()
