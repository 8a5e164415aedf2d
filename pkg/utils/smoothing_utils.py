"""
Modified Kneser-Ney backoff language models.

Covers count-of-counts bookkeeping and extrapolation, KN training from
complete or cutoff-filtered count tables, ARPA I/O, backoff queries and
perplexity. Probabilities are natural-log internally and log10 in ARPA.
"""
import math
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.corpus_utils import NGramCountTable, TokenSequence, Vocabulary
from utils.errors import (
    ArpaFormatError,
    DiscountUndefinedError,
    IllConditionedFitError,
    InputFormatError,
    UndefinedPerplexityError,
)
from utils.io_utils import atomic_write, open_text

logger = logging.getLogger(__name__)

LN10 = math.log(10.0)
ARPA_ZERO = -99.0
DEFAULT_ALPHA_RANGE = (2, 20)


class SentenceScorer:
    """
    Interface shared by every sentence-level language model in the toolkit.

    Subclasses implement :meth:`conditional_logprob`; sentence scoring walks
    the boundary-marked sequence and predicts every token after sentence-start.
    """

    name = "scorer"

    def conditional_logprob(self, prefix: Sequence[int], word: int) -> float:
        raise NotImplementedError

    def token_logprobs(self, sentence: TokenSequence, segment_id: Optional[str] = None) -> List[float]:
        ids = sentence.ids
        return [self.conditional_logprob(ids[:i], ids[i]) for i in range(1, len(ids))]

    def sentence_logprob(self, sentence: TokenSequence, segment_id: Optional[str] = None) -> float:
        return math.fsum(self.token_logprobs(sentence, segment_id))

    def is_oov(self, word: int) -> bool:
        return False

    def predictable_ids(self) -> List[int]:
        """Ids over which conditional distributions sum to one."""
        raise NotImplementedError


class UniformModel(SentenceScorer):
    """Uniform distribution over a fixed symbol set; unseen ids score like any other."""

    name = "uniform"

    def __init__(self, word_ids: Iterable[int]):
        self.word_ids = sorted(set(word_ids))
        if not self.word_ids:
            raise ValueError("Uniform model needs at least one symbol")
        self._logprob = -math.log(len(self.word_ids))

    def conditional_logprob(self, prefix: Sequence[int], word: int) -> float:
        return self._logprob

    def predictable_ids(self) -> List[int]:
        return list(self.word_ids)


@dataclass
class CountOfCounts:
    """
    F(c): number of distinct k-grams seen exactly c times.

    ``extrapolated`` maps each filled-in count value to the alpha that
    produced it (None when read back from a file).
    """

    order: int
    frequencies: Dict[int, float] = field(default_factory=dict)
    extrapolated: Dict[int, Optional[float]] = field(default_factory=dict)

    @classmethod
    def from_counts(cls, order: int, counts: Iterable[int]) -> "CountOfCounts":
        histogram = Counter(c for c in counts if c > 0)
        return cls(order, {c: f for c, f in sorted(histogram.items())})

    @classmethod
    def from_table(cls, table: NGramCountTable, order: int) -> "CountOfCounts":
        return cls.from_counts(order, table.raw(order).values())

    def frequency(self, count_value: int) -> float:
        return self.frequencies.get(count_value, 0)

    def is_extrapolated(self, count_value: int) -> bool:
        return count_value in self.extrapolated

    @property
    def smallest_observed(self) -> Optional[int]:
        observed = [c for c, f in self.frequencies.items() if f > 0 and c not in self.extrapolated]
        return min(observed) if observed else None

    def copy(self) -> "CountOfCounts":
        return CountOfCounts(self.order, dict(self.frequencies), dict(self.extrapolated))


def _format_number(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return np.format_float_positional(value, unique=True, trim="-")


def write_coc_file(cocs: Iterable[CountOfCounts], path: str):
    """Write ``order TAB count_value TAB frequency TAB observed|extrapolated`` rows."""
    with atomic_write(path) as f:
        for coc in sorted(cocs, key=lambda x: x.order):
            for c in sorted(coc.frequencies):
                flag = "extrapolated" if coc.is_extrapolated(c) else "observed"
                f.write(f"{coc.order}\t{c}\t{_format_number(coc.frequencies[c])}\t{flag}\n")


def read_coc_file(path: str) -> Dict[int, CountOfCounts]:
    """Read a count-of-counts file into one CountOfCounts per order."""
    cocs: Dict[int, CountOfCounts] = {}
    with open_text(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4 or fields[3] not in ("observed", "extrapolated"):
                raise InputFormatError(f"{path}:{line_no}: expected order, count, frequency, flag")
            try:
                order, count_value, frequency = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError:
                raise InputFormatError(f"{path}:{line_no}: non-numeric field")
            if count_value < 1 or frequency < 0:
                raise InputFormatError(f"{path}:{line_no}: count value must be >= 1 and frequency >= 0")
            coc = cocs.setdefault(order, CountOfCounts(order))
            coc.frequencies[count_value] = frequency
            if fields[3] == "extrapolated":
                coc.extrapolated[count_value] = None
    return cocs


@dataclass
class AlphaFit:
    """Result of the count-of-counts law fit."""

    alpha: float
    slope: float
    residual_norm: float
    points: List[Tuple[int, float]]


def coc_law_points(coc: CountOfCounts, k_range: Tuple[int, int] = DEFAULT_ALPHA_RANGE) -> List[Tuple[int, float]]:
    """
    Linearized law points (c, 1 / (log F(c) - log F(c+1))) for c in [lo, hi - 1].

    Raises:
        IllConditionedFitError: if some F(c) is missing or F(c) <= F(c+1)
    """
    lo, hi = k_range
    if hi - lo < 1:
        raise IllConditionedFitError(f"Count range [{lo}, {hi}] must span at least two values", lo)
    points = []
    for c in range(lo, hi):
        f_c, f_next = coc.frequency(c), coc.frequency(c + 1)
        if f_c <= 0 or f_next <= 0:
            raise IllConditionedFitError(f"F({c}) and F({c + 1}) must both be positive", c)
        gap = math.log(f_c) - math.log(f_next)
        if gap <= 0:
            raise IllConditionedFitError(f"F({c}) <= F({c + 1}): log-difference is not positive", c)
        points.append((c, 1.0 / gap))
    return points


def estimate_alpha(coc: CountOfCounts, k_range: Tuple[int, int] = DEFAULT_ALPHA_RANGE) -> AlphaFit:
    """
    Fit alpha of the law log F(c) - log F(c+1) = alpha / c.

    The linearized form y = c / alpha is fitted through the origin by least
    squares; alpha is the reciprocal of the slope.

    Args:
        coc (CountOfCounts): Observed counts-of-counts
        k_range (tuple): Inclusive count range (lo, hi)

    Returns:
        AlphaFit: alpha plus slope, residual norm and fitted points
    """
    points = coc_law_points(coc, k_range)
    x = np.array([[c] for c, _ in points], dtype=float)
    y = np.array([v for _, v in points], dtype=float)
    solution, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    slope = float(solution[0])
    if slope <= 0:
        raise IllConditionedFitError(f"Fitted slope {slope} is not positive", k_range[0])
    residual_norm = float(np.linalg.norm(x[:, 0] * slope - y))
    alpha = 1.0 / slope
    logger.info(f"Order {coc.order}: alpha = {alpha:.6f} over c in [{k_range[0]}, {k_range[1]}] "
                f"(residual {residual_norm:.3g})")
    return AlphaFit(alpha=alpha, slope=slope, residual_norm=residual_norm, points=points)


def extrapolate_count_of_counts(coc: CountOfCounts, alpha: float, target_c: int = 1) -> CountOfCounts:
    """
    Fill F(c) below the smallest observed count with F(c) = F(c+1) * exp(alpha / c).

    Args:
        coc (CountOfCounts): Counts-of-counts missing the low count values
        alpha (float): Law parameter
        target_c (int): Smallest count value to fill

    Returns:
        CountOfCounts: A copy with extrapolated entries (rounded, floor 1)
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    result = coc.copy()
    smallest = coc.smallest_observed
    if smallest is None:
        raise IllConditionedFitError("No observed counts-of-counts to extrapolate from")
    if target_c >= smallest:
        logger.warning(f"Order {coc.order}: target count {target_c} >= smallest observed {smallest}; nothing to fill")
        return result
    running = float(coc.frequency(smallest))
    for c in range(smallest - 1, target_c - 1, -1):
        running *= math.exp(alpha / c)
        result.frequencies[c] = max(1, int(round(running)))
        result.extrapolated[c] = alpha
    logger.info(f"Order {coc.order}: extrapolated F(c) for c in [{target_c}, {smallest - 1}] with alpha {alpha}")
    return result


def kn_discounts(coc: CountOfCounts, fallback_discount: Optional[float] = None) -> Tuple[float, float, float]:
    """
    Modified Kneser-Ney discounts (D1, D2, D3+) from F(1..4).

    Args:
        coc (CountOfCounts): Counts-of-counts of the order
        fallback_discount (float): Single discount used when F(1) or F(2) is zero

    Returns:
        tuple: (D1, D2, D3+)
    """
    f1, f2, f3, f4 = (coc.frequency(c) for c in (1, 2, 3, 4))
    if f1 <= 0 or f2 <= 0:
        if fallback_discount is None:
            raise DiscountUndefinedError(
                f"Order {coc.order}: F(1)={f1}, F(2)={f2}; modified KN discounts are undefined",
                coc.order,
            )
        logger.warning(f"Order {coc.order}: F(1) or F(2) is zero, using fallback discount {fallback_discount}")
        return fallback_discount, fallback_discount, fallback_discount
    y = f1 / (f1 + 2 * f2)
    d1 = 1 - 2 * y * f2 / f1
    d2 = 2 - 3 * y * f3 / f2
    # no count-3 N-grams: the D3+ bracket reuses D2
    d3 = 3 - 4 * y * f4 / f3 if f3 > 0 else d2
    for name, value in (("D1", d1), ("D2", d2), ("D3+", d3)):
        if value < 0:
            raise DiscountUndefinedError(f"Order {coc.order}: negative discount {name} = {value}", coc.order)
    return d1, d2, d3


def _discount(discounts: Tuple[float, float, float], count: float) -> float:
    if count <= 0:
        return 0.0
    if count < 2:
        return min(discounts[0], count)
    if count < 3:
        return min(discounts[1], count)
    return min(discounts[2], count)


class BackoffModel(SentenceScorer):
    """
    ARPA-compatible backoff model.

    ``probs[k-1]`` maps k-tuples of ids to natural-log probabilities and
    ``bows[k-1]`` maps k-tuples used as contexts to natural-log backoff weights.
    """

    name = "kn"

    def __init__(self, order: int, vocab: Vocabulary, probs: List[Dict[Tuple[int, ...], float]],
                 bows: List[Dict[Tuple[int, ...], float]], word_ids: Iterable[int],
                 unk_id: Optional[int], metadata: Optional[Dict] = None):
        self.order = order
        self.vocab = vocab
        self.probs = probs
        self.bows = bows
        self.word_ids = sorted(set(word_ids))
        self._word_set = set(self.word_ids)
        self.unk_id = unk_id
        self.metadata = metadata or {}

    def _map(self, token_id: int) -> int:
        if token_id in self._word_set or token_id == self.vocab.bos_id or self.unk_id is None:
            return token_id
        return self.unk_id

    def logprob(self, context: Sequence[int], word: int) -> float:
        """
        Backoff query: highest-order stored estimate plus the traversed backoff weights.

        Args:
            context (sequence): Preceding ids (only the last order-1 are used)
            word (int): Predicted id (unseen ids map to the unknown symbol)

        Returns:
            float: Natural-log probability
        """
        if word not in self._word_set:
            if word == self.vocab.bos_id or self.unk_id is None:
                return -math.inf
            word = self.unk_id
        if self.order > 1:
            context = tuple(self._map(c) for c in tuple(context)[-(self.order - 1):])
        else:
            context = ()
        backoff = 0.0
        for start in range(len(context) + 1):
            history = context[start:]
            found = self.probs[len(history)].get(history + (word,))
            if found is not None:
                return backoff + found
            if history:
                backoff += self.bows[len(history) - 1].get(history, 0.0)
        return -math.inf

    def conditional_logprob(self, prefix: Sequence[int], word: int) -> float:
        return self.logprob(prefix, word)

    def is_oov(self, word: int) -> bool:
        return word not in self._word_set or word == self.unk_id

    def predictable_ids(self) -> List[int]:
        return list(self.word_ids)

    def contexts(self) -> List[Tuple[int, ...]]:
        """Every stored context (tuple with a backoff weight), empty context first."""
        found = [()]
        for k in range(1, self.order):
            found.extend(sorted(self.bows[k - 1]))
        return found


def _adjusted_counts(counts: NGramCountTable, order: int, bos_id: int) -> Dict[Tuple[int, ...], int]:
    """Raw counts at the top order or for external tables; left-continuation counts otherwise."""
    raw = {g: c for g, c in counts.raw(order).items() if c > 0 and g != (bos_id,)}
    if order == counts.order or counts.external:
        return raw
    continuation: Dict[Tuple[int, ...], int] = defaultdict(int)
    for ngram, count in counts.raw(order + 1).items():
        if count > 0:
            continuation[ngram[1:]] += 1
    adjusted = {}
    for ngram, count in raw.items():
        # nothing precedes sentence-start, so its N-grams keep raw counts
        value = count if ngram[0] == bos_id else continuation.get(ngram, 0)
        if value > 0:
            adjusted[ngram] = value
    return adjusted


def train_kn(counts: NGramCountTable, vocab: Vocabulary,
             coc_override: Optional[Dict[int, CountOfCounts]] = None,
             fallback_discount: Optional[float] = None,
             extra_words: Iterable[int] = (),
             open_vocabulary: bool = True,
             backoff_floor: float = 1e-10) -> BackoffModel:
    """
    Train an interpolated modified Kneser-Ney backoff model.

    Args:
        counts (NGramCountTable): Corpus-derived or external counts
        vocab (Vocabulary): Vocabulary the ids refer to
        coc_override (dict): Order -> CountOfCounts replacing the table's own
        fallback_discount (float): Discount used where F(1) or F(2) vanish
        extra_words (iterable): Ids added to the model vocabulary with zero counts
        open_vocabulary (bool): Reserve probability for the unknown symbol
        backoff_floor (float): Probability-space floor for non-positive backoff mass

    Returns:
        BackoffModel: Trained model
    """
    n = counts.order
    bos = vocab.bos_id
    unk_id = vocab.unk_id if open_vocabulary else None
    coc_override = coc_override or {}
    label = "KN-from-counts" if counts.external else "modified-KN"

    adjusted = []
    for k in range(1, n + 1):
        table = _adjusted_counts(counts, k, bos)
        if not table:
            raise InputFormatError(f"Order {k} has no N-grams to estimate from")
        adjusted.append(table)

    discounts = {}
    for k in range(1, n + 1):
        coc = coc_override.get(k) or CountOfCounts.from_counts(k, adjusted[k - 1].values())
        discounts[k] = kn_discounts(coc, fallback_discount)
        logger.debug(f"Order {k} discounts: {discounts[k]}")

    words = {g[0] for g in adjusted[0]} | {vocab.eos_id} | set(extra_words)
    if unk_id is not None:
        words.add(unk_id)
    words.discard(bos)
    probs: List[Dict[Tuple[int, ...], float]] = [dict() for _ in range(n)]
    bows: List[Dict[Tuple[int, ...], float]] = [dict() for _ in range(n)]
    model = BackoffModel(n, vocab, probs, bows, words, unk_id,
                         {"smoothing": label, "discounts": discounts, "clamped_backoffs": 0,
                          "fallback_discount": fallback_discount})

    unigrams = adjusted[0]
    total = sum(unigrams.values())
    gamma = sum(_discount(discounts[1], c) for c in unigrams.values()) / total
    uniform = 1.0 / len(words)
    for w in words:
        a = unigrams.get((w,), 0)
        probs[0][(w,)] = math.log((a - _discount(discounts[1], a)) / total + gamma * uniform)
    probs[0][(bos,)] = -math.inf

    clamped = 0
    for k in range(2, n + 1):
        grouped: Dict[Tuple[int, ...], List[Tuple[int, int]]] = defaultdict(list)
        for ngram, a in adjusted[k - 1].items():
            grouped[ngram[:-1]].append((ngram[-1], a))
        order_probs = {}
        for history in sorted(grouped):
            continuations = grouped[history]
            history_total = sum(a for _, a in continuations)
            mass = sum(_discount(discounts[k], a) for _, a in continuations) / history_total
            if mass <= 0:
                clamped += 1
                bow = math.log(backoff_floor)
            else:
                bow = math.log(mass)
            for w, a in continuations:
                lower = math.exp(model.logprob(history[1:], w))
                p = (a - _discount(discounts[k], a)) / history_total + max(mass, 0.0) * lower
                order_probs[history + (w,)] = math.log(p) if p > 0 else -math.inf
            _ensure_context(model, history)
            bows[k - 2][history] = bow
        probs[k - 1].update(order_probs)

    if clamped:
        logger.warning(f"Clamped {clamped} non-positive backoff masses to {backoff_floor}")
    model.metadata["clamped_backoffs"] = clamped
    logger.info(f"Trained {label} model: order {n}, {len(words)} words, "
                + ", ".join(f"{k}-grams={len(p)}" for k, p in enumerate(probs, 1)))
    return model


def _ensure_context(model: BackoffModel, history: Tuple[int, ...]):
    """Synthesize a missing context entry with its backed-off probability."""
    k = len(history)
    if history in model.probs[k - 1]:
        return
    if k > 1:
        _ensure_context(model, history[:-1])
    last = history[-1]
    if last in model._word_set or last == model.vocab.bos_id:
        model.probs[k - 1][history] = model.logprob(history[:-1], last)
    else:
        model.probs[k - 1][history] = -math.inf


def _to_arpa(value: float) -> str:
    if value == -math.inf:
        return f"{ARPA_ZERO:.6f}"
    return f"{value / LN10 + 0.0:.6f}"


def write_arpa(model: BackoffModel, path: str):
    """
    Write a model in ARPA format (log10, six decimals).

    Args:
        model (BackoffModel): Model to serialize
        path (str): Output path (``.gz`` compresses)
    """
    vocab = model.vocab
    sections = []
    for k in range(1, model.order + 1):
        rows = sorted((" ".join(vocab.token(i) for i in ngram), ngram) for ngram in model.probs[k - 1])
        sections.append(rows)
    with atomic_write(path) as f:
        f.write("\\data\\\n")
        for k, rows in enumerate(sections, 1):
            f.write(f"ngram {k}={len(rows)}\n")
        f.write("\n")
        for k, rows in enumerate(sections, 1):
            f.write(f"\\{k}-grams:\n")
            for text, ngram in rows:
                line = f"{_to_arpa(model.probs[k - 1][ngram])}\t{text}"
                if k < model.order and ngram in model.bows[k - 1]:
                    line += f"\t{_to_arpa(model.bows[k - 1][ngram])}"
                f.write(line + "\n")
            f.write("\n")
        f.write("\\end\\\n")
    logger.info(f"ARPA model written to {path}")


def _from_arpa(text: str, path: str, line_no: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ArpaFormatError(f"{path}:{line_no}: bad number {text!r}")
    if value <= ARPA_ZERO:
        return -math.inf
    return value * LN10


def read_arpa(path: str, vocab: Optional[Vocabulary] = None) -> Tuple[BackoffModel, Vocabulary]:
    """
    Read an ARPA backoff model.

    Args:
        path (str): ARPA file (``.gz`` decompresses)
        vocab (Vocabulary): Vocabulary to intern into (a new one by default)

    Returns:
        tuple: (model, vocabulary)
    """
    vocab = vocab or Vocabulary()
    declared: Dict[int, int] = {}
    probs: List[Dict[Tuple[int, ...], float]] = []
    bows: List[Dict[Tuple[int, ...], float]] = []
    section = None
    ended = False
    with open_text(path) as f:
        lines = enumerate(f, 1)
        for line_no, line in lines:
            if line.strip() == "\\data\\":
                break
        else:
            raise ArpaFormatError(f"{path}: missing \\data\\ header")
        for line_no, line in lines:
            line = line.strip()
            if not line:
                continue
            if line.startswith("ngram "):
                try:
                    k, count = line[len("ngram "):].split("=")
                    declared[int(k)] = int(count)
                except ValueError:
                    raise ArpaFormatError(f"{path}:{line_no}: bad header line {line!r}")
                continue
            if line == "\\end\\":
                ended = True
                break
            if line.startswith("\\") and line.endswith("-grams:"):
                section = int(line[1:-len("-grams:")])
                while len(probs) < section:
                    probs.append({})
                    bows.append({})
                continue
            if section is None:
                raise ArpaFormatError(f"{path}:{line_no}: N-gram row outside a section")
            fields = line.split()
            if len(fields) not in (section + 1, section + 2):
                raise ArpaFormatError(f"{path}:{line_no}: expected {section} tokens")
            ngram = tuple(vocab.add(t) for t in fields[1:section + 1])
            probs[section - 1][ngram] = _from_arpa(fields[0], path, line_no)
            if len(fields) == section + 2:
                bows[section - 1][ngram] = _from_arpa(fields[-1], path, line_no)
    if not ended:
        raise ArpaFormatError(f"{path}: missing \\end\\ marker")
    for k, count in declared.items():
        if k > len(probs) or len(probs[k - 1]) != count:
            raise ArpaFormatError(f"{path}: header declares {count} {k}-grams")
    unigram_ids = {g[0] for g in probs[0]} - {vocab.bos_id}
    unk_id = vocab.unk_id if vocab.unk_id in unigram_ids else None
    model = BackoffModel(len(probs), vocab, probs, bows, unigram_ids, unk_id, {"smoothing": "arpa"})
    logger.info(f"Read order-{model.order} ARPA model with {len(unigram_ids)} words from {path}")
    return model, vocab


@dataclass
class PerplexityReport:
    """Perplexity with the token tallies behind it."""

    perplexity: float
    logprob: float
    sentences: int
    tokens: int
    oovs: int
    skipped: int


def perplexity(scorer: SentenceScorer, corpus: Iterable[TokenSequence], oov_mode: str = "open") -> PerplexityReport:
    """
    exp(-mean log-probability) over predicted tokens, sentence-end included.

    Args:
        scorer (SentenceScorer): Any toolkit language model
        corpus (iterable): Boundary-marked sequences; the i-th one is scored as segment ``str(i)``
        oov_mode (str): ``"open"`` scores OOVs via the unknown symbol, ``"skip"`` excludes them

    Returns:
        PerplexityReport: Perplexity and tallies
    """
    if oov_mode not in ("open", "skip"):
        raise ValueError(f"Unknown OOV mode {oov_mode!r}")
    total, tokens, oovs, skipped, sentences = [], 0, 0, 0, 0
    for index, sentence in enumerate(corpus):
        sentences += 1
        for word, lp in zip(sentence.ids[1:], scorer.token_logprobs(sentence, str(index))):
            if scorer.is_oov(word):
                oovs += 1
                if oov_mode == "skip":
                    skipped += 1
                    continue
            total.append(lp)
            tokens += 1
    if tokens == 0:
        raise UndefinedPerplexityError("No predicted tokens to compute perplexity over")
    logprob = math.fsum(total)
    value = math.exp(-logprob / tokens) if logprob > -math.inf else math.inf
    logger.info(f"Perplexity {value:.4f} over {tokens} tokens ({oovs} OOV, {skipped} skipped)")
    return PerplexityReport(value, logprob, sentences, tokens, oovs, skipped)
