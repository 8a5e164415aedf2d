"""
N-best list ingestion, LM feature computation, log-linear combination
and hypothesis selection.
"""
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.corpus_utils import NormalizationPolicy, TokenSequence, Vocabulary, normalize
from utils.errors import FeatureMissingError, NBestFormatError, UsageError
from utils.io_utils import atomic_write, open_text
from utils.smoothing_utils import SentenceScorer

logger = logging.getLogger(__name__)

FIELD_SEPARATOR = " ||| "
DECODER_SCORE = "decoder_score"
DEFAULT_NBEST_LIMIT = 3000
DEFAULT_FAILURE_PENALTY = 100.0


def format_value(value: float) -> str:
    """Shortest decimal string that reads back to the same float."""
    return np.format_float_positional(float(value), unique=True, trim="-")


@dataclass
class Hypothesis:
    """One translation candidate with its named feature values and original rank."""

    segment_id: str
    tokens: List[str]
    features: Dict[str, float]
    rank: int
    alignment: Optional[str] = None

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def sequence(self, vocab: Vocabulary, policy: NormalizationPolicy = NormalizationPolicy()) -> TokenSequence:
        normalized = normalize(self.text, vocab, policy)
        return normalized if normalized is not None else TokenSequence.from_words([], vocab)


@dataclass
class NBestList:
    """Hypotheses of one source segment in decoder order."""

    segment_id: str
    hypotheses: List[Hypothesis]
    source: Optional[str] = None

    def __len__(self) -> int:
        return len(self.hypotheses)

    def feature_names(self) -> List[str]:
        names = set()
        for hypothesis in self.hypotheses:
            names.update(hypothesis.features)
        return sorted(names)


@dataclass
class WeightVector:
    """Log-linear scaling factors keyed by feature name."""

    weights: Dict[str, float] = field(default_factory=dict)

    def names(self) -> List[str]:
        return sorted(self.weights)

    def as_array(self, names: Sequence[str]) -> np.ndarray:
        return np.array([self.weights[name] for name in names], dtype=float)

    @classmethod
    def from_array(cls, names: Sequence[str], values: Sequence[float]) -> "WeightVector":
        return cls({name: float(value) for name, value in zip(names, values)})

    def scaled(self, factor: float) -> "WeightVector":
        return WeightVector({k: v * factor for k, v in self.weights.items()})


def _parse_features(text: str, where: str) -> Dict[str, float]:
    features: Dict[str, float] = {}
    for item in text.split():
        name, sep, value = item.rpartition("=")
        if not sep or not name:
            raise NBestFormatError(f"{where}: feature {item!r} is not name=value")
        if name in features:
            raise NBestFormatError(f"{where}: duplicate feature {name!r}")
        try:
            features[name] = float(value)
        except ValueError:
            raise NBestFormatError(f"{where}: feature {name!r} has non-numeric value {value!r}")
    return features


def parse_nbest_line(line: str, where: str = "<line>", allow_empty: bool = False) -> Tuple[str, List[str], Dict[str, float], Optional[str]]:
    """Split one N-best line into (segment id, tokens, features incl. decoder_score, alignment)."""
    fields = line.rstrip("\n").split(FIELD_SEPARATOR)
    if len(fields) not in (4, 5):
        raise NBestFormatError(f"{where}: expected 4 or 5 ' ||| '-separated fields, got {len(fields)}")
    segment_id = fields[0].strip()
    if not segment_id:
        raise NBestFormatError(f"{where}: empty segment id")
    tokens = fields[1].split()
    if not tokens and not allow_empty:
        raise NBestFormatError(f"{where}: empty hypothesis")
    features = _parse_features(fields[2], where)
    if DECODER_SCORE in features:
        raise NBestFormatError(f"{where}: {DECODER_SCORE!r} is reserved for the fourth field")
    try:
        features[DECODER_SCORE] = float(fields[3])
    except ValueError:
        raise NBestFormatError(f"{where}: decoder score {fields[3]!r} is not a number")
    alignment = fields[4] if len(fields) == 5 else None
    return segment_id, tokens, features, alignment


def read_nbest(path: str, limit: int = DEFAULT_NBEST_LIMIT, allow_empty: bool = False) -> List[NBestList]:
    """
    Read an N-best file whose segments are contiguous.

    Args:
        path (str): N-best file (``.gz`` decompresses)
        limit (int): Hypotheses kept per segment
        allow_empty (bool): Accept empty token sequences

    Returns:
        list: NBestList per segment, in file order
    """
    lists: List[NBestList] = []
    seen = set()
    truncated = 0
    with open_text(path) as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            segment_id, tokens, features, alignment = parse_nbest_line(line, f"{path}:{line_no}", allow_empty)
            if not lists or lists[-1].segment_id != segment_id:
                if segment_id in seen:
                    raise NBestFormatError(f"{path}:{line_no}: segment {segment_id!r} is not contiguous")
                seen.add(segment_id)
                lists.append(NBestList(segment_id, []))
            current = lists[-1]
            if len(current) >= limit:
                truncated += 1
                continue
            current.hypotheses.append(Hypothesis(segment_id, tokens, features, len(current), alignment))
    if truncated:
        logger.warning(f"{path}: dropped {truncated} hypotheses beyond the {limit}-best limit")
    logger.info(f"Read {len(lists)} N-best lists ({sum(len(l) for l in lists)} hypotheses) from {path}")
    return lists


def write_nbest(lists: Iterable[NBestList], path: str):
    """Write lists back in the N-best format, features in their stored order."""
    with atomic_write(path) as f:
        for nbest in lists:
            for hypothesis in nbest.hypotheses:
                features = " ".join(f"{name}={format_value(value)}"
                                    for name, value in hypothesis.features.items() if name != DECODER_SCORE)
                fields = [nbest.segment_id, hypothesis.text, features,
                          format_value(hypothesis.features[DECODER_SCORE])]
                if hypothesis.alignment is not None:
                    fields.append(hypothesis.alignment)
                f.write(FIELD_SEPARATOR.join(fields) + "\n")


def attach_sources(lists: Sequence[NBestList], path: str):
    """Attach one source sentence per segment, in segment order."""
    with open_text(path) as f:
        sources = [line.rstrip("\n") for line in f]
    if len(sources) != len(lists):
        raise NBestFormatError(f"{path}: {len(sources)} source lines for {len(lists)} N-best lists")
    for nbest, source in zip(lists, sources):
        nbest.source = source


@dataclass
class RescoreDiagnostic:
    """A hypothesis whose feature fell back to the failure penalty."""

    segment_id: str
    rank: int
    feature: str
    error: str


def add_lm_feature(lists: Sequence[NBestList], scorer: SentenceScorer, feature_name: str,
                   vocab: Vocabulary, policy: NormalizationPolicy = NormalizationPolicy(),
                   penalty: float = DEFAULT_FAILURE_PENALTY,
                   threads: int = 1) -> Tuple[List[NBestList], List[RescoreDiagnostic]]:
    """
    Add a sentence log-probability feature to every hypothesis.

    Hypotheses the scorer fails on get the list's lowest scored value minus
    ``penalty``; each such fallback is reported.

    Args:
        lists (sequence): Input N-best lists (left unchanged)
        scorer (SentenceScorer): Language model
        feature_name (str): New feature name
        vocab (Vocabulary): Vocabulary the scorer's ids refer to
        policy (NormalizationPolicy): Normalization applied to hypothesis text
        penalty (float): Distance below the list minimum for failed hypotheses
        threads (int): Worker threads; results keep input order

    Returns:
        tuple: (new lists, diagnostics)
    """
    tasks = []
    for nbest in lists:
        for hypothesis in nbest.hypotheses:
            if feature_name in hypothesis.features:
                raise UsageError(f"Feature {feature_name!r} already present in segment {nbest.segment_id}")
            tasks.append((nbest.segment_id, hypothesis.sequence(vocab, policy)))

    def score(task) -> Tuple[Optional[float], Optional[str]]:
        segment_id, sequence = task
        try:
            value = scorer.sentence_logprob(sequence, segment_id)
        except Exception as e:
            return None, f"{type(e).__name__}: {e}"
        if not math.isfinite(value):
            return None, f"non-finite log-probability {value}"
        return value, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(score, tasks))
    else:
        results = [score(task) for task in tasks]

    scored, diagnostics = [], []
    position = 0
    for nbest in lists:
        values = results[position:position + len(nbest)]
        position += len(nbest)
        finite = [v for v, _ in values if v is not None]
        fallback = (min(finite) if finite else 0.0) - penalty
        hypotheses = []
        for hypothesis, (value, error) in zip(nbest.hypotheses, values):
            if value is None:
                diagnostics.append(RescoreDiagnostic(nbest.segment_id, hypothesis.rank, feature_name, error))
                logger.warning(f"Segment {nbest.segment_id} rank {hypothesis.rank}: {error}; using {fallback}")
                value = fallback
            hypotheses.append(replace(hypothesis, features={**hypothesis.features, feature_name: value}))
        scored.append(replace(nbest, hypotheses=hypotheses))
    logger.info(f"Added feature {feature_name!r} to {len(tasks)} hypotheses ({len(diagnostics)} failures)")
    return scored, diagnostics


def weighted_sum(values: Sequence[float], weights: Sequence[float]) -> float:
    """Correctly rounded dot product shared by selection and tuning."""
    return math.fsum(w * v for w, v in zip(weights, values))


def best_index(scores: Sequence[float], ranks: Sequence[int]) -> int:
    """Position of the highest score; ties go to the lower original rank."""
    return max(range(len(scores)), key=lambda i: (scores[i], -ranks[i]))


def hypothesis_score(hypothesis: Hypothesis, weights: WeightVector) -> float:
    """Sum of weight times feature value; every feature needs a weight and vice versa."""
    for name in hypothesis.features:
        if name not in weights.weights:
            raise FeatureMissingError(
                f"Segment {hypothesis.segment_id} rank {hypothesis.rank}: feature {name!r} has no weight",
                hypothesis.segment_id, name)
    for name in weights.weights:
        if name not in hypothesis.features:
            raise FeatureMissingError(
                f"Segment {hypothesis.segment_id} rank {hypothesis.rank}: missing feature {name!r}",
                hypothesis.segment_id, name)
    names = sorted(hypothesis.features)
    return weighted_sum([hypothesis.features[name] for name in names], [weights.weights[name] for name in names])


@dataclass
class Selection:
    """Best hypothesis of a list plus the full ranking with scores."""

    best: Hypothesis
    ranking: List[Tuple[Hypothesis, float]]


def loglinear_select(nbest: NBestList, weights: WeightVector) -> Selection:
    """
    Rank hypotheses by weighted feature sum, highest first; ties go to the lower original rank.
    """
    if not nbest.hypotheses:
        raise NBestFormatError(f"Segment {nbest.segment_id} has no hypotheses")
    scored = [(h, hypothesis_score(h, weights)) for h in nbest.hypotheses]
    ranking = sorted(scored, key=lambda item: (-item[1], item[0].rank))
    return Selection(ranking[0][0], ranking)


def feature_matrix(nbest: NBestList, names: Sequence[str]) -> np.ndarray:
    """(hypotheses, features) matrix in ``names`` order; features must match exactly."""
    rows = []
    expected = set(names)
    for hypothesis in nbest.hypotheses:
        present = set(hypothesis.features)
        if present != expected:
            feature = sorted(present ^ expected)[0]
            raise FeatureMissingError(
                f"Segment {nbest.segment_id} rank {hypothesis.rank}: feature {feature!r} does not match the weights",
                nbest.segment_id, feature)
        rows.append([hypothesis.features[name] for name in names])
    return np.array(rows, dtype=float)


def write_selection(selections: Iterable[Selection], path: str):
    """Write ``segment_id ||| chosen token sequence`` lines."""
    with atomic_write(path) as f:
        for selection in selections:
            f.write(f"{selection.best.segment_id}{FIELD_SEPARATOR}{selection.best.text}\n")


def read_selection(path: str) -> List[Tuple[str, List[str]]]:
    selections = []
    with open_text(path) as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            segment_id, sep, text = line.rstrip("\n").partition(FIELD_SEPARATOR)
            if not sep:
                raise NBestFormatError(f"{path}:{line_no}: expected 'segment_id ||| tokens'")
            selections.append((segment_id.strip(), text.split()))
    return selections
