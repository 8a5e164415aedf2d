"""
Count-LM: Jelinek-Mercer deleted interpolation computed directly from
(possibly cutoff-filtered) count tables, with bucketed interpolation
weights estimated by EM on held-out text.
"""
import math
import bisect
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from utils.corpus_utils import NGramCountTable, TokenSequence, Vocabulary
from utils.errors import InputFormatError, UsageError
from utils.io_utils import atomic_write, open_text
from utils.smoothing_utils import SentenceScorer

logger = logging.getLogger(__name__)

DEFAULT_BUCKETS = (0, 1, 2, 4, 8, 16, 64, 256, math.inf)
DEFAULT_ORDER = 5
EM_TOLERANCE = 1e-6
EM_MAX_ITERATIONS = 200


@dataclass
class EMResult:
    """Weights and held-out log-likelihood trace of one EM run."""

    weights: np.ndarray
    log_likelihoods: List[float]
    iterations: int
    events: int
    converged: bool


def _mixture_log_likelihood(log_probs: np.ndarray, active: np.ndarray, weights: np.ndarray) -> float:
    log_weights = np.log(np.where(weights > 0, weights, 1e-300))
    masked = np.where(active, log_probs + log_weights, -np.inf)
    active_mass = np.where(active, weights, 0.0).sum(axis=1)
    return float(np.sum(logsumexp(masked, axis=1) - np.log(active_mass)))


def truncated_mixture_em(component_probs: np.ndarray, active: Optional[np.ndarray] = None,
                         initial: Optional[np.ndarray] = None,
                         max_iterations: int = EM_MAX_ITERATIONS,
                         tolerance: float = EM_TOLERANCE) -> EMResult:
    """
    EM for mixture weights where each event may see only a subset of components.

    An event's probability is the weighted average of its active components,
    renormalized by the active weight mass. Inactive components receive the
    expected number of rejected draws, lambda_k / mass, in the M-step, which
    keeps the likelihood non-decreasing.

    Args:
        component_probs (np.ndarray): (events, components) probabilities
        active (np.ndarray): (events, components) boolean mask, all True by default
        initial (np.ndarray): Starting weights on the simplex (uniform by default)
        max_iterations (int): Iteration cap
        tolerance (float): Relative log-likelihood change that stops the run

    Returns:
        EMResult: Final weights and the log-likelihood after every iteration
    """
    probs = np.asarray(component_probs, dtype=float)
    events, components = probs.shape
    if active is None:
        active = np.ones_like(probs, dtype=bool)
    weights = (np.full(components, 1.0 / components) if initial is None
               else np.asarray(initial, dtype=float) / np.sum(initial))
    with np.errstate(divide="ignore"):
        log_probs = np.log(probs)
    trace = [_mixture_log_likelihood(log_probs, active, weights)]
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        weighted = np.where(active, probs * weights, 0.0)
        totals = weighted.sum(axis=1, keepdims=True)
        totals[totals == 0] = 1.0
        responsibilities = weighted / totals
        active_mass = np.where(active, weights, 0.0).sum(axis=1, keepdims=True)
        phantom = np.where(active, 0.0, weights / active_mass)
        expected = (responsibilities + phantom).sum(axis=0)
        weights = expected / expected.sum()
        trace.append(_mixture_log_likelihood(log_probs, active, weights))
        previous, current = trace[-2], trace[-1]
        if abs(current - previous) <= tolerance * max(abs(previous), 1e-300):
            converged = True
            break
    return EMResult(weights=weights, log_likelihoods=trace, iterations=iteration,
                    events=events, converged=converged)


def validate_boundaries(boundaries: Sequence[float]) -> Tuple[float, ...]:
    boundaries = tuple(float(b) for b in boundaries)
    if len(boundaries) < 2 or boundaries[0] != 0:
        raise UsageError("Bucket boundaries must start at 0 and contain at least two values")
    if any(b <= a for a, b in zip(boundaries, boundaries[1:])):
        raise UsageError(f"Bucket boundaries must be strictly increasing: {boundaries}")
    if boundaries[-1] != math.inf:
        boundaries = boundaries + (math.inf,)
    return boundaries


class CountLM(SentenceScorer):
    """
    Deleted-interpolation model answering queries straight from a count table.

    Queries touch only the count entries of the scored N-grams and their
    histories (plus the total token count).
    """

    name = "countlm"

    def __init__(self, table: NGramCountTable, order: Optional[int] = None,
                 boundaries: Sequence[float] = DEFAULT_BUCKETS,
                 weights: Optional[Dict[int, np.ndarray]] = None,
                 vocab_size: Optional[int] = None, vocab: Optional[Vocabulary] = None):
        """
        Initialize the model.

        Args:
            table (NGramCountTable): Finalized counts of every order up to ``order``
            order (int): Maximum order (defaults to the table's)
            boundaries (sequence): Bucket lower bounds, strictly increasing from 0
            weights (dict): Bucket index -> weights indexed by order 0..n
            vocab_size (int): |V| for the uniform floor (defaults to table words + end + unknown)
            vocab (Vocabulary): Vocabulary for the floor's reserved symbols
        """
        self.table = table.finalize()
        self.order = order or table.order
        if self.order > table.order:
            raise UsageError(f"Count table has order {table.order}, model needs {self.order}")
        self.boundaries = validate_boundaries(boundaries)
        self._word_set = set(table.unigram_ids())
        if vocab_size is None:
            reserved = {1, 2} if vocab is None else {vocab.eos_id, vocab.unk_id}
            vocab_size = len(self._word_set | reserved)
        self.vocab_size = vocab_size
        uniform = np.full(self.order + 1, 1.0 / (self.order + 1))
        self.weights = {b: np.asarray(weights[b], dtype=float) if weights and b in weights else uniform.copy()
                        for b in range(self.num_buckets)}
        for bucket, w in self.weights.items():
            if len(w) != self.order + 1 or abs(float(np.sum(w)) - 1.0) > 1e-9 or np.any(w < 0):
                raise UsageError(f"Bucket {bucket} weights are not on the simplex: {w}")

    @property
    def num_buckets(self) -> int:
        return len(self.boundaries) - 1

    def bucket(self, history_count: float) -> int:
        return bisect.bisect_right(self.boundaries, history_count) - 1

    def component_probabilities(self, context: Sequence[int], word: int) -> Tuple[np.ndarray, np.ndarray, int]:
        """
        Per-order relative frequencies for one event.

        Returns:
            tuple: (probabilities indexed by order 0..n, active mask, bucket index)
        """
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        probs = np.zeros(self.order + 1)
        active = np.zeros(self.order + 1, dtype=bool)
        probs[0] = 1.0 / self.vocab_size
        active[0] = True
        bucket_count = 0
        for k in range(1, self.order + 1):
            if k - 1 > len(context):
                break
            history = context[len(context) - (k - 1):] if k > 1 else ()
            denominator = self.table.history_total(history)
            if k - 1 == len(context):
                bucket_count = denominator
            if denominator > 0:
                active[k] = True
                probs[k] = self.table.count(history + (word,)) / denominator
        return probs, active, self.bucket(bucket_count)

    def prob(self, context: Sequence[int], word: int) -> float:
        probs, active, bucket = self.component_probabilities(context, word)
        weights = self.weights[bucket]
        mass = float(np.sum(weights[active]))
        return float(np.dot(weights[active], probs[active])) / mass

    def conditional_logprob(self, prefix: Sequence[int], word: int) -> float:
        p = self.prob(prefix, word)
        return math.log(p) if p > 0 else -math.inf

    def is_oov(self, word: int) -> bool:
        return word not in self._word_set

    def predictable_ids(self) -> List[int]:
        return sorted(self._word_set)


def countlm_prob(lm: CountLM, context: Sequence[int], word: int) -> float:
    """Natural-log interpolated probability of ``word`` after ``context``."""
    return lm.conditional_logprob(context, word)


@dataclass
class WeightEstimationReport:
    """Per-bucket EM outcomes of one weight estimation."""

    results: Dict[int, EMResult] = field(default_factory=dict)
    fallbacks: Dict[int, int] = field(default_factory=dict)
    events: int = 0


def _nearest_populated(bucket: int, populated: List[int]) -> int:
    return min(populated, key=lambda b: (abs(b - bucket), b))


def estimate_jm_weights(lm: CountLM, heldout: Iterable[TokenSequence],
                        max_iterations: int = EM_MAX_ITERATIONS,
                        tolerance: float = EM_TOLERANCE) -> WeightEstimationReport:
    """
    Estimate bucketed interpolation weights by EM on held-out text.

    The model's weights are replaced in place; buckets without held-out
    events copy the nearest populated bucket.

    Args:
        lm (CountLM): Model whose weights are estimated
        heldout (iterable): Boundary-marked held-out sequences
        max_iterations (int): EM iteration cap per bucket
        tolerance (float): Relative log-likelihood convergence threshold

    Returns:
        WeightEstimationReport: Per-bucket EM traces and fallbacks
    """
    by_bucket: Dict[int, Tuple[List[np.ndarray], List[np.ndarray]]] = {}
    report = WeightEstimationReport()
    for sentence in heldout:
        ids = sentence.ids
        for i in range(1, len(ids)):
            probs, active, bucket = lm.component_probabilities(ids[max(0, i - lm.order + 1):i], ids[i])
            rows = by_bucket.setdefault(bucket, ([], []))
            rows[0].append(probs)
            rows[1].append(active)
            report.events += 1
    if not by_bucket:
        raise UsageError("Held-out set produced no events for weight estimation")

    for bucket in sorted(by_bucket):
        probs, active = by_bucket[bucket]
        result = truncated_mixture_em(np.array(probs), np.array(active), lm.weights[bucket],
                                      max_iterations, tolerance)
        lm.weights[bucket] = result.weights
        report.results[bucket] = result
        logger.info(f"Bucket {bucket} ({result.events} events): {result.iterations} EM iterations, "
                    f"held-out LL {result.log_likelihoods[0]:.4f} -> {result.log_likelihoods[-1]:.4f}")

    populated = sorted(by_bucket)
    for bucket in range(lm.num_buckets):
        if bucket not in by_bucket:
            source = _nearest_populated(bucket, populated)
            lm.weights[bucket] = lm.weights[source].copy()
            report.fallbacks[bucket] = source
            logger.warning(f"Bucket {bucket} has no held-out events; using weights of bucket {source}")
    return report


def _format_weight(value: float) -> str:
    return repr(float(value))


def write_weight_buckets(lm: CountLM, path: str):
    """Write ``order TAB bucket_lower TAB lambda_n ... lambda_0`` lines."""
    with atomic_write(path) as f:
        for bucket in range(lm.num_buckets):
            lower = lm.boundaries[bucket]
            weights = "\t".join(_format_weight(w) for w in lm.weights[bucket][::-1])
            f.write(f"{lm.order}\t{int(lower)}\t{weights}\n")
    logger.info(f"Interpolation weights written to {path}")


def read_weight_buckets(path: str) -> Tuple[int, Tuple[float, ...], Dict[int, np.ndarray]]:
    """
    Read a weight-bucket file.

    Returns:
        tuple: (order, boundaries ending in infinity, bucket -> weights indexed by order)
    """
    order, lowers, weights = None, [], {}
    with open_text(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            try:
                line_order, lower = int(fields[0]), float(fields[1])
                values = [float(v) for v in fields[2:]]
            except (ValueError, IndexError):
                raise InputFormatError(f"{path}:{line_no}: malformed weight line")
            if order is not None and line_order != order:
                raise InputFormatError(f"{path}:{line_no}: mixed orders {order} and {line_order}")
            order = line_order
            if len(values) != order + 1:
                raise InputFormatError(f"{path}:{line_no}: expected {order + 1} weights, got {len(values)}")
            weights[len(lowers)] = np.array(values[::-1])
            lowers.append(lower)
    if order is None:
        raise InputFormatError(f"{path}: no weight lines")
    return order, tuple(lowers) + (math.inf,), weights
