"""
Corpus BLEU and minimum-error-rate weight tuning over N-best lists.

The tuner maximizes corpus BLEU of the log-linear selection with the
Nelder-Mead simplex from scipy, restarting from seeded perturbations and
re-inflating collapsed simplices.
"""
import math
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from utils.errors import InputFormatError, NBestFormatError, SegmentMismatchError, UsageError
from utils.io_utils import atomic_write, open_text
from utils.rerank_utils import (DECODER_SCORE, Hypothesis, NBestList, WeightVector, best_index, feature_matrix,
                                weighted_sum)

logger = logging.getLogger(__name__)

MAX_ORDER = 4
STATS_WIDTH = 2 * MAX_ORDER + 2
DEFAULT_RESTARTS = 8
DEFAULT_STEP = 1.0
DEFAULT_PERTURBATION = 1.0
DEFAULT_MIN_EDGE = 1e-3
DEFAULT_REINFLATIONS = 3


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class BleuStats:
    """Sufficient statistics for BLEU; additive across segments."""

    matches: List[int] = field(default_factory=lambda: [0] * MAX_ORDER)
    totals: List[int] = field(default_factory=lambda: [0] * MAX_ORDER)
    cand_len: int = 0
    ref_len: int = 0

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats([a + b for a, b in zip(self.matches, other.matches)],
                         [a + b for a, b in zip(self.totals, other.totals)],
                         self.cand_len + other.cand_len,
                         self.ref_len + other.ref_len)

    def as_array(self) -> np.ndarray:
        return np.array(self.matches + self.totals + [self.cand_len, self.ref_len], dtype=float)

    def score(self, smooth: bool = False) -> float:
        """
        BLEU-4 from these statistics.

        Args:
            smooth (bool): Add one to matches and totals of orders 2-4 (sentence-level use)

        Returns:
            float: Score in [0, 1]
        """
        return _bleu_from_array(self.as_array(), smooth)


def _bleu_from_array(stats: np.ndarray, smooth: bool = False) -> float:
    matches, totals = stats[:MAX_ORDER], stats[MAX_ORDER:2 * MAX_ORDER]
    cand_len, ref_len = stats[-2], stats[-1]
    if cand_len <= 0:
        return 0.0
    log_precision = 0.0
    for k in range(MAX_ORDER):
        m, t = matches[k], totals[k]
        if smooth and k > 0:
            m, t = m + 1, t + 1
        if m <= 0 or t <= 0:
            return 0.0
        log_precision += math.log(m / t)
    brevity = min(0.0, 1.0 - ref_len / cand_len)
    return math.exp(log_precision / MAX_ORDER + brevity)


def sentence_stats(candidate: Sequence[str], reference: Sequence[str]) -> BleuStats:
    """Clipped n-gram matches of one candidate against one reference."""
    stats = BleuStats(cand_len=len(candidate), ref_len=len(reference))
    for n in range(1, MAX_ORDER + 1):
        cand = ngram_counts(candidate, n)
        ref = ngram_counts(reference, n)
        stats.matches[n - 1] = sum(min(count, ref[gram]) for gram, count in cand.items())
        stats.totals[n - 1] = max(len(candidate) - n + 1, 0)
    return stats


def bleu(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]]) -> Tuple[float, BleuStats]:
    """
    Corpus BLEU-4 with a single reference per segment.

    Args:
        candidates (sequence): Token sequences, one per segment
        references (sequence): Token sequences, one per segment

    Returns:
        tuple: (score, summed BleuStats)
    """
    if len(candidates) != len(references):
        raise SegmentMismatchError(f"{len(candidates)} candidates for {len(references)} references")
    total = BleuStats()
    for candidate, reference in zip(candidates, references):
        total = total + sentence_stats(candidate, reference)
    return total.score(), total


def read_references(path: str) -> List[List[str]]:
    """One pre-tokenized reference per line, in segment order."""
    with open_text(path) as f:
        return [line.split() for line in f]


def write_weights(weights: WeightVector, path: str, comments: Sequence[str] = ()):
    """Write ``name TAB weight`` lines sorted by name, with optional ``#`` header comments."""
    with atomic_write(path) as f:
        for comment in comments:
            f.write(f"# {comment}\n")
        for name in weights.names():
            f.write(f"{name}\t{weights.weights[name]!r}\n")


def read_weights(path: str) -> WeightVector:
    weights: Dict[str, float] = {}
    with open_text(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InputFormatError(f"{path}:{line_no}: expected 'name<TAB>weight'")
            name, value = parts
            if name in weights:
                raise InputFormatError(f"{path}:{line_no}: duplicate weight {name!r}")
            try:
                weights[name] = float(value)
            except ValueError:
                raise InputFormatError(f"{path}:{line_no}: weight {value!r} is not a number")
    logger.info(f"Read {len(weights)} weights from {path}")
    return WeightVector(weights)


@dataclass
class MertProblem:
    """N-best lists with frozen features, one reference each, and tuner settings."""

    lists: List[NBestList]
    references: List[List[str]]
    initial: WeightVector
    fixed: Dict[str, float] = field(default_factory=lambda: {DECODER_SCORE: 1.0})
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    step: float = DEFAULT_STEP
    perturbation: float = DEFAULT_PERTURBATION
    xatol: float = 1e-4
    fatol: float = 1e-6
    maxiter: Optional[int] = None
    min_edge: float = DEFAULT_MIN_EDGE
    reinflations: int = DEFAULT_REINFLATIONS

    def __post_init__(self):
        if len(self.lists) != len(self.references):
            raise SegmentMismatchError(f"{len(self.lists)} N-best lists for {len(self.references)} references")
        for nbest in self.lists:
            if not nbest.hypotheses:
                raise NBestFormatError(f"Segment {nbest.segment_id} has no hypotheses")
        if self.restarts < 1:
            raise UsageError("restarts must be at least 1")

    @classmethod
    def pooled(cls, sets: Sequence[Tuple[Sequence[NBestList], Sequence[Sequence[str]]]],
               initial: WeightVector, **kwargs) -> "MertProblem":
        """Concatenate several development sets into one tuning problem."""
        lists: List[NBestList] = []
        references: List[List[str]] = []
        for set_lists, set_refs in sets:
            if len(set_lists) != len(set_refs):
                raise SegmentMismatchError(f"{len(set_lists)} N-best lists for {len(set_refs)} references")
            lists.extend(set_lists)
            references.extend(list(r) for r in set_refs)
        return cls(lists, references, initial, **kwargs)

    def feature_names(self) -> List[str]:
        return self.lists[0].feature_names()

    def free_names(self) -> List[str]:
        return [name for name in self.feature_names() if name not in self.fixed]


@dataclass
class MertResult:
    """Tuned weights, their dev BLEU and the per-round trace."""

    weights: WeightVector
    bleu: float
    initial_bleu: float
    trace: List[Tuple[int, float, float]]
    degenerate: bool = False
    evaluations: int = 0


class _Objective:
    """Corpus BLEU of the log-linear selection for a full weight array."""

    def __init__(self, problem: MertProblem, names: List[str]):
        self.matrices = [feature_matrix(nbest, names) for nbest in problem.lists]
        self.ranks = [[h.rank for h in nbest.hypotheses] for nbest in problem.lists]
        self.stats = [np.stack([sentence_stats(h.tokens, ref).as_array() for h in nbest.hypotheses])
                      for nbest, ref in zip(problem.lists, problem.references)]
        self.evaluations = 0

    def bleu(self, weights: np.ndarray) -> float:
        self.evaluations += 1
        total = np.zeros(STATS_WIDTH)
        for matrix, ranks, stats in zip(self.matrices, self.ranks, self.stats):
            scores = [weighted_sum(row, weights) for row in matrix]
            total += stats[best_index(scores, ranks)]
        return _bleu_from_array(total)


def _simplex_edge(simplex: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1)))


def _initial_simplex(x0: np.ndarray, step: float) -> np.ndarray:
    return np.vstack([x0] + [x0 + step * np.eye(len(x0))[i] for i in range(len(x0))])


def _is_degenerate(problem: MertProblem) -> bool:
    return all(len({tuple(h.tokens) for h in nbest.hypotheses}) == 1 for nbest in problem.lists)


def optimize(problem: MertProblem) -> MertResult:
    """
    Tune free weights to maximize corpus BLEU on the development lists.

    Args:
        problem (MertProblem): Lists, references, initial weights and settings

    Returns:
        MertResult: Best weights seen over all restarts (never worse than the initial weights)
    """
    names = problem.feature_names()
    free = problem.free_names()
    missing = [name for name in free if name not in problem.initial.weights]
    if missing:
        raise UsageError(f"Initial weights missing for features: {', '.join(missing)}")

    full = {**problem.initial.weights, **problem.fixed}
    full = {name: full[name] for name in names}
    index = [names.index(name) for name in free]
    base = np.array([full[name] for name in names], dtype=float)

    def expand(x: np.ndarray) -> np.ndarray:
        w = base.copy()
        w[index] = x
        return w

    objective = _Objective(problem, names)
    x_init = base[index].copy()
    initial_bleu = objective.bleu(expand(x_init))
    logger.info(f"MERT: {len(problem.lists)} lists, {len(free)} free weights, initial BLEU {initial_bleu:.6f}")

    if not free:
        logger.warning("Every feature weight is fixed; returning the initial weights")
        return MertResult(WeightVector(full), initial_bleu, initial_bleu, [(0, initial_bleu, 0.0)],
                          evaluations=objective.evaluations)

    if _is_degenerate(problem):
        logger.warning("All hypotheses are identical in every list; objective is constant")
        return MertResult(WeightVector(full), initial_bleu, initial_bleu, [(0, initial_bleu, 0.0)],
                          degenerate=True, evaluations=objective.evaluations)

    best = {"bleu": initial_bleu, "x": x_init.copy()}

    def negative_bleu(x: np.ndarray) -> float:
        value = objective.bleu(expand(x))
        if value > best["bleu"]:
            best["bleu"], best["x"] = value, np.array(x, dtype=float)
        return -value

    rng = np.random.default_rng(problem.seed)
    trace: List[Tuple[int, float, float]] = []
    options = {"xatol": problem.xatol, "fatol": problem.fatol}
    if problem.maxiter is not None:
        options["maxiter"] = problem.maxiter

    for restart in range(problem.restarts):
        if restart == 0:
            start = x_init.copy()
        else:
            start = x_init + rng.normal(scale=problem.perturbation, size=len(free))
        for round_no in range(problem.reinflations + 1):
            before = best["bleu"]
            options["initial_simplex"] = _initial_simplex(start, problem.step)
            result = minimize(negative_bleu, start, method="Nelder-Mead", options=options)
            edge = _simplex_edge(result.final_simplex[0])
            trace.append((len(trace), best["bleu"], edge))
            logger.debug(f"Restart {restart} round {round_no}: best BLEU {best['bleu']:.6f}, edge {edge:.3g}")
            if best["bleu"] >= 1.0:
                break
            if edge >= problem.min_edge and best["bleu"] <= before:
                break
            start = np.array(result.x, dtype=float)
        if best["bleu"] >= 1.0:
            break

    weights = WeightVector({name: float(value) for name, value in zip(names, expand(best["x"]))})
    logger.info(f"MERT: best BLEU {best['bleu']:.6f} after {objective.evaluations} evaluations")
    return MertResult(weights, best["bleu"], initial_bleu, trace, evaluations=objective.evaluations)


def write_mert_log(trace: Sequence[Tuple[int, float, float]], path: str):
    """Write ``iteration TAB best_bleu TAB simplex_edge`` rows without a header."""
    frame = pd.DataFrame(list(trace), columns=["iteration", "best_bleu", "simplex_edge"])
    with atomic_write(path) as f:
        frame.to_csv(f, sep="\t", header=False, index=False, lineterminator="\n")


def read_mert_log(path: str) -> pd.DataFrame:
    return pd.read_csv(path, sep="\t", header=None, names=["iteration", "best_bleu", "simplex_edge"])


def oracle_select(lists: Sequence[NBestList], references: Sequence[Sequence[str]]) -> List[Hypothesis]:
    """Best hypothesis per list by smoothed sentence BLEU; ties go to the lower rank."""
    if len(lists) != len(references):
        raise SegmentMismatchError(f"{len(lists)} N-best lists for {len(references)} references")
    chosen = []
    for nbest, reference in zip(lists, references):
        scored = [(sentence_stats(h.tokens, reference).score(smooth=True), h) for h in nbest.hypotheses]
        chosen.append(min(scored, key=lambda item: (-item[0], item[1].rank))[1])
    return chosen
