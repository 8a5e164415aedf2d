"""
Almost-parsing class LM: a joint word/tag N-gram model over structured
tags, tag-marginalized word probabilities by a forward pass, Viterbi tag
sequences, and static or per-segment dynamic mixtures of sentence scorers.
"""
import math
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from utils.corpus_utils import (
    EOS,
    PUNCTUATION_TOKEN,
    NormalizationPolicy,
    TokenSequence,
    Vocabulary,
    count_corpus,
    normalize_tokens,
)
from utils.countlm_utils import EMResult, truncated_mixture_em
from utils.errors import TaggedCorpusError, UsageError
from utils.io_utils import atomic_write, open_text
from utils.smoothing_utils import BackoffModel, SentenceScorer, read_arpa, train_kn, write_arpa

logger = logging.getLogger(__name__)

PAIR_SEPARATOR = "|||"
UNKNOWN_TAG = "*"
DEFAULT_BEAM_THRESHOLD = 1e-4
SENTENCE_FINAL_PUNCTUATION = frozenset({".", "?", "!"})
_MODEL_BEAM = object()


@dataclass(frozen=True)
class RoleValue:
    """One (role, label, position relation, modifiee category) tuple."""

    role: str
    label: str
    position: str
    modifiee: str

    def serialize(self) -> str:
        return ":".join((self.role, self.label, self.position, self.modifiee))


@dataclass(frozen=True)
class StructuredTag:
    """
    Category, ordered features, one or more role values and an ordering constraint.

    Serialized as ``C|f=v,f=v|R:L:UC:MC;R:L:UC:MC|DC``.
    """

    category: str
    features: Tuple[Tuple[str, str], ...]
    roles: Tuple[RoleValue, ...]
    ordering: str = ""

    def __post_init__(self):
        if not self.roles:
            raise TaggedCorpusError(f"Tag {self.category!r} needs at least one role value")
        if self.is_punctuation and self.features:
            raise TaggedCorpusError(f"Punctuation tag {self.category!r} cannot carry features")

    @property
    def is_punctuation(self) -> bool:
        return bool(PUNCTUATION_TOKEN.match(self.category))

    def serialize(self) -> str:
        features = ",".join(f"{k}={v}" for k, v in self.features)
        roles = ";".join(r.serialize() for r in self.roles)
        return f"{self.category}|{features}|{roles}|{self.ordering}"

    @classmethod
    def parse(cls, text: str) -> "StructuredTag":
        parts = text.split("|")
        if len(parts) != 4:
            raise TaggedCorpusError(f"Tag {text!r} must have four '|'-separated fields")
        category, features, roles, ordering = parts
        try:
            feature_pairs = tuple(tuple(f.split("=", 1)) for f in features.split(",") if f)
            role_values = tuple(RoleValue(*r.split(":")) for r in roles.split(";") if r)
        except TypeError:
            raise TaggedCorpusError(f"Tag {text!r} has a malformed role value")
        if any(len(pair) != 2 for pair in feature_pairs):
            raise TaggedCorpusError(f"Tag {text!r} has a malformed feature")
        return cls(category, feature_pairs, role_values, ordering)

    @classmethod
    def simple(cls, category: str) -> "StructuredTag":
        """Plain part-of-speech tag with a single placeholder role."""
        return cls(category, (), (RoleValue("G", "-", "-", "-"),))


def punctuation_tag(surface: str, sentence_final: bool) -> StructuredTag:
    """Fine-grained punctuation tag: category is the surface form, no features."""
    label = "final" if sentence_final else "intra"
    return StructuredTag(surface, (), (RoleValue("G", label, "L", "-"),))


class TagInventory:
    """Stable dense id <-> StructuredTag mapping."""

    def __init__(self, tags: Iterable[StructuredTag] = ()):
        self._tags: List[StructuredTag] = []
        self._ids: Dict[StructuredTag, int] = {}
        for tag in tags:
            self.add(tag)

    def add(self, tag: StructuredTag) -> int:
        if tag not in self._ids:
            self._ids[tag] = len(self._tags)
            self._tags.append(tag)
        return self._ids[tag]

    def tag(self, tag_id: int) -> StructuredTag:
        return self._tags[tag_id]

    def id_of(self, tag: StructuredTag) -> int:
        return self._ids[tag]

    def __len__(self) -> int:
        return len(self._tags)

    def __contains__(self, tag_id: int) -> bool:
        return 0 <= tag_id < len(self._tags)

    def save(self, path: str):
        with atomic_write(path) as f:
            for tag_id, tag in enumerate(self._tags):
                f.write(f"{tag_id}\t{tag.serialize()}\n")

    @classmethod
    def load(cls, path: str) -> "TagInventory":
        inventory = cls()
        with open_text(path) as f:
            for line_no, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 2 or not fields[0].isdigit():
                    raise TaggedCorpusError(f"{path}:{line_no}: expected tag-id<TAB>tag")
                if int(fields[0]) != len(inventory):
                    raise TaggedCorpusError(f"{path}:{line_no}: tag ids must be dense and ordered")
                tag = StructuredTag.parse(fields[1])
                if inventory.add(tag) != int(fields[0]):
                    raise TaggedCorpusError(f"{path}:{line_no}: duplicate tag {fields[1]!r}")
        return inventory


@dataclass
class TaggedCorpus:
    """Sentences of (word id, tag id) pairs (no boundary markers stored)."""

    sentences: List[List[Tuple[int, int]]]
    inventory: TagInventory
    vocab: Vocabulary

    def words(self, index: int) -> TokenSequence:
        return TokenSequence.from_words([w for w, _ in self.sentences[index]], self.vocab)


def read_tagged_corpus(path: str, inventory: TagInventory, vocab: Vocabulary,
                       policy: NormalizationPolicy = NormalizationPolicy()) -> TaggedCorpus:
    """
    Read ``word|||tag-id`` tokens, one sentence per line.

    Args:
        path (str): Tagged corpus file
        inventory (TagInventory): Inventory every tag id must resolve in
        vocab (Vocabulary): Word vocabulary
        policy (NormalizationPolicy): Case and number handling applied per word

    Returns:
        TaggedCorpus: Parsed corpus
    """
    sentences = []
    with open_text(path) as f:
        for line_no, line in enumerate(f, 1):
            tokens = line.split()
            if not tokens:
                continue
            sentence = []
            for token in tokens:
                word, sep, tag_text = token.rpartition(PAIR_SEPARATOR)
                if not sep or not word or not tag_text.isdigit():
                    raise TaggedCorpusError(f"{path}:{line_no}: malformed token {token!r}")
                tag_id = int(tag_text)
                if tag_id not in inventory:
                    raise TaggedCorpusError(f"{path}:{line_no}: tag id {tag_id} not in inventory")
                normalized = normalize_tokens(word, policy)
                if len(normalized) != 1:
                    raise TaggedCorpusError(f"{path}:{line_no}: word {word!r} does not normalize to one token")
                sentence.append((vocab.add(normalized[0]), tag_id))
            sentences.append(sentence)
    logger.info(f"Read {len(sentences)} tagged sentences from {path}")
    return TaggedCorpus(sentences, inventory, vocab)


def write_tagged_corpus(corpus: TaggedCorpus, path: str):
    with atomic_write(path) as f:
        for sentence in corpus.sentences:
            f.write(" ".join(f"{corpus.vocab.token(w)}{PAIR_SEPARATOR}{t}" for w, t in sentence) + "\n")


@dataclass
class TagAnalysis:
    """Tag-marginalized sentence score plus the Viterbi tag sequence."""

    logprob: float
    tags: List[int]
    viterbi_logprob: float


class JointTagModel(SentenceScorer):
    """
    Joint word/tag N-gram model.

    One backoff model is trained over (word, tag) pair symbols; the tag
    predictor and the tag-conditioned word predictor are its exact marginal
    and conditional views. History states are the last n-1 pairs.
    """

    name = "taglm"

    def __init__(self, pair_model: BackoffModel, pair_vocab: Vocabulary, vocab: Vocabulary,
                 inventory: TagInventory, pair_of: Dict[Tuple[int, int], int], unknown_pair: int,
                 default_tag: Optional[int] = None, beam_threshold: Optional[float] = DEFAULT_BEAM_THRESHOLD):
        self.pair_model = pair_model
        self.pair_vocab = pair_vocab
        self.vocab = vocab
        self.inventory = inventory
        self.pair_of = pair_of
        self.unknown_pair = unknown_pair
        self.beam_threshold = beam_threshold
        self.order = pair_model.order
        self._pairs_by_word: Dict[int, List[int]] = defaultdict(list)
        self._pairs_by_tag: Dict[int, List[int]] = defaultdict(list)
        self._tag_of: Dict[int, int] = {}
        for (word, tag), pair in sorted(pair_of.items()):
            self._pairs_by_word[word].append(pair)
            self._pairs_by_tag[tag].append(pair)
            self._tag_of[pair] = tag
        # unknown words report the tag with the largest unigram mass
        if default_tag is None:
            default_tag = min(self._pairs_by_tag, key=lambda t: (-self.tag_logprob((), t), t))
        self.default_tag = default_tag

    def candidate_pairs(self, word: int) -> List[int]:
        if word == self.vocab.eos_id:
            return [self.pair_vocab.eos_id]
        return self._pairs_by_word.get(word) or [self.unknown_pair]

    def tag_of_pair(self, pair: int) -> int:
        return self._tag_of.get(pair, self.default_tag)

    def _history(self, state: Tuple[int, ...], pair: int) -> Tuple[int, ...]:
        return (state + (pair,))[-(self.order - 1):] if self.order > 1 else ()

    def _prune(self, states: Dict[Tuple[int, ...], float], beam_threshold: Optional[float]):
        if beam_threshold is None or len(states) < 2:
            return states
        best = max(states.values())
        kept = {s: p for s, p in states.items() if p >= best * beam_threshold}
        total = math.fsum(kept.values())
        return {s: p / total for s, p in kept.items()}

    def forward_logprobs(self, words: Sequence[int], beam_threshold: Optional[float] = _MODEL_BEAM) -> List[float]:
        """
        Tag-marginalized log P(w_i | w_1..w_{i-1}) for every word after sentence-start.

        Args:
            words (sequence): Boundary-marked word ids
            beam_threshold (float): Relative pruning threshold; None disables pruning

        Returns:
            list: One natural-log probability per predicted word
        """
        if beam_threshold is _MODEL_BEAM:
            beam_threshold = self.beam_threshold
        start = (self.pair_vocab.bos_id,)
        states: Dict[Tuple[int, ...], float] = {start[-(self.order - 1):] if self.order > 1 else (): 1.0}
        logprobs = []
        for word in words[1:]:
            successors: Dict[Tuple[int, ...], float] = defaultdict(float)
            for state, weight in states.items():
                for pair in self.candidate_pairs(word):
                    p = math.exp(self.pair_model.logprob(state, pair))
                    if p > 0:
                        successors[self._history(state, pair)] += weight * p
            total = math.fsum(successors.values())
            if total <= 0:
                logprobs.extend([-math.inf] * (len(words) - 1 - len(logprobs)))
                break
            logprobs.append(math.log(total))
            states = self._prune({s: p / total for s, p in successors.items()}, beam_threshold)
        return logprobs

    def conditional_logprob(self, prefix: Sequence[int], word: int) -> float:
        return self.forward_logprobs(tuple(prefix) + (word,))[-1]

    def token_logprobs(self, sentence: TokenSequence, segment_id: Optional[str] = None) -> List[float]:
        return self.forward_logprobs(sentence.ids)

    def viterbi(self, words: Sequence[int]) -> Tuple[List[int], float]:
        """
        Best pair assignment for a boundary-marked sentence.

        Returns:
            tuple: (tag ids of the real words, joint chain log-probability including sentence-end)
        """
        start = (self.pair_vocab.bos_id,)
        beams: Dict[Tuple[int, ...], Tuple[float, Tuple[int, ...]]] = {
            start[-(self.order - 1):] if self.order > 1 else (): (0.0, ())
        }
        for word in words[1:]:
            successors: Dict[Tuple[int, ...], Tuple[float, Tuple[int, ...]]] = {}
            for state in sorted(beams):
                score, path = beams[state]
                for pair in self.candidate_pairs(word):
                    candidate = (score + self.pair_model.logprob(state, pair), path + (pair,))
                    key = self._history(state, pair)
                    if key not in successors or candidate[0] > successors[key][0]:
                        successors[key] = candidate
            beams = successors
        score, path = max(beams.values(), key=lambda item: (item[0], tuple(-p for p in item[1])))
        return [self.tag_of_pair(pair) for pair in path[:-1]], score

    def analyze(self, sentence: TokenSequence) -> TagAnalysis:
        logprob = math.fsum(self.token_logprobs(sentence))
        tags, viterbi_logprob = self.viterbi(sentence.ids)
        return TagAnalysis(logprob, tags, viterbi_logprob)

    def tag_logprob(self, history: Sequence[int], tag: int) -> float:
        """Tag predictor view: log sum over words of P((w, tag) | pair history)."""
        pairs = self._pairs_by_tag.get(tag, [])
        values = [self.pair_model.logprob(history, p) for p in pairs]
        return float(logsumexp(values)) if values else -math.inf

    def word_given_tag_logprob(self, history: Sequence[int], tag: int, word: int) -> float:
        """Word predictor view: log P(word | pair history, tag)."""
        pair = self.pair_of.get((word, tag))
        if pair is None:
            return -math.inf
        return self.pair_model.logprob(history, pair) - self.tag_logprob(history, tag)

    def is_oov(self, word: int) -> bool:
        return word != self.vocab.eos_id and word not in self._pairs_by_word

    def predictable_ids(self) -> List[int]:
        return sorted(set(self._pairs_by_word) | {self.vocab.eos_id, self.vocab.unk_id})


def train_joint(corpus: TaggedCorpus, n: int, fallback_discount: Optional[float] = None,
                beam_threshold: Optional[float] = DEFAULT_BEAM_THRESHOLD) -> JointTagModel:
    """
    Train the joint word/tag model with modified Kneser-Ney over pair symbols.

    Args:
        corpus (TaggedCorpus): Training sentences
        n (int): Order (at least 2)
        fallback_discount (float): Passed to KN training for tiny corpora
        beam_threshold (float): Default relative beam of the forward pass

    Returns:
        JointTagModel: Trained model
    """
    if n < 2:
        raise UsageError("The joint tag model needs order >= 2")
    if not corpus.sentences:
        raise TaggedCorpusError("Cannot train on an empty tagged corpus")
    pair_vocab = Vocabulary()
    pair_of: Dict[Tuple[int, int], int] = {}
    sequences = []
    for sentence in corpus.sentences:
        ids = []
        for word, tag in sentence:
            if (word, tag) not in pair_of:
                pair_of[(word, tag)] = pair_vocab.add(f"{corpus.vocab.token(word)}{PAIR_SEPARATOR}{tag}")
            ids.append(pair_of[(word, tag)])
        sequences.append(TokenSequence.from_words(ids, pair_vocab))
    unknown_pair = pair_vocab.add(f"{corpus.vocab.token(corpus.vocab.unk_id)}{PAIR_SEPARATOR}{UNKNOWN_TAG}")
    counts = count_corpus(sequences, n)
    pair_model = train_kn(counts, pair_vocab, fallback_discount=fallback_discount,
                          extra_words=[unknown_pair], open_vocabulary=False)
    logger.info(f"Trained joint tag model: {len(pair_of)} word/tag pairs, {len(corpus.inventory)} tags, order {n}")
    return JointTagModel(pair_model, pair_vocab, corpus.vocab, corpus.inventory, pair_of,
                         unknown_pair, beam_threshold=beam_threshold)


def conditional_word_prob(model: JointTagModel, prefix: Sequence[int], word: int) -> float:
    """Tag-marginalized natural-log P(word | prefix); ``prefix`` starts with sentence-start."""
    return model.conditional_logprob(prefix, word)


def sentence_logprob(model: JointTagModel, sentence: TokenSequence) -> TagAnalysis:
    return model.analyze(sentence)


class MixtureScorer(SentenceScorer):
    """
    Linear interpolation of component word probabilities.

    Static mode applies one weight vector everywhere; dynamic mode fits a
    weight vector per segment on that segment's 1-best hypothesis.
    """

    name = "mixture"

    def __init__(self, components: Sequence[SentenceScorer], weights: Optional[Sequence[float]] = None,
                 mode: str = "static", adaptation_text: Optional[Dict[str, TokenSequence]] = None,
                 max_iterations: int = 200, tolerance: float = 1e-6):
        if not components:
            raise UsageError("A mixture needs at least one component")
        if mode not in ("static", "dynamic"):
            raise UsageError(f"Unknown mixture mode {mode!r}")
        if weights is None:
            weights = [1.0 / len(components)] * len(components)
        weights = np.asarray(weights, dtype=float)
        if len(weights) != len(components) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise UsageError(f"Mixture weights must lie on the simplex: {weights.tolist()}")
        self.components = list(components)
        self.weights = weights
        self.mode = mode
        self.segment_weights: Dict[str, np.ndarray] = {}
        if mode == "dynamic":
            for segment_id, one_best in sorted((adaptation_text or {}).items()):
                result = estimate_static_weights(self.components, [one_best], self.weights,
                                                 max_iterations, tolerance)
                self.segment_weights[segment_id] = result.weights
            logger.info(f"Fitted dynamic mixture weights for {len(self.segment_weights)} segments")

    def weights_for(self, segment_id: Optional[str]) -> np.ndarray:
        if self.mode == "static":
            return self.weights
        weights = self.segment_weights.get(segment_id)
        if weights is None:
            logger.warning(f"No 1-best hypothesis for segment {segment_id}; using static weights")
            return self.weights
        return weights

    def _combine(self, component_logprobs: np.ndarray, weights: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            log_weights = np.log(weights)
        return logsumexp(component_logprobs + log_weights[:, None], axis=0)

    def conditional_logprob(self, prefix: Sequence[int], word: int) -> float:
        values = np.array([[c.conditional_logprob(prefix, word)] for c in self.components])
        return float(self._combine(values, self.weights)[0])

    def token_logprobs(self, sentence: TokenSequence, segment_id: Optional[str] = None) -> List[float]:
        values = np.array([c.token_logprobs(sentence, segment_id) for c in self.components])
        return [float(v) for v in self._combine(values, self.weights_for(segment_id))]

    def is_oov(self, word: int) -> bool:
        return all(c.is_oov(word) for c in self.components)

    def predictable_ids(self) -> List[int]:
        return self.components[0].predictable_ids()


def estimate_static_weights(components: Sequence[SentenceScorer], sentences: Iterable[TokenSequence],
                            initial: Optional[Sequence[float]] = None,
                            max_iterations: int = 200, tolerance: float = 1e-6) -> EMResult:
    """
    EM interpolation weights maximizing the likelihood (minimizing perplexity) of a tuning text.

    Args:
        components (sequence): Component scorers
        sentences (iterable): Tuning sequences
        initial (sequence): Starting weights (uniform by default)
        max_iterations (int): Iteration cap
        tolerance (float): Relative log-likelihood convergence threshold

    Returns:
        EMResult: Weights in component order and the likelihood trace
    """
    columns = []
    for sentence in sentences:
        columns.append(np.exp(np.array([c.token_logprobs(sentence) for c in components])))
    if not columns:
        raise UsageError("Weight estimation needs at least one tuning sentence")
    probs = np.concatenate(columns, axis=1).T
    return truncated_mixture_em(probs, None, initial, max_iterations, tolerance)


def mix_components(components: Sequence[SentenceScorer], mode: str = "static",
                   weights: Optional[Sequence[float]] = None,
                   adaptation_text: Optional[Dict[str, TokenSequence]] = None) -> MixtureScorer:
    """Build a static or per-segment dynamic mixture of sentence scorers."""
    return MixtureScorer(components, weights, mode, adaptation_text)


def tag_punctuation(tokens: Sequence[str], inventory: TagInventory) -> List[Optional[int]]:
    """
    Tag ids for punctuation tokens (None for other tokens), keyed by surface form.

    A sentence-final mark is the last token when it is one of ``. ? !``.
    """
    tags = []
    for i, token in enumerate(tokens):
        if not PUNCTUATION_TOKEN.match(token) or token == EOS:
            tags.append(None)
            continue
        final = i == len(tokens) - 1 and token in SENTENCE_FINAL_PUNCTUATION
        tags.append(inventory.add(punctuation_tag(token, final)))
    return tags


INVENTORY_SUFFIX = ".tags"


def save_joint_model(model: JointTagModel, path: str):
    """Write the pair model as ARPA (symbols ``word|||tag-id``) and the inventory next to it."""
    write_arpa(model.pair_model, path)
    model.inventory.save(path + INVENTORY_SUFFIX)


def load_joint_model(path: str, vocab: Vocabulary,
                     beam_threshold: Optional[float] = DEFAULT_BEAM_THRESHOLD) -> JointTagModel:
    """
    Rebuild a joint model from its ARPA file and inventory sidecar.

    Args:
        path (str): ARPA file written by :func:`save_joint_model`
        vocab (Vocabulary): Word vocabulary the pairs refer to
        beam_threshold (float): Forward-pass beam

    Returns:
        JointTagModel: Loaded model
    """
    inventory = TagInventory.load(path + INVENTORY_SUFFIX)
    pair_model, pair_vocab = read_arpa(path, Vocabulary())
    pair_model.unk_id = None
    pair_of: Dict[Tuple[int, int], int] = {}
    unknown_pair = None
    for pair_id, symbol in enumerate(pair_vocab):
        word, sep, tag = symbol.rpartition(PAIR_SEPARATOR)
        if not sep:
            continue
        if tag == UNKNOWN_TAG:
            unknown_pair = pair_id
        elif tag.isdigit() and int(tag) in inventory:
            pair_of[(vocab.add(word), int(tag))] = pair_id
        else:
            raise TaggedCorpusError(f"{path}: pair symbol {symbol!r} has an unknown tag")
    if unknown_pair is None:
        raise TaggedCorpusError(f"{path}: no unknown-word pair symbol")
    return JointTagModel(pair_model, pair_vocab, vocab, inventory, pair_of, unknown_pair,
                         beam_threshold=beam_threshold)
