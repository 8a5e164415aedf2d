"""
BaseNP gap tagging, headword reduction, first-order dependency linking
and punctuation head rules, combined into a sentence-level parser LM.
"""
import json
import math
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from utils.corpus_utils import PUNCTUATION_TOKEN, TokenSequence
from utils.errors import InvalidGapSequenceError, TaggedCorpusError, UsageError
from utils.io_utils import atomic_write, open_text
from utils.smoothing_utils import SentenceScorer
from utils.taglm_utils import SENTENCE_FINAL_PUNCTUATION, JointTagModel, TagAnalysis

logger = logging.getLogger(__name__)

GAP_TAGS = ("S", "C", "E", "B", "N")
GAP_RANK = {gap: rank for rank, gap in enumerate(GAP_TAGS)}
NOMINAL_PREFIXES = ("NN", "PRP", "CD")
DISTANCE_BUCKETS = ("1", "2", "3-4", "5+")
DIRECTIONS = ("L", "R", "ROOT")
ROOT = -1
DEFAULT_BEAM_WIDTH = 64
SMOOTHING_FACTOR = 5.0


def gap_transition(inside: bool, gap: str) -> Optional[bool]:
    """
    Bracketing state after a gap tag, or None when the tag is not allowed.

    S opens an NP, C continues one, E closes one, B closes one and opens
    the next (so it needs an open NP), N stays outside.
    """
    if gap == "S" or gap == "N":
        return None if inside else gap == "S"
    if gap == "C" or gap == "B":
        return True if inside else None
    if gap == "E":
        return False if inside else None
    raise InvalidGapSequenceError(f"Unknown gap tag {gap!r}")


def validate_gaps(gaps: Sequence[str]):
    """Raise InvalidGapSequenceError at the first gap that breaks the bracketing."""
    inside = False
    for position, gap in enumerate(gaps):
        state = gap_transition(inside, gap)
        if state is None:
            where = "inside" if inside else "outside"
            raise InvalidGapSequenceError(f"Gap {gap!r} at position {position} is not allowed {where} a baseNP",
                                          position)
        inside = state


def spans_from_gaps(gaps: Sequence[str]) -> List[Tuple[int, int]]:
    """BaseNP spans (start, end-exclusive) of a valid gap sequence; open NPs close at sentence end."""
    validate_gaps(gaps)
    spans, start = [], None
    for i, gap in enumerate(gaps):
        if gap in ("S", "B"):
            if start is not None:
                spans.append((start, i))
            start = i
        elif gap == "E":
            spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(gaps)))
    return spans


def gaps_from_spans(spans: Iterable[Tuple[int, int]], length: int) -> List[str]:
    """Gap tag before every word for non-overlapping baseNP spans."""
    member = [False] * length
    starts = set()
    for start, end in spans:
        starts.add(start)
        for i in range(start, end):
            if member[i]:
                raise InvalidGapSequenceError(f"Overlapping baseNP spans at position {i}", i)
            member[i] = True
    gaps = []
    for i in range(length):
        previous = i > 0 and member[i - 1]
        if i in starts:
            gaps.append("B" if previous else "S")
        elif member[i]:
            gaps.append("C")
        elif previous:
            gaps.append("E")
        else:
            gaps.append("N")
    return gaps


def is_punctuation(word: str) -> bool:
    return bool(PUNCTUATION_TOKEN.match(word))


def is_sentence_final(words: Sequence[str], position: int) -> bool:
    return position == len(words) - 1 and words[position] in SENTENCE_FINAL_PUNCTUATION


def intra_punctuation_flags(words: Sequence[str]) -> List[bool]:
    return [is_punctuation(w) and not is_sentence_final(words, i) for i, w in enumerate(words)]


def span_head(tags: Sequence[str], start: int, end: int) -> int:
    """Rightmost nominal token of a span, else its rightmost token."""
    for i in range(end - 1, start - 1, -1):
        if tags[i].startswith(NOMINAL_PREFIXES):
            return i
    return end - 1


@dataclass
class BaseNPAnalysis:
    """Gap tags, baseNP spans and the headword-reduced sentence."""

    words: List[str]
    tags: List[str]
    gaps: List[str]
    spans: List[Tuple[int, int]]
    span_heads: List[int]
    reduced_words: List[str]
    reduced_tags: List[str]
    reduced_positions: List[int]
    logprob: float = 0.0

    @property
    def reduced_string(self) -> str:
        return " ".join(self.reduced_words)

    def owner(self) -> List[int]:
        """Reduced position that represents each original position."""
        owner = [0] * len(self.words)
        span_of = {}
        for index, (start, end) in enumerate(self.spans):
            for i in range(start, end):
                span_of[i] = self.span_heads[index]
        for r, position in enumerate(self.reduced_positions):
            owner[position] = r
        for i, head in span_of.items():
            owner[i] = owner[head]
        return owner


def reduce_sentence(words: Sequence[str], tags: Sequence[str], spans: Sequence[Tuple[int, int]],
                    gaps: Optional[Sequence[str]] = None, logprob: float = 0.0) -> BaseNPAnalysis:
    """
    Replace every baseNP span by its headword.

    Args:
        words (sequence): Sentence words
        tags (sequence): Part-of-speech categories
        spans (sequence): Non-overlapping (start, end-exclusive) spans
        gaps (sequence): Gap tags (derived from the spans when omitted)
        logprob (float): Gap path log-probability to record

    Returns:
        BaseNPAnalysis: Analysis with the reduced words, tags and positions
    """
    spans = sorted(spans)
    gaps = list(gaps) if gaps is not None else gaps_from_spans(spans, len(words))
    heads = [span_head(tags, start, end) for start, end in spans]
    inside = {}
    for (start, end), head in zip(spans, heads):
        for i in range(start, end):
            inside[i] = head
    positions = [i for i in range(len(words)) if inside.get(i, i) == i]
    return BaseNPAnalysis(
        words=list(words), tags=list(tags), gaps=gaps, spans=list(spans), span_heads=heads,
        reduced_words=[words[i] for i in positions], reduced_tags=[tags[i] for i in positions],
        reduced_positions=positions, logprob=logprob,
    )


def _interpolate(counter: Counter, outcome: str, backoff: float) -> float:
    total = sum(counter.values())
    if total == 0:
        return backoff
    weight = total / (total + SMOOTHING_FACTOR * len(counter))
    return weight * counter[outcome] / total + (1 - weight) * backoff


def _counter_table_to_json(table: Dict[Tuple, Counter]) -> List:
    return [[list(key), dict(sorted(counter.items()))] for key, counter in sorted(table.items())]


def _counter_table_from_json(rows: List) -> Dict[Tuple, Counter]:
    table = defaultdict(Counter)
    for key, counts in rows:
        table[tuple(key)] = Counter(counts)
    return table


class BaseNPModel:
    """
    P(G_i | w_{i-1}, t_{i-1}, w_i, t_i, c_i) with interpolated backoff
    from the full context to tags only to an add-one prior.
    """

    def __init__(self):
        self.full: Dict[Tuple, Counter] = defaultdict(Counter)
        self.pos: Dict[Tuple, Counter] = defaultdict(Counter)
        self.prior: Counter = Counter()

    def observe(self, words: Sequence[str], tags: Sequence[str], gaps: Sequence[str]):
        intra = intra_punctuation_flags(words)
        for i in range(1, len(words)):
            c = int(intra[i - 1] or intra[i])
            gap = gaps[i]
            self.full[(words[i - 1].lower(), tags[i - 1], words[i].lower(), tags[i], c)][gap] += 1
            self.pos[(tags[i - 1], tags[i], c)][gap] += 1
            self.prior[gap] += 1

    def prob(self, gap: str, prev_word: str, prev_tag: str, word: str, tag: str, c: int) -> float:
        prior = (self.prior[gap] + 1) / (sum(self.prior.values()) + len(GAP_TAGS))
        pos = _interpolate(self.pos.get((prev_tag, tag, c), Counter()), gap, prior)
        return _interpolate(self.full.get((prev_word.lower(), prev_tag, word.lower(), tag, c), Counter()), gap, pos)

    def logprob(self, gap: str, prev_word: str, prev_tag: str, word: str, tag: str, c: int) -> float:
        return math.log(self.prob(gap, prev_word, prev_tag, word, tag, c))

    def to_dict(self) -> Dict:
        return {"type": "basenp", "full": _counter_table_to_json(self.full),
                "pos": _counter_table_to_json(self.pos), "prior": dict(sorted(self.prior.items()))}

    @classmethod
    def from_dict(cls, data: Dict) -> "BaseNPModel":
        if data.get("type") != "basenp":
            raise TaggedCorpusError("Not a baseNP model file")
        model = cls()
        model.full = _counter_table_from_json(data["full"])
        model.pos = _counter_table_from_json(data["pos"])
        model.prior = Counter(data["prior"])
        return model


@dataclass
class GoldSentence:
    """One sentence of the gold chunk/dependency format (heads are 0-based, -1 for root)."""

    words: List[str]
    tags: List[str]
    gaps: List[str]
    heads: List[int]
    labels: List[str]


def read_gold_file(path: str) -> List[GoldSentence]:
    """
    Read ``index TAB word TAB pos TAB gap-tag-before TAB head-index TAB label`` lines.

    Sentences are separated by blank lines; indices are 1-based and head 0 is the root.
    """
    sentences = []
    rows: List[List[str]] = []

    def flush(line_no: int):
        if not rows:
            return
        for expected, row in enumerate(rows, 1):
            if row[0] != str(expected):
                raise TaggedCorpusError(f"{path}:{line_no}: token indices must run 1..n")
        heads = [int(row[4]) - 1 for row in rows]
        if any(h < ROOT or h >= len(rows) for h in heads):
            raise TaggedCorpusError(f"{path}:{line_no}: head index out of range")
        sentences.append(GoldSentence([r[1] for r in rows], [r[2] for r in rows], [r[3] for r in rows],
                                      heads, [r[5] for r in rows]))
        rows.clear()

    line_no = 0
    with open_text(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                flush(line_no)
                continue
            fields = line.split("\t")
            if len(fields) != 6 or not fields[4].lstrip("-").isdigit():
                raise TaggedCorpusError(f"{path}:{line_no}: expected six tab-separated fields")
            rows.append(fields)
    flush(line_no)
    logger.info(f"Read {len(sentences)} gold sentences from {path}")
    return sentences


def train_basenp(sentences: Iterable[GoldSentence]) -> Tuple[BaseNPModel, List[Tuple[int, int, str]]]:
    """
    Train the gap-tag model from gold sentences.

    Returns:
        tuple: (model, rejections as (sentence index, position, message))
    """
    model = BaseNPModel()
    rejections = []
    accepted = 0
    for index, sentence in enumerate(sentences):
        try:
            validate_gaps(sentence.gaps)
        except InvalidGapSequenceError as e:
            rejections.append((index, e.position, str(e)))
            logger.warning(f"Sentence {index}: rejected ({e})")
            continue
        model.observe(sentence.words, sentence.tags, sentence.gaps)
        accepted += 1
    logger.info(f"Trained baseNP model on {accepted} sentences ({len(rejections)} rejected)")
    return model, rejections


def tag_basenps(model: BaseNPModel, words: Sequence[str], tags: Sequence[str]) -> BaseNPAnalysis:
    """
    Most probable valid gap sequence, ties broken toward the earlier tag in S < C < E < B < N.

    The first gap is S or N with probability one.
    """
    if not words:
        return reduce_sentence([], [], [], [], 0.0)
    intra = intra_punctuation_flags(words)
    beams: Dict[bool, Tuple[float, Tuple[int, ...]]] = {}
    for gap in ("S", "N"):
        beams[gap_transition(False, gap)] = (0.0, (GAP_RANK[gap],))
    for i in range(1, len(words)):
        c = int(intra[i - 1] or intra[i])
        successors: Dict[bool, Tuple[float, Tuple[int, ...]]] = {}
        for inside, (score, path) in beams.items():
            for gap in GAP_TAGS:
                state = gap_transition(inside, gap)
                if state is None:
                    continue
                candidate = (score + model.logprob(gap, words[i - 1], tags[i - 1], words[i], tags[i], c),
                             path + (GAP_RANK[gap],))
                best = successors.get(state)
                if best is None or candidate[0] > best[0] or (candidate[0] == best[0] and candidate[1] < best[1]):
                    successors[state] = candidate
        beams = successors
    score, path = min(beams.values(), key=lambda item: (-item[0], item[1]))
    gaps = [GAP_TAGS[rank] for rank in path]
    return reduce_sentence(words, tags, spans_from_gaps(gaps), gaps, score)


def distance_bucket(distance: int) -> str:
    if distance <= 1:
        return "1"
    if distance == 2:
        return "2"
    if distance <= 4:
        return "3-4"
    return "5+"


def _link_key(head_category: str, direction: str, bucket: str) -> str:
    return f"{head_category}|{direction}|{bucket}"


class LinkModel:
    """
    First-order link model P(head category, direction, distance bucket | dependent category),
    with ROOT as an extra outcome, backed off to P(direction | dependent category).
    """

    ROOT_KEY = "ROOT"

    def __init__(self):
        self.outcomes: Dict[str, Counter] = defaultdict(Counter)
        self.directions: Dict[str, Counter] = defaultdict(Counter)
        self.head_categories: set = set()

    def observe_link(self, dependent: str, head: str, direction: str, bucket: str):
        self.outcomes[dependent][_link_key(head, direction, bucket)] += 1
        self.directions[dependent][direction] += 1
        self.head_categories.add(head)

    def observe_root(self, dependent: str):
        self.outcomes[dependent][self.ROOT_KEY] += 1
        self.directions[dependent]["ROOT"] += 1

    def _backoff(self, dependent: str, direction: str) -> float:
        p_direction = _interpolate(self.directions.get(dependent, Counter()), direction, 1.0 / len(DIRECTIONS))
        if direction == "ROOT":
            return p_direction
        return p_direction / (max(len(self.head_categories), 1) * len(DISTANCE_BUCKETS))

    def link_logprob(self, dependent: str, head: str, dependent_position: int, head_position: int) -> float:
        direction = "L" if head_position < dependent_position else "R"
        bucket = distance_bucket(abs(head_position - dependent_position))
        p = _interpolate(self.outcomes.get(dependent, Counter()), _link_key(head, direction, bucket),
                         self._backoff(dependent, direction))
        return math.log(p)

    def root_logprob(self, dependent: str) -> float:
        p = _interpolate(self.outcomes.get(dependent, Counter()), self.ROOT_KEY, self._backoff(dependent, "ROOT"))
        return math.log(p)

    def to_dict(self) -> Dict:
        return {
            "type": "link",
            "outcomes": {k: dict(sorted(v.items())) for k, v in sorted(self.outcomes.items())},
            "directions": {k: dict(sorted(v.items())) for k, v in sorted(self.directions.items())},
            "head_categories": sorted(self.head_categories),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "LinkModel":
        if data.get("type") != "link":
            raise TaggedCorpusError("Not a link model file")
        model = cls()
        model.outcomes = defaultdict(Counter, {k: Counter(v) for k, v in data["outcomes"].items()})
        model.directions = defaultdict(Counter, {k: Counter(v) for k, v in data["directions"].items()})
        model.head_categories = set(data["head_categories"])
        return model


def train_linkmodel(sentences: Iterable[GoldSentence]) -> LinkModel:
    """
    Collect first-order link statistics on gold sentences reduced by their gold baseNP spans.

    A reduced token's head is the external head of its span; links to or
    from punctuation are left to the attachment rules.
    """
    model = LinkModel()
    used = 0
    for index, sentence in enumerate(sentences):
        try:
            analysis = reduce_sentence(sentence.words, sentence.tags, spans_from_gaps(sentence.gaps), sentence.gaps)
        except InvalidGapSequenceError as e:
            logger.warning(f"Sentence {index}: skipped for link statistics ({e})")
            continue
        owner = analysis.owner()
        members = defaultdict(list)
        for i, r in enumerate(owner):
            members[r].append(i)
        search = [r for r, w in enumerate(analysis.reduced_words) if not is_punctuation(w)]
        search_index = {r: k for k, r in enumerate(search)}
        for r in search:
            external = [i for i in members[r] if sentence.heads[i] == ROOT or owner[sentence.heads[i]] != r]
            if not external:
                continue
            gold_head = sentence.heads[external[0]]
            category = analysis.reduced_tags[r]
            if gold_head == ROOT:
                model.observe_root(category)
                continue
            head_r = owner[gold_head]
            if head_r not in search_index:
                continue
            d, h = search_index[r], search_index[head_r]
            model.observe_link(category, analysis.reduced_tags[head_r], "L" if h < d else "R",
                               distance_bucket(abs(h - d)))
        used += 1
    logger.info(f"Trained link model on {used} sentences")
    return model


def _creates_cycle(heads: Tuple[int, ...], dependent: int, head: int) -> bool:
    current = head
    while current != ROOT:
        if current == dependent:
            return True
        if current >= len(heads):
            return False
        current = heads[current]
    return False


def search_dependencies(model: LinkModel, categories: Sequence[str],
                        beam_width: Optional[int] = DEFAULT_BEAM_WIDTH) -> Tuple[List[int], float]:
    """
    Left-to-right beam search over head assignments with one root and no cycles.

    Args:
        model (LinkModel): Link probabilities
        categories (sequence): Tag categories of the words to link
        beam_width (int): Partial structures kept per step; None searches exhaustively

    Returns:
        tuple: (head per word, ROOT for the root; log-probability)
    """
    m = len(categories)
    if m <= 1:
        return [ROOT] * m, 0.0
    scores = [[model.root_logprob(categories[d])] +
              [model.link_logprob(categories[d], categories[h], d, h) if h != d else -math.inf for h in range(m)]
              for d in range(m)]
    beam: List[Tuple[float, Tuple[int, ...], int]] = [(0.0, (), 0)]
    for d in range(m):
        extended = []
        for score, heads, roots in beam:
            for head in [ROOT] + [h for h in range(m) if h != d]:
                if head == ROOT:
                    if roots:
                        continue
                elif _creates_cycle(heads, d, head):
                    continue
                extended.append((score + scores[d][head + 1], heads + (head,), roots + (head == ROOT)))
        if d == m - 1:
            extended = [item for item in extended if item[2] == 1]
        extended.sort(key=lambda item: (-item[0], item[1]))
        beam = extended[:beam_width] if beam_width else extended
    score, heads, _ = beam[0]
    return list(heads), score


def _depth(heads: Sequence[int], position: int) -> int:
    depth = 0
    while heads[position] != ROOT:
        position = heads[position]
        depth += 1
    return depth


def _phrase_head(phrase: Sequence[int], heads: Sequence[int]) -> int:
    inside = set(phrase)
    external = [p for p in phrase if heads[p] == ROOT or heads[p] not in inside]
    return min(external, key=lambda p: (_depth(heads, p), p))


@dataclass
class DependencyAnalysis:
    """Heads over the reduced sentence (ROOT = -1) with the rule behind each punctuation link."""

    words: List[str]
    heads: List[int]
    labels: List[str]
    rules: List[Optional[str]] = field(default_factory=list)
    logprob: float = 0.0

    @property
    def root(self) -> int:
        return self.heads.index(ROOT)


def assign_punct_heads(words: Sequence[str], heads: Sequence[Optional[int]]) -> Tuple[List[int], List[Optional[str]]]:
    """
    Attach punctuation given the heads of every non-punctuation word.

    Sentence-final marks attach to the root; other marks attach to the
    headword of the following phrase, or of the preceding phrase when
    nothing follows. Phrases are delimited by the punctuation marks.

    Args:
        words (sequence): Reduced sentence
        heads (sequence): Head per position (ROOT for the root); ignored at punctuation

    Returns:
        tuple: (complete heads, rule per position or None for non-punctuation)
    """
    n = len(words)
    punct = [is_punctuation(w) for w in words]
    heads = [None if punct[i] else heads[i] for i in range(n)]
    rules: List[Optional[str]] = [None] * n
    roots = [i for i in range(n) if not punct[i] and heads[i] == ROOT]
    if not roots:
        # nothing but punctuation: the first mark is the root
        for i in range(n):
            heads[i] = ROOT if i == 0 else 0
            rules[i] = "root"
        return heads, rules
    root = roots[0]
    marks = [i for i in range(n) if punct[i]]
    for p in marks:
        if is_sentence_final(words, p):
            heads[p], rules[p] = root, "final"
            continue
        following = []
        for i in range(p + 1, n):
            if punct[i]:
                break
            following.append(i)
        if following:
            heads[p], rules[p] = _phrase_head(following, heads), "following"
            continue
        preceding = []
        for i in range(p - 1, -1, -1):
            if punct[i]:
                break
            preceding.insert(0, i)
        if preceding:
            heads[p], rules[p] = _phrase_head(preceding, heads), "preceding"
        else:
            heads[p], rules[p] = root, "root"
    return heads, rules


def parse_reduced(model: LinkModel, words: Sequence[str], tags: Sequence[str],
                  beam_width: Optional[int] = DEFAULT_BEAM_WIDTH) -> DependencyAnalysis:
    """Dependency analysis of a reduced sentence: searched links plus rule-attached punctuation."""
    search = [i for i, w in enumerate(words) if not is_punctuation(w)]
    search_heads, logprob = search_dependencies(model, [tags[i] for i in search], beam_width)
    heads: List[Optional[int]] = [None] * len(words)
    for k, position in enumerate(search):
        heads[position] = ROOT if search_heads[k] == ROOT else search[search_heads[k]]
    heads, rules = assign_punct_heads(words, heads)
    labels = ["PUNCT" if rule is not None else ("ROOT" if head == ROOT else "DEP")
              for head, rule in zip(heads, rules)]
    return DependencyAnalysis(list(words), heads, labels, rules, logprob)


@dataclass
class ParseResult:
    """Parser LM score with its three factors and the analyses behind them."""

    logprob: float
    tag_logprob: float
    basenp_logprob: float
    dependency_logprob: float
    tags: TagAnalysis
    basenps: BaseNPAnalysis
    dependencies: DependencyAnalysis


def parser_sentence_logprob(models: Tuple[JointTagModel, BaseNPModel, LinkModel], sentence: TokenSequence,
                            beam_width: Optional[int] = DEFAULT_BEAM_WIDTH) -> ParseResult:
    """
    Viterbi-approximated parser LM score: best tag sequence, best gap
    sequence, then the best dependency structure of the reduced sentence.

    Returns:
        ParseResult: Sum of the tag-path, gap-path and dependency log-probabilities
    """
    tag_model, basenp_model, link_model = models
    tag_ids, tag_logprob = tag_model.viterbi(sentence.ids)
    tag_analysis = TagAnalysis(tag_logprob, tag_ids, tag_logprob)
    words = [tag_model.vocab.token(i) for i in sentence.words]
    categories = [tag_model.inventory.tag(t).category for t in tag_ids]
    basenps = tag_basenps(basenp_model, words, categories)
    dependencies = parse_reduced(link_model, basenps.reduced_words, basenps.reduced_tags, beam_width)
    total = tag_logprob + basenps.logprob + dependencies.logprob
    return ParseResult(total, tag_logprob, basenps.logprob, dependencies.logprob,
                       tag_analysis, basenps, dependencies)


class ParserLM(SentenceScorer):
    """Sentence-level scorer; the whole score is charged at sentence end."""

    name = "plm"

    def __init__(self, tag_model: JointTagModel, basenp_model: BaseNPModel, link_model: LinkModel,
                 beam_width: Optional[int] = DEFAULT_BEAM_WIDTH):
        self.models = (tag_model, basenp_model, link_model)
        self.beam_width = beam_width

    def analyze(self, sentence: TokenSequence) -> ParseResult:
        return parser_sentence_logprob(self.models, sentence, self.beam_width)

    def sentence_logprob(self, sentence: TokenSequence, segment_id: Optional[str] = None) -> float:
        return self.analyze(sentence).logprob

    def token_logprobs(self, sentence: TokenSequence, segment_id: Optional[str] = None) -> List[float]:
        return [0.0] * (len(sentence) - 2) + [self.sentence_logprob(sentence, segment_id)]

    def conditional_logprob(self, prefix: Sequence[int], word: int) -> float:
        raise UsageError("The parser LM scores whole sentences only")

    def is_oov(self, word: int) -> bool:
        return self.models[0].is_oov(word)

    def predictable_ids(self) -> List[int]:
        return self.models[0].predictable_ids()


def save_model_json(model, path: str):
    """Persist a BaseNPModel or LinkModel as sorted JSON."""
    with atomic_write(path) as f:
        f.write(json.dumps(model.to_dict(), sort_keys=True, indent=1))
        f.write("\n")
    logger.info(f"Model written to {path}")


def load_basenp_model(path: str) -> BaseNPModel:
    with open_text(path) as f:
        return BaseNPModel.from_dict(json.load(f))


def load_link_model(path: str) -> LinkModel:
    with open_text(path) as f:
        return LinkModel.from_dict(json.load(f))
