"""
Corpus utilities: text normalization, vocabulary management, N-gram
counting and sharded count files in the web-release layout.
"""
import re
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from utils.errors import CountFileError, InputFormatError
from utils.io_utils import atomic_write, open_text

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
NUMBER = "$number"
RESERVED_TOKENS = (BOS, EOS, UNK, NUMBER)

# digit-bearing tokens built from digits and numeric punctuation: 25, 3.5, 1,000, 10:30, 50%
NUMERIC_TOKEN = re.compile(r"^[+\-]?[\d.,:/%]*\d[\d.,:/%]*$")
PUNCTUATION_TOKEN = re.compile(r"^[^\w\s]+$")


class Vocabulary:
    """Dense id <-> token bijection with the reserved symbols at ids 0-3."""

    def __init__(self, tokens: Optional[Iterable[str]] = None):
        """
        Initialize the vocabulary.

        Args:
            tokens (iterable): Extra tokens to intern after the reserved ones
        """
        self._tokens: List[str] = []
        self._ids: Dict[str, int] = {}
        self.frozen = False
        for token in RESERVED_TOKENS:
            self._intern(token)
        for token in tokens or ():
            self.add(token)

    def _intern(self, token: str) -> int:
        self._ids[token] = len(self._tokens)
        self._tokens.append(token)
        return self._ids[token]

    @property
    def bos_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    @property
    def unk_id(self) -> int:
        return 2

    @property
    def number_id(self) -> int:
        return 3

    def add(self, token: str) -> int:
        """Intern a token; a frozen vocabulary answers unseen tokens with the unknown id."""
        existing = self._ids.get(token)
        if existing is not None:
            return existing
        if self.frozen:
            return self.unk_id
        return self._intern(token)

    def lookup(self, token: str) -> int:
        return self._ids.get(token, self.unk_id)

    def token(self, token_id: int) -> str:
        return self._tokens[token_id]

    def freeze(self) -> "Vocabulary":
        self.frozen = True
        return self

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __iter__(self) -> Iterator[str]:
        return iter(self._tokens)

    def save(self, path: str):
        """Write one token per line; line number - 1 is the id."""
        with atomic_write(path) as f:
            for token in self._tokens:
                f.write(f"{token}\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        """Read a vocabulary file written by :meth:`save`."""
        with open_text(path) as f:
            tokens = [line.rstrip("\n") for line in f]
        if tuple(tokens[:len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise InputFormatError(f"Vocabulary file {path} must start with {' '.join(RESERVED_TOKENS)}")
        vocab = cls(tokens[len(RESERVED_TOKENS):])
        if len(vocab) != len(tokens):
            raise InputFormatError(f"Vocabulary file {path} contains duplicate tokens")
        return vocab.freeze()

    @classmethod
    def build_open_vocabulary(cls, token_counts: Counter, unk_threshold: int = 1) -> "Vocabulary":
        """
        Build a frozen open vocabulary by singleton replacement.

        Args:
            token_counts (Counter): Training token frequencies
            unk_threshold (int): Tokens seen this many times or fewer map to unknown

        Returns:
            Vocabulary: Frozen vocabulary, tokens in sorted order
        """
        kept = sorted(t for t, c in token_counts.items() if c > unk_threshold and t not in RESERVED_TOKENS)
        logger.info(f"Open vocabulary: kept {len(kept)} of {len(token_counts)} types (threshold {unk_threshold})")
        return cls(kept).freeze()


@dataclass(frozen=True)
class NormalizationPolicy:
    """Local normalization policy: case folding, number macro-word, punctuation retention."""

    lowercase: bool = True
    map_numbers: bool = True
    keep_punctuation: bool = True


@dataclass(frozen=True)
class TokenSequence:
    """Ordered vocabulary ids; ``bounded`` means wrapped in sentence markers."""

    ids: Tuple[int, ...]
    bounded: bool = True

    @property
    def words(self) -> Tuple[int, ...]:
        return self.ids[1:-1] if self.bounded else self.ids

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    @classmethod
    def from_words(cls, word_ids: Sequence[int], vocab: Vocabulary) -> "TokenSequence":
        return cls((vocab.bos_id,) + tuple(word_ids) + (vocab.eos_id,), True)


def normalize_tokens(raw_line: str, policy: NormalizationPolicy = NormalizationPolicy()) -> List[str]:
    """Apply the normalization policy to a whitespace-tokenized line."""
    tokens = []
    for token in raw_line.split():
        if policy.lowercase:
            token = token.lower()
        if policy.map_numbers and NUMERIC_TOKEN.match(token):
            token = NUMBER
        elif not policy.keep_punctuation and PUNCTUATION_TOKEN.match(token):
            continue
        if token in (BOS, EOS):
            token = UNK
        tokens.append(token)
    return tokens


def normalize(raw_line: str, vocab: Vocabulary,
              policy: NormalizationPolicy = NormalizationPolicy()) -> Optional[TokenSequence]:
    """
    Normalize one segment into a boundary-marked token sequence.

    Args:
        raw_line (str): A single pre-tokenized segment
        vocab (Vocabulary): Vocabulary to intern into (or look up, when frozen)
        policy (NormalizationPolicy): Case, number and punctuation handling

    Returns:
        TokenSequence: Sequence with boundary markers, or None for an empty segment
    """
    tokens = normalize_tokens(raw_line, policy)
    if not tokens:
        return None
    return TokenSequence.from_words([vocab.add(t) for t in tokens], vocab)


def render(sequence: TokenSequence, vocab: Vocabulary) -> str:
    """Inverse of :func:`normalize` up to the policy: interior tokens joined by spaces."""
    return " ".join(vocab.token(i) for i in sequence.words)


class NGramCountTable:
    """
    Counts of k-grams for k = 1..order over vocabulary ids.

    Tables built from a corpus pass are prefix-consistent; tables read from
    external (possibly cutoff-filtered) files are flagged ``external`` and
    make no such promise.
    """

    def __init__(self, order: int, external: bool = False):
        if order < 1:
            raise ValueError("N-gram order must be at least 1")
        self.order = order
        self.external = external
        self.sentences = 0
        self._counts: List[Dict[Tuple[int, ...], int]] = [dict() for _ in range(order)]
        self._prefix_totals: Optional[List[Dict[Tuple[int, ...], int]]] = None
        self._finalized = False
        self.access_log: Optional[Counter] = None

    def add(self, ngram: Tuple[int, ...], count: int = 1):
        if self._finalized:
            raise RuntimeError("Count table is finalized and immutable")
        if count < 0:
            raise ValueError("Counts must be non-negative")
        table = self._counts[len(ngram) - 1]
        table[ngram] = table.get(ngram, 0) + count

    def finalize(self) -> "NGramCountTable":
        """Freeze the table and index history totals."""
        if self._finalized:
            return self
        self._prefix_totals = []
        for table in self._counts:
            totals: Dict[Tuple[int, ...], int] = {}
            for ngram, count in table.items():
                prefix = ngram[:-1]
                totals[prefix] = totals.get(prefix, 0) + count
            self._prefix_totals.append(totals)
        self._finalized = True
        return self

    @property
    def finalized(self) -> bool:
        return self._finalized

    def track_access(self, enabled: bool = True):
        """Record every N-gram and history looked up (query-locality instrumentation)."""
        self.access_log = Counter() if enabled else None

    def count(self, ngram: Tuple[int, ...]) -> int:
        if self.access_log is not None:
            self.access_log[ngram] += 1
        if not ngram or len(ngram) > self.order:
            return 0
        return self._counts[len(ngram) - 1].get(ngram, 0)

    def history_total(self, history: Tuple[int, ...]) -> int:
        """Sum of counts of every (len(history)+1)-gram extending ``history``."""
        if self.access_log is not None:
            self.access_log[history] += 1
        k = len(history) + 1
        if k > self.order:
            return 0
        if self._prefix_totals is None:
            self.finalize()
        return self._prefix_totals[k - 1].get(history, 0)

    def continuations(self, history: Tuple[int, ...]) -> Dict[int, int]:
        """Word -> count for every N-gram extending ``history`` (used by trainers, not queries)."""
        k = len(history) + 1
        if k > self.order:
            return {}
        return {ng[-1]: c for ng, c in self._counts[k - 1].items() if ng[:-1] == history}

    def ngrams(self, k: int) -> List[Tuple[Tuple[int, ...], int]]:
        """Sorted (ngram, count) pairs of order k."""
        return sorted(self._counts[k - 1].items())

    def raw(self, k: int) -> Dict[Tuple[int, ...], int]:
        return self._counts[k - 1]

    def num_entries(self, k: int) -> int:
        return len(self._counts[k - 1])

    @property
    def total_tokens(self) -> int:
        return sum(self._counts[0].values())

    def unigram_ids(self) -> List[int]:
        return sorted(ng[0] for ng in self._counts[0])

    def count_of_counts(self, k: int) -> Counter:
        return Counter(self._counts[k - 1].values())

    def check_prefix_consistency(self, bos_id: int = 0) -> List[Tuple[Tuple[int, ...], int, int]]:
        """
        List violations of the prefix invariant (prefix count >= count).

        The sentence-start unigram is implicit and counts once per sentence.

        Returns:
            list: (ngram, count, prefix count) for each violation
        """
        violations = []
        for k in range(2, self.order + 1):
            for ngram, count in self._counts[k - 1].items():
                prefix = ngram[:-1]
                if prefix == (bos_id,):
                    prefix_count = self.sentences
                else:
                    prefix_count = self._counts[k - 2].get(prefix, 0)
                if count > 0 and prefix_count < count:
                    violations.append((ngram, count, prefix_count))
        return violations

    def __eq__(self, other) -> bool:
        if not isinstance(other, NGramCountTable):
            return NotImplemented
        return (self.order == other.order and self.sentences == other.sentences
                and self._counts == other._counts)


def prediction_windows(sequence: TokenSequence, n: int) -> Iterator[Tuple[int, ...]]:
    """One window per predicted token (every real token plus sentence-end), longest history first."""
    ids = sequence.ids
    for i in range(1, len(ids)):
        yield ids[max(0, i - n + 1):i + 1]


def _count_into(table: NGramCountTable, sequences: Iterable[TokenSequence], n: int):
    for sequence in sequences:
        ids = sequence.ids
        table.sentences += 1
        # sentence-start is never predicted; every later position is
        for i in range(1, len(ids)):
            for k in range(1, n + 1):
                start = i - k + 1
                if start < 0:
                    break
                table.add(ids[start:i + 1])


def count_corpus(sequences: Iterable[TokenSequence], n: int) -> NGramCountTable:
    """
    Count every k-gram window (k <= n) of boundary-marked sequences.

    Args:
        sequences (iterable): TokenSequence stream
        n (int): Maximum order

    Returns:
        NGramCountTable: Finalized table
    """
    table = NGramCountTable(n)
    _count_into(table, sequences, n)
    logger.debug(f"Counted {table.sentences} sentences, {table.total_tokens} predicted tokens")
    return table.finalize()


def _count_shard(args) -> NGramCountTable:
    sequences, n = args
    table = NGramCountTable(n)
    _count_into(table, sequences, n)
    return table


def count_corpus_parallel(sequences: Sequence[TokenSequence], n: int, workers: int = 1) -> NGramCountTable:
    """
    Count disjoint contiguous shards in worker processes and merge them.

    The merge is additive, so the result equals one-pass counting
    regardless of the worker count.
    """
    sequences = list(sequences)
    if workers <= 1 or len(sequences) < 2:
        return count_corpus(sequences, n)
    shard_size = -(-len(sequences) // workers)
    shards = [(sequences[i:i + shard_size], n) for i in range(0, len(sequences), shard_size)]
    logger.info(f"Counting {len(sequences)} sentences in {len(shards)} shards")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        tables = list(pool.map(_count_shard, shards))
    return merge_tables(tables)


def merge_tables(tables: Sequence[NGramCountTable]) -> NGramCountTable:
    """Additive merge of count tables (orders may differ; the result has the maximum)."""
    if not tables:
        raise ValueError("Nothing to merge")
    merged = NGramCountTable(max(t.order for t in tables), external=any(t.external for t in tables))
    for table in tables:
        merged.sentences += table.sentences
        for k in range(1, table.order + 1):
            target = merged.raw(k)
            for ngram, count in table.raw(k).items():
                target[ngram] = target.get(ngram, 0) + count
    return merged.finalize()


def apply_cutoff(table: NGramCountTable, min_count: int, orders: Optional[Iterable[int]] = None) -> NGramCountTable:
    """
    Drop N-grams whose count is below ``min_count`` at the given orders.

    Args:
        table (NGramCountTable): Source table
        min_count (int): Smallest count kept
        orders (iterable): Orders to filter (default: all)

    Returns:
        NGramCountTable: External-flagged filtered table
    """
    orders = set(orders) if orders is not None else set(range(1, table.order + 1))
    filtered = NGramCountTable(table.order, external=True)
    filtered.sentences = table.sentences
    dropped = 0
    for k in range(1, table.order + 1):
        for ngram, count in table.raw(k).items():
            if k in orders and count < min_count:
                dropped += 1
                continue
            filtered.raw(k)[ngram] = count
    logger.info(f"Cutoff {min_count} dropped {dropped} N-grams")
    return filtered.finalize()


@dataclass
class CountFileReport:
    """Per-file ingestion diagnostics."""

    path: str
    lines: int = 0
    accepted: int = 0
    rejected: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def rejection_ratio(self) -> float:
        return len(self.rejected) / self.lines if self.lines else 0.0


def write_count_file(table: NGramCountTable, order: int, path: str, vocab: Vocabulary):
    """
    Write one order of a table as ``tokens<TAB>count`` lines sorted bytewise by tokens.

    Args:
        table (NGramCountTable): Source table
        order (int): Order to write
        path (str): Output path (``.gz`` compresses)
        vocab (Vocabulary): Id -> token mapping
    """
    rows = []
    for ngram, count in table.raw(order).items():
        if count > 0:
            key = " ".join(vocab.token(i) for i in ngram)
            rows.append((key.encode("utf-8"), key, count))
    rows.sort()
    with atomic_write(path) as f:
        for _, key, count in rows:
            f.write(f"{key}\t{count}\n")
    logger.info(f"Wrote {len(rows)} {order}-grams to {path}")


def read_count_file(path: str, expected_order: int, vocab: Vocabulary,
                    max_reject_ratio: float = 0.01) -> Tuple[NGramCountTable, CountFileReport]:
    """
    Read a count file into an external-flagged table.

    Args:
        path (str): Count file (``.gz`` decompresses)
        expected_order (int): Arity every line must have
        vocab (Vocabulary): Vocabulary to intern tokens into
        max_reject_ratio (float): Rejected-line ratio above which the file fails

    Returns:
        tuple: (table, report)
    """
    table = NGramCountTable(expected_order, external=True)
    report = CountFileReport(path=path)
    previous_key = None
    unsorted_warned = False
    with open_text(path) as f:
        for line_no, line in enumerate(f, 1):
            report.lines += 1
            line = line.rstrip("\n")
            fields = line.split("\t")
            if len(fields) != 2:
                report.rejected.append((line_no, "expected tokens<TAB>count"))
                continue
            tokens = fields[0].split(" ")
            if len(tokens) != expected_order or not all(tokens):
                report.rejected.append((line_no, f"arity {len(tokens)} != {expected_order}"))
                continue
            if not fields[1].isdigit() or int(fields[1]) <= 0:
                report.rejected.append((line_no, f"count {fields[1]!r} is not a positive integer"))
                continue
            key = fields[0].encode("utf-8")
            if previous_key is not None and key < previous_key and not unsorted_warned:
                logger.warning(f"{path}:{line_no}: file is not sorted bytewise by tokens")
                unsorted_warned = True
            previous_key = key
            table.add(tuple(vocab.add(t) for t in tokens), int(fields[1]))
            report.accepted += 1

    for line_no, reason in report.rejected[:20]:
        logger.warning(f"{path}:{line_no}: rejected ({reason})")
    if report.rejected and report.rejection_ratio > max_reject_ratio:
        raise CountFileError(
            f"{path}: {len(report.rejected)} of {report.lines} lines rejected "
            f"(ratio {report.rejection_ratio:.4f} > {max_reject_ratio})"
        )
    return table.finalize(), report


def sniff_count_order(path: str) -> int:
    """Order of a count file, taken from the first well-formed line."""
    with open_text(path) as f:
        for line in f:
            fields = line.rstrip("\n").split("\t")
            if len(fields) == 2 and fields[0]:
                return len(fields[0].split(" "))
    raise CountFileError(f"{path}: no well-formed count lines")


def read_count_files(paths: Sequence[str], expected_order: int, vocab: Vocabulary,
                     max_reject_ratio: float = 0.01) -> Tuple[NGramCountTable, List[CountFileReport]]:
    """Read several shards of one order (or several orders) and merge them."""
    tables, reports = [], []
    for path in paths:
        table, report = read_count_file(path, expected_order, vocab, max_reject_ratio)
        tables.append(table)
        reports.append(report)
    return merge_tables(tables), reports


def read_text_corpus(path: str, vocab: Vocabulary,
                     policy: NormalizationPolicy = NormalizationPolicy()) -> List[TokenSequence]:
    """Normalize every non-empty line of a text file."""
    sequences = []
    with open_text(path) as f:
        for line in f:
            sequence = normalize(line, vocab, policy)
            if sequence is not None:
                sequences.append(sequence)
    logger.info(f"Read {len(sequences)} segments from {path}")
    return sequences


def token_frequencies(path: str, policy: NormalizationPolicy = NormalizationPolicy()) -> Counter:
    """Normalized token frequencies of a text file (input to open-vocabulary building)."""
    counts = Counter()
    with open_text(path) as f:
        for line in f:
            counts.update(normalize_tokens(line, policy))
    return counts
