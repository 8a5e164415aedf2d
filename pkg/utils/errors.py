"""
Exception hierarchy for the reranking toolkit.

Every error maps to one command-line exit category: usage, input format,
or numerical failure.
"""


class RerankToolkitError(Exception):
    """Base class for all toolkit errors."""

    exit_status = 1


class UsageError(RerankToolkitError):
    """Bad arguments, missing configuration or missing input paths."""

    exit_status = 2


class InputFormatError(RerankToolkitError):
    """An input file does not follow its documented format."""

    exit_status = 3


class NumericalError(RerankToolkitError):
    """An estimator cannot produce a well-defined result."""

    exit_status = 4


class CountFileError(InputFormatError):
    """Too many malformed lines in an N-gram count file."""


class ArpaFormatError(InputFormatError):
    """Malformed ARPA backoff model."""


class NBestFormatError(InputFormatError):
    """Malformed N-best list or selection file."""


class TaggedCorpusError(InputFormatError):
    """Malformed tagged corpus, tag inventory or gold chunk file."""


class InvalidGapSequenceError(InputFormatError):
    """A gap-tag sequence does not describe a valid baseNP bracketing."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class FeatureMissingError(InputFormatError):
    """A hypothesis feature has no weight, or a weight has no feature."""

    def __init__(self, message, segment_id=None, feature=None):
        super().__init__(message)
        self.segment_id = segment_id
        self.feature = feature


class SegmentMismatchError(InputFormatError):
    """Candidate and reference collections are not aligned by segment."""


class DiscountUndefinedError(NumericalError):
    """Kneser-Ney discounts cannot be computed from the counts-of-counts."""

    def __init__(self, message, order=None):
        super().__init__(message)
        self.order = order


class IllConditionedFitError(NumericalError):
    """The count-of-counts law cannot be fitted over the requested range."""

    def __init__(self, message, count_value=None):
        super().__init__(message)
        self.count_value = count_value


class UndefinedPerplexityError(NumericalError):
    """No predicted tokens were scored."""
