"""Exception types shared across the package.

Every error raised by pairal derives from PairalError so callers can catch
the whole family at an API boundary (CLI, HTTP service) and map it to a
diagnostic without chasing module-specific types.
"""


class PairalError(Exception):
    """Base class for all pairal errors."""


# -- corpus ingestion ---------------------------------------------------------

class ParseError(PairalError):
    """A corpus file line could not be parsed; message carries the line number."""


class SchemaError(PairalError):
    """A record violates the declared schema (missing field, wrong dimension)."""


class DanglingPair(PairalError):
    """A pair references an id absent from the embedding records."""


# -- similarity kernel --------------------------------------------------------

class ZeroVector(PairalError):
    """Cosine similarity is undefined for a zero-norm vector."""


class DimensionMismatch(PairalError):
    """Operands have incompatible dimensions."""


class KOutOfRange(PairalError):
    """Requested rank k falls outside the valid range."""


# -- hard-negative selection --------------------------------------------------

class TooFewPairs(PairalError):
    """The paired set is too small for the requested operation."""


class KExceedsCandidates(PairalError):
    """Top-k rank exceeds the per-text candidate set size."""


class MissingThreshold(PairalError):
    """A text slated for scoring has no threshold entry."""


# -- baselines ----------------------------------------------------------------

class EmptyInput(PairalError):
    """An aggregate over local features received no vectors."""


class TooFewPoints(PairalError):
    """Fewer points than requested clusters."""


class EmptyCovered(PairalError):
    """k-center greedy requires a nonempty covered set."""


# -- training -----------------------------------------------------------------

class BatchTooSmall(PairalError):
    """The ranking loss needs at least one in-batch negative."""


class NonFiniteLoss(PairalError):
    """Training diverged to a non-finite loss value."""


# -- evaluation ---------------------------------------------------------------

class MissingOracleMatch(PairalError):
    """A query has no ground-truth counterpart in the gallery."""


class MissingK(PairalError):
    """A metrics history entry lacks the requested K."""


# -- orchestration ------------------------------------------------------------

class UnknownId(PairalError):
    """An id does not exist in the corpus."""


class AnnotationMismatch(PairalError):
    """An annotation refers to an id that was not selected this epoch."""


class BudgetExhausted(PairalError):
    """No further epochs can run: pool empty or max epochs reached."""


class IoError(PairalError):
    """Checkpoint file could not be read or written in full."""


class VersionMismatch(PairalError):
    """Checkpoint payload has an unsupported format version."""


# -- annotation service -------------------------------------------------------

class EpochInProgress(PairalError):
    """Pending tasks from the current epoch block a new enqueue."""


class UnknownTask(PairalError):
    """No task with the given id."""


class AlreadySubmitted(PairalError):
    """Task was already submitted with a different payload."""


class BadVectorDim(PairalError):
    """A caption embedding has the wrong dimensionality."""


class DuplicateCounterpart(PairalError):
    """The submitted counterpart id is already paired or claimed."""


class EpochIncomplete(PairalError):
    """Tasks are still pending; message lists the pending task ids."""
