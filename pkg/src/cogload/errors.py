"""Exception hierarchy shared across the pipeline.

Every error raised on a contract violation derives from PipelineError so
callers (and the CLI) can distinguish pipeline failures from programming
mistakes.
"""


class PipelineError(Exception):
    """Base class for all pipeline-level failures."""


class InvalidArgumentError(PipelineError, ValueError):
    """An argument violates an operation's precondition."""


class InvalidSpecError(InvalidArgumentError):
    """A filter or generator specification is unsatisfiable."""


class TooShortError(PipelineError):
    """Input signal has too few samples for the requested operation."""


class NoPeaksError(PipelineError):
    """Peak detection got a signal with no detectable activity."""


class InsufficientPeaksError(PipelineError):
    """Fewer than two peaks, so no interval can be formed."""


class InsufficientDataError(PipelineError):
    """Too few data points for a statistically meaningful result."""


class AllArtifactError(PipelineError):
    """Artifact correction flagged every interval; nothing trustworthy remains."""


class DegenerateSeriesError(PipelineError):
    """A constant or otherwise degenerate series where variation is required."""


class ParseError(PipelineError):
    """A file could not be parsed; carries line/position context when known."""


class ValidationError(PipelineError):
    """Structurally valid input that violates a semantic constraint."""


class FormatError(PipelineError):
    """A binary payload does not match the expected container format."""


class PayloadLengthError(FormatError):
    """A binary payload is shorter than its header promises."""


class ChannelError(PipelineError):
    """A required channel is missing; message names the missing channel."""


class SplitError(PipelineError):
    """A dataset split cannot satisfy its constraints."""


class DegenerateFitError(PipelineError):
    """Model training received data it cannot fit (e.g. a single class)."""


class AlignmentError(PipelineError):
    """Feature schemas do not align between two tables."""


class TaskError(PipelineError):
    """A classification task cannot be formed from the given labels."""


class NumericError(PipelineError):
    """A numeric invariant broke during computation (NaN/Inf where finite required)."""
