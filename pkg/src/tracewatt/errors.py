"""Exception types shared across all pipeline stages."""


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class InvalidSampleError(PipelineError):
    """A power sample contains non-finite or inconsistent values."""


class EmptyInputError(PipelineError):
    """An operation received an empty series, trace, or matrix."""


class ShapeError(PipelineError):
    """Mismatched lengths or feature arities."""


class FormatError(PipelineError):
    """A payload is not in the expected container format."""


class SchemaError(PipelineError):
    """A trace is missing mandatory columns."""


class ParameterError(PipelineError):
    """An operation parameter is outside its valid range."""


class NumericError(PipelineError):
    """A numeric computation cannot proceed (singular system, zero variance)."""


class DegenerateInputError(PipelineError):
    """Cleaning removed every feature."""


class ExcessiveOutlierError(PipelineError):
    """Outlier removal would drop more rows than allowed."""
