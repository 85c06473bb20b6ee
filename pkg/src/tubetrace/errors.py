"""Exception types shared across the toolkit.

Every error raised by the public API derives from :class:`TubetraceError`,
so callers (CLI, HTTP service) can map failures to stable error codes.
"""


class TubetraceError(Exception):
    """Base class; ``code`` is the stable machine-readable identifier."""

    code = "error"


class InvalidInputError(TubetraceError):
    """Malformed or non-finite input data."""

    code = "invalid-input"


class DomainError(TubetraceError):
    """A continuous coordinate fell outside the sampleable grid region."""

    code = "domain-error"


class ConfigurationError(TubetraceError):
    """Parameter combination that cannot produce a meaningful result."""

    code = "configuration-error"


class DegenerateFeatureError(TubetraceError):
    """Feature volume carries no contrast to calibrate a metric on."""

    code = "degenerate-feature"


class InvalidSeedError(TubetraceError):
    """Seed point does not lie on a detectable structure."""

    code = "invalid-seed"


class UnreachableTargetError(TubetraceError):
    """Front propagation exhausted without accepting the target."""

    code = "unreachable-target"


class MaskTooTightError(TubetraceError):
    """Region constraint disconnects the endpoints."""

    code = "mask-too-tight"


class NumericError(TubetraceError):
    """An iterative numeric routine failed to converge."""

    code = "numeric-error"
