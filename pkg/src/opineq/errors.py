"""Exception hierarchy shared across the package."""


class OpineqError(Exception):
    """Base class for all package errors."""


class PreconditionError(OpineqError):
    """An operation was called with inputs violating its contract."""


class DomainError(OpineqError):
    """A point fell outside the effective domain / bounding box of a function."""


class ConvexityError(PreconditionError):
    """Sampled values fail the discrete convexity check."""


class NonDifferentiableError(OpineqError):
    """A kink was detected where a gradient was requested."""


class WitnessError(OpineqError):
    """No affine-minorant witness could be produced for a positive epsilon."""


class UnsupportedTauError(PreconditionError):
    """Quantization parameter tau outside the supported set {0, 1/2, 1}."""


class ShapeError(OpineqError):
    """A complex quantity was fed where a real one is required (or vice versa)."""


class NumericError(OpineqError):
    """An underlying numeric routine failed; carries diagnostics."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = dict(diagnostics or {})


class ConditioningError(NumericError):
    """Invariant-subspace extraction too ill-conditioned to trust."""


class CertificationError(NumericError):
    """A computed quantity failed its own a-posteriori certificate."""


class TruncationError(PreconditionError):
    """A spectral-window request exceeds the finite truncation band."""


class StrongConvexityError(PreconditionError):
    """Second differences fell below the required positive lower bound."""


class ConfigError(OpineqError):
    """Malformed or unresolvable experiment configuration."""
