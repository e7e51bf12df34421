"""Exception types raised across hierakit."""


class HierakitError(Exception):
    """Base class for all library errors."""


class InvalidInputError(HierakitError, ValueError):
    """Array shape or content does not match the declared grid or level."""


class InvalidParameterError(HierakitError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class InvalidConfigurationError(HierakitError, ValueError):
    """Mutually inconsistent settings, e.g. truncation level above particle count."""


class DegenerateInputError(HierakitError, ValueError):
    """Input that makes the requested object undefined (zero field, zero ratio)."""


class ResourceError(HierakitError, MemoryError):
    """A dense tensor would exceed the configured memory budget."""


class UnderResolvedPotentialError(HierakitError, ValueError):
    """The scaled pair potential is narrower than the grid can represent."""


class NonContractiveError(HierakitError, RuntimeError):
    """Picard iteration failed to contract on the requested horizon."""

    def __init__(self, message, ratios=None, N=None):
        super().__init__(message)
        self.ratios = list(ratios or [])
        self.N = N


class UnsupportedDepthError(HierakitError, ValueError):
    """Duhamel nesting depth beyond what the quadrature supports."""
