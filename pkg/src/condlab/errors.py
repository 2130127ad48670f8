"""Exception types shared across the library."""


class CondlabError(Exception):
    """Base class for all library errors."""


class GridMismatchError(CondlabError, ValueError):
    """Two wave functions do not live on the same grid."""


class PreconditionError(CondlabError, ValueError):
    """An operation's documented precondition was violated."""


class SupportRangeError(CondlabError, ValueError):
    """A translation or support request leaves the working grid."""


class ParameterError(CondlabError, ValueError):
    """A state-family parameter is outside its admissible range."""


class NotHomogeneousError(CondlabError, ValueError):
    """A wave function fails the constant-modulus test of the momentum fit."""


class NumericalError(CondlabError, RuntimeError):
    """An iterative numerical procedure failed (degenerate fit, no convergence)."""


class ConfigError(CondlabError, ValueError):
    """A run configuration document is malformed."""
