"""Exception types shared across the package.

Most subclass ValueError so generic callers can still catch broadly; the
distinct types exist because callers (and the CLI exit-code mapping) need to
tell configuration mistakes apart from numerical failures.
"""


class MorpholabError(Exception):
    pass


class ConfigError(MorpholabError, ValueError):
    """Invalid architecture, config values, or option combinations."""


class ShapeError(MorpholabError, ValueError):
    """Array dimensions inconsistent with the network or data."""


class CapacityError(MorpholabError, ValueError):
    """Path enumeration would exceed the configured cap."""


class PreconditionError(MorpholabError, ValueError):
    """An operation's stated assumptions do not hold for the given inputs."""


class DomainError(MorpholabError, ValueError):
    """State outside the mathematical domain (negative r, R outside [1/N, 1])."""


class DivergenceError(MorpholabError, ArithmeticError):
    """Non-finite values appeared during integration or training."""


class UndefinedCorrelationError(MorpholabError, ValueError):
    """Correlation requested on constant (zero-variance) input."""


class DegenerateLayerError(MorpholabError, ValueError):
    """A weight layer is all zero where fractions are required."""


class ParseError(MorpholabError, ValueError):
    """Malformed input file; message carries row/column location."""
