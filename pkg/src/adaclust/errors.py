"""Exception types shared across the package."""


class ClusteringError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ClusteringError, ValueError):
    """A value lies outside the convex support, mean domain, or hyper-parameter domain."""


class NonFiniteError(ClusteringError, ArithmeticError):
    """An objective evaluated to NaN or +/-inf where a finite value is required."""


class DegenerateComponentError(ClusteringError):
    """A mixture proportion collapsed below the representable range."""


class EmptyClusterError(ClusteringError):
    """A cluster lost all of its responsibility mass and could not be re-seeded."""


class InitError(ClusteringError):
    """Initialization could not produce the requested number of distinct seeds."""


class SingularBlockError(ClusteringError):
    """A moment-residual block is identically zero (constant attribute in a cluster)."""


class GeneratorTimeoutError(ClusteringError):
    """Rejection sampling exceeded its proposal budget."""


class ParseError(ClusteringError, ValueError):
    """A CSV cell could not be interpreted as a number."""
