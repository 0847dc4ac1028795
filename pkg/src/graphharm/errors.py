"""Exception hierarchy."""


class GraphHarmError(Exception):
    """Base class for all package errors."""


class GraphError(GraphHarmError, ValueError):
    """Invalid graph input or query."""


class BoundaryError(GraphHarmError, ValueError):
    """Invalid boundary word, partition or cutoff request."""


class SolveError(GraphHarmError):
    """A harmonic solve could not be carried out."""


class LevelSetError(GraphHarmError, ValueError):
    """Level-set query outside the hypotheses it needs."""


class OperatorError(GraphHarmError, ValueError):
    """Invalid boundary condition or operator request."""


class ConfigError(GraphHarmError, ValueError):
    """Experiment configuration does not match the schema."""
