"""Exception taxonomy shared across the package."""


class GgcError(Exception):
    """Base class for all errors raised by this package."""


class GraphError(GgcError):
    """Malformed graph data or invalid pooling selection."""


class ShapeError(GgcError):
    """Operand shapes incompatible with the requested operation."""


class GradientError(GgcError):
    """Backward-pass misuse or non-finite gradients."""


class CircuitError(GgcError):
    """Invalid circuit construction or simulator misuse."""


class DataError(GgcError):
    """Broken containers, bad feature inputs, or impossible splits."""


class ConfigError(GgcError):
    """Invalid run configuration; message lists every violation."""


class TrainingError(GgcError):
    """Aborted optimization, e.g. non-finite losses."""


class EvalError(GgcError):
    """Invalid evaluation input, e.g. single-class label sets."""
