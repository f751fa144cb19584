"""Exception types shared across the package."""


class HqsNetError(Exception):
    """Base class for all package errors."""


class DimensionError(HqsNetError, ValueError):
    """Grid dimensions are incompatible with a transform."""


class ShapeError(HqsNetError, ValueError):
    """Operands have mismatched shapes."""


class DomainError(HqsNetError, ValueError):
    """Argument outside the domain of a function."""


class ConvergenceError(HqsNetError, RuntimeError):
    """An iterative procedure failed to reach its target."""


class FormatError(HqsNetError, ValueError):
    """A file does not follow the expected binary layout."""


class GraphError(HqsNetError, RuntimeError):
    """Invalid use of an autodiff tape."""


class DataError(HqsNetError, ValueError):
    """Malformed dataset."""


class DegenerateError(HqsNetError, ValueError):
    """A metric is undefined for the given reference."""


class MissingCheckpointError(HqsNetError, FileNotFoundError):
    """A required trained network checkpoint is absent."""
