class AgfaError(Exception):
    """Base class for every error raised by the sdk."""


class ShapeError(AgfaError, ValueError):
    pass


class NonFiniteError(AgfaError, ArithmeticError):
    pass


class GraphError(AgfaError, RuntimeError):
    pass


class SymmetryError(AgfaError, ValueError):
    """A spectrum that should reconstruct a real image left an imaginary part."""


class ConfigError(AgfaError, ValueError):
    pass


class DataError(AgfaError):
    pass


class IdxFormatError(DataError):
    pass


class BadMagic(IdxFormatError):
    pass


class Truncated(IdxFormatError):
    pass


class DimensionOverflow(IdxFormatError):
    pass


class CheckpointError(AgfaError):
    pass


class SwadError(AgfaError, RuntimeError):
    pass
