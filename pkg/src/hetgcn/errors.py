class ShapeError(ValueError):
    """Operand dimensions are incompatible."""


class ParameterError(ValueError):
    """A tuning parameter or probability is outside its valid range."""


class ValidationError(RuntimeError):
    """A structural check failed (cyclic task graph, bad permutation file, ...)."""
