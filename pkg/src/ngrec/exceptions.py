"""Exception hierarchy shared across ngrec modules."""


class NgrecError(Exception):
    """Base class for all ngrec errors."""


class InvalidParameterError(NgrecError, ValueError):
    """A configuration or physical parameter is out of its valid range."""


class InvalidInputError(NgrecError, ValueError):
    """Input data has the wrong shape, length, or contains non-finite values."""


class NumericalError(NgrecError, ArithmeticError):
    """A quadrature or optimisation routine failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateBlockError(NgrecError, ValueError):
    """A reconciliation block has (near) zero norm and cannot be mapped."""


class EnsembleError(NgrecError, ValueError):
    """Malformed or inconsistent multi-edge ensemble description."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConstructionError(NgrecError, RuntimeError):
    """Parity-check matrix construction exhausted its retry budget."""


class UnphysicalStateError(NgrecError, ValueError):
    """A covariance matrix violates the uncertainty principle."""


class DataUnderrunError(NgrecError, RuntimeError):
    """Not enough postselected samples to fill a frame."""


class SuperCapacityError(NgrecError, ValueError):
    """Requested configuration implies reconciliation efficiency above 1."""
