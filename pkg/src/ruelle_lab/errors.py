"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so keep the classes coarse.
"""


class LabError(Exception):
    """Base class for all errors raised by ruelle_lab."""


class InputError(LabError, ValueError):
    """Caller supplied an argument outside the operation's domain."""


class ModelError(LabError):
    """A dynamical model violates one of its structural assumptions."""


class NumericalError(LabError, ArithmeticError):
    """An iterative solver failed to converge or produced non-finite values."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class ResourceCapError(LabError):
    """An enumeration would exceed its configured size cap."""

    def __init__(self, message, count):
        super().__init__(message)
        self.count = count


class PrimitivityError(ModelError):
    """Transition matrix is not primitive.

    ``kind`` is ``"reducible"`` or ``"periodic"``.
    """

    def __init__(self, message, kind):
        super().__init__(message)
        self.kind = kind


class ConditioningError(NumericalError):
    """Lyapunov exponents too close together to separate their subspaces."""


class ChartEscapeError(InputError):
    """An orbit left the region where a local chart is trusted."""


class ConfigError(LabError):
    """Experiment configuration failed validation."""
