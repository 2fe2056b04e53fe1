"""Exception hierarchy.

The CLI maps :class:`ConfigError` to exit code 2 and
:class:`NumericalContractError` to exit code 3.
"""


class FermiForgeError(Exception):
    """Base class for all library errors."""


class ConfigError(FermiForgeError, ValueError):
    """Bad configuration file, unknown key, or malformed value."""


class ParameterError(FermiForgeError, ValueError):
    """A physical or scaled parameter lies outside its domain."""


class NumericalContractError(FermiForgeError, RuntimeError):
    """A numerical guarantee (norm, step size, convergence, ...) was violated."""


class StepSizeError(NumericalContractError):
    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class BoundaryContaminationError(NumericalContractError):
    """Probability reached the edge of the propagation grid."""

    def __init__(self, message, t=None, edge_probability=None):
        super().__init__(message)
        self.t = t
        self.edge_probability = edge_probability


class TrappedAtWallError(NumericalContractError):
    """No positive flight time was found for a bounce."""


class GridMismatchError(FermiForgeError, ValueError):
    pass


class NearResonanceError(NumericalContractError):
    """Detuning factor diverges: the unperturbed frequency sits on a resonance."""


class SingularityError(NumericalContractError):
    pass


class ConvergenceError(NumericalContractError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class FitError(NumericalContractError):
    pass
