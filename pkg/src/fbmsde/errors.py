"""Exception hierarchy.

Each class carries an ``exit_code`` used by the command-line front end:
2 for usage/validation problems, 3 for violated model preconditions and
4 for numerical failures.
"""


class FbmSdeError(Exception):
    exit_code = 1


class DomainError(FbmSdeError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 2


class ConfigError(DomainError):
    exit_code = 2


class CapabilityError(FbmSdeError):
    """A coefficient field lacks something an operation needs (e.g. derivatives)."""

    exit_code = 2


class ModelError(FbmSdeError):
    """The SDE problem violates an existence/uniqueness precondition."""

    exit_code = 3


class NumericalError(FbmSdeError, ArithmeticError):
    exit_code = 4


class GenerationError(NumericalError):
    pass


class DivergenceError(NumericalError):
    """State escaped the configured bound; ``escape_time`` or ``step`` tells where."""

    def __init__(self, msg, escape_time=None, step=None):
        super().__init__(msg)
        self.escape_time = escape_time
        self.step = step


class SearchError(NumericalError):
    pass


class SingularityError(NumericalError):
    pass


class StepSolveError(NumericalError):
    """The implicit Crank-Nicholson equation could not be solved at ``step``."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class PoleError(StepSolveError):
    pass


class ExperimentError(NumericalError):
    pass
