"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
1 for usage/config problems, 2 for numerical failures, 3 for I/O and
event-format problems.
"""


class EPRYoungError(Exception):
    exit_code = 2


class InvalidParameterError(EPRYoungError, ValueError):
    exit_code = 1


class ConvergenceError(EPRYoungError, ArithmeticError):
    pass


class NoRootError(EPRYoungError):
    pass


class CoverageError(EPRYoungError):
    """Tabulation domain encloses too little of the probability mass."""


class PreconditionError(EPRYoungError, ValueError):
    """Inputs lie outside the regime a model is valid for."""


class InsufficientDataError(EPRYoungError, ValueError):
    pass


class DegenerateEnsembleError(EPRYoungError):
    pass


class ConfigError(EPRYoungError, ValueError):
    exit_code = 1


class PlaneMismatchError(EPRYoungError, ValueError):
    exit_code = 3


class EventFormatError(EPRYoungError, ValueError):
    exit_code = 3
