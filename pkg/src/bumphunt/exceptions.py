"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2 and numerical failures exit 3.
"""


class BumpHuntError(Exception):
    """Base class for all errors raised by bumphunt."""


class ValidationError(BumpHuntError, ValueError):
    """An argument or configuration value is out of its allowed range."""


class DataError(BumpHuntError):
    """Input data cannot be used (unparseable, too small, degenerate)."""


class DataParseError(DataError):
    """A CSV cell could not be parsed as a finite number."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateDataError(DataError):
    """Too few points, or no variation, to run the requested procedure."""


class NumericalError(BumpHuntError, ArithmeticError):
    """A numerical routine failed (non-convergence, non-PSD matrix, singular model)."""


class ConvergenceError(NumericalError):
    def __init__(self, message, iterations):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class NotPSDError(NumericalError):
    pass


class SingularModelError(NumericalError):
    pass
