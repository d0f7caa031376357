"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto process exit statuses without inspecting messages.
"""


class SensboError(Exception):
    exit_code = 1


class DomainError(SensboError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 2


class ParameterDomainError(DomainError):
    """Distribution or kernel parameters are invalid."""


class ConfigurationError(SensboError):
    exit_code = 2


class InsufficientDataError(SensboError):
    exit_code = 3


class DegenerateDataError(SensboError):
    exit_code = 3


class SizeError(SensboError, ValueError):
    exit_code = 3


class BudgetError(SensboError):
    exit_code = 3


class SelectionError(SensboError):
    exit_code = 3


class InfiniteCriterionError(SensboError, ArithmeticError):
    """A design criterion diverges (coincident points or coordinates)."""

    exit_code = 4


class NonMonotoneConvergenceError(SensboError, ArithmeticError):
    exit_code = 4


class DegenerateRefinementError(SensboError, ArithmeticError):
    exit_code = 4


class ConditioningError(SensboError, ArithmeticError):
    """A linear system could not be factorized reliably.

    Attributes
    ----------
    condition : float
        Estimated condition number of the offending matrix (``inf`` if
        unknown).
    """

    exit_code = 4

    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class RankError(ConditioningError):
    """Regression system has fewer samples than unknowns."""
