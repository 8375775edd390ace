from typing import Optional


class BiodoseError(Exception):
    """Base exception for every failure raised by the package"""

    exit_code = 1

    def __init__(self, message: str, component: Optional[str] = None, original_error: Optional[Exception] = None):
        self.message = message
        self.component = component or self.__class__.__name__
        self.original_error = original_error
        super().__init__(self.message)


class InputError(BiodoseError):
    """Invalid input, violated precondition or usage error (exit code 1)"""

    exit_code = 1


class CurveError(InputError):
    pass


class PriorError(InputError):
    pass


class UsageError(InputError):
    pass


class DataError(InputError):
    """Malformed calibration or casework data; row is 1-based, counted after the header"""

    def __init__(
        self,
        message: str,
        component: Optional[str] = None,
        row: Optional[int] = None,
        column: Optional[str] = None,
        original_error: Optional[Exception] = None,
    ):
        self.row = row
        self.column = column
        super().__init__(message, component, original_error)


class NumericalError(BiodoseError):
    """Numerical failure: singular systems, invalid curvature, infeasible posteriors (exit code 2)"""

    exit_code = 2


class RankDeficiencyError(NumericalError):
    pass


class SingularHessianError(NumericalError):
    def __init__(self, message: str, component: Optional[str] = None, condition: float = float("inf")):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})", component)


class CurvatureError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class InfeasibleError(NumericalError):
    pass


class SimulationError(NumericalError):
    pass
