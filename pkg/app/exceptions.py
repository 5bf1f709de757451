"""
Exception hierarchy for the quadratic-kernel AMP toolkit
"""
from typing import Optional


class QkampError(Exception):
    """Base class for every error raised by this package"""


class KernelExpansionError(QkampError, ValueError):
    """Invalid input to the polynomial kernel expansion"""


class DegenerateColumnError(KernelExpansionError):
    """A design column has zero norm and cannot be normalized"""

    def __init__(self, column: int, label: str):
        self.column = column
        self.label = label
        super().__init__(f"Column {column} ({label}) has zero norm")


class ScaleMismatchError(QkampError, ValueError):
    """Coefficients and design disagree on normalized/original scale"""


class DenoiserError(QkampError, ValueError):
    """Invalid scalar-channel parameters"""


class GroupMismatchError(QkampError, ValueError):
    """Vector length does not match the column-group layout"""


class SolverInputError(QkampError, ValueError):
    """Non-finite or dimensionally inconsistent solver input"""


class DivergenceError(QkampError):
    """An iterative solver produced non-finite iterates"""

    def __init__(self, iteration: int, detail: Optional[str] = None):
        self.iteration = iteration
        message = f"Solver diverged at iteration {iteration}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class CrossValidationError(QkampError, ValueError):
    """Invalid cross-validation setup"""


class DatasetError(QkampError, ValueError):
    """Invalid synthetic dataset request"""


class StorageError(QkampError):
    """Malformed file on disk"""


class InvalidInputError(QkampError):
    """Command-line input failed to load or validate"""
