"""
Per-iteration diagnostics shared by the iterative solvers
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.exceptions import GroupMismatchError, ScaleMismatchError
from app.models import ExpandedDesign, GroupedCoefficients, TraceRecord


@dataclass(frozen=True)
class TraceMonitor:
    """
    Turns a normalized-scale iterate into a TraceRecord

    Coefficient MSE compares theta'/norms with the original-scale truth; test
    MSE applies the same original-scale estimate to an unnormalized held-out
    design.
    """
    norms: np.ndarray
    truth: Optional[np.ndarray] = None
    test_design: Optional[ExpandedDesign] = None
    y_test: Optional[np.ndarray] = None

    @classmethod
    def build(
        cls,
        design: ExpandedDesign,
        truth: Optional[GroupedCoefficients] = None,
        test: Optional[Tuple[ExpandedDesign, np.ndarray]] = None,
    ) -> "TraceMonitor":
        truth_vector = None
        if truth is not None:
            if truth.normalized:
                raise ScaleMismatchError("Monitored truth must be in original scale")
            truth_vector = truth.to_vector()
            if truth_vector.shape != (design.l,):
                raise GroupMismatchError(f"Truth has {truth_vector.size} coefficients, design has {design.l}")
        test_design, y_test = (None, None) if test is None else test
        if test_design is not None and test_design.normalized:
            raise ScaleMismatchError("Held-out design must be unnormalized")
        return cls(
            norms=design.norms,
            truth=truth_vector,
            test_design=test_design,
            y_test=None if y_test is None else np.asarray(y_test, dtype=np.float64),
        )

    def original(self, theta: np.ndarray) -> np.ndarray:
        return theta / self.norms

    def record(
        self,
        iteration: int,
        theta: np.ndarray,
        residual: np.ndarray,
        sigma2: Optional[float] = None,
        objective: Optional[float] = None,
    ) -> TraceRecord:
        coeff_mse = None
        test_mse = None
        if self.truth is not None or self.test_design is not None:
            estimate = self.original(theta)
            if self.truth is not None:
                coeff_mse = float(np.mean((estimate - self.truth) ** 2))
            if self.test_design is not None:
                error = self.y_test - self.test_design.data @ estimate
                test_mse = float(error @ error / error.size)
        return TraceRecord(
            iteration=iteration,
            residual_norm=float(np.linalg.norm(residual)),
            sigma2_eff=sigma2,
            coeff_mse=coeff_mse,
            test_mse=test_mse,
            objective=objective,
        )
