"""
Solver routes
"""
import numpy as np
from fastapi import APIRouter, HTTPException, status

from app.exceptions import QkampError
from app.routes.kernel import feature_matrix
from app.schemas import SolveRequest, SolveResponse
from app.services.experiments import run_solver
from app.services.kernel_expansion import expand_quadratic, normalize_columns


router = APIRouter(prefix="/solvers", tags=["Solvers"])


@router.post("/solve", response_model=SolveResponse)
def solve(request: SolveRequest):
    """
    Fit the quadratic model y ~ X_Q theta with one solver

    - **features** / **targets**: Training rows and measurements
    - **solver**: amp, eb_amp, lasso or pseudoinverse
    - **cross_validate**: Choose the LASSO penalty by K-fold CV instead of lasso.lambdas

    Returns grouped coefficients in original units
    """
    x = feature_matrix(request.features)
    try:
        design = normalize_columns(expand_quadratic(x))
        outcome = run_solver(
            request.solver, design, np.asarray(request.targets, dtype=np.float64),
            priors=request.priors, amp=request.amp, eb=request.eb,
            lasso=request.lasso, cv=request.cv, cross_validate=request.cross_validate,
        )
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except QkampError as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Solver failed: {str(e)}"
        )

    if outcome.result is None:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Solver diverged: {outcome.error}"
        )

    result = outcome.result
    return SolveResponse(
        success=not result.diverged,
        solver=request.solver,
        coefficients=result.theta_hat_original.to_dict(),
        iterations_used=result.iterations_used,
        converged=result.converged,
        diverged=result.diverged,
        lambda_used=outcome.lambda_used,
    )
