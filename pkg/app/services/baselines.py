"""
Baseline solvers: group-penalized LASSO by coordinate descent, cross-validated
penalty selection and the minimum-norm least-squares solution
"""
import logging
import math
import time
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from app.exceptions import CrossValidationError, SolverInputError
from app.models import CvResult, ExpandedDesign, GroupedCoefficients, SolverResult, TraceRecord
from app.schemas import CvConfig, LassoConfig
from app.services.diagnostics import TraceMonitor
from app.services.kernel_expansion import rescale_coefficients_to_original


logger = logging.getLogger(__name__)

PINV_RCOND = 1e-10


def soft_threshold(x: float, lam: float) -> float:
    """sign(x) * max(|x| - lam, 0)"""
    magnitude = abs(x) - lam
    return math.copysign(magnitude, x) if magnitude > 0.0 else 0.0


def _check_inputs(design: ExpandedDesign, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (design.m,):
        raise SolverInputError(f"Measurements of shape {y.shape} do not match design rows {design.m}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(design.data)):
        raise SolverInputError("Solver input contains non-finite values")
    return y


def _result(
    solver: str,
    design: ExpandedDesign,
    theta: np.ndarray,
    iterations: int,
    converged: bool,
    trace,
    started: float,
) -> SolverResult:
    theta_prime = GroupedCoefficients.from_vector(theta, design.layout, normalized=design.normalized)
    original = rescale_coefficients_to_original(theta_prime, design.norms) if design.normalized else theta_prime
    return SolverResult(
        solver=solver,
        theta_hat_normalized=theta.copy(),
        theta_hat_original=original,
        iterations_used=iterations,
        converged=converged,
        trace=trace,
        elapsed_seconds=time.perf_counter() - started,
    )


def column_penalties(design: ExpandedDesign, config: LassoConfig) -> np.ndarray:
    """Per-column lambda from the four group penalties"""
    return np.asarray(config.group_lambdas(), dtype=np.float64)[design.layout.group_ids]


def lasso_objective(design: ExpandedDesign, y: np.ndarray, theta: np.ndarray, penalties: np.ndarray) -> float:
    """1/2 ||y - X theta||^2 + sum_l lambda_l |theta_l|"""
    residual = y - design.data @ theta
    return 0.5 * float(residual @ residual) + float(np.sum(penalties * np.abs(theta)))


def _cd_pass(
    columns: np.ndarray,
    col_sq: np.ndarray,
    penalties: np.ndarray,
    indices: np.ndarray,
    theta: np.ndarray,
    residual: np.ndarray,
) -> float:
    """One cyclic pass over `indices`, updating theta and residual in place; returns the max change"""
    max_change = 0.0
    for j in indices:
        column = columns[j]
        old = theta[j]
        rho = float(column @ residual) + col_sq[j] * old
        new = soft_threshold(rho, penalties[j]) / col_sq[j]
        if new != old:
            residual -= (new - old) * column
            theta[j] = new
            max_change = max(max_change, abs(new - old))
    return max_change


def _lasso_path_point(
    x: np.ndarray,
    y: np.ndarray,
    penalties: np.ndarray,
    config: LassoConfig,
    theta: np.ndarray,
    sweep_callback=None,
) -> Tuple[np.ndarray, int, bool]:
    """
    Cyclic coordinate descent from a warm start; returns (theta, sweeps, converged)

    A full pass over all columns is followed by passes over the nonzero
    coordinates until they settle; convergence is only declared after a full
    pass moves no coordinate by config.tol or more. Every pass counts as a sweep.
    """
    columns = np.ascontiguousarray(x.T)
    col_sq = np.einsum("ij,ij->i", columns, columns)
    all_columns = np.flatnonzero(col_sq > 0.0)
    theta = theta.copy()
    theta[col_sq == 0.0] = 0.0
    residual = y - x @ theta

    sweep = 0
    while sweep < config.max_iters:
        sweep += 1
        max_change = _cd_pass(columns, col_sq, penalties, all_columns, theta, residual)
        if sweep_callback is not None:
            sweep_callback(sweep, theta, residual)
        if max_change < config.tol:
            return theta, sweep, True

        working = all_columns[theta[all_columns] != 0.0]
        while sweep < config.max_iters:
            sweep += 1
            max_change = _cd_pass(columns, col_sq, penalties, working, theta, residual)
            if sweep_callback is not None:
                sweep_callback(sweep, theta, residual)
            if max_change < config.tol:
                break
    return theta, config.max_iters, False


def lasso_cd(
    design: ExpandedDesign,
    y: np.ndarray,
    config: LassoConfig,
    truth: Optional[GroupedCoefficients] = None,
    test: Optional[Tuple[ExpandedDesign, np.ndarray]] = None,
    warm_start: Optional[np.ndarray] = None,
) -> SolverResult:
    """
    Minimize 1/2 ||y - X theta||^2 + sum_j lambda_j ||theta_j||_1 by cyclic coordinate descent

    Args:
        design: Design (unit columns make updates scale-free, other norms are handled)
        y: Measurements
        config: Group penalties and stopping rule (max coordinate change < tol)
        truth: Optional original-scale coefficients for the MSE trace
        test: Optional (unnormalized held-out design, held-out targets)
        warm_start: Optional initial coefficients

    Returns:
        SolverResult; trace has one record per sweep plus the initial point
    """
    started = time.perf_counter()
    y = _check_inputs(design, y)
    penalties = column_penalties(design, config)
    monitor = TraceMonitor.build(design, truth, test) if design.normalized else TraceMonitor(norms=np.ones(design.l))
    theta0 = np.zeros(design.l) if warm_start is None else np.asarray(warm_start, dtype=np.float64)

    trace = [monitor.record(0, theta0, y - design.data @ theta0, objective=lasso_objective(design, y, theta0, penalties))]

    def on_sweep(sweep, theta, residual):
        objective = 0.5 * float(residual @ residual) + float(np.sum(penalties * np.abs(theta)))
        trace.append(monitor.record(sweep, theta, residual, objective=objective))

    theta, sweeps, converged = _lasso_path_point(design.data, y, penalties, config, theta0, on_sweep)
    if not converged:
        logger.warning("LASSO did not converge in %d sweeps", sweeps)
    logger.info("lasso finished: sweeps=%d converged=%s lambda=%s", sweeps, converged, config.group_lambdas())
    return _result("lasso", design, theta, sweeps, converged, trace, started)


def default_lambda_grid(design: ExpandedDesign, y: np.ndarray, config: CvConfig) -> np.ndarray:
    """Log grid over [low, high] * max|X^T y|, descending"""
    if config.grid is not None:
        return np.sort(np.asarray(config.grid, dtype=np.float64))[::-1]
    scale = float(np.max(np.abs(design.data.T @ y)))
    low, high = config.grid_span
    return np.logspace(np.log10(high * scale), np.log10(low * scale), config.grid_size)


def cross_validate_lambda(
    design: ExpandedDesign,
    y: np.ndarray,
    config: LassoConfig,
    cv: CvConfig,
    grid: Optional[np.ndarray] = None,
) -> CvResult:
    """
    K-fold CV of the equalized penalty

    Folds come from a seeded row permutation; each fold walks the grid from the
    largest lambda down with warm starts. Ties resolve to the larger lambda.

    Raises:
        CrossValidationError: If the grid is empty or M < folds
    """
    y = _check_inputs(design, y)
    if design.m < cv.folds:
        raise CrossValidationError(f"Need at least {cv.folds} rows for {cv.folds}-fold CV, got {design.m}")
    lambdas = default_lambda_grid(design, y, cv) if grid is None else np.sort(np.asarray(grid, dtype=np.float64))[::-1]
    if lambdas.size == 0:
        raise CrossValidationError("Lambda grid is empty")

    order = np.random.default_rng(cv.seed).permutation(design.m)
    folds = np.array_split(order, cv.folds)
    errors = np.empty((cv.folds, lambdas.size))

    for fold_index, held_out in enumerate(folds):
        train = np.setdiff1d(order, held_out)
        x_train, y_train = design.data[train], y[train]
        x_val, y_val = design.data[held_out], y[held_out]
        theta = np.zeros(design.l)
        for grid_index, lam in enumerate(lambdas):
            fold_config = config.with_lambda(float(lam)).model_copy(
                update={"tol": cv.tol, "max_iters": min(config.max_iters, cv.max_iters)}
            )
            penalties = column_penalties(design, fold_config)
            theta, _, _ = _lasso_path_point(x_train, y_train, penalties, fold_config, theta)
            error = y_val - x_val @ theta
            errors[fold_index, grid_index] = float(error @ error) / error.size
        logger.debug("CV fold %d done", fold_index)

    mean_mse = errors.mean(axis=0)
    std_mse = errors.std(axis=0)
    best = int(np.argmin(mean_mse))
    logger.info("CV selected lambda=%.6g (val mse %.6g)", lambdas[best], mean_mse[best])
    return CvResult(best_lambda=float(lambdas[best]), lambdas=lambdas, mean_mse=mean_mse, std_mse=std_mse)


def pseudoinverse_solve(design: ExpandedDesign, y: np.ndarray) -> SolverResult:
    """Minimum-norm least squares via SVD, singular values below 1e-10 * s_max dropped"""
    started = time.perf_counter()
    y = _check_inputs(design, y)
    u, s, vt = scipy.linalg.svd(design.data, full_matrices=False)
    keep = s > PINV_RCOND * s[0]
    theta = vt[keep].T @ ((u[:, keep].T @ y) / s[keep])
    residual = y - design.data @ theta
    trace = [TraceRecord(iteration=1, residual_norm=float(np.linalg.norm(residual)))]
    logger.info("pseudoinverse: rank=%d of %d", int(np.count_nonzero(keep)), design.l)
    return _result("pseudoinverse", design, theta, 1, True, trace, started)
