"""
Approximate message passing on the normalized quadratic design

One AMP iteration:
    q^t     = X^T r^t + theta^t
    theta'  = eta(q^t; sigma_t^2)
    r'      = y - X theta' + (L/M) r^t <eta'>
followed by damping of (theta, r) and sigma^2 = ||r||^2 / M.
"""
import logging
import time
from dataclasses import replace
from typing import Callable, Optional, Tuple

import numpy as np

from app.exceptions import DivergenceError, SolverInputError
from app.models import GROUP_ORDER, AmpState, ExpandedDesign, GroupedCoefficients, SolverResult
from app.schemas import AmpConfig, AmpVariant, GroupPriorSet, PriorScale
from app.services.denoisers import denoise_entry, grouped_denoise_terms, mean_derivative
from app.services.diagnostics import TraceMonitor
from app.services.kernel_expansion import rescale_coefficients_to_original


logger = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-12
CHANGE_EPS = 1e-12

# (pseudo-data, channel variance, iteration) -> priors used for this step
PriorHook = Callable[[np.ndarray, float, int], GroupPriorSet]


def estimate_effective_noise(residual: np.ndarray, m: int) -> float:
    """||r||^2 / m, floored at 1e-12"""
    if m < 1:
        raise SolverInputError(f"Measurement count must be >= 1, got {m}")
    residual = np.asarray(residual, dtype=np.float64)
    return max(float(residual @ residual) / m, SIGMA2_FLOOR)


def _check_inputs(design: ExpandedDesign, y: np.ndarray) -> np.ndarray:
    if not design.normalized:
        raise SolverInputError("AMP requires a column-normalized design")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (design.m,):
        raise SolverInputError(f"Measurements of shape {y.shape} do not match design rows {design.m}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(design.data)):
        raise SolverInputError("AMP input contains non-finite values")
    return y


def _tau_scale(design: ExpandedDesign, config: AmpConfig) -> Optional[np.ndarray]:
    # prior variance of theta'_l = theta_l * ||col_l|| is tau * ||col_l||^2
    if config.priors_scale is PriorScale.ORIGINAL:
        return design.norms ** 2
    return None


def amp_init(design: ExpandedDesign, y: np.ndarray, monitor: Optional[TraceMonitor] = None) -> AmpState:
    """
    theta^0 = 0, r^0 = y, sigma_0^2 = ||y||^2 / M

    Raises:
        SolverInputError: On dimension mismatch, non-finite data or an unnormalized design
    """
    y = _check_inputs(design, y)
    theta = np.zeros(design.l)
    residual = y.copy()
    sigma2 = estimate_effective_noise(residual, design.m)
    monitor = monitor or TraceMonitor.build(design)
    return AmpState(
        theta=theta,
        residual=residual,
        sigma2_eff=sigma2,
        iteration=0,
        trace=[monitor.record(0, theta, residual, sigma2)],
    )


def _finish_step(
    state: AmpState,
    theta_new: np.ndarray,
    residual_new: np.ndarray,
    slope: float,
    pseudo_data: np.ndarray,
    m: int,
    config: AmpConfig,
    monitor: Optional[TraceMonitor],
) -> AmpState:
    iteration = state.iteration + 1
    if config.damping < 1.0:
        d = config.damping
        theta_new = d * theta_new + (1.0 - d) * state.theta
        residual_new = d * residual_new + (1.0 - d) * state.residual

    if not (np.all(np.isfinite(theta_new)) and np.all(np.isfinite(residual_new))):
        raise DivergenceError(iteration, "non-finite iterate")

    sigma2 = estimate_effective_noise(residual_new, m)
    record = (monitor or TraceMonitor(norms=np.ones(theta_new.size))).record(
        iteration, theta_new, residual_new, sigma2
    )
    logger.debug("AMP iteration %d: sigma2=%.6g residual=%.6g", iteration, sigma2, record.residual_norm)
    return replace(
        state,
        theta=theta_new,
        residual=residual_new,
        sigma2_eff=sigma2,
        iteration=iteration,
        trace=state.trace + [record],
        mean_derivative=slope,
        pseudo_data=pseudo_data,
        channel_sigma2=state.sigma2_eff,
    )


def amp_step(
    state: AmpState,
    design: ExpandedDesign,
    y: np.ndarray,
    priors: GroupPriorSet,
    config: AmpConfig,
    monitor: Optional[TraceMonitor] = None,
    prior_hook: Optional[PriorHook] = None,
) -> AmpState:
    """
    One AMP iteration (simultaneous update, or a sweep when config.variant says so)

    Raises:
        DivergenceError: If the new iterate is not finite
    """
    if config.variant is AmpVariant.SWEEP:
        return amp_sweep_step(state, design, y, priors, config, monitor, prior_hook)

    m, l = design.m, design.l
    q = design.data.T @ state.residual + state.theta
    sigma2 = state.sigma2_eff
    if prior_hook is not None:
        priors = prior_hook(q, sigma2, state.iteration)

    theta_new, derivatives = grouped_denoise_terms(q, sigma2, priors, design.layout, _tau_scale(design, config))
    slope = mean_derivative(derivatives)
    residual_new = y - design.data @ theta_new + (l / m) * state.residual * slope
    return _finish_step(state, theta_new, residual_new, slope, q, m, config, monitor)


def amp_sweep_step(
    state: AmpState,
    design: ExpandedDesign,
    y: np.ndarray,
    priors: GroupPriorSet,
    config: AmpConfig,
    monitor: Optional[TraceMonitor] = None,
    prior_hook: Optional[PriorHook] = None,
) -> AmpState:
    """
    Sequential AMP iteration

    Coordinates are visited in a permutation drawn from (config.seed,
    iteration). Each coordinate's pseudo-data uses the residual left by the
    coordinates already updated; the Onsager memory of the previous iteration
    is held fixed during the sweep and refreshed once at the end, so the fixed
    points coincide with those of amp_step.
    """
    m, l = design.m, design.l
    x = design.data
    sigma2 = state.sigma2_eff
    if prior_hook is not None:
        priors = prior_hook(x.T @ state.residual + state.theta, sigma2, state.iteration)

    order = np.random.default_rng([config.seed, state.iteration]).permutation(l)
    tau_scale = _tau_scale(design, config)
    group_ids = design.layout.group_ids

    columns = np.ascontiguousarray(x.T)
    theta = state.theta.copy()
    residual = y - x @ theta + (l / m) * state.mean_derivative * state.residual
    pseudo_data = np.empty(l)
    derivatives = np.empty(l)
    for j in order:
        column = columns[j]
        q_j = theta[j] + column @ residual
        value, slope_j = denoise_entry(
            q_j, sigma2, priors, GROUP_ORDER[group_ids[j]],
            None if tau_scale is None else tau_scale[j],
        )
        delta = value - theta[j]
        if delta != 0.0:
            residual -= delta * column
        theta[j] = value
        pseudo_data[j] = q_j
        derivatives[j] = slope_j

    slope = mean_derivative(derivatives)
    residual_new = y - x @ theta + (l / m) * state.residual * slope
    return _finish_step(state, theta, residual_new, slope, pseudo_data, m, config, monitor)


def amp_run(
    design: ExpandedDesign,
    y: np.ndarray,
    priors: GroupPriorSet,
    config: AmpConfig,
    truth: Optional[GroupedCoefficients] = None,
    test: Optional[Tuple[ExpandedDesign, np.ndarray]] = None,
    prior_hook: Optional[PriorHook] = None,
    solver_name: str = "amp",
) -> SolverResult:
    """
    Iterate AMP until the relative change of theta drops below config.tol

    Args:
        design: Column-normalized design
        y: Measurements
        priors: Group priors, in original or normalized units per config.priors_scale
        config: Iteration control
        truth: Optional original-scale coefficients for the MSE trace
        test: Optional (unnormalized held-out design, held-out targets)
        prior_hook: Optional per-iteration prior refresh (empirical Bayes)
        solver_name: Label stored on the result

    Returns:
        SolverResult with normalized and original-scale estimates

    Raises:
        SolverInputError: On invalid input
        DivergenceError: If the undamped iteration diverges
    """
    started = time.perf_counter()
    monitor = TraceMonitor.build(design, truth, test)
    state = amp_init(design, y, monitor)
    y = np.asarray(y, dtype=np.float64)

    converged = False
    diverged = False
    for _ in range(config.max_iters):
        try:
            new_state = amp_step(state, design, y, priors, config, monitor, prior_hook)
        except DivergenceError as error:
            if config.damping < 1.0:
                logger.warning("%s diverged at iteration %d; returning last finite iterate", solver_name, error.iteration)
                diverged = True
                break
            raise
        change = np.linalg.norm(new_state.theta - state.theta) / max(np.linalg.norm(state.theta), CHANGE_EPS)
        state = new_state
        if change < config.tol:
            converged = True
            break

    elapsed = time.perf_counter() - started
    logger.info(
        "%s finished: iterations=%d converged=%s diverged=%s sigma2=%.4g (%.2fs)",
        solver_name, state.iteration, converged, diverged, state.sigma2_eff, elapsed,
    )
    theta_prime = GroupedCoefficients.from_vector(state.theta, design.layout, normalized=True)
    return SolverResult(
        solver=solver_name,
        theta_hat_normalized=state.theta.copy(),
        theta_hat_original=rescale_coefficients_to_original(theta_prime, design.norms),
        iterations_used=state.iteration,
        converged=converged,
        trace=list(state.trace),
        diverged=diverged,
        elapsed_seconds=elapsed,
        final_state=state,
    )
