"""
Empirical-Bayes AMP: groupwise Bernoulli-Gaussian parameters learned by EM
on the scalar channel q = theta + N(0, sigma2) at every AMP iteration
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from app.exceptions import DenoiserError, SolverInputError
from app.models import ColumnGroup, EmFit, ExpandedDesign, GroupedCoefficients, SolverResult
from app.schemas import AmpConfig, BgPrior, EbConfig, GaussianPrior, GroupPriorSet, PriorScale
from app.services.amp_solver import amp_run


logger = logging.getLogger(__name__)

BG_GROUPS = (ColumnGroup.LINEAR, ColumnGroup.QUADRATIC, ColumnGroup.CROSS)


def _log_normal(q: np.ndarray, variance: float) -> np.ndarray:
    return -0.5 * (np.log(2.0 * np.pi * variance) + q * q / variance)


def scalar_channel_loglik(q: np.ndarray, sigma2: float, prior: BgPrior) -> float:
    """sum_i log[(1-p) N(q_i; 0, sigma2) + p N(q_i; 0, tau + sigma2)]"""
    q = np.asarray(q, dtype=np.float64)
    log_zero = _log_normal(q, sigma2)
    log_slab = _log_normal(q, prior.tau + sigma2)
    if prior.p >= 1.0:
        return float(np.sum(log_slab))
    if prior.p <= 0.0:
        return float(np.sum(log_zero))
    return float(np.sum(np.logaddexp(np.log1p(-prior.p) + log_zero, np.log(prior.p) + log_slab)))


def _clamp(value: float, bounds: Tuple[float, float]) -> float:
    return float(min(max(value, bounds[0]), bounds[1]))


def em_fit_bg(q_group: np.ndarray, sigma2: float, current: BgPrior, config: EbConfig) -> EmFit:
    """
    Run config.em_steps_per_amp_iter EM steps for a BG prior under the scalar channel

    Responsibilities gamma_i = P(nonzero | q_i); then
        p   <- clamp(mean gamma_i)
        tau <- clamp(sum gamma_i E[theta^2 | q_i, nonzero] / sum gamma_i)
    with E[theta^2 | q, nonzero] = tau sigma2 / (tau + sigma2) + (tau q / (tau + sigma2))^2.

    Returns:
        EmFit with the updated prior and the log-likelihood before and after each step

    Raises:
        DenoiserError: If sigma2 <= 0
        SolverInputError: If the group is empty
    """
    q = np.asarray(q_group, dtype=np.float64).reshape(-1)
    if q.size == 0:
        raise SolverInputError("EM update needs a nonempty coefficient group")
    if not sigma2 > 0:
        raise DenoiserError(f"Channel noise variance must be positive, got {sigma2}")

    p = _clamp(current.p, config.p_bounds)
    tau = _clamp(current.tau, config.tau_bounds)
    log_likelihoods = [scalar_channel_loglik(q, sigma2, BgPrior(p=p, tau=tau))]

    for _ in range(config.em_steps_per_amp_iter):
        log_slab = _log_normal(q, tau + sigma2)
        log_zero = _log_normal(q, sigma2)
        if p >= 1.0:
            gamma = np.ones_like(q)
        else:
            gamma = expit(np.log(p) - np.log1p(-p) + log_slab - log_zero)

        shrink = tau / (tau + sigma2)
        second_moment = shrink * sigma2 + (shrink * q) ** 2
        weight = float(np.sum(gamma))

        p = _clamp(weight / q.size, config.p_bounds)
        if weight > 0.0:
            tau = _clamp(float(np.sum(gamma * second_moment)) / weight, config.tau_bounds)
        log_likelihoods.append(scalar_channel_loglik(q, sigma2, BgPrior(p=p, tau=tau)))

    return EmFit(prior=BgPrior(p=p, tau=tau), log_likelihoods=log_likelihoods)


def em_update_bg(q_group: np.ndarray, sigma2: float, current: BgPrior, config: EbConfig) -> BgPrior:
    """EM-updated Bernoulli-Gaussian prior (see em_fit_bg)"""
    return em_fit_bg(q_group, sigma2, current, config).prior


class EmpiricalBayesHook:
    """
    Prior refresh plugged into amp_run

    Each call fits the three BG groups by EM on their slices of the pseudo-data
    and sets the DC variance to max(q_dc^2 - sigma2, tau_min). The history of
    learned priors and EM log-likelihoods is kept for diagnostics.
    """

    def __init__(self, design: ExpandedDesign, config: EbConfig):
        self.layout = design.layout
        self.config = config
        self.priors = config.init
        self.history: List[Dict] = []

    def __call__(self, q: np.ndarray, sigma2: float, iteration: int) -> GroupPriorSet:
        slices = self.layout.slices
        updated = {}
        log_likelihoods = {}
        for group in BG_GROUPS:
            block = q[slices[group]]
            current = getattr(self.priors, group.value)
            if block.size == 0:
                updated[group.value] = current
                continue
            fit = em_fit_bg(block, sigma2, current, self.config)
            updated[group.value] = fit.prior
            log_likelihoods[group.value] = fit.log_likelihoods

        q_dc = float(q[slices[ColumnGroup.DC]][0])
        dc_tau = max(q_dc * q_dc - sigma2, self.config.tau_bounds[0])
        self.priors = GroupPriorSet(dc=GaussianPrior(tau=dc_tau), **updated)
        self.history.append({
            "iteration": iteration,
            "sigma2": sigma2,
            "priors": self.priors.model_dump(mode="json"),
            "log_likelihoods": log_likelihoods,
        })
        return self.priors


def eb_amp_run(
    design: ExpandedDesign,
    y: np.ndarray,
    amp_config: AmpConfig,
    eb_config: EbConfig,
    truth: Optional[GroupedCoefficients] = None,
    test: Optional[Tuple[ExpandedDesign, np.ndarray]] = None,
) -> SolverResult:
    """
    AMP with groupwise priors re-estimated before every denoising step

    Priors live in normalized units. With em_steps_per_amp_iter=0 the run is
    plain amp_run with eb_config.init.
    """
    config = amp_config.model_copy(update={"priors_scale": PriorScale.NORMALIZED})
    hook = EmpiricalBayesHook(design, eb_config) if eb_config.em_steps_per_amp_iter > 0 else None

    result = amp_run(
        design, y, eb_config.init, config,
        truth=truth, test=test, prior_hook=hook, solver_name="eb_amp",
    )
    if hook is not None:
        result.diagnostics["learned_priors"] = hook.history
        result.diagnostics["final_priors"] = hook.priors.model_dump(mode="json")
        logger.info("eb_amp learned priors: %s", hook.priors.model_dump_json())
    return result
