"""
Scalar MMSE denoisers for Gaussian and Bernoulli-Gaussian priors

Every denoiser is the posterior mean E[theta | q] of the scalar channel
q = theta + N(0, sigma2) and works elementwise on numpy arrays.
"""
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from app.exceptions import DenoiserError, GroupMismatchError
from app.models import ColumnGroup, ColumnLayout
from app.schemas import BgPrior, GaussianPrior, GroupPriorSet


ArrayLike = Union[float, np.ndarray]

P_MIN = 1e-6
TAU_MIN = 1e-12


def _check_sigma2(sigma2: float) -> float:
    if not sigma2 > 0:
        raise DenoiserError(f"Channel noise variance must be positive, got {sigma2}")
    return float(sigma2)


def _clamped(p: float, tau: ArrayLike) -> Tuple[float, np.ndarray]:
    return min(max(float(p), P_MIN), 1.0), np.maximum(np.asarray(tau, dtype=np.float64), TAU_MIN)


def _bg_weight(q: np.ndarray, sigma2: float, p: float, tau: np.ndarray) -> np.ndarray:
    """Posterior probability that theta is nonzero given q (log-space)"""
    if p >= 1.0:
        return np.ones(np.broadcast(q, tau).shape)
    log_odds_zero = (
        np.log1p(-p) - np.log(p)
        + 0.5 * np.log1p(tau / sigma2)
        - q * q * tau / (2.0 * sigma2 * (tau + sigma2))
    )
    return expit(-log_odds_zero)


def bg_denoise(q: ArrayLike, sigma2: float, prior: BgPrior, tau_scale: Optional[np.ndarray] = None) -> ArrayLike:
    """
    E[theta | q] for theta ~ (1-p) delta_0 + p N(0, tau)

    Args:
        q: Scalar-channel observation(s)
        sigma2: Channel noise variance
        prior: Bernoulli-Gaussian prior
        tau_scale: Optional per-entry multiplier of tau

    Returns:
        gamma(q) * tau / (tau + sigma2) * q
    """
    sigma2 = _check_sigma2(sigma2)
    q = np.asarray(q, dtype=np.float64)
    p, tau = _clamped(prior.p, prior.tau if tau_scale is None else prior.tau * tau_scale)
    shrink = tau / (tau + sigma2)
    return _bg_weight(q, sigma2, p, tau) * shrink * q


def bg_denoise_derivative(q: ArrayLike, sigma2: float, prior: BgPrior, tau_scale: Optional[np.ndarray] = None) -> ArrayLike:
    """
    d/dq of bg_denoise

    With s = tau / (tau + sigma2): eta' = s gamma (1 + (1 - gamma) s q^2 / sigma2)
    """
    sigma2 = _check_sigma2(sigma2)
    q = np.asarray(q, dtype=np.float64)
    p, tau = _clamped(prior.p, prior.tau if tau_scale is None else prior.tau * tau_scale)
    shrink = tau / (tau + sigma2)
    gamma = _bg_weight(q, sigma2, p, tau)
    return shrink * gamma * (1.0 + (1.0 - gamma) * shrink * q * q / sigma2)


def gaussian_denoise(q: ArrayLike, sigma2: float, prior: GaussianPrior, tau_scale: Optional[np.ndarray] = None) -> ArrayLike:
    """Wiener shrinkage q * tau / (tau + sigma2)"""
    sigma2 = _check_sigma2(sigma2)
    _, tau = _clamped(1.0, prior.tau if tau_scale is None else prior.tau * tau_scale)
    return np.asarray(q, dtype=np.float64) * tau / (tau + sigma2)


def gaussian_denoise_derivative(q: ArrayLike, sigma2: float, prior: GaussianPrior, tau_scale: Optional[np.ndarray] = None) -> ArrayLike:
    sigma2 = _check_sigma2(sigma2)
    _, tau = _clamped(1.0, prior.tau if tau_scale is None else prior.tau * tau_scale)
    return np.broadcast_to(tau / (tau + sigma2), np.shape(q)).astype(np.float64)


def grouped_denoise_terms(
    q: np.ndarray,
    sigma2: float,
    priors: GroupPriorSet,
    layout: ColumnLayout,
    tau_scale: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Apply each group's denoiser to its slice of q, keeping per-entry derivatives

    Args:
        q: Length-L pseudo-data
        sigma2: Channel noise variance
        priors: One prior per group
        layout: Column-group map of length L
        tau_scale: Optional length-L multiplier of each entry's prior variance

    Returns:
        (theta_hat, derivatives)
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (layout.l,):
        raise GroupMismatchError(f"Pseudo-data of shape {q.shape} does not match layout width {layout.l}")
    if tau_scale is not None and np.shape(tau_scale) != (layout.l,):
        raise GroupMismatchError(f"tau_scale must have length {layout.l}")

    theta = np.empty_like(q)
    derivative = np.empty_like(q)
    for group, block in layout.slices.items():
        if block.start == block.stop:
            continue
        scale = None if tau_scale is None else tau_scale[block]
        if group is ColumnGroup.DC:
            theta[block] = gaussian_denoise(q[block], sigma2, priors.dc, scale)
            derivative[block] = gaussian_denoise_derivative(q[block], sigma2, priors.dc, scale)
        else:
            prior = getattr(priors, group.value)
            theta[block] = bg_denoise(q[block], sigma2, prior, scale)
            derivative[block] = bg_denoise_derivative(q[block], sigma2, prior, scale)
    return theta, derivative


def mean_derivative(derivatives: np.ndarray) -> float:
    """<eta'> with a fixed summation order"""
    return float(np.sum(derivatives) / derivatives.size)


def grouped_denoise(
    q: np.ndarray,
    sigma2: float,
    priors: GroupPriorSet,
    layout: ColumnLayout,
    tau_scale: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, float]:
    """
    Groupwise denoising of length-L pseudo-data

    Returns:
        (theta_hat, mean_derivative) where mean_derivative is the Onsager
        average (1/L) sum_l eta'_l
    """
    theta, derivatives = grouped_denoise_terms(q, sigma2, priors, layout, tau_scale)
    return theta, mean_derivative(derivatives)


def _scalar_expit(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def denoise_entry(
    q: float,
    sigma2: float,
    priors: GroupPriorSet,
    group: ColumnGroup,
    tau_scale: Optional[float] = None,
) -> Tuple[float, float]:
    """
    (eta(q), eta'(q)) for a single coefficient of `group`

    Scalar twin of grouped_denoise_terms, used inside the per-coordinate sweep.
    """
    sigma2 = _check_sigma2(sigma2)
    q = float(q)
    scale = 1.0 if tau_scale is None else float(tau_scale)
    if group is ColumnGroup.DC:
        tau = max(priors.dc.tau * scale, TAU_MIN)
        shrink = tau / (tau + sigma2)
        return shrink * q, shrink

    prior = getattr(priors, group.value)
    p = min(max(float(prior.p), P_MIN), 1.0)
    tau = max(prior.tau * scale, TAU_MIN)
    shrink = tau / (tau + sigma2)
    if p >= 1.0:
        gamma = 1.0
    else:
        log_odds_zero = (
            math.log1p(-p) - math.log(p)
            + 0.5 * math.log1p(tau / sigma2)
            - q * q * tau / (2.0 * sigma2 * (tau + sigma2))
        )
        gamma = _scalar_expit(-log_odds_zero)
    return gamma * shrink * q, shrink * gamma * (1.0 + (1.0 - gamma) * shrink * q * q / sigma2)
