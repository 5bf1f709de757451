"""
Seeded generators for the planted Bayesian model and the sinusoid target family

Gaussian draws use numpy's PCG64 generator and its ziggurat `standard_normal`;
every generator derives independent sub-streams from its seed with
`SeedSequence.spawn`, so outputs depend only on (spec, seed).
"""
from typing import Tuple, Union

import numpy as np

from app.exceptions import DatasetError, GroupMismatchError
from app.models import Dataset, ExpandedDesign, FeatureMatrix, GroupedCoefficients
from app.schemas import BayesModelSpec, BgPrior, GroupPriorSet, SinusoidSpec
from app.services.kernel_expansion import expand_quadratic, predict


Seed = Union[int, np.random.SeedSequence]


def gen_features(m: int, n: int, seed: Seed) -> FeatureMatrix:
    """M x N matrix of i.i.d. standard normal entries"""
    if m < 1 or n < 1:
        raise DatasetError(f"Need m >= 1 and n >= 1, got m={m}, n={n}")
    return FeatureMatrix(np.random.default_rng(seed).standard_normal((m, n)))


def _draw_bg(rng: np.random.Generator, size: int, prior: BgPrior) -> np.ndarray:
    active = rng.random(size) < prior.p
    values = rng.standard_normal(size) * np.sqrt(prior.tau)
    return np.where(active, values, 0.0)


def gen_bayes_coefficients(n: int, priors: GroupPriorSet, seed: Seed) -> GroupedCoefficients:
    """Independent draws of the four coefficient groups, original scale"""
    if n < 1:
        raise DatasetError(f"Need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    dc = rng.standard_normal() * np.sqrt(priors.dc.tau)
    linear = _draw_bg(rng, n, priors.linear)
    quadratic = _draw_bg(rng, n, priors.quadratic)
    cross = _draw_bg(rng, n * (n - 1) // 2, priors.cross)
    return GroupedCoefficients(dc=dc, linear=linear, quadratic=quadratic, cross=cross)


def _check_split(m: int, k_test: int) -> None:
    if not 1 <= k_test < m:
        raise DatasetError(f"k_test must satisfy 1 <= k_test < m, got k_test={k_test}, m={m}")


def _split(x: FeatureMatrix, y: np.ndarray, k_test: int) -> Tuple[FeatureMatrix, np.ndarray, FeatureMatrix, np.ndarray]:
    """First M-K rows train, last K rows test"""
    cut = x.m - k_test
    return x.rows(slice(0, cut)), y[:cut].copy(), x.rows(slice(cut, None)), y[cut:].copy()


def gen_bayes_dataset(spec: BayesModelSpec, k_test: int) -> Dataset:
    """
    y = X_Q theta + z over M rows, last K held out

    Raises:
        DatasetError: If k_test >= m
    """
    _check_split(spec.m, k_test)
    feature_seed, coefficient_seed, noise_seed = np.random.SeedSequence(spec.seed).spawn(3)

    x = gen_features(spec.m, spec.n, feature_seed)
    theta = gen_bayes_coefficients(spec.n, spec.priors, coefficient_seed)
    noise = np.sqrt(spec.noise_var) * np.random.default_rng(noise_seed).standard_normal(spec.m)
    y = predict(expand_quadratic(x), theta) + noise

    x_train, y_train, x_test, y_test = _split(x, y, k_test)
    return Dataset(x_train=x_train, y_train=y_train, x_test=x_test, y_test=y_test, truth=theta)


def gen_sinusoid_dataset(spec: SinusoidSpec, k_test: int) -> Dataset:
    """
    y = sum_i w_i sin(X rho_i + phi_i) + z

    rho_i ~ BG prior; phi_i ~ U[0, 2 pi) per sample (or one scalar per sinusoid
    when spec.shared_phase). The target lies outside the quadratic class, so
    no truth is attached.
    """
    _check_split(spec.m, k_test)
    rho_seed, feature_seed, phase_seed, noise_seed = np.random.SeedSequence(spec.seed).spawn(4)
    prior = spec.resolved_rho_prior()
    count = len(spec.weights)

    x = gen_features(spec.m, spec.n, feature_seed)
    rho_rng = np.random.default_rng(rho_seed)
    rho = np.stack([_draw_bg(rho_rng, spec.n, prior) for _ in range(count)], axis=1)

    phase_rng = np.random.default_rng(phase_seed)
    if spec.shared_phase:
        phases = np.broadcast_to(phase_rng.uniform(0.0, 2.0 * np.pi, size=count), (spec.m, count))
    else:
        phases = phase_rng.uniform(0.0, 2.0 * np.pi, size=(spec.m, count))

    signal = np.sin(x.data @ rho + phases) @ np.asarray(spec.weights, dtype=np.float64)
    noise = np.sqrt(spec.noise_var) * np.random.default_rng(noise_seed).standard_normal(spec.m)

    x_train, y_train, x_test, y_test = _split(x, signal + noise, k_test)
    return Dataset(x_train=x_train, y_train=y_train, x_test=x_test, y_test=y_test, truth=None)


def test_mse(x_test: ExpandedDesign, theta_hat: GroupedCoefficients, y_test: np.ndarray) -> float:
    """||y_test - X_test theta_hat||^2 / K"""
    y_test = np.asarray(y_test, dtype=np.float64)
    if y_test.shape != (x_test.m,):
        raise GroupMismatchError(f"y_test of shape {y_test.shape} does not match {x_test.m} test rows")
    error = y_test - predict(x_test, theta_hat)
    return float(error @ error) / error.size

