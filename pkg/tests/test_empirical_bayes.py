"""
Tests for app/services/empirical_bayes.py
"""
import numpy as np
import pytest
from scipy import stats

from app.exceptions import DenoiserError, SolverInputError
from app.schemas import AmpConfig, BgPrior, EbConfig, PriorScale
from app.services.amp_solver import amp_run
from app.services.empirical_bayes import em_fit_bg, em_update_bg, eb_amp_run, scalar_channel_loglik
from app.services.kernel_expansion import expand_quadratic, normalize_columns


def draw_channel(rng, size, p, tau, sigma2):
    active = rng.random(size) < p
    theta = np.where(active, rng.standard_normal(size) * np.sqrt(tau), 0.0)
    return theta + rng.standard_normal(size) * np.sqrt(sigma2)


class TestScalarChannelLoglik:

    def test_dense_prior_is_gaussian(self, rng):
        q = rng.standard_normal(50)
        expected = stats.norm.logpdf(q, scale=np.sqrt(1.5)).sum()
        assert scalar_channel_loglik(q, 0.5, BgPrior(p=1.0, tau=1.0)) == pytest.approx(expected, rel=1e-12)

    def test_empty_prior_is_noise_only(self, rng):
        q = rng.standard_normal(50)
        expected = stats.norm.logpdf(q, scale=np.sqrt(0.5)).sum()
        assert scalar_channel_loglik(q, 0.5, BgPrior(p=0.0, tau=1.0)) == pytest.approx(expected, rel=1e-12)


class TestEmFit:

    def test_log_likelihood_never_decreases(self, rng):
        q = draw_channel(rng, 2000, p=0.2, tau=1.0, sigma2=0.01)
        config = EbConfig(em_steps_per_amp_iter=50)
        fit = em_fit_bg(q, 0.01, BgPrior(p=0.5, tau=0.1), config)
        assert len(fit.log_likelihoods) == 51
        assert np.all(np.diff(fit.log_likelihoods) >= -1e-9)

    def test_recovers_planted_parameters(self, rng):
        q = draw_channel(rng, 10_000, p=0.2, tau=1.0, sigma2=0.01)
        prior = em_update_bg(q, 0.01, BgPrior(p=0.1, tau=1.0), EbConfig(em_steps_per_amp_iter=25))
        assert prior.p == pytest.approx(0.2, abs=0.03)
        assert prior.tau == pytest.approx(1.0, rel=0.1)

    def test_zero_steps_keeps_clamped_init(self, rng):
        config = EbConfig(em_steps_per_amp_iter=0, tau_bounds=(1e-8, 5.0))
        fit = em_fit_bg(rng.standard_normal(10), 0.1, BgPrior(p=0.3, tau=9.0), config)
        assert fit.prior == BgPrior(p=0.3, tau=5.0)
        assert len(fit.log_likelihoods) == 1

    def test_bounds_are_respected(self):
        q = np.zeros(100)
        config = EbConfig(em_steps_per_amp_iter=20, p_bounds=(0.01, 1.0))
        prior = em_update_bg(q, 1.0, BgPrior(p=0.5, tau=1.0), config)
        assert prior.p >= 0.01
        assert config.tau_bounds[0] <= prior.tau <= config.tau_bounds[1]

    def test_large_observations_clamp_to_upper_bound(self):
        config = EbConfig(em_steps_per_amp_iter=5, p_bounds=(1e-4, 0.9))
        prior = em_update_bg(np.full(50, 100.0), 0.01, BgPrior(p=0.5, tau=1.0), config)
        assert prior.p == 0.9

    def test_zero_observations_shrink_activity(self):
        config = EbConfig(em_steps_per_amp_iter=10)
        fit = em_fit_bg(np.zeros(100), 1.0, BgPrior(p=0.5, tau=1.0), config)
        assert fit.prior.p < 0.5
        assert np.all(np.diff(fit.log_likelihoods) >= -1e-9)

    def test_empty_group_rejected(self):
        with pytest.raises(SolverInputError):
            em_fit_bg(np.array([]), 0.1, BgPrior(p=0.5, tau=1.0), EbConfig())

    def test_nonpositive_noise_rejected(self):
        with pytest.raises(DenoiserError):
            em_fit_bg(np.ones(3), 0.0, BgPrior(p=0.5, tau=1.0), EbConfig())


class TestEbConfig:

    def test_inverted_bounds_rejected(self):
        with pytest.raises(ValueError):
            EbConfig(p_bounds=(0.5, 0.1))


class TestEbAmpRun:

    def test_without_em_equals_plain_amp(self, sinusoid_dataset):
        design = normalize_columns(expand_quadratic(sinusoid_dataset.x_train))
        y = sinusoid_dataset.y_train
        eb_config = EbConfig(em_steps_per_amp_iter=0)
        amp_config = AmpConfig(max_iters=40)

        eb = eb_amp_run(design, y, amp_config, eb_config)
        plain = amp_run(design, y, eb_config.init, amp_config.model_copy(update={"priors_scale": PriorScale.NORMALIZED}))
        np.testing.assert_array_equal(eb.theta_hat_normalized, plain.theta_hat_normalized)
        assert eb.solver == "eb_amp"
        assert "learned_priors" not in eb.diagnostics

    def test_records_learned_priors(self, sinusoid_dataset):
        design = normalize_columns(expand_quadratic(sinusoid_dataset.x_train))
        result = eb_amp_run(design, sinusoid_dataset.y_train, AmpConfig(max_iters=25), EbConfig())
        history = result.diagnostics["learned_priors"]
        assert len(history) >= result.iterations_used
        assert set(result.diagnostics["final_priors"]) == {"dc", "linear", "quadratic", "cross"}
        for entry in history:
            for log_likelihoods in entry["log_likelihoods"].values():
                assert np.all(np.diff(log_likelihoods) >= -1e-9)
        assert np.all(np.isfinite(result.theta_hat_normalized))
