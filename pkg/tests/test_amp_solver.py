"""
Tests for app/services/amp_solver.py
"""
import numpy as np
import pytest
from scipy import stats

from app.exceptions import DivergenceError, SolverInputError
from app.models import ColumnLayout, ExpandedDesign
from app.schemas import AmpConfig, AmpVariant, BayesModelSpec, BgPrior, EbConfig, GaussianPrior, GroupPriorSet, PriorScale
from app.services import amp_solver
from app.services.amp_solver import amp_init, amp_run, amp_step, estimate_effective_noise
from app.services.denoisers import grouped_denoise
from app.services.empirical_bayes import eb_amp_run
from app.services.kernel_expansion import expand_quadratic, normalize_columns, rescale_coefficients_to_normalized
from app.services.synthetic_data import gen_bayes_dataset, gen_features


SIMULTANEOUS = AmpConfig(variant=AmpVariant.SIMULTANEOUS)
DENSE_PRIORS = GroupPriorSet(
    dc=GaussianPrior(tau=1.0),
    linear=BgPrior(p=1.0, tau=1.0),
    quadratic=BgPrior(p=1.0, tau=1.0),
    cross=BgPrior(p=1.0, tau=1.0),
)


def gaussian_design(m, n, seed):
    """Unit-norm i.i.d. Gaussian columns wearing the N-feature layout"""
    layout = ColumnLayout(n)
    data = np.random.default_rng(seed).standard_normal((m, layout.l))
    data /= np.linalg.norm(data, axis=0)
    return ExpandedDesign(data=data, layout=layout, norms=np.ones(layout.l), normalized=True)


def coefficient_mse(result, truth):
    return float(np.mean((result.theta_hat_original.to_vector() - truth.to_vector()) ** 2))


def reference_iteration(x, y, theta, residual, priors, layout, tau_scale):
    """Textbook AMP iteration written out directly"""
    m, l = x.shape
    sigma2 = max(residual @ residual / m, 1e-12)
    q = x.T @ residual + theta
    theta_new, slope = grouped_denoise(q, sigma2, priors, layout, tau_scale)
    residual_new = y - x @ theta_new + (l / m) * residual * slope
    return theta_new, residual_new


class TestEffectiveNoise:

    def test_energy_per_sample(self):
        assert estimate_effective_noise(np.array([3.0, 4.0]), 5) == pytest.approx(5.0)

    def test_floor(self):
        assert estimate_effective_noise(np.zeros(4), 4) == 1e-12


class TestAmpInit:

    def test_zero_start(self, small_design, rng):
        y = rng.standard_normal(small_design.m)
        state = amp_init(small_design, y)
        np.testing.assert_array_equal(state.theta, np.zeros(small_design.l))
        np.testing.assert_array_equal(state.residual, y)
        assert state.sigma2_eff == pytest.approx(y @ y / small_design.m)
        assert state.iteration == 0
        assert len(state.trace) == 1

    def test_requires_normalized_design(self, rng):
        raw = expand_quadratic(gen_features(20, 3, seed=0))
        with pytest.raises(SolverInputError):
            amp_init(raw, rng.standard_normal(20))

    def test_dimension_mismatch(self, small_design):
        with pytest.raises(SolverInputError):
            amp_init(small_design, np.ones(small_design.m + 1))


class TestAmpStep:

    def test_matches_reference_iteration(self, small_design, rng):
        """Two undamped steps reproduce the textbook recursion"""
        y = rng.standard_normal(small_design.m)
        priors = GroupPriorSet()
        config = AmpConfig(damping=1.0, variant=AmpVariant.SIMULTANEOUS)
        tau_scale = small_design.norms ** 2

        state = amp_init(small_design, y)
        theta, residual = np.zeros(small_design.l), y.copy()
        for _ in range(2):
            state = amp_step(state, small_design, y, priors, config)
            theta, residual = reference_iteration(
                small_design.data, y, theta, residual, priors, small_design.layout, tau_scale
            )
            np.testing.assert_allclose(state.theta, theta, rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(state.residual, residual, rtol=1e-12, atol=1e-14)

    def test_damping_blends_with_previous_iterate(self, small_design, rng):
        y = rng.standard_normal(small_design.m)
        start = amp_init(small_design, y)
        full = amp_step(start, small_design, y, GroupPriorSet(), SIMULTANEOUS.model_copy(update={"damping": 1.0}))
        half = amp_step(start, small_design, y, GroupPriorSet(), SIMULTANEOUS.model_copy(update={"damping": 0.5}))
        np.testing.assert_allclose(half.theta, 0.5 * full.theta)
        np.testing.assert_allclose(half.residual, 0.5 * full.residual + 0.5 * y)

    def test_keeps_channel_state(self, small_design, rng):
        y = rng.standard_normal(small_design.m)
        start = amp_init(small_design, y)
        state = amp_step(start, small_design, y, GroupPriorSet(), SIMULTANEOUS)
        np.testing.assert_allclose(state.pseudo_data, small_design.data.T @ y)
        assert state.channel_sigma2 == start.sigma2_eff
        assert state.iteration == 1

    def test_orthonormal_pseudo_data_is_matched_filter(self, orthonormal_design, rng):
        """With X^T X = I the first pseudo-data is theta + X^T z exactly"""
        theta = rng.standard_normal(orthonormal_design.l)
        noise = 0.01 * rng.standard_normal(orthonormal_design.m)
        y = orthonormal_design.data @ theta + noise
        state = amp_step(amp_init(orthonormal_design, y), orthonormal_design, y, GroupPriorSet(), SIMULTANEOUS)
        np.testing.assert_allclose(state.pseudo_data, theta + orthonormal_design.data.T @ noise, atol=1e-12)

    @pytest.mark.parametrize("variant", list(AmpVariant))
    def test_zero_measurements_are_a_fixed_point(self, small_design, variant):
        y = np.zeros(small_design.m)
        start = amp_init(small_design, y)
        state = amp_step(start, small_design, y, GroupPriorSet(), AmpConfig(variant=variant))
        np.testing.assert_array_equal(state.theta, start.theta)
        np.testing.assert_array_equal(state.residual, start.residual)
        assert state.sigma2_eff == start.sigma2_eff


class TestAmpRun:

    def test_recovers_overdetermined_planted_model(self, bayes_dataset):
        design = normalize_columns(expand_quadratic(bayes_dataset.x_train))
        test = (expand_quadratic(bayes_dataset.x_test), bayes_dataset.y_test)
        result = amp_run(design, bayes_dataset.y_train, GroupPriorSet(), AmpConfig(), truth=bayes_dataset.truth, test=test)
        assert not result.diverged
        assert result.trace[-1].test_mse < 0.05 * np.var(bayes_dataset.y_test)
        assert result.trace[-1].coeff_mse < result.trace[0].coeff_mse
        assert result.final_state is not None
        assert result.iterations_used == result.final_state.iteration

    def test_sweep_is_deterministic(self, bayes_dataset):
        design = normalize_columns(expand_quadratic(bayes_dataset.x_train))
        config = AmpConfig(variant=AmpVariant.SWEEP, seed=4, max_iters=30)
        first = amp_run(design, bayes_dataset.y_train, GroupPriorSet(), config)
        second = amp_run(design, bayes_dataset.y_train, GroupPriorSet(), config)
        np.testing.assert_array_equal(first.theta_hat_normalized, second.theta_hat_normalized)
        assert first.iterations_used == second.iterations_used

    def test_normalized_priors_skip_variance_scaling(self, small_design, rng):
        y = rng.standard_normal(small_design.m)
        priors = GroupPriorSet()
        config = AmpConfig(
            damping=1.0, max_iters=1, priors_scale=PriorScale.NORMALIZED, variant=AmpVariant.SIMULTANEOUS
        )
        result = amp_run(small_design, y, priors, config)
        sigma2 = y @ y / small_design.m
        expected, _ = grouped_denoise(small_design.data.T @ y, sigma2, priors, small_design.layout)
        np.testing.assert_allclose(result.theta_hat_normalized, expected)

    def test_damped_divergence_returns_last_finite_iterate(self, small_design, rng, monkeypatch):
        y = rng.standard_normal(small_design.m)
        real = amp_solver.grouped_denoise_terms
        calls = {"n": 0}

        def flaky(*args, **kwargs):
            calls["n"] += 1
            theta, derivatives = real(*args, **kwargs)
            if calls["n"] == 3:
                theta = theta * np.nan
            return theta, derivatives

        monkeypatch.setattr(amp_solver, "grouped_denoise_terms", flaky)
        result = amp_run(small_design, y, GroupPriorSet(), AmpConfig(damping=0.7, max_iters=10, variant=AmpVariant.SIMULTANEOUS))
        assert result.diverged
        assert result.iterations_used == 2
        assert np.all(np.isfinite(result.theta_hat_normalized))

    def test_undamped_divergence_raises(self, small_design, rng, monkeypatch):
        y = rng.standard_normal(small_design.m)
        monkeypatch.setattr(
            amp_solver, "grouped_denoise_terms",
            lambda q, *args, **kwargs: (np.full_like(q, np.inf), np.zeros_like(q)),
        )
        with pytest.raises(DivergenceError) as info:
            amp_run(small_design, y, GroupPriorSet(), AmpConfig(damping=1.0, variant=AmpVariant.SIMULTANEOUS))
        assert info.value.iteration == 1

    def test_single_iteration_budget(self, small_design, rng):
        y = rng.standard_normal(small_design.m)
        result = amp_run(small_design, y, GroupPriorSet(), AmpConfig(max_iters=1))
        assert result.iterations_used == 1
        assert not result.converged
        assert len(result.trace) == 2

    def test_sweep_and_simultaneous_share_fixed_point(self, rng):
        design = gaussian_design(80, 6, seed=2)
        y = design.data @ rng.standard_normal(design.l) + 0.05 * rng.standard_normal(design.m)
        base = AmpConfig(tol=1e-12, max_iters=5000, priors_scale=PriorScale.NORMALIZED)
        sweep = amp_run(design, y, DENSE_PRIORS, base.model_copy(update={"variant": AmpVariant.SWEEP}))
        simultaneous = amp_run(design, y, DENSE_PRIORS, base.model_copy(update={"variant": AmpVariant.SIMULTANEOUS}))
        assert sweep.converged and simultaneous.converged
        np.testing.assert_allclose(sweep.theta_hat_normalized, simultaneous.theta_hat_normalized, atol=1e-6)

    def test_effective_noise_trends_down(self, bayes_dataset):
        design = normalize_columns(expand_quadratic(bayes_dataset.x_train))
        result = amp_run(design, bayes_dataset.y_train, GroupPriorSet(), AmpConfig())
        assert result.converged
        sigma2 = np.array([record.sigma2_eff for record in result.trace])
        assert np.all(sigma2[1:] <= 1.05 * sigma2[:-1])
        assert sigma2[-1] < sigma2[0]

    def test_empirical_bayes_on_zero_measurements(self, small_design):
        result = eb_amp_run(small_design, np.zeros(small_design.m), AmpConfig(), EbConfig())
        np.testing.assert_array_equal(result.theta_hat_normalized, 0.0)
        assert result.converged


class TestPlantedExamples:

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_fifty_steps_on_noisy_planted_model(self, seed):
        spec = BayesModelSpec(n=10, m=220, noise_var=0.004, seed=seed)
        dataset = gen_bayes_dataset(spec, k_test=20)
        design = normalize_columns(expand_quadratic(dataset.x_train))
        assert (design.m, design.l) == (200, 66)
        result = amp_run(design, dataset.y_train, spec.priors, AmpConfig(max_iters=50))
        assert coefficient_mse(result, dataset.truth) < 10 * spec.noise_var

    def test_noiseless_planted_model_near_unit_rate(self):
        spec = BayesModelSpec(n=10, m=90, noise_var=1e-12, seed=0)
        dataset = gen_bayes_dataset(spec, k_test=20)
        design = normalize_columns(expand_quadratic(dataset.x_train))
        assert design.m / design.l == pytest.approx(1.06, abs=0.01)
        test = (expand_quadratic(dataset.x_test), dataset.y_test)
        result = amp_run(design, dataset.y_train, spec.priors, AmpConfig(), test=test)
        assert not result.diverged
        assert result.trace[-1].test_mse <= 1e-4


@pytest.mark.slow
class TestScalarChannel:

    def test_pseudo_data_noise_is_gaussian_at_desk_scale(self):
        """q - theta' behaves like N(0, sigma2) at the last iterate"""
        spec = BayesModelSpec(n=30, m=580, noise_var=0.004, seed=0)
        dataset = gen_bayes_dataset(spec, k_test=60)
        design = normalize_columns(expand_quadratic(dataset.x_train))
        result = amp_run(design, dataset.y_train, spec.priors, AmpConfig())
        state = result.final_state

        theta_prime = rescale_coefficients_to_normalized(dataset.truth, design.norms).to_vector()
        error = state.pseudo_data - theta_prime
        assert np.var(error) == pytest.approx(state.channel_sigma2, rel=0.15)
        assert abs(stats.kurtosis(error)) < 0.5
