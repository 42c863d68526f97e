import numpy as np
import numpy.testing as npt
import pytest

from mier.autodiff import Tensor, gradients, reduce_sum
from mier.distributions import (
    CategoricalParams,
    DiagonalGaussianParams,
    bernoulli_log_likelihood,
    categorical_entropy,
    categorical_kl_to_uniform,
    gaussian_kl_to_standard,
    gaussian_log_likelihood,
    reparameterized_sample,
)

from helpers import (
    categorical_kl_direct,
    central_difference,
    entropy_direct,
    gaussian_kl_quadrature,
)


def random_simplex_rows(rng, b, k):
    return rng.dirichlet(np.ones(k), size=b)


class TestGaussianKL:
    def test_zero_when_posterior_equals_prior(self):
        q = DiagonalGaussianParams(np.zeros(4), np.zeros(4))
        npt.assert_allclose(gaussian_kl_to_standard(q).data, 0.0, atol=0)

    def test_unit_mean_case_against_quadrature(self):
        q = DiagonalGaussianParams(np.array([1.0]), np.array([0.0]))
        value = gaussian_kl_to_standard(q).item()
        npt.assert_allclose(value, 0.5, atol=1e-12)
        npt.assert_allclose(value, gaussian_kl_quadrature(1.0, 0.0), atol=1e-6)

    def test_random_eight_dim_against_per_dimension_quadrature(self):
        rng = np.random.default_rng(5)
        mu = rng.normal(scale=1.5, size=8)
        logvar = rng.uniform(-1.5, 1.5, size=8)
        expected = sum(gaussian_kl_quadrature(m, lv) for m, lv in zip(mu, logvar))
        value = gaussian_kl_to_standard(DiagonalGaussianParams(mu, logvar)).item()
        npt.assert_allclose(value, expected, atol=1e-6)

    def test_nonnegative_with_equality_only_at_prior(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            mu = rng.normal(scale=2.0, size=5)
            logvar = rng.uniform(-3, 3, size=5)
            value = gaussian_kl_to_standard(DiagonalGaussianParams(mu, logvar)).item()
            assert value >= 0.0
            if np.abs(mu).max() > 1e-3 or np.abs(logvar).max() > 1e-3:
                assert value > 0.0

    def test_batched_rows_reduce_over_last_axis(self):
        rng = np.random.default_rng(7)
        mu = rng.normal(size=(3, 4))
        logvar = rng.normal(size=(3, 4))
        batched = gaussian_kl_to_standard(DiagonalGaussianParams(mu, logvar)).data
        for i in range(3):
            row = gaussian_kl_to_standard(
                DiagonalGaussianParams(mu[i], logvar[i])
            ).item()
            npt.assert_allclose(batched[i], row, atol=1e-14)

    def test_differentiable_wrt_both_fields(self):
        rng = np.random.default_rng(8)
        mu = Tensor(rng.normal(size=4), requires_grad=True)
        logvar = Tensor(rng.uniform(-1, 1, size=4), requires_grad=True)
        params = {"mu": mu, "logvar": logvar}

        def loss_fn():
            return gaussian_kl_to_standard(DiagonalGaussianParams(mu, logvar))

        analytic = gradients(loss_fn(), params)
        for name, p in params.items():
            numeric = central_difference(lambda _: loss_fn().item(), p.data)
            npt.assert_allclose(analytic[name], numeric, rtol=1e-6, atol=1e-8)


class TestCategorical:
    def test_kl_uniform_is_zero(self):
        q = CategoricalParams(np.full(10, 0.1))
        npt.assert_allclose(categorical_kl_to_uniform(q).item(), 0.0, atol=1e-12)

    def test_kl_one_hot_is_log_k(self):
        one_hot = np.zeros(10)
        one_hot[3] = 1.0
        value = categorical_kl_to_uniform(CategoricalParams(one_hot)).item()
        npt.assert_allclose(value, np.log(10.0), atol=1e-9)

    def test_kl_random_against_direct_sum(self):
        rng = np.random.default_rng(9)
        probs = rng.dirichlet(np.ones(7))
        value = categorical_kl_to_uniform(CategoricalParams(probs)).item()
        npt.assert_allclose(value, categorical_kl_direct(probs, 7), atol=1e-12)

    def test_entropy_one_hot_is_zero(self):
        one_hot = np.zeros(5)
        one_hot[0] = 1.0
        npt.assert_allclose(
            categorical_entropy(CategoricalParams(one_hot)).item(), 0.0, atol=1e-10
        )

    def test_entropy_uniform_is_log_k(self):
        value = categorical_entropy(CategoricalParams(np.full(10, 0.1))).item()
        npt.assert_allclose(value, np.log(10.0), atol=1e-12)

    def test_entropy_fair_coin(self):
        value = categorical_entropy(CategoricalParams(np.array([0.5, 0.5]))).item()
        npt.assert_allclose(value, np.log(2.0), atol=1e-12)

    def test_kl_entropy_identity_two_code_paths(self):
        rng = np.random.default_rng(10)
        for k in (2, 4, 10):
            rows = random_simplex_rows(rng, 50, k)
            kl = categorical_kl_to_uniform(CategoricalParams(rows)).data
            entropy = categorical_entropy(CategoricalParams(rows)).data
            npt.assert_allclose(kl, np.log(k) - entropy, atol=1e-12)

    def test_entropy_bounds(self):
        rng = np.random.default_rng(11)
        rows = random_simplex_rows(rng, 500, 6)
        entropy = categorical_entropy(CategoricalParams(rows)).data
        assert np.all(entropy >= 0.0)
        assert np.all(entropy <= np.log(6.0) + 1e-12)

    def test_entropy_matches_direct_sum(self):
        rng = np.random.default_rng(12)
        probs = rng.dirichlet(np.ones(9))
        value = categorical_entropy(CategoricalParams(probs)).item()
        npt.assert_allclose(value, entropy_direct(probs), atol=1e-12)

    def test_entropy_gradient_finite_at_saturated_rows(self):
        probs = Tensor(np.array([[1.0, 0.0, 0.0]]), requires_grad=True)
        loss = reduce_sum(categorical_entropy(CategoricalParams(probs)))
        loss.backward()
        assert np.all(np.isfinite(probs.grad))


class TestBernoulliLogLikelihood:
    def test_saturated_correct_prediction(self):
        value = bernoulli_log_likelihood(np.array([1.0]), np.array([30.0])).item()
        npt.assert_allclose(value, 0.0, atol=1e-10)

    def test_symmetric_half_case(self):
        value = bernoulli_log_likelihood(np.array([0.5]), np.array([0.0])).item()
        npt.assert_allclose(value, np.log(0.5), atol=1e-12)

    def test_random_against_naive_sigma_then_log(self):
        rng = np.random.default_rng(13)
        x = rng.uniform(size=20)
        logits = rng.uniform(-5, 5, size=20)
        sigma = 1.0 / (1.0 + np.exp(-logits))
        naive = float(np.sum(x * np.log(sigma) + (1 - x) * np.log(1 - sigma)))
        value = bernoulli_log_likelihood(x, logits).item()
        npt.assert_allclose(value, naive, atol=1e-10)

    def test_rejects_targets_outside_unit_interval(self):
        with pytest.raises(ValueError):
            bernoulli_log_likelihood(np.array([1.2]), np.array([0.0]))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(size=6)
        logits = Tensor(rng.normal(size=6), requires_grad=True)

        def loss_fn():
            return bernoulli_log_likelihood(x, logits)

        analytic = gradients(loss_fn(), {"l": logits})["l"]
        numeric = central_difference(lambda _: loss_fn().item(), logits.data)
        npt.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


class TestGaussianLogLikelihood:
    def test_peak_value(self):
        value = gaussian_log_likelihood(np.zeros(3), np.zeros(3)).item()
        npt.assert_allclose(value, -1.5 * np.log(2 * np.pi), atol=1e-12)

    def test_quadratic_falloff(self):
        value = gaussian_log_likelihood(np.array([2.0]), np.array([0.0])).item()
        npt.assert_allclose(value, -0.5 * (4.0 + np.log(2 * np.pi)), atol=1e-12)


class TestReparameterizedSample:
    def test_zero_noise_returns_mean(self):
        rng = np.random.default_rng(15)
        mu = rng.normal(size=5)
        q = DiagonalGaussianParams(mu, rng.normal(size=5))
        npt.assert_array_equal(reparameterized_sample(q, np.zeros(5)).data, mu)

    def test_standard_params_return_noise(self):
        eps = np.array([0.3, -1.2, 0.0])
        q = DiagonalGaussianParams(np.zeros(3), np.zeros(3))
        npt.assert_array_equal(reparameterized_sample(q, eps).data, eps)

    def test_jacobians_against_finite_differences(self):
        rng = np.random.default_rng(16)
        eps = rng.normal(size=4)
        mu = Tensor(rng.normal(size=4), requires_grad=True)
        logvar = Tensor(rng.uniform(-1, 1, size=4), requires_grad=True)
        weights = rng.normal(size=4)

        def loss_fn():
            z = reparameterized_sample(DiagonalGaussianParams(mu, logvar), eps)
            return reduce_sum(z * Tensor(weights))

        analytic = gradients(loss_fn(), {"mu": mu, "logvar": logvar})
        # dz/dmu is the identity; dz/dlogvar is diag(0.5 * sigma * eps).
        npt.assert_allclose(analytic["mu"], weights, atol=1e-12)
        expected_logvar = weights * 0.5 * np.exp(0.5 * logvar.data) * eps
        npt.assert_allclose(analytic["logvar"], expected_logvar, atol=1e-12)
        for name, p in (("mu", mu), ("logvar", logvar)):
            numeric = central_difference(lambda _: loss_fn().item(), p.data)
            npt.assert_allclose(analytic[name], numeric, rtol=1e-6, atol=1e-6)

    def test_no_gradient_flows_to_noise(self):
        eps = Tensor(np.ones(3))
        q = DiagonalGaussianParams(
            Tensor(np.zeros(3), requires_grad=True),
            Tensor(np.zeros(3), requires_grad=True),
        )
        reduce_sum(reparameterized_sample(q, eps.data)).backward()
        assert eps.grad is None

    def test_sample_mean_approaches_mu(self):
        rng = np.random.default_rng(17)
        mu = np.array([0.7, -1.3])
        logvar = np.array([0.2, -0.4])
        noise = rng.standard_normal((100_000, 2))
        q = DiagonalGaussianParams(mu, logvar)
        samples = reparameterized_sample(q, noise).data
        stderr = np.exp(0.5 * logvar) / np.sqrt(noise.shape[0])
        assert np.all(np.abs(samples.mean(axis=0) - mu) < 4 * stderr)
