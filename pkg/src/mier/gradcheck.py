"""Finite-difference verification of every gradient path the objectives use.

Central differences (h = 1e-5, double precision) against the reverse-mode
gradients, with a per-coordinate relative error that falls back to an
absolute scale for near-zero coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .autodiff import Tensor, gradients
from .model import ModelConfig, init_parameters, one_hot
from .objectives import (
    ObjectiveConfig,
    draw_labeled_noise,
    draw_unlabeled_noise,
    total_objective_j2,
)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4


def finite_difference_gradient(f: Callable[[], float], param: Tensor,
                               h: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function w.r.t. one parameter.

    ``f`` must re-evaluate from the parameter's current ``.data``, which is
    perturbed in place one coordinate at a time and restored afterwards.
    """
    grad = np.zeros_like(param.data)
    flat = param.data.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        f_plus = f()
        flat[i] = original - h
        f_minus = f()
        flat[i] = original
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
    return float((np.abs(analytic - numeric) / denom).max())


def check_gradients(loss_fn: Callable[[], Tensor],
                    params: Mapping[str, Tensor],
                    h: float = DEFAULT_STEP) -> dict[str, float]:
    """Per-parameter max relative error between backward and differencing."""
    analytic = gradients(loss_fn(), dict(params))
    report = {}
    for name, p in params.items():
        numeric = finite_difference_gradient(lambda: loss_fn().item(), p, h=h)
        report[name] = max_relative_error(analytic[name], numeric)
    return report


@dataclass
class GradcheckSuite:
    name: str
    max_error: float
    coordinates: int

    def passes(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_error < tolerance


def _toy_model_config() -> ModelConfig:
    return ModelConfig(input_dim=6, num_classes=3, latent_dim=4,
                       hidden_dims=(8,), classifier_hidden=8)


def objective_gradcheck(seed: int, beta: float = 5.0, gamma: float = 1.0,
                        alpha: float = 1.5, kl_weight: float = 1.0) -> GradcheckSuite:
    """Full-objective gradient check on a small model at one seed."""
    config = _toy_model_config()
    params = init_parameters(config, seed)
    rng = np.random.default_rng(seed)
    x_l = rng.uniform(size=(2, config.input_dim))
    y_l = one_hot(rng.integers(0, config.num_classes, size=2),
                  config.num_classes)
    x_u = rng.uniform(size=(4, config.input_dim))
    noise_l = draw_labeled_noise(rng, 2, config.latent_dim)
    noise_u = draw_unlabeled_noise(rng, config.num_classes, 4,
                                   config.latent_dim)
    objective = ObjectiveConfig(alpha=alpha, beta=beta, gamma=gamma,
                                kl_weight=kl_weight)

    def loss_fn():
        value, _ = total_objective_j2(params, (x_l, y_l), x_u, objective,
                                      noise_l, noise_u)
        return value

    report = check_gradients(loss_fn, params.tensors)
    return GradcheckSuite(
        name=f"combined-objective-seed{seed}",
        max_error=max(report.values()),
        coordinates=sum(t.data.size for t in params.tensors.values()),
    )


def distribution_gradcheck(seed: int) -> GradcheckSuite:
    """Distribution primitives: Gaussian KL, entropy, reconstruction terms."""
    from .autodiff import reduce_mean, softmax_rows
    from .distributions import (
        DiagonalGaussianParams,
        bernoulli_log_likelihood,
        categorical_entropy,
        categorical_kl_to_uniform,
        gaussian_kl_to_standard,
        reparameterized_sample,
    )

    rng = np.random.default_rng(seed)
    mu = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    logvar = Tensor(rng.uniform(-1, 1, size=(3, 4)), requires_grad=True)
    logits = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    recon_logits = Tensor(rng.normal(size=(3, 6)), requires_grad=True)
    x = rng.uniform(size=(3, 6))
    eps = rng.standard_normal((3, 4))
    weights = rng.normal(size=(3, 4))
    params = {"mu": mu, "logvar": logvar, "logits": logits,
              "recon": recon_logits}

    def loss_fn():
        q = DiagonalGaussianParams(mu, logvar)
        probs = softmax_rows(logits)
        z = reparameterized_sample(q, eps)
        return (
            reduce_mean(gaussian_kl_to_standard(q))
            + reduce_mean(categorical_entropy(probs))
            + reduce_mean(categorical_kl_to_uniform(probs))
            + reduce_mean(bernoulli_log_likelihood(x, recon_logits))
            + reduce_mean(z * Tensor(weights))
        )

    report = check_gradients(loss_fn, params)
    return GradcheckSuite(
        name=f"distribution-primitives-seed{seed}",
        max_error=max(report.values()),
        coordinates=sum(t.data.size for t in params.values()),
    )


def run_gradcheck(seed: int, seeds: int = 1) -> list[GradcheckSuite]:
    """The suites behind the gradcheck command: one entry per seed per suite."""
    suites = []
    for offset in range(seeds):
        suites.append(objective_gradcheck(seed + offset))
        suites.append(distribution_gradcheck(seed + offset))
    return suites
