"""Closed-form densities, entropies, KL divergences, and reparameterized sampling.

Diagonal Gaussians are parameterized by (mu, logvar); categoricals by a
probability vector. All operations accept batches (leading dimensions) and
reduce over the final axis, returning graph-attached tensors so gradients
flow to the parameters. The latent prior is the standard normal and the
class prior is uniform; neither is configurable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    clip,
    exp,
    log,
    multiply,
    reduce_sum,
    softplus,
)

# Probabilities are clamped to this floor inside logarithms so saturated
# softmax outputs cannot produce NaN gradients.
PROB_FLOOR = 1e-12


def _coerce(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class DiagonalGaussianParams:
    """Mean and log-variance of a factorized Gaussian, one row per example."""

    mu: Tensor
    logvar: Tensor

    def __post_init__(self):
        self.mu = _coerce(self.mu)
        self.logvar = _coerce(self.logvar)
        if self.mu.shape != self.logvar.shape:
            raise ValueError(
                f"mu and logvar shapes differ: {self.mu.shape} vs {self.logvar.shape}"
            )


@dataclass
class CategoricalParams:
    """A probability vector (or batch of row vectors) over K classes."""

    probs: Tensor

    def __post_init__(self):
        self.probs = _coerce(self.probs)

    @property
    def num_classes(self) -> int:
        return self.probs.shape[-1]


def gaussian_kl_to_standard(q: DiagonalGaussianParams) -> Tensor:
    """KL(N(mu, diag exp(logvar)) || N(0, I)), summed over the last axis.

    Equals 0.5 * sum(mu^2 + exp(logvar) - logvar - 1); zero exactly when the
    posterior matches the prior.
    """
    mu, logvar = q.mu, q.logvar
    inner = multiply(mu, mu) + exp(logvar) - logvar - 1.0
    return multiply(reduce_sum(inner, axis=-1), 0.5)


def _entropy_rows(probs: Tensor) -> Tensor:
    return -reduce_sum(multiply(probs, log(clip(probs, PROB_FLOOR, 1.0))), axis=-1)


def categorical_entropy(q: CategoricalParams | Tensor) -> Tensor:
    """Shannon entropy in nats, one value per row; lies in [0, log K]."""
    probs = q.probs if isinstance(q, CategoricalParams) else _coerce(q)
    return _entropy_rows(probs)


def categorical_kl_to_uniform(q: CategoricalParams | Tensor) -> Tensor:
    """KL(q || uniform over K classes), one value per row.

    Computed as sum q_i log(q_i * K) rather than log K - H(q), so the two
    quantities act as independent code paths for the identity
    KL-to-uniform = log K - entropy.
    """
    probs = q.probs if isinstance(q, CategoricalParams) else _coerce(q)
    k = probs.shape[-1]
    scaled = multiply(clip(probs, PROB_FLOOR, 1.0), float(k))
    return reduce_sum(multiply(probs, log(scaled)), axis=-1)


def bernoulli_log_likelihood(x, logits) -> Tensor:
    """sum_i [x_i log sigma(l_i) + (1 - x_i) log(1 - sigma(l_i))] per row.

    Evaluated in logit space via softplus, which stays finite for saturated
    logits. ``x`` must lie in [0, 1] (intensities, not only hard binaries).
    """
    x = _coerce(x)
    logits = _coerce(logits)
    if np.any(x.data < 0.0) or np.any(x.data > 1.0):
        raise ValueError(
            f"bernoulli targets must lie in [0, 1], got range "
            f"[{x.data.min()}, {x.data.max()}]"
        )
    # log sigma(l) = -softplus(-l); log(1 - sigma(l)) = -softplus(l)
    per_element = multiply(x, softplus(-logits)) + multiply(1.0 - x, softplus(logits))
    return -reduce_sum(per_element, axis=-1)


def gaussian_log_likelihood(x, mean) -> Tensor:
    """log N(x; mean, I) summed over the last axis (unit-variance decoder)."""
    x = _coerce(x)
    mean = _coerce(mean)
    diff = x - mean
    inner = multiply(diff, diff) + float(np.log(2.0 * np.pi))
    return multiply(reduce_sum(inner, axis=-1), -0.5)


def reparameterized_sample(q: DiagonalGaussianParams, noise) -> Tensor:
    """z = mu + exp(logvar / 2) * noise, with gradients to mu and logvar only.

    ``noise`` is a fixed standard-normal draw and may carry extra leading
    axes (e.g. a sample axis) that broadcast against the parameter rows.
    """
    noise = np.asarray(noise, dtype=np.float64)
    sigma = exp(multiply(q.logvar, 0.5))
    return q.mu + multiply(sigma, Tensor(noise))
