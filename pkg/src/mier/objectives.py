"""Training objectives: labeled and unlabeled variational bounds, the batch
mutual-information estimate, and their regularized combinations.

Conventions shared by every function here:

- Per-example quantities are row vectors; batch objectives are per-example
  means, so hyperparameters do not depend on batch size.
- Expectations over the class label are exact enumerations over all K
  classes weighted by the classifier output; the label is never sampled.
- Expectations over the latent code are reparameterized Monte-Carlo with
  caller-supplied standard-normal noise, one (or more) draws per class per
  example, so two bound formulations can be compared on identical noise.
- ``kl_weight`` (the warm-up multiplier) scales only the KL-to-prior terms,
  never the reconstruction or the regularizers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, clip, log, multiply, reduce_mean, reduce_sum, reshape
from .distributions import (
    CategoricalParams,
    PROB_FLOOR,
    bernoulli_log_likelihood,
    categorical_entropy,
    categorical_kl_to_uniform,
    gaussian_kl_to_standard,
    gaussian_log_likelihood,
    reparameterized_sample,
)
from .model import M2Parameters, classify, decode, encode, one_hot


@dataclass
class ObjectiveConfig:
    """Coefficients of the combined objective.

    alpha weighs the supervised classification term, beta the classifier
    entropy penalty, gamma the mutual-information bonus. ``kl_weight`` is the
    warm-up multiplier supplied by the training loop.
    """

    alpha: float = 1.0
    beta: float = 5.0
    gamma: float = 1.0
    z_samples_per_class: int = 1
    kl_weight: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("alpha, beta, and gamma must be nonnegative")
        if self.z_samples_per_class < 1:
            raise ValueError("z_samples_per_class must be >= 1")
        if not 0.0 <= self.kl_weight <= 1.0:
            raise ValueError("kl_weight must lie in [0, 1]")


@dataclass
class ObjectiveBreakdown:
    """Scalar summary of one objective evaluation.

    The unlabeled-batch decomposition (reconstruction, KL terms, entropies,
    mutual information) is reported unweighted, i.e. as the pure bound terms
    before warm-up scaling; ``total`` is the actual objective value including
    warm-up and regularizer coefficients.
    """

    reconstruction: float = 0.0
    kl_y: float = 0.0
    kl_z: float = 0.0
    classifier_entropy_mean: float = 0.0
    marginal_entropy: float = 0.0
    mi_estimate: float = 0.0
    labeled_elbo: float = 0.0
    unlabeled_elbo: float = 0.0
    total: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "reconstruction": self.reconstruction,
            "kl_y": self.kl_y,
            "kl_z": self.kl_z,
            "classifier_entropy_mean": self.classifier_entropy_mean,
            "marginal_entropy": self.marginal_entropy,
            "mi_estimate": self.mi_estimate,
            "labeled_elbo": self.labeled_elbo,
            "unlabeled_elbo": self.unlabeled_elbo,
            "total": self.total,
        }


def draw_labeled_noise(rng, batch: int, latent: int, num_samples: int = 1):
    return rng.standard_normal((num_samples, batch, latent))


def draw_unlabeled_noise(rng, num_classes: int, batch: int, latent: int,
                         num_samples: int = 1):
    return rng.standard_normal((num_classes, num_samples, batch, latent))


def _normalize_labeled_noise(noise, batch: int, latent: int) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim == 2:
        noise = noise[None, :, :]
    if noise.shape[1:] != (batch, latent):
        raise ValueError(
            f"labeled noise must have shape (S, {batch}, {latent}), got {noise.shape}"
        )
    return noise


def _normalize_unlabeled_noise(noise, num_classes: int, batch: int,
                               latent: int) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim == 3:
        noise = noise[:, None, :, :]
    if noise.shape[0] != num_classes or noise.shape[2:] != (batch, latent):
        raise ValueError(
            f"unlabeled noise must have shape ({num_classes}, S, {batch}, "
            f"{latent}), got {noise.shape}"
        )
    return noise


def _reconstruction_ll(params: M2Parameters, x_tiled, outputs) -> Tensor:
    if params.config.likelihood == "gaussian":
        return gaussian_log_likelihood(x_tiled, outputs)
    return bernoulli_log_likelihood(x_tiled, outputs)


def _mc_reconstruction(params: M2Parameters, x: np.ndarray, y_onehot: np.ndarray,
                       q, noise: np.ndarray) -> Tensor:
    """Monte-Carlo reconstruction term, averaged over the sample axis."""
    num_samples, batch, latent = noise.shape
    z = reparameterized_sample(q, noise)  # (S, B, L) via broadcasting
    z_flat = reshape(z, (num_samples * batch, latent))
    y_tiled = np.tile(y_onehot, (num_samples, 1))
    x_tiled = np.tile(x, (num_samples, 1))
    ll = _reconstruction_ll(params, x_tiled, decode(params, z_flat, y_tiled))
    return reduce_mean(reshape(ll, (num_samples, batch)), axis=0)


def _labeled_parts(params: M2Parameters, x, y_onehot, noise):
    """Per-example reconstruction and latent KL for an observed-label batch."""
    x = np.asarray(x, dtype=np.float64)
    y_onehot = np.asarray(y_onehot, dtype=np.float64)
    k = params.config.num_classes
    if y_onehot.ndim != 2 or y_onehot.shape[1] != k or np.any(
        np.abs(y_onehot.sum(axis=1) - 1.0) > 1e-9
    ) or np.any((y_onehot != 0.0) & (y_onehot != 1.0)):
        raise ValueError("labels must be one-hot rows, one per example")
    noise = _normalize_labeled_noise(noise, x.shape[0], params.config.latent_dim)
    q = encode(params, x, y_onehot)
    recon = _mc_reconstruction(params, x, y_onehot, q, noise)
    kl_z = gaussian_kl_to_standard(q)
    return recon, kl_z


def labeled_elbo(params: M2Parameters, x, y_onehot, noise,
                 kl_weight: float = 1.0) -> Tensor:
    """Per-example lower bound on log p(x, y) for observed labels.

    Single-sample (or multi-sample) Monte-Carlo over the latent code:
    reconstruction + log(1/K) - kl_weight * KL(q(z|x,y) || N(0, I)). The
    constant log prior over labels is kept so reported values match the
    bound.
    """
    recon, kl_z = _labeled_parts(params, x, y_onehot, noise)
    log_py = -float(np.log(params.config.num_classes))
    return recon + log_py - multiply(kl_z, kl_weight)


class _UnlabeledParts:
    """Shared per-class pieces of the unlabeled bound for one batch."""

    def __init__(self, params: M2Parameters, x, noise):
        x = np.asarray(x, dtype=np.float64)
        k = params.config.num_classes
        noise = _normalize_unlabeled_noise(
            noise, k, x.shape[0], params.config.latent_dim
        )
        self.num_classes = k
        self.categorical = classify(params, x)
        self.probs = self.categorical.probs  # (B, K)
        self.recon_per_class: list[Tensor] = []
        self.kl_z_per_class: list[Tensor] = []
        for label in range(k):
            y = one_hot(np.full(x.shape[0], label), k)
            q = encode(params, x, y)
            self.recon_per_class.append(
                _mc_reconstruction(params, x, y, q, noise[label])
            )
            self.kl_z_per_class.append(gaussian_kl_to_standard(q))

    def class_weight(self, label: int) -> Tensor:
        return self.probs[:, label]

    def expected_over_classes(self, rows: list[Tensor]) -> Tensor:
        total = multiply(self.class_weight(0), rows[0])
        for label in range(1, self.num_classes):
            total = total + multiply(self.class_weight(label), rows[label])
        return total


def unlabeled_elbo_kl_form(params: M2Parameters, x, noise) -> Tensor:
    """Per-example unlabeled bound as reconstruction minus two KL terms.

    E_q(y,z|x)[log p(x|z,y)] - KL(q(y|x) || uniform)
    - E_q(y|x)[KL(q(z|x,y) || N(0, I))], with the label expectation
    enumerated exactly.
    """
    parts = _UnlabeledParts(params, x, noise)
    recon = parts.expected_over_classes(parts.recon_per_class)
    kl_y = categorical_kl_to_uniform(parts.categorical)
    kl_z = parts.expected_over_classes(parts.kl_z_per_class)
    return recon - kl_y - kl_z


def unlabeled_elbo_entropy_form(params: M2Parameters, x, noise) -> Tensor:
    """Per-example unlabeled bound as E_q(y|x)[labeled bound] + entropy.

    Algebraically identical to the KL form when evaluated on the same
    per-class noise; the two implementations exist to cross-check each
    other.
    """
    parts = _UnlabeledParts(params, x, noise)
    log_py = -float(np.log(parts.num_classes))
    per_class = [
        parts.recon_per_class[label] + log_py - parts.kl_z_per_class[label]
        for label in range(parts.num_classes)
    ]
    expected_labeled = parts.expected_over_classes(per_class)
    return expected_labeled + categorical_entropy(parts.categorical)


def mi_estimate(probs) -> Tensor:
    """Batch estimate of the label-input mutual information.

    H(mean over rows) - mean over rows of H(row); gradients flow through
    both the marginal and the conditional entropies. Nonnegative and at most
    log K for valid rows.
    """
    probs = probs.probs if isinstance(probs, CategoricalParams) else probs
    probs = probs if isinstance(probs, Tensor) else Tensor(probs)
    marginal = reduce_mean(probs, axis=0)
    return categorical_entropy(marginal) - reduce_mean(categorical_entropy(probs))


def _entropy_np(rows: np.ndarray) -> np.ndarray:
    clipped = np.maximum(rows, PROB_FLOOR)
    return -(rows * np.log(clipped)).sum(axis=-1)


def _mean(rows: Tensor) -> Tensor:
    return reduce_mean(rows)


def _assemble_unlabeled(params: M2Parameters, x, config: ObjectiveConfig, noise):
    """Regularized unlabeled objective plus breakdown fields for one batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError(
            "the mutual-information estimate needs a batch of at least 2 "
            f"unlabeled examples, got {x.shape[0]}"
        )
    parts = _UnlabeledParts(params, x, noise)
    recon = parts.expected_over_classes(parts.recon_per_class)
    kl_y = categorical_kl_to_uniform(parts.categorical)
    kl_z = parts.expected_over_classes(parts.kl_z_per_class)
    w = config.kl_weight
    u_weighted = recon - multiply(kl_y, w) - multiply(kl_z, w)
    total = _mean(u_weighted)
    if config.gamma != 0.0:
        total = total + multiply(mi_estimate(parts.probs), config.gamma)
    if config.beta != 0.0:
        total = total - multiply(
            _mean(categorical_entropy(parts.categorical)), config.beta
        )

    probs = parts.probs.data
    entropy_mean = float(_entropy_np(probs).mean())
    marginal_entropy = float(_entropy_np(probs.mean(axis=0)))
    breakdown = ObjectiveBreakdown(
        reconstruction=float(recon.data.mean()),
        kl_y=float(kl_y.data.mean()),
        kl_z=float(kl_z.data.mean()),
        classifier_entropy_mean=entropy_mean,
        marginal_entropy=marginal_entropy,
        mi_estimate=marginal_entropy - entropy_mean,
        unlabeled_elbo=float(
            (recon.data - kl_y.data - kl_z.data).mean()
        ),
        total=float(total.data),
    )
    return total, breakdown


def mier_objective(params: M2Parameters, x, config: ObjectiveConfig,
                   noise) -> tuple[Tensor, ObjectiveBreakdown]:
    """Mean unlabeled bound plus the two regularizers over one batch.

    mean U(x) + gamma * mutual information - beta * mean classifier entropy.
    Batches of fewer than two examples are rejected because the
    mutual-information estimator is undefined on a single sample.
    """
    return _assemble_unlabeled(params, x, config, noise)


def total_objective_j2(
    params: M2Parameters,
    labeled: tuple | None,
    unlabeled,
    config: ObjectiveConfig,
    labeled_noise=None,
    unlabeled_noise=None,
) -> tuple[Tensor, ObjectiveBreakdown]:
    """The full training objective over one labeled/unlabeled batch pair.

    mean labeled bound + mean regularized unlabeled objective
    + alpha * mean log q(true label | x). With beta = gamma = 0 this reduces
    exactly to the unregularized semi-supervised objective: the regularizer
    terms are skipped, not multiplied by zero, so the reduction is
    bit-for-bit. ``labeled`` is an (inputs, one-hot labels) pair or None.
    """
    x_l = None if labeled is None else np.asarray(labeled[0], dtype=np.float64)
    has_labeled = x_l is not None and x_l.shape[0] > 0
    if not has_labeled and config.alpha > 0.0:
        raise ValueError(
            "an empty labeled batch is only allowed when alpha == 0"
        )

    total, breakdown = _assemble_unlabeled(params, unlabeled, config,
                                           unlabeled_noise)
    if has_labeled:
        y_l = np.asarray(labeled[1], dtype=np.float64)
        recon_l, kl_z_l = _labeled_parts(params, x_l, y_l, labeled_noise)
        log_py = -float(np.log(params.config.num_classes))
        l_weighted = recon_l + log_py - multiply(kl_z_l, config.kl_weight)
        total = _mean(l_weighted) + total
        if config.alpha != 0.0:
            probs_l = classify(params, x_l).probs
            picked = reduce_sum(multiply(probs_l, Tensor(y_l)), axis=-1)
            log_q = _mean(log(clip(picked, PROB_FLOOR, 1.0)))
            total = total + multiply(log_q, config.alpha)
        breakdown.labeled_elbo = float(
            (recon_l.data + log_py - kl_z_l.data).mean()
        )
    breakdown.total = float(total.data)
    return total, breakdown


def kl_mi_lower_bound_check(rows: np.ndarray) -> tuple[float, float, float]:
    """Decompose the mean row KL-to-uniform over an empirical batch.

    Returns (mean KL(q(y|x) || uniform), mutual information by direct joint
    sum, KL(marginal || uniform)). The first equals the sum of the other two
    up to float rounding, and is therefore never below the mutual
    information.
    """
    rows = np.asarray(rows, dtype=np.float64)
    b, k = rows.shape
    marginal = rows.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = float(
            np.where(rows > 0, rows * np.log(rows * k), 0.0).sum() / b
        )
        mi = float(
            np.where(rows > 0, rows * np.log(rows / marginal), 0.0).sum() / b
        )
        kl_marginal = float(
            np.where(marginal > 0, marginal * np.log(marginal * k), 0.0).sum()
        )
    return lhs, mi, kl_marginal


def default_alpha(total_examples: int, labeled_examples: int,
                  scale: float = 0.1) -> float:
    """Conventional supervised-term weight: scale * total / labeled."""
    if labeled_examples <= 0:
        return 0.0
    return scale * total_examples / labeled_examples


def run_objective_identity_trials(batch_trials: int, form_trials: int,
                                  seed: int):
    """Random sweeps of the statements that live on the objectives path.

    - the empirical batch version of the KL decomposition identity, checked
      through ``kl_mi_lower_bound_check``;
    - equivalence of the two unlabeled-bound formulations on shared noise,
      using freshly perturbed small models.
    """
    from .model import ModelConfig, init_parameters
    from .oracle import TrialSummary

    rng = np.random.default_rng([seed, 23])
    worst_batch = 0.0
    for _ in range(batch_trials):
        b = int(rng.integers(2, 64))
        k = int(rng.integers(2, 12))
        rows = rng.dirichlet(np.full(k, rng.uniform(0.3, 2.0)), size=b)
        lhs, mi, kl_marginal = kl_mi_lower_bound_check(rows)
        worst_batch = max(worst_batch, abs(lhs - mi - kl_marginal))

    config = ModelConfig(input_dim=6, num_classes=3, latent_dim=4,
                         hidden_dims=(8,), classifier_hidden=8)
    worst_form = 0.0
    from .autodiff import no_grad
    with no_grad():
        for trial in range(form_trials):
            params = init_parameters(config, seed + trial)
            for t in params.tensors.values():
                t.data += rng.normal(scale=0.1, size=t.data.shape)
            x = rng.uniform(size=(3, config.input_dim))
            noise = draw_unlabeled_noise(rng, config.num_classes, 3,
                                         config.latent_dim, 2)
            a = unlabeled_elbo_kl_form(params, x, noise).data
            b = unlabeled_elbo_entropy_form(params, x, noise).data
            worst_form = max(worst_form, float(np.abs(a - b).max()))

    return [
        TrialSummary("batch-kl-splits-into-mi-plus-marginal-kl",
                     batch_trials, worst_batch),
        TrialSummary("unlabeled-bound-form-equivalence", form_trials,
                     worst_form),
    ]
