"""Semi-supervised VAE with mutual-information and entropy regularization.

The package pairs a trainable model (classifier, encoder, decoder networks
over a shared autodiff substrate) with exact finite-model oracles that check
every bound decomposition identity the training objectives rely on.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, AdamState, adam_step, gradients, no_grad  # noqa: F401
from .data import (  # noqa: F401
    Dataset,
    SemiSupervisedSplit,
    generate_gaussian_mixture,
    load_csv,
    load_idx,
    make_batches,
    save_csv,
    split_labeled,
    write_idx,
)
from .distributions import (  # noqa: F401
    CategoricalParams,
    DiagonalGaussianParams,
    bernoulli_log_likelihood,
    categorical_entropy,
    categorical_kl_to_uniform,
    gaussian_kl_to_standard,
    reparameterized_sample,
)
from .model import (  # noqa: F401
    M2Parameters,
    ModelConfig,
    classify,
    decode,
    encode,
    init_parameters,
    load_checkpoint,
    one_hot,
    save_checkpoint,
)
from .objectives import (  # noqa: F401
    ObjectiveBreakdown,
    ObjectiveConfig,
    default_alpha,
    kl_mi_lower_bound_check,
    labeled_elbo,
    mi_estimate,
    mier_objective,
    total_objective_j2,
    unlabeled_elbo_entropy_form,
    unlabeled_elbo_kl_form,
)
from .oracle import (  # noqa: F401
    DiscreteWorld,
    exact_identity_suite,
    exact_log_marginal,
    exact_unlabeled_elbo,
    random_world,
    true_posterior_world,
)
from .training import (  # noqa: F401
    MetricsRecord,
    TrainConfig,
    evaluate,
    generate_samples,
    train,
    warmup_weight,
)
