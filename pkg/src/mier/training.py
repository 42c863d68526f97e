"""The optimization loop: epoch scheduling, warm-up, learning-rate decay,
checkpointing, metrics, and sample generation.

Determinism contract: with a fixed (model config, train config, data, seed)
the entire run, including every metrics row, is reproducible bit for bit in
single-threaded mode. All randomness is derived from the configured seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import AdamState, adam_step, gradients, negate, no_grad
from .data import Dataset, SemiSupervisedSplit, make_batches
from .model import (
    M2Parameters,
    ModelConfig,
    classify,
    decode,
    init_parameters,
    one_hot,
    save_checkpoint,
)
from .objectives import (
    ObjectiveBreakdown,
    ObjectiveConfig,
    draw_labeled_noise,
    draw_unlabeled_noise,
    mi_estimate,
    total_objective_j2,
    unlabeled_elbo_kl_form,
)

METRICS_FIELDS = (
    "epoch",
    "test_accuracy",
    "mean_classifier_entropy",
    "elbo_bound",
    "mi_estimate",
    "objective_value",
    "lr",
    "kl_weight",
)

# Sub-stream tags so every consumer of randomness gets its own stream.
_VALIDATION_TAG = 101
_NOISE_TAG = 7
_EVAL_TAG = 13


class NonFiniteLossError(RuntimeError):
    """The objective or its gradients left the finite range; training aborts."""

    def __init__(self, epoch: int, step: int, breakdown: ObjectiveBreakdown):
        super().__init__(
            f"non-finite loss at epoch {epoch}, step {step}: "
            + json.dumps(breakdown.to_json_dict())
        )
        self.breakdown = breakdown


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 200
    lr: float = 3e-4
    lr_halving_period: int = 150
    warmup_epochs: int | None = None  # None resolves to epochs // 5
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    seed: int = 0
    checkpoint_every: int = 0
    mier_enabled: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs must be >= 0, batch_size >= 1, lr > 0")
        if self.lr_halving_period < 1:
            raise ValueError("lr_halving_period must be >= 1")
        if self.warmup_epochs is not None and not (
            0 <= self.warmup_epochs <= self.epochs
        ):
            raise ValueError("warmup_epochs must lie in [0, epochs]")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    @property
    def resolved_warmup_epochs(self) -> int:
        return self.epochs // 5 if self.warmup_epochs is None else self.warmup_epochs

    def to_json_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "lr_halving_period": self.lr_halving_period,
            "warmup_epochs": self.warmup_epochs,
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "mier_enabled": self.mier_enabled,
        }


@dataclass
class MetricsRecord:
    epoch: int
    test_accuracy: float
    mean_classifier_entropy: float
    elbo_bound: float
    mi_estimate: float
    objective_value: float
    lr: float
    kl_weight: float

    def to_json_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRICS_FIELDS}


def warmup_weight(epoch: int, warmup_epochs: int) -> float:
    """Linear KL warm-up ramp: 0 at epoch 0, 1 from ``warmup_epochs`` on."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if warmup_epochs <= 0:
        return 1.0
    return min(1.0, epoch / warmup_epochs)


def learning_rate_at(base_lr: float, epoch: int, halving_period: int) -> float:
    return base_lr * 0.5 ** (epoch // halving_period)


def load_run_config(path) -> tuple[ModelConfig, ObjectiveConfig, TrainConfig]:
    """One JSON document with "model", "objective", and "train" sections."""
    doc = json.loads(Path(path).read_text())
    model = ModelConfig.from_json_dict(doc["model"])
    objective = ObjectiveConfig(**doc.get("objective", {}))
    train_section = dict(doc.get("train", {}))
    train = TrainConfig(objective=objective, **train_section)
    return model, objective, train


def classification_accuracy(params: M2Parameters, dataset: Dataset,
                            chunk: int = 512) -> float:
    """Fraction of argmax-correct predictions; argmax ties break low."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    hits = 0
    with no_grad():
        for start in range(0, len(dataset), chunk):
            x = dataset.inputs[start:start + chunk]
            probs = classify(params, x).probs.data
            hits += int(
                (probs.argmax(axis=1) == dataset.labels[start:start + chunk]).sum()
            )
    return hits / len(dataset)


def evaluate(params: M2Parameters, dataset: Dataset, eval_z_samples: int = 100,
             seed: int = 0, chunk: int = 256) -> MetricsRecord:
    """Test-set metrics: accuracy, mean classifier entropy, the per-example
    unlabeled bound (``eval_z_samples`` latent draws per class), and the
    batch mutual-information estimate.

    Loop-owned fields (epoch, objective_value, lr, kl_weight) are filled
    with neutral defaults when called standalone.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    rng = np.random.default_rng([seed, _EVAL_TAG])
    k = params.config.num_classes
    latent = params.config.latent_dim
    all_probs = []
    bound_total = 0.0
    hits = 0
    with no_grad():
        for start in range(0, len(dataset), chunk):
            x = dataset.inputs[start:start + chunk]
            labels = dataset.labels[start:start + chunk]
            probs = classify(params, x).probs.data
            all_probs.append(probs)
            hits += int((probs.argmax(axis=1) == labels).sum())
            noise = draw_unlabeled_noise(rng, k, x.shape[0], latent,
                                         eval_z_samples)
            bound_total += float(unlabeled_elbo_kl_form(params, x, noise)
                                 .data.sum())
        probs = np.vstack(all_probs)
        entropy_mean = float(
            _entropy_rows_np(probs).mean()
        )
        mi_value = mi_estimate(probs).item() if len(dataset) > 1 else 0.0
    return MetricsRecord(
        epoch=0,
        test_accuracy=hits / len(dataset),
        mean_classifier_entropy=entropy_mean,
        elbo_bound=bound_total / len(dataset),
        mi_estimate=mi_value,
        objective_value=0.0,
        lr=0.0,
        kl_weight=1.0,
    )


def _entropy_rows_np(rows: np.ndarray) -> np.ndarray:
    clipped = np.maximum(rows, 1e-12)
    return -(rows * np.log(clipped)).sum(axis=-1)


@dataclass
class TrainResult:
    params: M2Parameters
    best_params: M2Parameters
    best_epoch: int
    best_val_accuracy: float
    history: list[MetricsRecord]
    summary: dict


def _carve_validation(split: SemiSupervisedSplit, seed: int,
                      fraction: float = 0.1):
    """Hold out a slice of the unlabeled pool (labels retained) for model
    selection; the rest keeps training."""
    pool = split.unlabeled
    count = int(len(pool) * fraction)
    if count == 0:
        return split, None
    rng = np.random.default_rng([seed, _VALIDATION_TAG])
    order = rng.permutation(len(pool))
    validation = pool.subset(order[:count])
    remainder = pool.subset(order[count:])
    return (
        SemiSupervisedSplit(split.labeled, remainder, split.per_class),
        validation,
    )


def train(
    model_config: ModelConfig,
    config: TrainConfig,
    split: SemiSupervisedSplit,
    test_dataset: Dataset | None = None,
    out_dir=None,
    initial: M2Parameters | None = None,
    final_eval_z_samples: int = 100,
) -> TrainResult:
    """Run the full optimization loop and return the best checkpoint.

    Per epoch: iterate labeled/unlabeled batch pairs, take one Adam step on
    the negated objective per pair, then record metrics. Metrics rows are
    computed on ``test_dataset`` when given, otherwise on the held-out
    validation slice. The parameters with the best validation accuracy are
    retained as the result's ``best_params``.
    """
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    if config.checkpoint_every > 0 and out_dir is None:
        raise ValueError("checkpoint_every > 0 requires an output directory")

    training_split, validation = _carve_validation(split, config.seed)
    if len(training_split.unlabeled) < 2:
        raise ValueError(
            "training requires at least 2 unlabeled examples after the "
            "validation carve-out"
        )
    params = initial.copy() if initial is not None else init_parameters(
        model_config, config.seed
    )
    state = AdamState(lr=config.lr)
    base_objective = config.objective
    if not config.mier_enabled:
        base_objective = replace(base_objective, beta=0.0, gamma=0.0)

    eval_set = test_dataset if test_dataset is not None else (
        validation if validation is not None else split.labeled
    )
    latent = model_config.latent_dim
    k = model_config.num_classes
    samples = base_objective.z_samples_per_class

    history: list[MetricsRecord] = []
    best_params = params.copy()
    best_epoch = -1
    best_val_accuracy = -1.0

    for epoch in range(config.epochs):
        state.lr = learning_rate_at(config.lr, epoch, config.lr_halving_period)
        kl_weight = warmup_weight(epoch, config.resolved_warmup_epochs)
        epoch_objective = replace(base_objective, kl_weight=kl_weight)

        pairs = make_training_pairs(training_split, config.batch_size,
                                    config.seed, epoch)
        objective_values = []
        for step, (labeled_batch, unlabeled_batch) in enumerate(pairs):
            noise_rng = np.random.default_rng(
                [config.seed, epoch, step, _NOISE_TAG]
            )
            noise_l = draw_labeled_noise(
                noise_rng, len(labeled_batch), latent, samples
            )
            noise_u = draw_unlabeled_noise(
                noise_rng, k, len(unlabeled_batch), latent, samples
            )
            objective, breakdown = total_objective_j2(
                params,
                (labeled_batch.inputs, one_hot(labeled_batch.labels, k)),
                unlabeled_batch.inputs,
                epoch_objective,
                noise_l,
                noise_u,
            )
            if not np.isfinite(objective.data):
                raise NonFiniteLossError(epoch, step, breakdown)
            grads = gradients(negate(objective), params.tensors)
            if any(not np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLossError(epoch, step, breakdown)
            adam_step(params.tensors, grads, state)
            objective_values.append(breakdown.total)

        record = evaluate(params, eval_set, eval_z_samples=1, seed=config.seed)
        record.epoch = epoch
        record.objective_value = float(np.mean(objective_values))
        record.lr = state.lr
        record.kl_weight = kl_weight
        history.append(record)

        val_accuracy = (
            classification_accuracy(params, validation)
            if validation is not None
            else record.test_accuracy
        )
        if val_accuracy > best_val_accuracy:
            best_val_accuracy = val_accuracy
            best_epoch = epoch
            best_params = params.copy()

        if (
            config.checkpoint_every > 0
            and (epoch + 1) % config.checkpoint_every == 0
        ):
            save_checkpoint(
                out_dir / f"checkpoint_epoch{epoch:04d}.json",
                params, optimizer=state, epoch=epoch, seed=config.seed,
            )

    if best_epoch < 0:
        best_params = params.copy()
        best_epoch = max(config.epochs - 1, 0)

    final_record = evaluate(best_params, eval_set,
                            eval_z_samples=final_eval_z_samples,
                            seed=config.seed)
    final_record.epoch = best_epoch
    summary = {
        "seed": config.seed,
        "mier_enabled": config.mier_enabled,
        "epochs": config.epochs,
        "best_epoch": best_epoch,
        "best_val_accuracy": best_val_accuracy,
        "eval_z_samples": final_eval_z_samples,
        "final": final_record.to_json_dict(),
    }

    if out_dir is not None:
        write_metrics_csv(history, out_dir / "metrics.csv")
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
        save_checkpoint(out_dir / "best.ckpt.json", best_params,
                        epoch=best_epoch, seed=config.seed)
        save_checkpoint(out_dir / "final.ckpt.json", params, optimizer=state,
                        epoch=max(config.epochs - 1, 0), seed=config.seed)

    return TrainResult(
        params=params,
        best_params=best_params,
        best_epoch=best_epoch,
        best_val_accuracy=best_val_accuracy,
        history=history,
        summary=summary,
    )


def make_training_pairs(split: SemiSupervisedSplit, batch_size: int,
                        seed: int, epoch: int):
    """Batch pairs for one epoch, dropping a trailing unlabeled batch too
    small for the mutual-information estimator."""
    pairs = make_batches(split, batch_size, seed, epoch)
    return [(l, u) for l, u in pairs if len(u) >= 2]


def write_metrics_csv(history: list[MetricsRecord], path) -> None:
    """Append-style metrics table with the fixed header; floats use repr so
    identical runs produce identical bytes."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(METRICS_FIELDS)
        for record in history:
            row = record.to_json_dict()
            writer.writerow(
                [row["epoch"]] + [repr(float(row[f])) for f in METRICS_FIELDS[1:]]
            )


def read_metrics_csv(path) -> list[MetricsRecord]:
    records = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != METRICS_FIELDS:
            raise ValueError(
                f"{path}: unexpected metrics header {reader.fieldnames}"
            )
        for row in reader:
            records.append(MetricsRecord(
                epoch=int(row["epoch"]),
                **{f: float(row[f]) for f in METRICS_FIELDS[1:]},
            ))
    return records


def generate_samples(params: M2Parameters, num_per_class: int,
                     seed: int) -> np.ndarray:
    """Decode one prior draw per grid row: for each class, ``num_per_class``
    latent codes from N(0, I). Returns a (K * num_per_class, D) array of
    intensities in [0, 1]."""
    rng = np.random.default_rng(seed)
    k = params.config.num_classes
    rows = []
    with no_grad():
        for label in range(k):
            z = rng.standard_normal((num_per_class, params.config.latent_dim))
            y = one_hot(np.full(num_per_class, label), k)
            out = decode(params, z, y).data
            if params.config.likelihood == "bernoulli":
                from .autodiff import stable_sigmoid
                rows.append(stable_sigmoid(out))
            else:
                rows.append(np.clip(out, 0.0, 1.0))
    return np.vstack(rows)


def reconstruct(params: M2Parameters, dataset: Dataset, seed: int,
                count: int | None = None) -> np.ndarray:
    """Mean-latent reconstructions of test inputs, conditioned on the
    classifier's argmax label."""
    count = len(dataset) if count is None else min(count, len(dataset))
    x = dataset.inputs[:count]
    with no_grad():
        probs = classify(params, x).probs.data
        labels = probs.argmax(axis=1)
        y = one_hot(labels, params.config.num_classes)
        from .model import encode
        q = encode(params, x, y)
        out = decode(params, q.mu, y).data
        if params.config.likelihood == "bernoulli":
            from .autodiff import stable_sigmoid
            return stable_sigmoid(out)
        return np.clip(out, 0.0, 1.0)


def write_pgm(path, grid: np.ndarray) -> None:
    """Binary 8-bit PGM (P5), row-major, one byte per pixel."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"a PGM grid must be 2-D, got {grid.shape}")
    if grid.size and (grid.min() < 0.0 or grid.max() > 1.0):
        raise ValueError("PGM intensities must lie in [0, 1]")
    height, width = grid.shape
    payload = np.round(grid * 255.0).astype(np.uint8).tobytes()
    with open(path, "wb") as handle:
        handle.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        handle.write(payload)


def probabilities(params: M2Parameters, dataset: Dataset,
                  chunk: int = 512) -> np.ndarray:
    """Classifier rows for a whole dataset (forward only)."""
    blocks = []
    with no_grad():
        for start in range(0, len(dataset), chunk):
            blocks.append(
                classify(params, dataset.inputs[start:start + chunk]).probs.data
            )
    return np.vstack(blocks)
