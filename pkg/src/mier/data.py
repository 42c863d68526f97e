"""Datasets: synthetic mixtures, IDX image files, CSV round-tripping,
labeled/unlabeled splitting, and per-epoch batch assembly.

All randomized operations are pure functions of their seed arguments.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file; ``code`` is machine-parsable, message names the file."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class Dataset:
    """Row-per-example inputs in [0, 1] with integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"inputs ({self.inputs.shape}) and labels "
                f"({self.labels.shape}) do not describe the same examples"
            )
        if self.inputs.size and (
            not np.all(np.isfinite(self.inputs))
            or self.inputs.min() < 0.0
            or self.inputs.max() > 1.0
        ):
            raise ValueError(f"{self.name}: inputs must be finite and in [0, 1]")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[indices], self.labels[indices], self.name)


@dataclass
class SemiSupervisedSplit:
    """Balanced labeled subset plus the disjoint unlabeled remainder.

    The unlabeled half keeps its labels for evaluation only; training code
    must not read them.
    """

    labeled: Dataset
    unlabeled: Dataset
    per_class: int


def generate_gaussian_mixture(num_classes: int, per_class_count: int, dim: int,
                              separation: float, noise_sigma: float,
                              seed: int, name: str = "mixture") -> Dataset:
    """Isotropic Gaussian blobs around centers on a circle in the first two
    dimensions, min-max normalized per feature into [0, 1]."""
    if num_classes < 2 or per_class_count < 1 or dim < 2:
        raise ValueError("need num_classes >= 2, per_class_count >= 1, dim >= 2")
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = np.zeros((num_classes, dim))
    centers[:, 0] = separation * np.cos(angles)
    centers[:, 1] = separation * np.sin(angles)

    inputs = np.vstack([
        centers[k] + rng.normal(scale=noise_sigma, size=(per_class_count, dim))
        for k in range(num_classes)
    ])
    labels = np.repeat(np.arange(num_classes), per_class_count)
    order = rng.permutation(inputs.shape[0])
    inputs, labels = inputs[order], labels[order]

    lo = inputs.min(axis=0)
    hi = inputs.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return Dataset((inputs - lo) / span, labels, name)


def _read_exact(path: Path, handle, count: int) -> bytes:
    data = handle.read(count)
    if len(data) != count:
        raise IdxFormatError(
            "E_IDX_TRUNCATED",
            f"{path}: truncated file, wanted {count} more bytes, got {len(data)}",
        )
    return data


def load_idx(images_path, labels_path, name: str | None = None) -> Dataset:
    """Parse a big-endian IDX image/label file pair into a flat dataset.

    Images: magic 0x00000803, dims (N, rows, cols), unsigned bytes scaled by
    1/255. Labels: magic 0x00000801, then N unsigned bytes. The two N values
    must agree.
    """
    images_path = Path(images_path)
    labels_path = Path(labels_path)

    with open(images_path, "rb") as handle:
        magic, count, rows, cols = struct.unpack(
            ">IIII", _read_exact(images_path, handle, 16)
        )
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                "E_IDX_MAGIC",
                f"{images_path}: wrong magic 0x{magic:08x}, expected "
                f"0x{IDX_IMAGE_MAGIC:08x}",
            )
        raw = _read_exact(images_path, handle, count * rows * cols)
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as handle:
        magic, label_count = struct.unpack(
            ">II", _read_exact(labels_path, handle, 8)
        )
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                "E_IDX_MAGIC",
                f"{labels_path}: wrong magic 0x{magic:08x}, expected "
                f"0x{IDX_LABEL_MAGIC:08x}",
            )
        labels = np.frombuffer(
            _read_exact(labels_path, handle, label_count), dtype=np.uint8
        )

    if count != label_count:
        raise IdxFormatError(
            "E_IDX_COUNT_MISMATCH",
            f"{images_path} holds {count} images but {labels_path} holds "
            f"{label_count} labels",
        )
    return Dataset(pixels / 255.0, labels.astype(np.int64),
                   name or images_path.stem)


def write_idx(dataset: Dataset, images_path, labels_path,
              rows: int | None = None, cols: int | None = None) -> None:
    """Quantize inputs to bytes and write an IDX image/label file pair."""
    n, d = dataset.inputs.shape
    if rows is None or cols is None:
        rows, cols = 1, d
    if rows * cols != d:
        raise ValueError(f"rows*cols = {rows * cols} does not match dim {d}")
    pixels = np.round(dataset.inputs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as handle:
        handle.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        handle.write(pixels.tobytes())
    with open(labels_path, "wb") as handle:
        handle.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        handle.write(dataset.labels.astype(np.uint8).tobytes())


def save_csv(dataset: Dataset, path) -> None:
    """One row per example: label, then the feature values."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        for label, row in zip(dataset.labels, dataset.inputs):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def load_csv(path, name: str | None = None) -> Dataset:
    labels: list[int] = []
    rows: list[list[float]] = []
    with open(path, newline="") as handle:
        for record in csv.reader(handle):
            if not record:
                continue
            labels.append(int(record[0]))
            rows.append([float(v) for v in record[1:]])
    return Dataset(np.asarray(rows), np.asarray(labels),
                   name or Path(path).stem)


def split_labeled(dataset: Dataset, per_class: int, seed: int) -> SemiSupervisedSplit:
    """Uniformly random balanced labeled subset; the remainder is unlabeled."""
    rng = np.random.default_rng(seed)
    chosen: list[np.ndarray] = []
    for k in range(dataset.num_classes):
        pool = np.flatnonzero(dataset.labels == k)
        if pool.size < per_class:
            raise ValueError(
                f"class {k} has only {pool.size} examples, need {per_class}"
            )
        chosen.append(rng.choice(pool, size=per_class, replace=False))
    labeled_idx = np.sort(np.concatenate(chosen))
    mask = np.ones(len(dataset), dtype=bool)
    mask[labeled_idx] = False
    return SemiSupervisedSplit(
        labeled=dataset.subset(labeled_idx),
        unlabeled=dataset.subset(np.flatnonzero(mask)),
        per_class=per_class,
    )


def make_batches(split: SemiSupervisedSplit, batch_size: int, seed: int,
                 epoch: int) -> list[tuple[Dataset, Dataset]]:
    """Per-epoch (labeled minibatch, unlabeled minibatch) pairs.

    Both streams are reshuffled per epoch from seed XOR epoch. The labeled
    stream is cycled so every pair carries min(batch_size, labeled count)
    labeled examples; each unlabeled index appears exactly once per epoch
    (the final pair may be smaller when the batch size does not divide the
    pool).
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    rng = np.random.default_rng(seed ^ epoch)
    unlabeled_order = rng.permutation(len(split.unlabeled))
    labeled_order = rng.permutation(len(split.labeled))

    labeled_take = min(batch_size, len(split.labeled))
    pairs: list[tuple[Dataset, Dataset]] = []
    cursor = 0
    for start in range(0, len(unlabeled_order), batch_size):
        u_idx = unlabeled_order[start:start + batch_size]
        l_idx = np.array(
            [labeled_order[(cursor + i) % len(labeled_order)]
             for i in range(labeled_take)],
            dtype=np.int64,
        )
        cursor += labeled_take
        pairs.append((split.labeled.subset(l_idx), split.unlabeled.subset(u_idx)))
    return pairs


def nearest_center_accuracy(train: Dataset, test: Dataset) -> float:
    """Classify by the nearest per-class mean; a ceiling reference for tests."""
    centers = np.vstack([
        train.inputs[train.labels == k].mean(axis=0)
        for k in range(train.num_classes)
    ])
    distances = ((test.inputs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return float((distances.argmin(axis=1) == test.labels).mean())
