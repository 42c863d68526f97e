"""Classifier, encoder, and decoder networks, plus checkpoint round-tripping.

The generative side draws a class label and a continuous latent code and
decodes both into per-pixel reconstruction parameters; the inference side
runs a classifier over inputs and a label-conditioned Gaussian encoder.
Label conditioning is plain concatenation of a one-hot row with the input
(encoder) or with the latent code (decoder). Hidden layers use softplus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import (
    AdamState,
    Tensor,
    clip,
    concat,
    matmul,
    softmax_rows,
    softplus,
)
from .distributions import CategoricalParams, DiagonalGaussianParams

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0

CHECKPOINT_FORMAT = "m2-checkpoint-v1"


@dataclass
class ModelConfig:
    input_dim: int
    num_classes: int
    latent_dim: int = 50
    hidden_dims: tuple[int, ...] = (600, 600)
    classifier_hidden: int | None = None  # defaults to hidden_dims[0]
    likelihood: str = "bernoulli"

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.input_dim < 1 or self.num_classes < 1 or self.latent_dim < 1:
            raise ValueError("all model dimensions must be >= 1")
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden_dims must be a nonempty list of widths >= 1")
        if self.likelihood not in ("bernoulli", "gaussian"):
            raise ValueError(f"unknown likelihood {self.likelihood!r}")

    @property
    def classifier_width(self) -> int:
        return self.classifier_hidden or self.hidden_dims[0]

    def to_json_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "latent_dim": self.latent_dim,
            "hidden_dims": list(self.hidden_dims),
            "classifier_hidden": self.classifier_hidden,
            "likelihood": self.likelihood,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_dim=int(d["input_dim"]),
            num_classes=int(d["num_classes"]),
            latent_dim=int(d.get("latent_dim", 50)),
            hidden_dims=tuple(d.get("hidden_dims", (600, 600))),
            classifier_hidden=d.get("classifier_hidden"),
            likelihood=d.get("likelihood", "bernoulli"),
        )


class M2Parameters:
    """All weight and bias tensors of the three networks, keyed by name."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "M2Parameters":
        return M2Parameters(
            self.config,
            {
                name: Tensor(t.data.copy(), requires_grad=True, name=name)
                for name, t in self.tensors.items()
            },
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self.tensors.values())


def _layer_names(config: ModelConfig) -> list[tuple[str, int, int]]:
    """(name, fan_in, fan_out) for every weight matrix, in creation order."""
    d, k, latent = config.input_dim, config.num_classes, config.latent_dim
    layers: list[tuple[str, int, int]] = []
    layers.append(("cls.w0", d, config.classifier_width))
    layers.append(("cls.w1", config.classifier_width, k))
    fan_in = d + k
    for i, width in enumerate(config.hidden_dims):
        layers.append((f"enc.w{i}", fan_in, width))
        fan_in = width
    layers.append(("enc.mu_w", fan_in, latent))
    layers.append(("enc.logvar_w", fan_in, latent))
    fan_in = latent + k
    for i, width in enumerate(reversed(config.hidden_dims)):
        layers.append((f"dec.w{i}", fan_in, width))
        fan_in = width
    layers.append(("dec.out_w", fan_in, d))
    return layers


def init_parameters(config: ModelConfig, seed: int) -> M2Parameters:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, fan_in, fan_out in _layer_names(config):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        bias_name = {
            "enc.mu_w": "enc.mu_b",
            "enc.logvar_w": "enc.logvar_b",
            "dec.out_w": "dec.out_b",
        }.get(name, name.replace(".w", ".b"))
        tensors[name] = Tensor(weight, requires_grad=True, name=name)
        tensors[bias_name] = Tensor(
            np.zeros(fan_out), requires_grad=True, name=bias_name
        )
    return M2Parameters(config, tensors)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_cols(name: str, x: Tensor, expected: int) -> None:
    if x.ndim != 2 or x.shape[1] != expected:
        raise ValueError(
            f"{name} expects a 2-D batch with {expected} columns, got {x.shape}"
        )


def _affine(x: Tensor, params: M2Parameters, w: str, b: str) -> Tensor:
    return matmul(x, params[w]) + params[b]


def classify(params: M2Parameters, x) -> CategoricalParams:
    """Class posterior rows for a batch of inputs (one softplus hidden layer)."""
    x = _as_tensor(x)
    _check_cols("classify", x, params.config.input_dim)
    h = softplus(_affine(x, params, "cls.w0", "cls.b0"))
    logits = _affine(h, params, "cls.w1", "cls.b1")
    return CategoricalParams(softmax_rows(logits))


def encode(params: M2Parameters, x, y_onehot) -> DiagonalGaussianParams:
    """Label-conditioned Gaussian posterior over the latent code.

    The raw log-variance head is clamped to [-10, 10] to keep early training
    away from degenerate variances.
    """
    x = _as_tensor(x)
    y = _as_tensor(y_onehot)
    _check_cols("encode", x, params.config.input_dim)
    _check_cols("encode", y, params.config.num_classes)
    h = concat([x, y], axis=1)
    for i in range(len(params.config.hidden_dims)):
        h = softplus(_affine(h, params, f"enc.w{i}", f"enc.b{i}"))
    mu = _affine(h, params, "enc.mu_w", "enc.mu_b")
    logvar = clip(_affine(h, params, "enc.logvar_w", "enc.logvar_b"),
                  LOGVAR_MIN, LOGVAR_MAX)
    return DiagonalGaussianParams(mu, logvar)


def decode(params: M2Parameters, z, y_onehot) -> Tensor:
    """Per-pixel reconstruction parameters (Bernoulli logits or Gaussian means)."""
    z = _as_tensor(z)
    y = _as_tensor(y_onehot)
    _check_cols("decode", z, params.config.latent_dim)
    _check_cols("decode", y, params.config.num_classes)
    h = concat([z, y], axis=1)
    for i in range(len(params.config.hidden_dims)):
        h = softplus(_affine(h, params, f"dec.w{i}", f"dec.b{i}"))
    return _affine(h, params, "dec.out_w", "dec.out_b")


def _array_to_json(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "values": arr.ravel().tolist()}


def _array_from_json(d: dict) -> np.ndarray:
    return np.asarray(d["values"], dtype=np.float64).reshape(d["shape"])


@dataclass
class Checkpoint:
    config: ModelConfig
    params: M2Parameters
    optimizer: AdamState | None
    epoch: int
    seed: int
    extra: dict = field(default_factory=dict)


def save_checkpoint(
    path,
    params: M2Parameters,
    optimizer: AdamState | None = None,
    epoch: int = 0,
    seed: int = 0,
    extra: dict | None = None,
) -> None:
    """Write a self-describing JSON checkpoint; round-trips bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "model": params.config.to_json_dict(),
        "parameters": {
            name: _array_to_json(t.data) for name, t in params.tensors.items()
        },
        "epoch": int(epoch),
        "seed": int(seed),
        "extra": extra or {},
    }
    if optimizer is not None:
        doc["optimizer"] = {
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "t": optimizer.t,
            "m": {k: _array_to_json(v) for k, v in optimizer.m.items()},
            "v": {k: _array_to_json(v) for k, v in optimizer.v.items()},
        }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> Checkpoint:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(
            f"{path}: not a model checkpoint (format={doc.get('format')!r})"
        )
    config = ModelConfig.from_json_dict(doc["model"])
    tensors = {
        name: Tensor(_array_from_json(entry), requires_grad=True, name=name)
        for name, entry in doc["parameters"].items()
    }
    optimizer = None
    if "optimizer" in doc:
        o = doc["optimizer"]
        optimizer = AdamState(
            lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], t=o["t"],
            m={k: _array_from_json(v) for k, v in o["m"].items()},
            v={k: _array_from_json(v) for k, v in o["v"].items()},
        )
    return Checkpoint(
        config=config,
        params=M2Parameters(config, tensors),
        optimizer=optimizer,
        epoch=int(doc.get("epoch", 0)),
        seed=int(doc.get("seed", 0)),
        extra=doc.get("extra", {}),
    )


def rgb_to_grayscale(images: np.ndarray) -> np.ndarray:
    """Collapse a trailing RGB axis with luminance weights (0.299, 0.587, 0.114)."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[-1] != 3:
        raise ValueError(f"expected a trailing RGB axis of size 3, got {images.shape}")
    return images @ np.array([0.299, 0.587, 0.114])
