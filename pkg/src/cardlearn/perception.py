"""Minimal feedforward perception network with exact backpropagation.

A single classifier maps one cell's features to class probabilities; boards
are handled by applying it independently per cell (shared weights).  Training
minimizes the mean squared error against grounded targets.  Includes MNIST
IDX binary ingestion for glyph datasets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .numkit import Rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class ShapeMismatch(ValueError):
    pass


class BadMagic(ValueError):
    pass


class TruncatedFile(ValueError):
    pass


@dataclass
class MlpModel:
    """Rectifier MLP with a per-group softmax head over contiguous groups of
    ``group_size`` units, an elementwise logistic head, or a raw linear head
    (diagnostics only; trained heads keep outputs in [0,1])."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = "logistic"  # "softmax" | "logistic" | "linear"
    group_size: int = 0

    def __post_init__(self):
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ShapeMismatch("bias does not match layer width")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ShapeMismatch("consecutive layer shapes incompatible")
        if self.head not in ("softmax", "logistic", "linear"):
            raise ValueError(f"unknown head {self.head!r}")
        out = self.weights[-1].shape[1]
        if self.head == "softmax" and (self.group_size < 2 or out % self.group_size != 0):
            raise ShapeMismatch("softmax head needs output width a multiple of group_size >= 2")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.head,
            self.group_size,
        )


def init_model(rng: Rng, sizes: list[int], head: str = "logistic", group_size: int = 0) -> MlpModel:
    """Uniform Glorot-style init, deterministic under the given stream."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(fan_in * fan_out, -a, a).reshape(fan_in, fan_out))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, head, group_size)


def _head(z: np.ndarray, head: str, group_size: int) -> np.ndarray:
    if head == "linear":
        return z
    if head == "logistic":
        return 1.0 / (1.0 + np.exp(-z))
    n, out = z.shape
    g = z.reshape(n, out // group_size, group_size)
    g = g - g.max(axis=2, keepdims=True)
    e = np.exp(g)
    return (e / e.sum(axis=2, keepdims=True)).reshape(n, out)


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Probabilities in [0,1]; per-group sums are 1 under the softmax head."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.in_dim:
        raise ShapeMismatch(f"input width {x.shape[1]} != model input {model.in_dim}")
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return _head(h @ model.weights[-1] + model.biases[-1], model.head, model.group_size)


def loss_mse(model: MlpModel, x: np.ndarray, target: np.ndarray) -> float:
    """Mean over samples of the squared error summed over outputs."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    out = forward(model, x)
    return float(np.sum((out - target) ** 2) / x.shape[0])


def backward_mse(model: MlpModel, x: np.ndarray, target: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradient of loss_mse w.r.t. every layer's weights and biases."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if target.shape[1] != model.out_dim:
        raise ShapeMismatch(f"target width {target.shape[1]} != model output {model.out_dim}")
    n = x.shape[0]
    acts = [x]
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    out = _head(h @ model.weights[-1] + model.biases[-1], model.head, model.group_size)

    g = 2.0 * (out - target) / n
    if model.head == "linear":
        dz = g
    elif model.head == "logistic":
        dz = g * out * (1.0 - out)
    else:
        k = model.group_size
        p = out.reshape(n, -1, k)
        gg = g.reshape(n, -1, k)
        dz = (p * gg - p * (p * gg).sum(axis=2, keepdims=True)).reshape(n, -1)

    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for layer in range(len(model.weights) - 1, -1, -1):
        grads.append((acts[layer].T @ dz, dz.sum(axis=0)))
        if layer > 0:
            dz = (dz @ model.weights[layer].T) * (acts[layer] > 0.0)
    grads.reverse()
    return grads


def sgd_step(model: MlpModel, grads: list[tuple[np.ndarray, np.ndarray]], eta: float) -> MlpModel:
    """θ ← θ - η ∇θ."""
    if eta <= 0:
        raise ValueError("learning rate must be positive")
    weights = [w - eta * dw for w, (dw, _) in zip(model.weights, grads)]
    biases = [b - eta * db for b, (_, db) in zip(model.biases, grads)]
    return MlpModel(weights, biases, model.head, model.group_size)


@dataclass
class IdxDataset:
    images: np.ndarray  # N x H x W uint8
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))


def load_idx_images(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise TruncatedFile(f"{path}: header truncated")
        magic, n, h, w = struct.unpack(">iiii", head)
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagic(f"{path}: magic 0x{magic:08x}, want 0x{IDX_IMAGES_MAGIC:08x}")
        payload = fh.read(n * h * w + 1)
        if len(payload) != n * h * w:
            raise TruncatedFile(f"{path}: payload is {len(payload)} bytes, want {n * h * w}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, h, w).copy()


def load_idx_labels(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise TruncatedFile(f"{path}: header truncated")
        magic, n = struct.unpack(">ii", head)
        if magic != IDX_LABELS_MAGIC:
            raise BadMagic(f"{path}: magic 0x{magic:08x}, want 0x{IDX_LABELS_MAGIC:08x}")
        payload = fh.read(n + 1)
        if len(payload) != n:
            raise TruncatedFile(f"{path}: payload is {len(payload)} bytes, want {n}")
    return np.frombuffer(payload, dtype=np.uint8).copy()


def write_idx_images(path: str, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, n, h, w))
        fh.write(images.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def load_idx_dataset(image_path: str, label_path: str) -> IdxDataset:
    images = load_idx_images(image_path)
    labels = load_idx_labels(label_path)
    if len(images) != len(labels):
        raise ShapeMismatch(f"{len(images)} images vs {len(labels)} labels")
    return IdxDataset(images, labels)
