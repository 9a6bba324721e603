"""From-scratch feed-forward classifier: forward pass, softmax cross-entropy,
and exact backpropagation gradients over a flat parameter vector.

Class index 0 is Secure, 1 is Insecure; argmax ties resolve to index 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MlpArchitecture:
    layer_sizes: tuple  # (n_features, hidden..., 2)
    activation: str = "relu"  # relu | tanh

    def __post_init__(self):
        if len(self.layer_sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("all layer sizes must be >= 1")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_params(self):
        return sum(
            (fan_in + 1) * fan_out
            for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:])
        )


def param_layout(arch: MlpArchitecture):
    """(offset, fan_in, fan_out) per layer for slicing the flat vector.

    Each layer occupies fan_in*fan_out weights followed by fan_out biases.
    """
    layout = []
    offset = 0
    for fan_in, fan_out in zip(arch.layer_sizes, arch.layer_sizes[1:]):
        layout.append((offset, fan_in, fan_out))
        offset += (fan_in + 1) * fan_out
    return layout


def unpack(theta: np.ndarray, arch: MlpArchitecture):
    """Views of the flat vector as per-layer (W, b) pairs."""
    pairs = []
    for offset, fan_in, fan_out in param_layout(arch):
        w = theta[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        b = theta[offset + fan_in * fan_out:offset + (fan_in + 1) * fan_out]
        pairs.append((w, b))
    return pairs


def init_params(arch: MlpArchitecture, seed: int) -> np.ndarray:
    """Scaled-uniform weights, bound sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(arch.n_params)
    for offset, fan_in, fan_out in param_layout(arch):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        theta[offset:offset + fan_in * fan_out] = rng.uniform(
            -bound, bound, size=fan_in * fan_out
        )
    return theta


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z, activation):
    if activation == "relu":
        return (z > 0.0).astype(float)
    return 1.0 - np.tanh(z) ** 2


def _forward_pass(theta, arch, x):
    """Returns (probabilities, cached pre-activations and activations)."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.shape[1] != arch.layer_sizes[0]:
        raise ValueError(
            f"input width {a.shape[1]} does not match model width {arch.layer_sizes[0]}"
        )
    pairs = unpack(theta, arch)
    zs, activations = [], [a]
    for li, (w, b) in enumerate(pairs):
        z = activations[-1] @ w + b
        zs.append(z)
        if li < len(pairs) - 1:
            a = _activate(z, arch.activation)
        else:
            shifted = z - z.max(axis=1, keepdims=True)
            expz = np.exp(shifted)
            a = expz / expz.sum(axis=1, keepdims=True)
        activations.append(a)
    return activations[-1], zs, activations


def forward(theta: np.ndarray, arch: MlpArchitecture, x) -> np.ndarray:
    """Class probabilities [p_secure, p_insecure]; batched if x is 2-D."""
    probs, _, _ = _forward_pass(theta, arch, x)
    return probs[0] if np.asarray(x).ndim == 1 else probs


def loss_and_gradient(theta: np.ndarray, arch: MlpArchitecture, x, y):
    """Mean cross-entropy over the batch and its exact gradient in theta."""
    y = np.asarray(y, dtype=int)
    if y.size == 0:
        raise ValueError("empty batch")
    probs, zs, activations = _forward_pass(theta, arch, x)
    n = probs.shape[0]
    eps = np.finfo(float).tiny  # guards log(0) under a saturated softmax
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

    grad = np.zeros_like(theta)
    pairs = unpack(theta, arch)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    for li in range(len(pairs) - 1, -1, -1):
        offset, fan_in, fan_out = param_layout(arch)[li]
        grad_w = activations[li].T @ delta
        grad_b = delta.sum(axis=0)
        grad[offset:offset + fan_in * fan_out] = grad_w.ravel()
        grad[offset + fan_in * fan_out:offset + (fan_in + 1) * fan_out] = grad_b
        if li > 0:
            delta = (delta @ pairs[li][0].T) * _activate_grad(zs[li - 1], arch.activation)
    return loss, grad


def predict(theta, arch, x):
    """Class indices; exact probability ties go to class 0 (Secure)."""
    probs = np.atleast_2d(forward(theta, arch, x))
    return np.argmax(probs, axis=1)


def evaluate(theta, arch, x, y):
    """{'accuracy', 'loss'} on a labeled set."""
    y = np.asarray(y, dtype=int)
    loss, _ = loss_and_gradient(theta, arch, x, y)
    accuracy = float(np.mean(predict(theta, arch, x) == y))
    return {"accuracy": accuracy, "loss": loss}


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray  # zero-variance features pinned to 1

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std


def fit_standardization(x) -> StandardizationStats:
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return StandardizationStats(mean=mean, std=std)


CHECKPOINT_VERSION = 1


def save_checkpoint(path, theta, arch, stats, epoch=0, extra_arrays=None):
    """Versioned npz container: arch/epoch as JSON, arrays as-is."""
    header = json.dumps({
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(arch.layer_sizes),
        "activation": arch.activation,
        "epoch": int(epoch),
    })
    arrays = {
        "header": np.frombuffer(header.encode(), dtype=np.uint8),
        "theta": theta,
        "mean": stats.mean,
        "std": stats.std,
    }
    for key, value in (extra_arrays or {}).items():
        arrays["x_" + key] = value
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (theta, arch, stats, epoch, extra_arrays)."""
    with np.load(path) as blob:
        header = json.loads(bytes(blob["header"]).decode())
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        arch = MlpArchitecture(tuple(header["layer_sizes"]), header["activation"])
        stats = StandardizationStats(blob["mean"].copy(), blob["std"].copy())
        extra = {
            key[2:]: blob[key].copy() for key in blob.files if key.startswith("x_")
        }
        return blob["theta"].copy(), arch, stats, header["epoch"], extra
