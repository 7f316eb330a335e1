"""A from-scratch backpropagation multilayer perceptron.

Logistic sigmoid on every layer (hidden and output), so outputs are fractions
in (0, 1). Training is deterministic full-batch gradient descent.

Two conventions worth spelling out because they interact with the fixed
default learning rate:

- the update step follows the gradient of E = sum over samples and outputs of
  squared residuals, and
- the reported/stopping error is the mean squared error: mean over samples of
  the squared residual norm.

The two differ only by a constant factor, but with the learning rate pinned
at its default the summed form is what actually converges on desk-scale
datasets.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError

INIT_SPAN = 0.5  # parameters start uniform in [-INIT_SPAN, +INIT_SPAN]


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Immutable network parameters; training returns a new model."""

    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]  # per layer, shape (n_in, n_out)
    biases: tuple[np.ndarray, ...]  # per layer, shape (n_out,)
    seed: int

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 100
    tolerance: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def mlp_init(layer_sizes: tuple[int, ...] | list[int], seed: int) -> MlpModel:
    """Fresh model with parameters drawn uniformly from the seeded generator."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ConfigurationError("need at least input and output layers")
    if any(s < 1 for s in sizes):
        raise ConfigurationError("every layer needs at least one unit")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for n_in, n_out in zip(sizes, sizes[1:]):
        weights.append(rng.uniform(-INIT_SPAN, INIT_SPAN, size=(n_in, n_out)))
        biases.append(rng.uniform(-INIT_SPAN, INIT_SPAN, size=n_out))
    return MlpModel(sizes, tuple(weights), tuple(biases), seed)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activations(model: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    """All layer activations for a batch, input included."""
    acts = [x]
    for w, b in zip(model.weights, model.biases):
        acts.append(_sigmoid(acts[-1] @ w + b))
    return acts


def _as_batch(model: MlpModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.n_inputs:
        raise ConfigurationError(f"expected {model.n_inputs} features, got {x.shape[1]}")
    return x

def mlp_forward(model: MlpModel, features) -> np.ndarray:
    """Network outputs for one feature vector (1-D in, 1-D out)."""
    x = _as_batch(model, features)
    return _activations(model, x)[-1][0]


def mlp_gradients(model: MlpModel, features: np.ndarray, targets: np.ndarray):
    """Gradient of E = sum of squared residuals w.r.t. every parameter.

    Returns (weight gradients, bias gradients), shaped like the model's own
    parameter tuples. Exposed so the finite-difference oracle can check it.
    """
    x = _as_batch(model, features)
    t = np.asarray(targets, dtype=float)
    if t.ndim == 1:
        t = t[None, :] if x.shape[0] == 1 else t[:, None]
    acts = _activations(model, x)
    out = acts[-1]
    delta = 2.0 * (out - t) * out * (1.0 - out)
    grad_w = [np.empty(0)] * len(model.weights)
    grad_b = [np.empty(0)] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            a = acts[layer]
            delta = (delta @ model.weights[layer].T) * a * (1.0 - a)
    return tuple(grad_w), tuple(grad_b)


def training_mse(model: MlpModel, features: np.ndarray, targets: np.ndarray) -> float:
    """Mean over samples of the squared residual norm."""
    x = _as_batch(model, features)
    t = np.asarray(targets, dtype=float)
    if t.ndim == 1:
        t = t[None, :] if x.shape[0] == 1 else t[:, None]
    out = _activations(model, x)[-1]
    return float(((out - t) ** 2).sum(axis=1).mean())


def mlp_train(model: MlpModel, dataset, config: TrainConfig) -> tuple[MlpModel, float]:
    """Full-batch gradient descent; stops at the epoch cap or once the
    training MSE drops under the tolerance. Returns (trained model, final MSE)."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    features = np.asarray([np.atleast_1d(f) for f, _ in dataset], dtype=float)
    targets = np.asarray([np.atleast_1d(t) for _, t in dataset], dtype=float)
    if not (np.isfinite(features).all() and np.isfinite(targets).all()):
        raise ValueError("dataset contains non-finite values")
    if features.shape[1] != model.n_inputs or targets.shape[1] != model.n_outputs:
        raise ConfigurationError("dataset dimensions do not match the model")

    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    current = MlpModel(model.layer_sizes, tuple(weights), tuple(biases), model.seed)
    error = training_mse(current, features, targets)
    for _ in range(config.epochs):
        if error < config.tolerance:
            break
        grad_w, grad_b = mlp_gradients(current, features, targets)
        weights = [w - config.learning_rate * g for w, g in zip(current.weights, grad_w)]
        biases = [b - config.learning_rate * g for b, g in zip(current.biases, grad_b)]
        current = MlpModel(model.layer_sizes, tuple(weights), tuple(biases), model.seed)
        error = training_mse(current, features, targets)
    return current, error


def mlp_equal(a: MlpModel, b: MlpModel) -> bool:
    return (
        a.layer_sizes == b.layer_sizes
        and all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
        and all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases))
    )


def save_mlp(model: MlpModel, path: str | Path) -> None:
    """Versioned text format: header line, then one line per layer holding the
    row-major weights followed by the biases."""
    lines = ["mlp v1 " + " ".join(str(s) for s in model.layer_sizes)]
    for w, b in zip(model.weights, model.biases):
        entries = [repr(float(v)) for v in w.reshape(-1)] + [repr(float(v)) for v in b]
        lines.append(" ".join(entries))
    Path(path).write_text("\n".join(lines) + "\n")


def load_mlp(path: str | Path) -> MlpModel:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("mlp v1 "):
        raise ConfigurationError(f"not an mlp v1 file: {path}")
    sizes = tuple(int(s) for s in lines[0].split()[2:])
    weights = []
    biases = []
    for layer, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        values = [float(v) for v in lines[1 + layer].split()]
        if len(values) != n_in * n_out + n_out:
            raise ConfigurationError(f"layer {layer} entry count mismatch in {path}")
        weights.append(np.array(values[: n_in * n_out]).reshape(n_in, n_out))
        biases.append(np.array(values[n_in * n_out :]))
    return MlpModel(sizes, tuple(weights), tuple(biases), seed=0)
