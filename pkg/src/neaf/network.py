"""Dense network: linear layers, separate activation layers, softmax output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from neaf import tensor
from neaf.activations import ActivationKind, act_backward, act_forward, adaptive_init


class NumericFailure(ArithmeticError):
    """Training produced a NaN loss or gradient."""


@dataclass(frozen=True)
class NetworkSpec:
    input_size: int = 784
    hidden: tuple[int, ...] = (512, 50)
    classes: int = 10
    activation: ActivationKind = field(default_factory=ActivationKind)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if min((self.input_size, self.classes) + self.hidden) < 1:
            raise ValueError("all layer sizes must be >= 1")


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]


@dataclass
class ActivationLayer:
    kind: ActivationKind
    c: np.ndarray  # shared trainable scalars, possibly empty

    def params(self) -> list[np.ndarray]:
        return [self.c] if self.c.size else []


class Network:
    """Alternating dense and activation layers ending in dense + softmax.

    ``layers`` holds the stack in order; ``parameters()`` returns the arrays
    the optimizer updates in place, in a fixed order matching ``grads``.
    """

    def __init__(self, spec: NetworkSpec, layers: list):
        self.spec = spec
        self.layers = layers

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def copy(self) -> "Network":
        layers = []
        for layer in self.layers:
            if isinstance(layer, DenseLayer):
                layers.append(DenseLayer(layer.W.copy(), layer.b.copy()))
            else:
                layers.append(ActivationLayer(layer.kind, layer.c.copy()))
        return Network(self.spec, layers)


def init_network(spec: NetworkSpec, rng: np.random.Generator) -> Network:
    """Weights ~ U[0, 0.1), zero biases, adaptive scalars via ``adaptive_init``.

    Draws happen layer by layer in stack order: each dense layer's W, then the
    following activation layer's scalars. Biases consume no draws.
    """
    sizes = (spec.input_size,) + spec.hidden + (spec.classes,)
    layers: list = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = rng.uniform(0.0, 0.1, size=(n_in, n_out))
        layers.append(DenseLayer(W, tensor.zeros(1, n_out)))
        if i < len(spec.hidden):
            layers.append(ActivationLayer(spec.activation, adaptive_init(spec.activation, rng)))
    return Network(spec, layers)


def softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _logits(net: Network, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != net.spec.input_size:
        raise tensor.ShapeError(f"expected input with {net.spec.input_size} columns, got {X.shape}")
    caches = []
    h = X
    for layer in net.layers:
        if isinstance(layer, DenseLayer):
            caches.append(h)
            h = tensor.add_row_vector(tensor.matmul(h, layer.W), layer.b)
        else:
            y, u = act_forward(layer.kind, layer.c, h)
            caches.append((h, u))
            h = y
    return h, caches


def forward(net: Network, X: np.ndarray):
    """Return ``(probs, caches)``; caches hold each layer's input (and ``u``)."""
    with np.errstate(over="ignore", invalid="ignore"):
        z, caches = _logits(net, X)
        return softmax_rows(z), caches


def predict(net: Network, X: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = []
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, X.shape[0], chunk):
            z, _ = _logits(net, X[start:start + chunk])
            out.append(tensor.argmax_rows(softmax_rows(z)))
    return np.concatenate(out).astype(np.int64) if out else np.zeros(0, dtype=np.int64)


def loss_and_grads(net: Network, X: np.ndarray, labels) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and gradients ordered like ``net.parameters()``.

    Raises :class:`NumericFailure` if the loss or any gradient is NaN.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    if labels.shape != (n,):
        raise tensor.ShapeError("one label per row required")
    if labels.size and (labels.min() < 0 or labels.max() >= net.spec.classes):
        raise ValueError("label out of range")

    with np.errstate(over="ignore", invalid="ignore"):
        z, caches = _logits(net, X)
        logp = log_softmax_rows(z)
        rows = np.arange(n)
        loss = float(-np.mean(logp[rows, labels]))
        if not np.isfinite(loss):
            raise NumericFailure(f"loss is {loss}")

        delta = np.exp(logp)
        delta[rows, labels] -= 1.0
        delta /= n

        grads: list[list[np.ndarray]] = []
        for depth, (layer, cache) in enumerate(zip(reversed(net.layers), reversed(caches))):
            if isinstance(layer, DenseLayer):
                dW = tensor.matmul(tensor.transpose(cache), delta)
                db = tensor.reduce_sum(delta, "rows")
                grads.append([dW, db])
                if depth < len(net.layers) - 1:  # the input needs no gradient
                    delta = tensor.matmul(delta, tensor.transpose(layer.W))
            else:
                x, u = cache
                delta, dc = act_backward(layer.kind, layer.c, x, u, delta)
                grads.append([np.array(dc)] if layer.c.size else [])

    flat = [g for group in reversed(grads) for g in group]
    if tensor.has_nan(flat):
        raise NumericFailure("NaN gradient")
    return loss, flat


def evaluate(net: Network, images: np.ndarray, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot evaluate on an empty set")
    return float(np.mean(predict(net, images) == labels))


def count_params(net: Network) -> tuple[int, int]:
    """``(dense, adaptive)`` trainable parameter counts."""
    dense = sum(p.size for layer in net.layers if isinstance(layer, DenseLayer) for p in layer.params())
    adaptive = sum(layer.c.size for layer in net.layers if isinstance(layer, ActivationLayer))
    return int(dense), int(adaptive)
