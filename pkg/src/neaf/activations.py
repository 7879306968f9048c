"""RELU, swish and the adaptive cubic-enhanced activation (NEAF).

NEAF gates a learned polynomial argument through a ramp::

    u = c0 * x + gamma * c1 * s(x)              (with_bias=False)
    u = c0 + c1 * x + gamma * c2 * s(x)         (with_bias=True)
    y = max(u, 0)

where ``s`` is one of the cubic-order bases in :class:`Basis`. The c's are
scalars shared by every unit of a layer; ``gamma`` is a fixed constant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from neaf.tensor import ShapeError


class ConfigError(ValueError):
    pass


class Basis(str, enum.Enum):
    X_ABS_X = "xabsx"  # x|x|, odd; what the reference code computes
    ABS_X_CUBED = "absx3"  # |x|^3, even
    X_CUBED = "x3"  # x^3, odd


def basis_eval(x, basis: Basis):
    """Return ``(s(x), s'(x))`` elementwise for scalars or arrays."""
    basis = Basis(basis)
    ax = np.abs(x)
    if basis is Basis.X_ABS_X:
        return x * ax, 2.0 * ax
    if basis is Basis.ABS_X_CUBED:
        return ax * ax * ax, 3.0 * x * ax
    return x * x * x, 3.0 * x * x


@dataclass(frozen=True)
class ActivationKind:
    """Which nonlinearity a hidden layer applies.

    ``name`` is ``"relu"``, ``"swish"`` or ``"neaf"``. Only the fields for the
    chosen name are consulted.
    """

    name: str = "neaf"
    gamma: float = 5.0
    basis: Basis = Basis.ABS_X_CUBED
    with_bias: bool = False
    beta: float = 1.0
    trainable_beta: bool = False

    def __post_init__(self):
        if self.name not in ("relu", "swish", "neaf"):
            raise ConfigError(f"unknown activation {self.name!r}")
        object.__setattr__(self, "basis", Basis(self.basis))
        if self.name == "neaf" and not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.name == "swish" and not np.isfinite(self.beta):
            raise ConfigError("beta must be finite")

    @classmethod
    def relu(cls) -> "ActivationKind":
        return cls(name="relu")

    @classmethod
    def swish(cls, beta: float = 1.0, trainable: bool = False) -> "ActivationKind":
        return cls(name="swish", beta=beta, trainable_beta=trainable)

    @classmethod
    def neaf(cls, gamma: float = 5.0, basis=Basis.ABS_X_CUBED, with_bias: bool = False) -> "ActivationKind":
        return cls(name="neaf", gamma=gamma, basis=Basis(basis), with_bias=with_bias)

    @property
    def n_params(self) -> int:
        if self.name == "neaf":
            return 3 if self.with_bias else 2
        if self.name == "swish":
            return 1 if self.trainable_beta else 0
        return 0


def _check_params(kind: ActivationKind, params) -> None:
    if len(params) != kind.n_params:
        raise ConfigError(f"{kind.name} expects {kind.n_params} parameters, got {len(params)}")


def _sigmoid(z):
    # exp(-log(1 + e^-z)) never overflows
    return np.exp(-np.logaddexp(0.0, -z))


def _swish_beta(kind: ActivationKind, params) -> float:
    return float(params[0]) if kind.trainable_beta else kind.beta


def pre_activation(kind: ActivationKind, params, x):
    """The NEAF ramp argument ``u``; for other kinds ``u`` is ``x`` itself."""
    if kind.name != "neaf":
        return x
    s, _ = basis_eval(x, kind.basis)
    if kind.with_bias:
        c0, c1, c2 = params
        return c0 + c1 * x + kind.gamma * c2 * s
    c0, c1 = params
    return c0 * x + kind.gamma * c1 * s


def act_forward(kind: ActivationKind, params, x):
    """Apply the activation; returns ``(y, u)`` with ``u`` kept for backward."""
    _check_params(kind, params)
    if kind.name == "relu":
        return np.maximum(x, 0.0), x
    if kind.name == "swish":
        beta = _swish_beta(kind, params)
        return x * _sigmoid(beta * x), x
    u = pre_activation(kind, params, x)
    return np.maximum(u, 0.0), u


def act_backward(kind: ActivationKind, params, x, u, upstream):
    """Gradients w.r.t. the input and the layer's shared scalars.

    The ramp gate is strict (``u > 0``), so the kink contributes zero.
    Parameter gradients are summed over every element of the batch.
    """
    _check_params(kind, params)
    if np.shape(x) != np.shape(upstream) or np.shape(u) != np.shape(x):
        raise ShapeError("x, u and upstream must share a shape")
    if kind.name == "relu":
        return upstream * (x > 0), []
    if kind.name == "swish":
        beta = _swish_beta(kind, params)
        sig = _sigmoid(beta * x)
        dsig = sig * (1.0 - sig)
        dx = upstream * (sig + beta * x * dsig)
        if kind.trainable_beta:
            return dx, [float(np.sum(upstream * x * x * dsig))]
        return dx, []

    s, ds = basis_eval(x, kind.basis)
    gated = upstream * (u > 0)
    g = kind.gamma
    if kind.with_bias:
        _, c1, c2 = params
        dx = gated * (c1 + g * c2 * ds)
        dparams = [np.sum(gated), np.sum(gated * x), np.sum(gated * (g * s))]
    else:
        c0, c1 = params
        dx = gated * (c0 + g * c1 * ds)
        dparams = [np.sum(gated * x), np.sum(gated * (g * s))]
    return dx, [float(d) for d in dparams]


def adaptive_init(kind: ActivationKind, rng: np.random.Generator) -> np.ndarray:
    """Initial trainable scalars: NEAF c's ~ U[0, 0.01), trainable beta = 1."""
    if kind.name == "neaf":
        return rng.uniform(0.0, 1e-2, size=kind.n_params)
    if kind.name == "swish" and kind.trainable_beta:
        return np.array([1.0])
    return np.zeros(0)
