"""Central finite-difference checks of the analytic gradients.

Activation probes difference an independent mpmath evaluation of each
formula at 40 significant digits, so the oracle's own rounding stays far
below the tolerance even where a gradient is tiny next to the function value
(e.g. the cubic coefficient's gradient near x = 0). Whole-network checks
likewise difference an mpmath re-implementation of the forward pass and
cross-entropy loss.
"""

from __future__ import annotations

import mpmath
import numpy as np

from neaf.activations import ActivationKind, Basis, act_backward, act_forward, pre_activation
from neaf.network import ActivationLayer, DenseLayer, Network, NetworkSpec, loss_and_grads

DENOM_FLOOR = 1e-8


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), DENOM_FLOOR)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def all_kinds() -> dict[str, ActivationKind]:
    kinds = {
        "relu": ActivationKind.relu(),
        "swish": ActivationKind.swish(1.0),
        "swish-trainable": ActivationKind.swish(trainable=True),
    }
    for basis in Basis:
        for with_bias in (False, True):
            name = f"neaf-{basis.value}" + ("-bias" if with_bias else "")
            kinds[name] = ActivationKind.neaf(5.0, basis, with_bias)
    return kinds


def _random_params(kind: ActivationKind, rng) -> np.ndarray:
    if kind.name == "neaf":
        return rng.uniform(-1.0, 1.0, kind.n_params)
    if kind.name == "swish" and kind.trainable_beta:
        return rng.uniform(0.25, 2.5, 1)
    return np.zeros(0)


def reference_activation(kind: ActivationKind, params, x):
    """Activation value in mpmath; shares no code with ``act_forward``."""
    x = mpmath.mpf(x)
    if kind.name == "relu":
        return max(x, 0)
    if kind.name == "swish":
        beta = mpmath.mpf(params[0]) if kind.trainable_beta else mpmath.mpf(kind.beta)
        return x / (1 + mpmath.exp(-beta * x))
    if kind.basis is Basis.X_ABS_X:
        s = x * abs(x)
    elif kind.basis is Basis.ABS_X_CUBED:
        s = abs(x) ** 3
    else:
        s = x**3
    c = [mpmath.mpf(v) for v in params]
    g = mpmath.mpf(kind.gamma)
    u = c[0] + c[1] * x + g * c[2] * s if kind.with_bias else c[0] * x + g * c[1] * s
    return max(u, 0)


def probe_activation(kind: ActivationKind, n_probes: int = 1000, h: float = 1e-6, rng=None, margin: float = 1e-3) -> float:
    """Max relative error of dy/dx and dy/dparams over random scalar probes.

    Probes with ``|u| <= margin`` (at or near the ramp kink) are redrawn.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    done = 0
    with mpmath.workdps(40):
        hm = mpmath.mpf(h)
        while done < n_probes:
            x = rng.uniform(-3.0, 3.0)
            params = _random_params(kind, rng)
            if kind.name in ("relu", "neaf") and abs(pre_activation(kind, params, x)) <= margin:
                continue
            done += 1

            def f(xv, pv):
                return reference_activation(kind, pv, xv)

            xm = np.array([[x]])
            _, u = act_forward(kind, params, xm)
            dx, dparams = act_backward(kind, params, xm, u, np.ones_like(xm))
            analytic = [dx[0, 0]] + list(dparams)
            pm = [mpmath.mpf(v) for v in params]
            numeric = [(f(x + hm, pm) - f(x - hm, pm)) / (2 * hm)]
            for j in range(len(pm)):
                up, dn = list(pm), list(pm)
                up[j] += hm
                dn[j] -= hm
                numeric.append((f(x, up) - f(x, dn)) / (2 * hm))
            worst = max(worst, relative_error(analytic, [float(v) for v in numeric]))
    return worst


def random_network(spec: NetworkSpec, rng) -> Network:
    """Generic (not training-style) initialization for gradient checks."""
    sizes = (spec.input_size,) + spec.hidden + (spec.classes,)
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = rng.normal(0.0, 1.0 / np.sqrt(n_in), (n_in, n_out))
        layers.append(DenseLayer(W, rng.normal(0.0, 0.1, (1, n_out))))
        if i < len(spec.hidden):
            layers.append(ActivationLayer(spec.activation, _random_params(spec.activation, rng)))
    return Network(spec, layers)


def _min_abs_u(net: Network, X) -> float:
    h = X
    smallest = np.inf
    for layer in net.layers:
        if isinstance(layer, DenseLayer):
            h = h @ layer.W + layer.b
        else:
            y, u = act_forward(layer.kind, layer.c, h)
            smallest = min(smallest, float(np.min(np.abs(u))))
            h = y
    return smallest


def reference_loss(net: Network, params, X, labels):
    """Mean cross-entropy in mpmath, reading weights from ``params``.

    ``params`` is ordered like ``net.parameters()`` and holds mpf values.
    """
    it = iter(params)
    rows = [[mpmath.mpf(float(v)) for v in row] for row in X]
    for layer in net.layers:
        if isinstance(layer, DenseLayer):
            W, b = next(it), next(it)
            n_in, n_out = layer.W.shape
            rows = [[mpmath.fsum(r[k] * W[k * n_out + j] for k in range(n_in)) + b[j] for j in range(n_out)]
                    for r in rows]
        else:
            c = next(it) if layer.c.size else []
            rows = [[reference_activation(layer.kind, c, v) for v in r] for r in rows]
    total = mpmath.mpf(0)
    for r, label in zip(rows, labels):
        top = max(r)
        log_norm = top + mpmath.log(mpmath.fsum(mpmath.exp(v - top) for v in r))
        total += log_norm - r[int(label)]
    return total / len(rows)


def check_network(kind: ActivationKind, h: float = 1e-5, rng=None, margin: float = 1e-3,
                  input_size: int = 4, hidden=(3, 3), classes: int = 2, samples: int = 5) -> float:
    """Max relative error over every parameter of a tiny network's loss gradient.

    Draws are repeated until no unit sits within ``margin`` of a ramp kink and
    the loss is O(1).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    spec = NetworkSpec(input_size, hidden, classes, kind)
    while True:
        net = random_network(spec, rng)
        X = rng.normal(0.0, 1.0, (samples, input_size))
        labels = rng.integers(0, classes, samples)
        if kind.name != "swish" and _min_abs_u(net, X) <= margin:
            continue
        if loss_and_grads(net, X, labels)[0] < 10.0:
            break

    _, grads = loss_and_grads(net, X, labels)
    worst = 0.0
    with mpmath.workdps(40):
        hm = mpmath.mpf(h)
        values = [[mpmath.mpf(float(v)) for v in p.reshape(-1)] for p in net.parameters()]
        for i, g in enumerate(grads):
            numeric = []
            for j in range(len(values[i])):
                old = values[i][j]
                values[i][j] = old + hm
                up = reference_loss(net, values, X, labels)
                values[i][j] = old - hm
                dn = reference_loss(net, values, X, labels)
                values[i][j] = old
                numeric.append(float((up - dn) / (2 * hm)))
            worst = max(worst, relative_error(np.ravel(g), numeric))
    return worst


def run_suite(n_probes: int = 1000, seed: int = 0) -> dict[str, tuple[float, float]]:
    """``{kind: (activation probe error, end-to-end network error)}``."""
    results = {}
    for i, (name, kind) in enumerate(all_kinds().items()):
        probe = probe_activation(kind, n_probes, rng=np.random.default_rng([seed, i, 0]))
        net = check_network(kind, rng=np.random.default_rng([seed, i, 1]))
        results[name] = (probe, net)
    return results
