"""Nadam with constant momentum.

For each parameter, with gradient ``g`` at step ``t`` (1-based)::

    m <- b1*m + (1-b1)*g
    v <- b2*v + (1-b2)*g^2
    v_hat = v / (1 - b2^t)
    theta <- theta - lr * (b1*m/(1-b1^(t+1)) + (1-b1)*g/(1-b1^t)) / (sqrt(v_hat) + eps)

No momentum-decay schedule is applied.
"""

from __future__ import annotations

import numba
import numpy as np

from neaf.network import NumericFailure


@numba.njit(cache=True)
def _update(p, g, m, v, b1, b2, m_scale, g_scale, v_corr, lr, eps):
    for i in range(p.size):
        gi = g[i]
        m[i] = b1 * m[i] + (1.0 - b1) * gi
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
        p[i] -= lr * (m_scale * m[i] + g_scale * gi) / (np.sqrt(v[i] / v_corr) + eps)


class Nadam:
    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-7):
        self.params = list(params)
        if not all(p.flags.c_contiguous and p.dtype == np.float64 for p in self.params):
            raise ValueError("parameters must be contiguous float64 arrays")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 1

    def step(self, grads) -> None:
        """Update every parameter in place, then advance ``t`` once."""
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        if any(np.isnan(g).any() for g in grads):
            raise NumericFailure("NaN gradient passed to optimizer")

        b1, b2, t = self.beta1, self.beta2, self.t
        m_scale = b1 / (1.0 - b1 ** (t + 1))
        g_scale = (1.0 - b1) / (1.0 - b1**t)
        v_corr = 1.0 - b2**t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = np.ascontiguousarray(g, dtype=np.float64).reshape(-1)
            if g.size != p.size:
                raise ValueError(f"gradient of size {g.size} for parameter of shape {p.shape}")
            # reshape(-1) on the contiguous parameter arrays is a view, so the kernel updates in place
            _update(p.reshape(-1), g, m.reshape(-1), v.reshape(-1), b1, b2, m_scale, g_scale, v_corr, self.lr, self.eps)
        self.t += 1
