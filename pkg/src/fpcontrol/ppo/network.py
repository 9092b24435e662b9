"""Two-hidden-layer tanh MLPs with hand-written backpropagation."""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    w = q if n_in >= n_out else q.T
    return gain * w[:n_in, :n_out]


class MLP:
    """``x -> tanh(x W1 + b1) -> tanh(. W2 + b2) -> . W3 + b3``.

    Weights are stored ``(in, out)``; ``params`` is the flat list
    ``[W1, b1, W2, b2, W3, b3]`` shared with the optimizer.
    """

    def __init__(self, sizes, params=None, dtype=np.float64):
        self.sizes = tuple(int(s) for s in sizes)
        self.dtype = np.dtype(dtype)
        if params is None:
            params = []
            for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
                params += [np.zeros((n_in, n_out)), np.zeros(n_out)]
        self.params = [np.asarray(p, dtype=float) for p in params]

    @classmethod
    def initialized(cls, sizes, rng: np.random.Generator, hidden_gain=np.sqrt(2.0), out_gain=1.0, dtype=np.float64):
        net = cls(sizes, dtype=dtype)
        n_layers = len(net.sizes) - 1
        for i, (n_in, n_out) in enumerate(zip(net.sizes[:-1], net.sizes[1:])):
            gain = out_gain if i == n_layers - 1 else hidden_gain
            net.params[2 * i] = orthogonal(rng, n_in, n_out, gain)
        return net

    def copy(self) -> "MLP":
        return MLP(self.sizes, [p.copy() for p in self.params], self.dtype)

    def _compute_params(self):
        if self.dtype == np.float64:
            return self.params
        return [p.astype(self.dtype) for p in self.params]

    def forward(self, x, cache: bool = False):
        """Output for a batch ``x``; with ``cache`` also the per-layer activations.

        Arithmetic runs in ``self.dtype``; parameters stay float64.
        """
        h = np.asarray(x, dtype=self.dtype)
        acts = [h]
        params = self._compute_params()
        n_layers = len(params) // 2
        for i in range(n_layers):
            W, b = params[2 * i], params[2 * i + 1]
            h = h @ W + b
            if i < n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        if cache:
            return h.astype(float), acts
        return h.astype(float)

    def backward(self, acts, grad_out):
        """Float64 parameter gradients given the cached activations and ``dL/d output``."""
        params = self._compute_params()
        grads = [None] * len(params)
        g = np.asarray(grad_out, dtype=self.dtype)
        n_layers = len(params) // 2
        for i in reversed(range(n_layers)):
            if i < n_layers - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            grads[2 * i] = (acts[i].T @ g).astype(float)
            grads[2 * i + 1] = g.sum(axis=0, dtype=float)
            if i > 0:
                g = g @ params[2 * i].T
        return grads
