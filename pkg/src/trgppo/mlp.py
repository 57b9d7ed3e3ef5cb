"""Tanh multilayer perceptron with hand-written backpropagation."""
from __future__ import annotations

import numpy as np


class MLP:
    """Fully connected net: tanh hidden layers, linear output.

    Parameters live in ``self.params`` as ``[W0, b0, W1, b1, ...]`` with
    ``W_k`` of shape ``(fan_in, fan_out)`` so a batch ``x @ W + b`` runs row-wise.
    """

    def __init__(self, sizes, rng: np.random.Generator, out_scale: float = 0.01):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.params: list[np.ndarray] = []
        n_layers = len(sizes) - 1
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_scale if k == n_layers - 1 else np.sqrt(2.0)
            # orthogonal init, scaled
            a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
            q, r = np.linalg.qr(a)
            q = q * np.sign(np.diag(r))
            w = q if fan_in >= fan_out else q.T
            self.params += [gain * w[:fan_in, :fan_out].copy(), np.zeros(fan_out)]

    def copy(self) -> "MLP":
        out = MLP.__new__(MLP)
        out.sizes = self.sizes
        out.params = [p.copy() for p in self.params]
        return out

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        activations = [x]
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            w, b = self.params[2 * k], self.params[2 * k + 1]
            x = x @ w + b
            if k < n_layers - 1:
                x = np.tanh(x)
            activations.append(x)
        return x, activations

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, activations, grad_out) -> list[np.ndarray]:
        """Gradients of ``sum(grad_out * output)`` w.r.t. every parameter."""
        grads = [None] * len(self.params)
        g = np.asarray(grad_out, dtype=float)
        n_layers = len(self.params) // 2
        for k in reversed(range(n_layers)):
            grads[2 * k] = activations[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.params[2 * k].T) * (1.0 - activations[k] ** 2)
        return grads

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vector):
        vector = np.asarray(vector, dtype=float)
        offset = 0
        for i, p in enumerate(self.params):
            self.params[i] = vector[offset:offset + p.size].reshape(p.shape).copy()
            offset += p.size
        if offset != vector.size:
            raise ValueError("flat vector length does not match the network")

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)


class AdamState:
    """Adam over a list of arrays, updated in place."""

    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, ascend=False):
        self.t += 1
        sign = 1.0 if ascend else -1.0
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, g in enumerate(grads):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            params[i] += sign * self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
