"""Minimal numpy layers with hand-written backward passes.

Every layer keeps ``params`` and ``grads`` dicts of float64 arrays and caches
what it needs from ``forward`` for the following ``backward`` call.
"""

from __future__ import annotations

import math

import numpy as np


class Layer:
    training = False

    def __init__(self):
        self.params = {}
        self.grads = {}

    def children(self):
        return []

    def named_layers(self, prefix=""):
        yield prefix, self
        for name, child in self.children():
            yield from child.named_layers(f"{prefix}{name}.")

    def named_parameters(self):
        """Yield ``(qualified_name, layer, key)`` for every parameter array."""
        for prefix, layer in self.named_layers():
            for key in layer.params:
                yield prefix + key, layer, key

    def state_dict(self):
        return {name: layer.params[key] for name, layer, key in self.named_parameters()}

    def load_state_dict(self, state):
        for name, layer, key in self.named_parameters():
            arr = np.asarray(state[name], dtype=float)
            if arr.shape != layer.params[key].shape:
                raise ValueError(f"{name}: shape {arr.shape} != {layer.params[key].shape}")
            layer.params[key] = arr.copy()

    def train(self, mode=True):
        for _, layer in self.named_layers():
            layer.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for _, layer in self.named_layers():
            for key, p in layer.params.items():
                layer.grads[key] = np.zeros_like(p)


class Linear(Layer):
    def __init__(self, n_in, n_out, rng):
        super().__init__()
        bound = 1.0 / math.sqrt(n_in)
        self.params["W"] = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.params["b"] = rng.uniform(-bound, bound, size=(n_out,))
        self.zero_grad()

    def forward(self, x):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        n_in, n_out = self.params["W"].shape
        x2 = self._x.reshape(-1, n_in)
        dy2 = dy.reshape(-1, n_out)
        self.grads["W"] += x2.T @ dy2
        self.grads["b"] += dy2.sum(axis=0)
        return dy @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x):
        self.preact = x
        return np.maximum(x, 0.0)

    def backward(self, dy):
        return dy * (self.preact > 0)


class Dropout(Layer):
    def __init__(self, p, rng):
        super().__init__()
        self.p = p
        self.rng = rng

    def forward(self, x):
        if not self.training or self.p == 0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class LayerNorm(Layer):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.params["gamma"] = np.ones(dim)
        self.params["beta"] = np.zeros(dim)
        self.zero_grad()

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc ** 2).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv
        self._cache = (xhat, inv)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, dy):
        xhat, inv = self._cache
        d = xhat.shape[-1]
        self.grads["gamma"] += (dy * xhat).reshape(-1, d).sum(axis=0)
        self.grads["beta"] += dy.reshape(-1, d).sum(axis=0)
        dxhat = dy * self.params["gamma"]
        return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class MultiHeadAttention(Layer):
    """Scaled dot-product self-attention over ``(batch, tokens, dim)``."""

    def __init__(self, dim, n_heads, rng):
        super().__init__()
        if dim % n_heads:
            raise ValueError(f"dim {dim} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.o = Linear(dim, dim, rng)
        self.attn = None

    def children(self):
        return [("q", self.q), ("k", self.k), ("v", self.v), ("o", self.o)]

    def _split(self, x):
        n, t, d = x.shape
        return x.reshape(n, t, self.n_heads, d // self.n_heads).transpose(0, 2, 1, 3)

    def forward(self, x):
        n, t, d = x.shape
        q = self._split(self.q.forward(x))
        k = self._split(self.k.forward(x))
        v = self._split(self.v.forward(x))
        scale = 1.0 / math.sqrt(d // self.n_heads)
        attn = softmax(q @ k.transpose(0, 1, 3, 2) * scale)
        self.attn = attn
        self._cache = (q, k, v, scale)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(n, t, d)
        return self.o.forward(ctx)

    def backward(self, dy):
        q, k, v, scale = self._cache
        attn = self.attn
        n, t, d = dy.shape
        dctx = self._split(self.o.backward(dy))
        dattn = dctx @ v.transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dctx
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * scale
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q

        def merge(a):
            return a.transpose(0, 2, 1, 3).reshape(n, t, d)

        return self.q.backward(merge(dq)) + self.k.backward(merge(dk)) + self.v.backward(merge(dv))


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        return [(str(i), layer) for i, layer in enumerate(self.layers)]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


class Adam:
    def __init__(self, net, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.net = net
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for name, layer, key in self.net.named_parameters():
            g = layer.grads[key]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            layer.params[key] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
