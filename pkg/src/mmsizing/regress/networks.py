"""Fully connected and transformer-encoder regressors trained by full-batch Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmsizing.errors import TrainingDivergence
from mmsizing.regress.nn import (Adam, Dropout, Layer, LayerNorm, Linear,
                                 MultiHeadAttention, ReLU, Sequential)

MLP_DIMS = (200, 300, 500, 500, 300, 200)


@dataclass
class TrainConfig:
    """Optimizer loop settings shared by the neural regressors.

    ``batch_size=None`` means full batch up to 1024 rows and 256 above that.
    Training stops early once the epoch loss has not improved for
    ``patience`` consecutive iterations.
    """

    max_iter: int = 2000
    lr: float = 1e-3
    batch_size: int | None = None
    seed: int = 0
    patience: int = 200

    def __post_init__(self):
        if self.max_iter < 1 or self.lr <= 0 or self.patience < 1:
            raise ValueError("max_iter, lr and patience must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def effective_batch(self, n):
        if self.batch_size is not None:
            return min(self.batch_size, n)
        return n if n <= 1024 else 256


class Network(Layer):
    def loss_and_grads(self, X, Y):
        """Mean-squared error and its gradient w.r.t. every parameter."""
        self.zero_grad()
        pred = self.forward(X)
        diff = pred - Y
        loss = float(np.mean(diff ** 2))
        self.backward(2.0 * diff / diff.size)
        grads = {name: layer.grads[key] for name, layer, key in self.named_parameters()}
        return loss, grads

    def predict(self, X):
        was = self.training
        self.eval()
        try:
            return self.forward(np.asarray(X, dtype=float))
        finally:
            self.train(was)


class MLPNet(Network):
    def __init__(self, n_in, n_out, hidden=MLP_DIMS, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        layers = []
        prev = n_in
        for width in hidden:
            layers += [Linear(prev, width, rng), ReLU()]
            prev = width
        layers.append(Linear(prev, n_out, rng))
        self.body = Sequential(layers)

    def children(self):
        return [("body", self.body)]

    def forward(self, x):
        return self.body.forward(x)

    def backward(self, dy):
        return self.body.backward(dy)


class EncoderLayer(Layer):
    """Pre-norm block: x + drop(attn(ln(x))), then x + drop(ffn(ln(x)))."""

    def __init__(self, dim, n_heads, dim_hidden, dropout, rng, drop_rng):
        super().__init__()
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, n_heads, rng)
        self.drop1 = Dropout(dropout, drop_rng)
        self.ln2 = LayerNorm(dim)
        self.ff = Sequential([Linear(dim, dim_hidden, rng), ReLU(), Dropout(dropout, drop_rng),
                              Linear(dim_hidden, dim, rng)])
        self.drop2 = Dropout(dropout, drop_rng)

    def children(self):
        return [("ln1", self.ln1), ("attn", self.attn), ("drop1", self.drop1),
                ("ln2", self.ln2), ("ff", self.ff), ("drop2", self.drop2)]

    def forward(self, x):
        x = x + self.drop1.forward(self.attn.forward(self.ln1.forward(x)))
        return x + self.drop2.forward(self.ff.forward(self.ln2.forward(x)))

    def backward(self, dy):
        dy = dy + self.ln2.backward(self.ff.backward(self.drop2.backward(dy)))
        return dy + self.ln1.backward(self.attn.backward(self.drop1.backward(dy)))


class TransformerNet(Network):
    """One token per input feature, no positional encoding, mean-pooled."""

    def __init__(self, n_tokens, n_out, dim_model=200, num_heads=2, dim_hidden=200,
                 dropout_p=0.1, num_encoder_layers=6, rng=None, drop_rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        drop_rng = drop_rng if drop_rng is not None else np.random.default_rng(1)
        self.n_tokens = n_tokens
        self.params["proj"] = rng.uniform(-1.0, 1.0, size=(n_tokens, dim_model))
        self.params["ident"] = rng.normal(0.0, 0.02, size=(n_tokens, dim_model))
        self.layers = [EncoderLayer(dim_model, num_heads, dim_hidden, dropout_p, rng, drop_rng)
                       for _ in range(num_encoder_layers)]
        self.ln_f = LayerNorm(dim_model)
        self.head = Linear(dim_model, n_out, rng)
        self.zero_grad()

    def children(self):
        return [(f"enc{i}", layer) for i, layer in enumerate(self.layers)] + [
            ("ln_f", self.ln_f), ("head", self.head)]

    def forward(self, x):
        self._x = x
        h = x[:, :, None] * self.params["proj"] + self.params["ident"]
        for layer in self.layers:
            h = layer.forward(h)
        h = self.ln_f.forward(h)
        return self.head.forward(h.mean(axis=1))

    def backward(self, dy):
        t = self.n_tokens
        dh = self.head.backward(dy)
        dh = np.repeat(dh[:, None, :] / t, t, axis=1)
        dh = self.ln_f.backward(dh)
        for layer in reversed(self.layers):
            dh = layer.backward(dh)
        self.grads["proj"] += (dh * self._x[:, :, None]).sum(axis=0)
        self.grads["ident"] += dh.sum(axis=0)
        return (dh * self.params["proj"]).sum(axis=-1)

    def attention_weights(self, X):
        """Per-layer attention probabilities, each ``(batch, heads, tokens, tokens)``."""
        self.predict(X)
        return [layer.attn.attn.copy() for layer in self.layers]


def train_network(net, X, Y, cfg):
    """Fit ``net`` by minimizing MSE with Adam; returns the per-iteration loss log."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = len(X)
    batch = cfg.effective_batch(n)
    order_rng = np.random.default_rng(cfg.seed + 7919)
    opt = Adam(net, lr=cfg.lr)
    net.train()
    history = []
    best, stale = np.inf, 0
    for it in range(cfg.max_iter):
        idx = order_rng.permutation(n) if batch < n else np.arange(n)
        total = 0.0
        for start in range(0, n, batch):
            sel = idx[start:start + batch]
            loss, grads = net.loss_and_grads(X[sel], Y[sel])
            if not np.isfinite(loss):
                gmax = max(float(np.max(np.abs(g))) for g in grads.values())
                last = history[-1] if history else float("nan")
                net.eval()
                raise TrainingDivergence(
                    f"non-finite loss at iteration {it} (last finite loss {last:.6g}, max |grad| {gmax:.3g})")
            opt.step()
            total += loss * len(sel)
        epoch_loss = total / n
        history.append(epoch_loss)
        if epoch_loss < best:
            best, stale = epoch_loss, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    net.eval()
    return history
