"""Central finite-difference check of a network's analytic gradients."""

from __future__ import annotations

import numpy as np


def numeric_grads(net, X, Y, h=1e-6):
    """Central differences of the MSE loss w.r.t. every parameter entry."""
    out = {}
    for name, layer, key in net.named_parameters():
        w = layer.params[key]
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = w[i]
            w[i] = old + h
            up = float(np.mean((net.forward(X) - Y) ** 2))
            w[i] = old - h
            down = float(np.mean((net.forward(X) - Y) ** 2))
            w[i] = old
            g[i] = (up - down) / (2 * h)
        out[name] = g
    return out


def relative_error(a, b, zero=1e-8):
    """``||a - b|| / max(||a||, ||b||)``, or the absolute error when both norms are below ``zero``.

    Structurally zero gradients (attention key biases, which the softmax
    cancels) would otherwise turn finite-difference round-off into a large ratio.
    """
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    diff = float(np.linalg.norm(a - b))
    return diff if scale < zero else diff / scale


def check_gradients(net, X, Y, h=1e-6):
    """Return ``{parameter name: relative error}``; the net must be in eval mode."""
    net.eval()
    _, analytic = net.loss_and_grads(X, Y)
    analytic = {k: v.copy() for k, v in analytic.items()}
    numeric = numeric_grads(net, X, Y, h)
    return {k: relative_error(analytic[k], numeric[k]) for k in analytic}
