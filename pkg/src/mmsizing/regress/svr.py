"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved in the standard 2N-variable form

    min_a  1/2 a'Qa + p'a   s.t.  s'a = 0,  0 <= a <= C

with ``s = (+1,...,+1, -1,...,-1)``, ``Q_tu = s_t s_u K(x_t, x_u)`` and
``p = (eps - y, eps + y)``. Each step updates the maximal-violating pair
chosen with second-order information, analytically and within the box,
until the KKT violation drops below ``tol``.
"""

from __future__ import annotations

import numpy as np

from mmsizing.errors import ConvergenceError

TAU = 1e-12


def rbf_kernel(A, B, gamma):
    sq = (A ** 2).sum(axis=1)[:, None] + (B ** 2).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def scale_gamma(X):
    var = float(np.var(X))
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


class _KernelCache:
    def __init__(self, X, gamma, full_limit=4000):
        self.X = X
        self.gamma = gamma
        self.full = rbf_kernel(X, X, gamma) if len(X) <= full_limit else None
        self.cols = {}

    def col(self, i):
        if self.full is not None:
            return self.full[:, i]
        c = self.cols.get(i)
        if c is None:
            if len(self.cols) > 2000:
                self.cols.clear()
            c = self.cols[i] = rbf_kernel(self.X, self.X[i:i + 1], self.gamma)[:, 0]
        return c

    def matvec(self, v):
        if self.full is not None:
            return self.full @ v
        out = np.zeros(len(self.X))
        for start in range(0, len(self.X), 1024):
            out[start:start + 1024] = rbf_kernel(self.X[start:start + 1024], self.X, self.gamma) @ v
        return out


def solve_eps_svr(X, y, C=1.0, epsilon=0.1, gamma=None, tol=1e-3, max_iter=200_000):
    """Return ``(coef, rho, gamma, n_iter)``; prediction is ``K(x, X) @ coef - rho``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(X)
    gamma = scale_gamma(X) if gamma is None else float(gamma)
    cache = _KernelCache(X, gamma)
    s = np.concatenate([np.ones(n), -np.ones(n)])
    base = np.concatenate([np.arange(n), np.arange(n)])
    a = np.zeros(2 * n)
    G = np.concatenate([epsilon - y, epsilon + y])
    qd = np.ones(2 * n)  # K(x, x) = 1 for the RBF kernel

    it = 0
    gap = np.inf
    while it < max_iter:
        up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
        low = ((s > 0) & (a > 0)) | ((s < 0) & (a < C))
        score = -s * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        g_max = score[i]
        g_min = float(np.min(np.where(low, score, np.inf)))
        gap = g_max - g_min
        if gap < tol:
            break
        k_i = cache.col(base[i])[base]
        b = g_max - score
        cand = low & (b > 0)
        quad = qd[i] + qd - 2.0 * k_i
        quad = np.where(quad > 0, quad, TAU)
        j = int(np.argmin(np.where(cand, -(b * b) / quad, np.inf)))
        k_j = cache.col(base[j])[base]
        q_i = s[i] * s * k_i
        q_j = s[j] * s * k_j
        ai_old, aj_old = a[i], a[j]
        if s[i] != s[j]:
            quad_ij = qd[i] + qd[j] + 2.0 * q_i[j]
            delta = (-G[i] - G[j]) / (quad_ij if quad_ij > 0 else TAU)
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j], a[i] = 0.0, diff
            elif a[i] < 0:
                a[i], a[j] = 0.0, -diff
            if diff > 0:
                if a[i] > C:
                    a[i], a[j] = C, C - diff
            elif a[j] > C:
                a[j], a[i] = C, C + diff
        else:
            quad_ij = qd[i] + qd[j] - 2.0 * q_i[j]
            delta = (G[i] - G[j]) / (quad_ij if quad_ij > 0 else TAU)
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i], a[j] = C, total - C
            elif a[j] < 0:
                a[j], a[i] = 0.0, total
            if total > C:
                if a[j] > C:
                    a[j], a[i] = C, total - C
            elif a[i] < 0:
                a[i], a[j] = 0.0, total
        G += q_i * (a[i] - ai_old) + q_j * (a[j] - aj_old)
        it += 1
    else:
        coef = a[:n] - a[n:]
        raise ConvergenceError(
            f"SVR solver stopped after {max_iter} iterations: KKT violation {gap:.3g} > tol {tol:g}, "
            f"duality gap {_duality_gap(cache, coef, _rho(a, s, G, C), y, a, G, epsilon, C):.3g}",
            gap=gap)

    rho = _rho(a, s, G, C)
    return a[:n] - a[n:], rho, gamma, it


def _rho(a, s, G, C):
    sg = s * G
    free = (a > 0) & (a < C)
    if free.any():
        return float(sg[free].mean())
    at_upper = a >= C
    ub_mask = (at_upper & (s < 0)) | (~at_upper & (s > 0))
    lb_mask = ~ub_mask
    ub = float(sg[ub_mask].min()) if ub_mask.any() else np.inf
    lb = float(sg[lb_mask].max()) if lb_mask.any() else -np.inf
    return 0.5 * (ub + lb)


def _duality_gap(cache, coef, rho, y, a, G, epsilon, C):
    kc = cache.matvec(coef)
    f = kc - rho
    primal = 0.5 * coef @ kc + C * np.maximum(np.abs(y - f) - epsilon, 0.0).sum()
    p = np.concatenate([epsilon - y, epsilon + y])
    dual = -0.5 * (a @ (G - p)) - p @ a
    return float(primal - dual)


class SVR:
    """One independent epsilon-SVR per output column."""

    kind = "svr"
    standardized_output = True

    def __init__(self, kernel="rbf", C=1.0, epsilon=0.1, gamma="scale", tol=1e-3,
                 max_iter=200_000, multi_target_regression_type="MultiOutputRegression"):
        if kernel != "rbf":
            raise ValueError(f"unsupported kernel {kernel!r}")
        if multi_target_regression_type != "MultiOutputRegression":
            raise ValueError("only independent per-target regression is supported")
        self.kernel = kernel
        self.C = C
        self.epsilon = epsilon
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.multi_target_regression_type = multi_target_regression_type

    def hyperparameters(self):
        return {"kernel": self.kernel, "C": self.C, "epsilon": self.epsilon, "gamma": self.gamma,
                "tol": self.tol, "max_iter": self.max_iter,
                "multi_target_regression_type": self.multi_target_regression_type}

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        gamma = scale_gamma(X) if self.gamma == "scale" else float(self.gamma)
        coefs, rhos, iters = [], [], []
        for k in range(Y.shape[1]):
            coef, rho, _, n_iter = solve_eps_svr(X, Y[:, k], self.C, self.epsilon, gamma,
                                                 self.tol, self.max_iter)
            coefs.append(coef)
            rhos.append(rho)
            iters.append(n_iter)
        self.X_ = X
        self.coef_ = np.stack(coefs, axis=1)
        self.rho_ = np.array(rhos)
        self.gamma_ = gamma
        self.n_iter_ = iters
        return self

    def predict(self, X):
        K = rbf_kernel(np.asarray(X, dtype=float), self.X_, self.gamma_)
        return K @ self.coef_ - self.rho_

    def get_state(self):
        return self.hyperparameters(), {"X": self.X_, "coef": self.coef_, "rho": self.rho_,
                                        "gamma": np.array([self.gamma_])}

    @classmethod
    def from_state(cls, meta, arrays):
        self = cls(**meta)
        self.X_ = arrays["X"]
        self.coef_ = arrays["coef"]
        self.rho_ = arrays["rho"]
        self.gamma_ = float(arrays["gamma"][0])
        return self
