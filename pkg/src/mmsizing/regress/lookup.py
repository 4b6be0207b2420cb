"""Nearest-row table lookup, the sanity baseline for the evaluation loop.

Queries are matched in standardized spec space and answered with the raw
training parameters, so a query equal to a training row reproduces that
row's parameters exactly.
"""

from __future__ import annotations

import numpy as np


class NearestRowLookup:
    kind = "lookup"
    standardized_output = False

    def hyperparameters(self):
        return {}

    def fit(self, X, Y):
        self.X_ = np.asarray(X, dtype=float)
        self.Y_ = np.asarray(Y, dtype=float)
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        d = ((X[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=-1)
        return self.Y_[np.argmin(d, axis=1)]

    def get_state(self):
        return {}, {"X": self.X_, "Y": self.Y_}

    @classmethod
    def from_state(cls, meta, arrays):
        self = cls()
        self.X_ = arrays["X"]
        self.Y_ = arrays["Y"]
        return self
