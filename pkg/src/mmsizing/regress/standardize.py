"""Per-column z-scoring of specification inputs and parameter outputs."""

from __future__ import annotations

import numpy as np

from mmsizing.errors import DomainError


class Standardizer:
    def __init__(self, x_mean, x_std, y_mean, y_std):
        self.x_mean = np.asarray(x_mean, dtype=float)
        self.x_std = np.asarray(x_std, dtype=float)
        self.y_mean = np.asarray(y_mean, dtype=float)
        self.y_std = np.asarray(y_std, dtype=float)

    @classmethod
    def fit(cls, X, Y, x_names=None, y_names=None):
        """Column statistics of inputs ``X`` and outputs ``Y``; constant columns are rejected."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        stats = []
        for arr, names, what in ((X, x_names, "input"), (Y, y_names, "output")):
            mean = arr.mean(axis=0)
            std = arr.std(axis=0)
            bad = np.flatnonzero(~(std > 0))
            if bad.size:
                labels = [names[i] if names else str(i) for i in bad]
                raise DomainError(f"constant {what} column(s) {labels} cannot be standardized")
            stats += [mean, std]
        return cls(*stats)

    def transform_x(self, X):
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def inverse_x(self, Z):
        return np.asarray(Z, dtype=float) * self.x_std + self.x_mean

    def transform_y(self, Y):
        return (np.asarray(Y, dtype=float) - self.y_mean) / self.y_std

    def inverse_y(self, Z):
        return np.asarray(Z, dtype=float) * self.y_std + self.y_mean

    def arrays(self):
        return {"x_mean": self.x_mean, "x_std": self.x_std, "y_mean": self.y_mean, "y_std": self.y_std}
