"""Running mean/variance statistics usable as a scikit-learn transformer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


def merge_moments(mean_a, var_a, count_a, mean_b, var_b, count_b):
    """Combine two sets of (mean, population variance, count)."""
    count = count_a + count_b
    if count == 0:
        return mean_a, var_a, count
    delta = mean_b - mean_a
    mean = mean_a + delta * count_b / count
    m2 = var_a * count_a + var_b * count_b + delta**2 * count_a * count_b / count
    return mean, m2 / count, count


class RunningObsNormalizer(TransformerMixin, BaseEstimator):
    """Streaming per-feature standardization with clipping.

    ``partial_fit`` merges batch moments into the running estimate; ``frozen``
    turns further ``partial_fit`` calls into no-ops (evaluation, loaded
    checkpoints).
    """

    def __init__(self, clip: float = 5.0, epsilon: float = 1e-8, frozen: bool = False):
        self.clip = clip
        self.epsilon = epsilon
        self.frozen = frozen

    def _init(self, n_features: int):
        self.mean_ = np.zeros(n_features)
        self.var_ = np.ones(n_features)
        self.count_ = 0.0
        self.n_features_in_ = n_features

    def fit(self, X, y=None):
        X = check_array(X)
        self._init(X.shape[1])
        frozen, self.frozen = self.frozen, False
        self.partial_fit(X)
        self.frozen = frozen
        return self

    def partial_fit(self, X, y=None):
        X = check_array(X)
        if not hasattr(self, "mean_"):
            self._init(X.shape[1])
        if self.frozen:
            return self
        mean, var, count = merge_moments(
            self.mean_, self.var_, self.count_, X.mean(axis=0), X.var(axis=0), float(X.shape[0])
        )
        self.mean_, self.count_ = mean, count
        self.var_ = np.maximum(var, self.epsilon)
        return self

    def merge(self, other: "RunningObsNormalizer") -> "RunningObsNormalizer":
        """Fold another normalizer's statistics into this one (parallel workers)."""
        mean, var, count = merge_moments(self.mean_, self.var_, self.count_, other.mean_, other.var_, other.count_)
        self.mean_, self.var_, self.count_ = mean, np.maximum(var, self.epsilon), count
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X)
        z = (X - self.mean_) / np.sqrt(self.var_ + self.epsilon)
        return np.clip(z, -self.clip, self.clip)


class RunningScalar:
    """Mean/std of a scalar stream, used to scale value targets."""

    def __init__(self, epsilon: float = 1e-8):
        self.mean, self.var, self.count, self.epsilon = 0.0, 1.0, 0.0, epsilon

    def update(self, x):
        x = np.asarray(x, dtype=float).ravel()
        self.mean, self.var, self.count = merge_moments(self.mean, self.var, self.count, x.mean(), x.var(), float(x.size))

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var + self.epsilon))

    def normalize(self, x):
        return (np.asarray(x) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x) * self.std + self.mean
