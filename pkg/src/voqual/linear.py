"""Linear reference models: closed-form ridge and the mean baseline.

Ridge stands in for an L1 model as the linear comparison point; it needs no
iterative solver and tests the same claim (linear vs forest).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ModelError
from .forest import PQ_MAX, PQ_MIN


class RidgeRegressor(BaseEstimator, RegressorMixin):
    """Closed-form ridge on standardized features, predictions clamped to
    the rating scale."""

    def __init__(self, l2_weight: float = 1.0, clamp: bool = True):
        self.l2_weight = l2_weight
        self.clamp = clamp

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ModelError("empty training input")
        if X.shape[0] != y.size:
            raise ModelError(f"{X.shape[0]} rows but {y.size} targets")
        if self.l2_weight < 0:
            raise ModelError(f"l2_weight must be >= 0, got {self.l2_weight}")

        mu = X.mean(axis=0)
        sigma = X.std(axis=0)
        # Rounding can leave a constant column with sigma ~ eps*|mu|; dividing
        # by that would amplify noise, so treat those columns as dead too.
        dead = sigma <= 1e-12 * np.maximum(1.0, np.abs(mu))
        sigma_safe = np.where(dead, 1.0, sigma)
        Z = (X - mu) / sigma_safe
        Z[:, dead] = 0.0
        y_mean = float(y.mean())
        yc = y - y_mean

        gram = Z.T @ Z + self.l2_weight * np.eye(X.shape[1])
        if self.l2_weight == 0.0 and np.linalg.matrix_rank(gram) < X.shape[1]:
            raise ModelError("singular system; use l2_weight > 0")
        w = np.linalg.solve(gram, Z.T @ yc)

        self.coef_ = w / sigma_safe
        self.coef_[dead] = 0.0
        self.intercept_ = y_mean - float(self.coef_ @ mu)
        return self

    def predict(self, X):
        if not hasattr(self, "coef_"):
            raise ModelError("estimator is not fitted")
        X = np.asarray(X, dtype=np.float64)
        raw = X @ self.coef_ + self.intercept_
        return np.clip(raw, PQ_MIN, PQ_MAX) if self.clamp else raw


def fit_linear_ridge(X, y, l2_weight: float) -> RidgeRegressor:
    return RidgeRegressor(l2_weight=l2_weight).fit(X, y)


class MeanBaseline(BaseEstimator, RegressorMixin):
    """Predicts the training mean everywhere; the floor every model must beat."""

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        if y.size == 0:
            raise ModelError("empty training targets")
        self.mean_ = float(y.mean())
        return self

    def predict(self, X):
        if not hasattr(self, "mean_"):
            raise ModelError("estimator is not fitted")
        n = np.asarray(X).shape[0]
        return np.full(n, self.mean_)


def baseline_mean(y) -> MeanBaseline:
    return MeanBaseline().fit(np.empty((np.asarray(y).size, 0)), y)
