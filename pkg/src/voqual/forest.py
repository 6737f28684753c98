"""Deterministic random-forest regression.

Greedy CART trees on bootstrap samples, every tie broken by a fixed rule,
per-tree rng streams spawned from one seed, so a model is a pure function
of (X, y, params). Serialization round-trips predictions bitwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ModelError

PQ_MIN, PQ_MAX = 0.0, 100.0

MODEL_FORMAT_VERSION = 1

PathLike = Union[str, Path]


def default_mtry(d: int) -> int:
    return max(1, min(d, round(np.sqrt(d))))


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 300
    max_depth: int = 20
    min_samples_leaf: int = 2
    mtry: Optional[int] = None      # None = round(sqrt(d)) at fit time
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ModelError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ModelError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ModelError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.mtry is not None and self.mtry < 1:
            raise ModelError(f"mtry must be >= 1, got {self.mtry}")
        if not 0 <= self.seed < 2 ** 64:
            raise ModelError("seed must be an unsigned 64-bit integer")

    def resolved(self, d: int) -> "Hyperparams":
        if d < 1:
            raise ModelError(f"need at least 1 feature, got {d}")
        if self.mtry is None:
            return replace(self, mtry=default_mtry(d))
        if self.mtry > d:
            raise ModelError(f"mtry {self.mtry} exceeds feature count {d}")
        return self


@dataclass(frozen=True)
class RegressionTree:
    """Flat node arrays; feature_index -1 marks a leaf."""

    feature_index: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_index",
                           np.asarray(self.feature_index, dtype=np.int64))
        object.__setattr__(self, "threshold",
                           np.asarray(self.threshold, dtype=np.float64))
        object.__setattr__(self, "left", np.asarray(self.left, dtype=np.int64))
        object.__setattr__(self, "right", np.asarray(self.right, dtype=np.int64))
        object.__setattr__(self, "value", np.asarray(self.value, dtype=np.float64))

    @property
    def n_nodes(self) -> int:
        return self.feature_index.size

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        for i in range(X.shape[0]):
            node = 0
            while self.feature_index[node] >= 0:
                if X[i, self.feature_index[node]] <= self.threshold[node]:
                    node = self.left[node]
                else:
                    node = self.right[node]
            out[i] = self.value[node]
        return out


def _best_split(X: np.ndarray, y: np.ndarray, feature_ids: np.ndarray,
                min_leaf: int) -> Optional[Tuple[int, float, np.ndarray]]:
    """Lowest-SSE (feature, threshold) over midpoint candidates.

    Ties go to the lowest feature index, then the lowest threshold; returns
    None when no candidate strictly beats the parent SSE. All sampled
    features are searched in one vectorized pass.
    """
    n = y.size
    feats = np.sort(feature_ids)
    Xs = X[:, feats]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    ys = y[order]

    thresholds = (xs[:-1] + xs[1:]) / 2.0
    counts = np.arange(1, n, dtype=np.float64)[:, None]
    # A midpoint that rounds onto a sample value would change membership.
    legal = (thresholds > xs[:-1]) & (thresholds < xs[1:]) \
        & (counts >= min_leaf) & (n - counts >= min_leaf)
    if not legal.any():
        return None

    c1 = np.cumsum(ys, axis=0)[:-1]
    c2 = np.cumsum(ys ** 2, axis=0)[:-1]
    t1, t2 = float(y.sum()), float(np.dot(y, y))
    sse = (c2 - c1 ** 2 / counts) + ((t2 - c2) - (t1 - c1) ** 2 / (n - counts))
    sse[~legal] = np.inf

    # Column-major argmin = ties resolved toward the lowest feature index,
    # then the lowest threshold (rows are sorted ascending per column).
    flat = int(np.argmin(sse.flatten(order="F")))
    col, row = divmod(flat, n - 1)
    best_sse = float(sse[row, col])
    parent_sse = float(np.sum((y - y.mean()) ** 2))
    if not best_sse < parent_sse - 1e-12 * max(1.0, parent_sse):
        return None
    left_mask = np.zeros(n, dtype=bool)
    left_mask[order[:row + 1, col]] = True
    return int(feats[col]), float(thresholds[row, col]), left_mask


def fit_tree(X: np.ndarray, y: np.ndarray, params: Hyperparams,
             rng: np.random.Generator) -> RegressionTree:
    """Grow one CART tree; the rng drives per-node feature subsampling."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ModelError("empty training input")
    if X.shape[1] == 0:
        raise ModelError("no features")
    if X.shape[0] != y.size:
        raise ModelError(f"{X.shape[0]} rows but {y.size} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ModelError("NaN/Inf in training data")
    params = params.resolved(X.shape[1])

    feature_index: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []

    def add_node() -> int:
        feature_index.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(value) - 1

    def grow(rows: np.ndarray, depth: int) -> int:
        node = add_node()
        y_node = y[rows]
        value[node] = float(y_node.mean())
        if depth >= params.max_depth or rows.size < 2 * params.min_samples_leaf \
                or np.all(y_node == y_node[0]):
            return node
        sampled = rng.choice(X.shape[1], size=params.mtry, replace=False)
        split = _best_split(X[rows], y_node, sampled, params.min_samples_leaf)
        if split is None:
            return node
        f, t, left_mask = split
        feature_index[node] = f
        threshold[node] = t
        left[node] = grow(rows[left_mask], depth + 1)
        right[node] = grow(rows[~left_mask], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return RegressionTree(feature_index, threshold, left, right, value)


@dataclass(frozen=True)
class RandomForestModel:
    trees: Tuple[RegressionTree, ...]
    params: Hyperparams
    feature_set_id: str
    target_pq: str
    feature_names: Tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if not self.trees:
            raise ModelError("forest has no trees")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        """Ensemble mean per row, unclamped (stays within the tree range)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(
                f"expected {self.n_features} features, got matrix {X.shape}"
            )
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)


def bootstrap_indices(seed: int, tree_index: int, n: int) -> np.ndarray:
    """The bootstrap sample for tree t, a pure function of (seed, t)."""
    rng = _tree_rng(seed, tree_index)
    return rng.integers(0, n, size=n)


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(tree_index,))
    return np.random.Generator(np.random.PCG64(ss))


def fit_forest(X: np.ndarray, y: np.ndarray, params: Hyperparams,
               feature_set_id: str = "compare-lite", target_pq: str = "",
               feature_names: Optional[Sequence[str]] = None) -> RandomForestModel:
    """Bootstrap + fit_tree per tree; bit-reproducible for fixed inputs."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ModelError("empty training input")
    params = params.resolved(X.shape[1])
    if feature_names is None:
        feature_names = tuple(f"x_{i}" for i in range(X.shape[1]))
    if len(feature_names) != X.shape[1]:
        raise ModelError("feature_names length does not match X")

    trees = []
    for t in range(params.n_trees):
        rng = _tree_rng(params.seed, t)
        if params.bootstrap:
            rows = rng.integers(0, X.shape[0], size=X.shape[0])
        else:
            rows = np.arange(X.shape[0])
        trees.append(fit_tree(X[rows], y[rows], params, rng))
    return RandomForestModel(tuple(trees), params, feature_set_id,
                             target_pq, tuple(feature_names))


def predict(model: RandomForestModel, x) -> float:
    """Single-vector prediction; accepts a FeatureVector or plain array."""
    feature_set_id = getattr(x, "feature_set_id", None)
    if feature_set_id is not None and feature_set_id != model.feature_set_id:
        raise ModelError(
            f"model wants feature set {model.feature_set_id!r}, got {feature_set_id!r}"
        )
    values = getattr(x, "values", x)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (model.n_features,):
        raise ModelError(
            f"expected {model.n_features} features, got shape {values.shape}"
        )
    raw = float(model.predict_matrix(values[None, :])[0])
    return float(min(max(raw, PQ_MIN), PQ_MAX))


def save_forest(model: RandomForestModel, path: PathLike) -> None:
    """JSON model file; float repr keeps the round trip bitwise."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "random_forest",
        "params": {
            "n_trees": model.params.n_trees,
            "max_depth": model.params.max_depth,
            "min_samples_leaf": model.params.min_samples_leaf,
            "mtry": model.params.mtry,
            "seed": model.params.seed,
            "bootstrap": model.params.bootstrap,
        },
        "feature_set_id": model.feature_set_id,
        "target_pq": model.target_pq,
        "feature_names": list(model.feature_names),
        "trees": [
            {
                "feature_index": tree.feature_index.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "value": tree.value.tolist(),
            }
            for tree in model.trees
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_forest(path: PathLike) -> RandomForestModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not a valid model file") from exc
    if doc.get("kind") != "random_forest":
        raise ModelError(f"{path}: not a random forest model")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelError(f"{path}: unsupported format version")
    params = Hyperparams(**doc["params"])
    trees = tuple(
        RegressionTree(t["feature_index"], t["threshold"], t["left"],
                       t["right"], t["value"])
        for t in doc["trees"]
    )
    return RandomForestModel(trees, params, doc["feature_set_id"],
                             doc["target_pq"], tuple(doc["feature_names"]))


class ForestRegressor(BaseEstimator, RegressorMixin):
    """Estimator facade over fit_forest/predict_matrix."""

    def __init__(self, n_trees: int = 300, max_depth: int = 20,
                 min_samples_leaf: int = 2, mtry: Optional[int] = None,
                 seed: int = 0, bootstrap: bool = True):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.mtry = mtry
        self.seed = seed
        self.bootstrap = bootstrap

    def _params(self) -> Hyperparams:
        return Hyperparams(n_trees=self.n_trees, max_depth=self.max_depth,
                           min_samples_leaf=self.min_samples_leaf,
                           mtry=self.mtry, seed=self.seed,
                           bootstrap=self.bootstrap)

    def fit(self, X, y):
        self.model_ = fit_forest(np.asarray(X), np.asarray(y), self._params())
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise ModelError("estimator is not fitted")
        return self.model_.predict_matrix(np.asarray(X))
