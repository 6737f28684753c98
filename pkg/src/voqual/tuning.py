"""Validation-set grid search over forest hyperparameters."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .agreement import rmse
from .errors import ModelError
from .forest import Hyperparams, default_mtry, fit_forest


@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter lattice; mtry entries are fractions resolved against
    the feature count ("sqrt" or a float like 1/3)."""

    n_trees: Tuple[int, ...] = (100, 300)
    max_depth: Tuple[int, ...] = (10, 20)
    min_samples_leaf: Tuple[int, ...] = (1, 2, 5)
    mtry: Tuple[object, ...] = ("sqrt", 1 / 3)

    def resolve(self, d: int, seed: int) -> List[Hyperparams]:
        mtries: List[int] = []
        for rule in self.mtry:
            if rule == "sqrt":
                m = default_mtry(d)
            else:
                m = max(1, min(d, round(d * float(rule))))
            if m not in mtries:
                mtries.append(m)
        cells = []
        for n_trees in self.n_trees:
            for depth in self.max_depth:
                for leaf in self.min_samples_leaf:
                    for m in mtries:
                        cells.append(Hyperparams(
                            n_trees=n_trees, max_depth=depth,
                            min_samples_leaf=leaf, mtry=m, seed=seed,
                        ))
        if not cells:
            raise ModelError("empty hyperparameter grid")
        return cells


DEFAULT_GRID = GridSpec()


def tune(X_train, y_train, X_val, y_val,
         grid: Sequence[Hyperparams]) -> Tuple[Hyperparams, float]:
    """Exhaustive search; lowest validation RMSE wins, ties go to the
    smaller model (fewer trees, shallower, larger leaves)."""
    grid = list(grid)
    if not grid:
        raise ModelError("empty hyperparameter grid")
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)

    best: Optional[Tuple] = None
    for params in grid:
        try:
            model = fit_forest(X_train, y_train, params)
            val_rmse = rmse(model.predict_matrix(X_val), y_val)
        except ModelError as exc:
            warnings.warn(f"grid cell {params} failed: {exc}")
            continue
        key = (val_rmse, params.n_trees, params.max_depth,
               -params.min_samples_leaf, params.mtry or 0)
        if best is None or key < best[0]:
            best = (key, params, val_rmse)
    if best is None:
        raise ModelError("every grid cell failed")
    return best[1], best[2]
