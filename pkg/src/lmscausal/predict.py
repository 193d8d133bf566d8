"""End-of-term GPA regression: elastic net, tree, forest and gradient-boosted
trees, with nested five-fold cross-validated grid search.

Single trees and forest members are grown with scikit-learn's CART builder;
bagging and per-tree seeds are driven here so that the first ``m`` trees of
a forest are the forest of size ``m``.  Boosting uses scikit-learn's
histogram gradient boosting (least-squares loss, from the mean), whose
staged predictions serve every tree count on a grid from one fit.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold
from sklearn.ensemble import HistGradientBoostingRegressor
from sklearn.tree import DecisionTreeRegressor

FAMILIES = ("ElasticNet", "DecisionTree", "RandomForest", "GBT")

# full search grids
FULL_GRIDS = {
    "ElasticNet": {"alpha": [round(0.1 * i, 1) for i in range(11)],
                   "lam": [float(v) for v in np.geomspace(1e-4, 1.0, 9)]},
    "DecisionTree": {"max_depth": list(range(1, 101, 10)), "min_leaf": [2, 5, 10]},
    "RandomForest": {"n_trees": [int(v) for v in np.linspace(10, 1000, 10)]},
    "GBT": {"n_trees": [math.ceil(1000 * (i / 5) ** 2) for i in range(1, 6)],
            "learning_rate": [float(v) for v in np.geomspace(0.001, 0.01, 5)],
            "max_depth": [int(round(v)) for v in np.geomspace(3, 15, 3)]},
}

# small grids for single-core runs; same families and ranges, fewer points
FAST_GRIDS = {
    "ElasticNet": {"alpha": [0.0, 0.5, 1.0], "lam": [float(v) for v in np.geomspace(1e-3, 0.3, 6)]},
    "DecisionTree": {"max_depth": [1, 3, 5, 11], "min_leaf": [5, 10]},
    "RandomForest": {"n_trees": [100, 200], "min_leaf": [5]},
    "GBT": {"n_trees": [160, 360, 640], "learning_rate": [0.01], "max_depth": [3]},
}

BOUNDS = {
    "ElasticNet": {"alpha": (0.0, 1.0), "lam": (0.0, math.inf)},
    "DecisionTree": {"max_depth": (1, math.inf), "min_leaf": (1, math.inf)},
    "RandomForest": {"n_trees": (1, math.inf), "min_leaf": (1, math.inf)},
    "GBT": {"n_trees": (0, math.inf), "learning_rate": (1e-12, math.inf),
            "max_depth": (1, math.inf)},
}


# ------------------------------------------------------------ base model
def _as_frame(X) -> pd.DataFrame:
    if isinstance(X, pd.DataFrame):
        return X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return pd.DataFrame(X, columns=[f"x{j}" for j in range(X.shape[1])])


def _prepare(X, y=None):
    """Canonical column order (sorted names) so fits do not depend on it."""
    df = _as_frame(X)
    cols = sorted(df.columns, key=str)
    A = df[cols].to_numpy(dtype=float)
    if not np.isfinite(A).all():
        raise ValueError("non-finite values in X")
    if y is None:
        return cols, A
    yv = np.asarray(y, dtype=float).ravel()
    if not np.isfinite(yv).all():
        raise ValueError("non-finite values in y")
    if len(yv) != len(A):
        raise ValueError("X and y lengths differ")
    return cols, A, yv


class _Model:
    columns: list

    def _matrix(self, X) -> np.ndarray:
        df = _as_frame(X)
        missing = [c for c in self.columns if c not in df.columns]
        if missing:
            raise ValueError(f"missing columns {missing}")
        return df[self.columns].to_numpy(dtype=float)


@dataclass
class LinearModel(_Model):
    intercept: float
    coef: np.ndarray
    columns: list
    n_sweeps: int = 0

    def predict(self, X) -> np.ndarray:
        return self._matrix(X) @ self.coef + self.intercept

    def coefficients(self) -> dict:
        return dict(zip(self.columns, map(float, self.coef)))


def _cd_standardized(Z, yc, alpha, lam, beta, max_sweeps, tol):
    n, p = Z.shape
    G = Z.T @ Z / n
    c = Z.T @ yc / n
    l1 = lam * alpha
    denom = np.diag(G) + lam * (1.0 - alpha)
    active = np.diag(G) > 0
    Gb = G @ beta
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for j in range(p):
            if not active[j]:
                continue
            rho = c[j] - Gb[j] + G[j, j] * beta[j]
            new = np.sign(rho) * max(abs(rho) - l1, 0.0) / denom[j]
            d = new - beta[j]
            if d != 0.0:
                Gb += G[:, j] * d
                beta[j] = new
                delta = max(delta, abs(d))
        if delta < tol:
            return beta, sweep
    return beta, max_sweeps


def fit_elastic_net(X, y, alpha: float, lam: float, max_sweeps: int = 10000,
                    tol: float = 1e-6, warm_start: LinearModel | None = None) -> LinearModel:
    """Coordinate descent for ``1/2 MSE + lam * (alpha*L1 + (1-alpha)/2 * L2)``.

    Columns are standardized (population SD) before fitting; coefficients
    are reported on the original scale.  Constant columns get 0.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    cols, A, yv = _prepare(X, y)
    if len(yv) < 2:
        raise ValueError("need n >= 2")
    mu = A.mean(axis=0)
    sd = A.std(axis=0)
    sd_safe = np.where(sd > 0, sd, 1.0)
    Z = (A - mu) / sd_safe
    Z[:, sd == 0] = 0.0
    ybar = yv.mean()
    beta = np.zeros(A.shape[1])
    if warm_start is not None and warm_start.columns == cols:
        beta = warm_start.coef * sd_safe
    beta, sweeps = _cd_standardized(Z, yv - ybar, alpha, lam, beta, max_sweeps, tol)
    coef = np.where(sd > 0, beta / sd_safe, 0.0)
    return LinearModel(intercept=float(ybar - coef @ mu), coef=coef, columns=cols, n_sweeps=sweeps)


@dataclass
class TreeModel(_Model):
    tree: DecisionTreeRegressor
    columns: list

    def predict(self, X) -> np.ndarray:
        return self.tree.predict(self._matrix(X))


def fit_tree(X, y, max_depth: int | None, min_leaf: int = 1, random_state: int = 0,
             max_features=None) -> TreeModel:
    """Least-squares CART tree; leaves predict the training mean."""
    cols, A, yv = _prepare(X, y)
    if len(yv) < min_leaf:
        raise ValueError("n smaller than min_leaf")
    t = DecisionTreeRegressor(max_depth=max_depth, min_samples_leaf=min_leaf,
                              max_features=max_features, random_state=random_state)
    return TreeModel(tree=t.fit(A, yv), columns=cols)


def _sub_seed(*key) -> int:
    return int(np.random.default_rng([int(k) for k in key]).integers(2**31 - 1))


@dataclass
class ForestModel(_Model):
    trees: list
    columns: list

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        A = self._matrix(X)
        use = self.trees[: n_trees or len(self.trees)]
        return np.mean([t.predict(A) for t in use], axis=0)

    def staged_mean(self, X, sizes) -> dict[int, np.ndarray]:
        """Predictions of every prefix forest listed in ``sizes``."""
        A = self._matrix(X)
        out, acc = {}, np.zeros(len(A))
        want = set(sizes)
        for i, t in enumerate(self.trees, start=1):
            acc += t.predict(A)
            if i in want:
                out[i] = acc / i
        return out


def fit_forest(X, y, n_trees: int, seed: int, max_features="sqrt", min_leaf: int = 1,
               bootstrap: bool = True, max_depth: int | None = None) -> ForestModel:
    """Bagged CART trees with random feature subsets at each split.

    Tree ``t`` uses sub-seed ``(seed, t)`` for its bootstrap sample and
    feature draws, so the first ``m`` trees of a larger forest are exactly
    the forest of size ``m``.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    cols, A, yv = _prepare(X, y)
    n = len(yv)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([int(seed), t])
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = DecisionTreeRegressor(max_depth=max_depth, min_samples_leaf=min_leaf,
                                     max_features=max_features,
                                     random_state=int(rng.integers(2**31 - 1)))
        trees.append(tree.fit(A[idx], yv[idx]))
    return ForestModel(trees=trees, columns=cols)


@dataclass
class GbtModel(_Model):
    init: float
    engine: HistGradientBoostingRegressor | None
    learning_rate: float
    columns: list
    n_trees: int = 0

    def predict(self, X, n_stages: int | None = None) -> np.ndarray:
        A = self._matrix(X)
        stages = self.n_trees if n_stages is None else min(n_stages, self.n_trees)
        if stages == 0:
            return np.full(len(A), self.init)
        if stages == self.n_trees:
            return self.engine.predict(A)
        return self.staged_predict(X, [stages])[stages]

    def staged_predict(self, X, stages) -> dict[int, np.ndarray]:
        A = self._matrix(X)
        want = set(stages)
        out = {0: np.full(len(A), self.init)} if 0 in want else {}
        if self.engine is not None:
            for i, f in enumerate(self.engine.staged_predict(A), start=1):
                if i in want:
                    out[i] = f
        return out

    def train_mse(self, X, y) -> list[float]:
        """Training MSE after 0, 1, ..., n_trees stages."""
        yv = np.asarray(y, dtype=float)
        staged = self.staged_predict(X, range(self.n_trees + 1))
        return [float(np.mean((yv - staged[i]) ** 2)) for i in range(self.n_trees + 1)]


def fit_gbt(X, y, n_trees: int, learning_rate: float, max_depth: int, seed: int = 0,
            min_leaf: int = 1, max_bins: int = 255) -> GbtModel:
    """Least-squares gradient boosting from the mean.

    Each stage fits a depth-limited tree to the current residuals (features
    binned into at most ``max_bins`` quantile bins) and adds
    ``learning_rate`` times its leaf means.
    """
    if learning_rate <= 0:
        raise ValueError("learning_rate must be > 0")
    if n_trees < 0:
        raise ValueError("n_trees must be >= 0")
    cols, A, yv = _prepare(X, y)
    engine = None
    if n_trees > 0:
        engine = HistGradientBoostingRegressor(
            loss="squared_error", learning_rate=learning_rate, max_iter=int(n_trees),
            max_depth=int(max_depth), max_leaf_nodes=None, min_samples_leaf=int(min_leaf),
            l2_regularization=0.0, max_bins=max_bins, early_stopping=False,
            random_state=_sub_seed(seed, 0))
        engine.fit(A, yv)
    return GbtModel(init=float(yv.mean()), engine=engine, learning_rate=learning_rate,
                    columns=cols, n_trees=int(n_trees))


# ------------------------------------------------------------ evaluation
def evaluate(model, X, y) -> tuple[float, float]:
    """(R2, RMSE).  R2 is NaN when y has zero variance."""
    yv = np.asarray(y, dtype=float).ravel()
    if yv.size == 0:
        raise ValueError("empty evaluation set")
    pred = model.predict(X) if hasattr(model, "predict") else np.asarray(model, dtype=float)
    return r2_rmse(yv, pred)


def r2_rmse(y, pred) -> tuple[float, float]:
    y = np.asarray(y, dtype=float)
    sse = float(np.sum((y - pred) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else math.nan
    return r2, math.sqrt(sse / y.size)


@dataclass
class ModelSpec:
    family: str
    hyperparameters: dict

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        for name, v in self.hyperparameters.items():
            lo, hi = BOUNDS[self.family].get(name, (-math.inf, math.inf))
            if name not in BOUNDS[self.family]:
                raise ValueError(f"{self.family} has no hyperparameter {name!r}")
            if not lo <= v <= hi:
                raise ValueError(f"{self.family} {name}={v} outside [{lo}, {hi}]")

    def key(self) -> tuple:
        return tuple(sorted(self.hyperparameters.items()))


@dataclass
class CvMetrics:
    r2: float
    rmse: float
    per_fold: list                 # [(r2, rmse)] for each outer fold
    chosen_spec: ModelSpec
    fold_specs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"r2": self.r2, "rmse": self.rmse,
                "per_fold": [{"r2": a, "rmse": b} for a, b in self.per_fold],
                "chosen": self.chosen_spec.hyperparameters,
                "fold_chosen": [s.hyperparameters for s in self.fold_specs]}


def expand_grid(family: str, grid: dict) -> list[ModelSpec]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must be non-empty")
    names = sorted(grid)
    return [ModelSpec(family, dict(zip(names, vals))) for vals in product(*(grid[k] for k in names))]


def _size_key(spec: ModelSpec) -> tuple:
    """Smaller tuple = smaller model (tie-break order)."""
    h = spec.hyperparameters
    if spec.family == "ElasticNet":
        return (-h["lam"], -h["alpha"])
    if spec.family == "DecisionTree":
        return (h["max_depth"], -h.get("min_leaf", 1))
    if spec.family == "RandomForest":
        return (h["n_trees"], -h.get("min_leaf", 1))
    return (h["n_trees"], h["max_depth"], h["learning_rate"])


def fit_spec(spec: ModelSpec, X, y, seed: int):
    h = spec.hyperparameters
    if spec.family == "ElasticNet":
        return fit_elastic_net(X, y, h["alpha"], h["lam"])
    if spec.family == "DecisionTree":
        return fit_tree(X, y, int(h["max_depth"]), int(h.get("min_leaf", 1)))
    if spec.family == "RandomForest":
        return fit_forest(X, y, int(h["n_trees"]), seed, min_leaf=int(h.get("min_leaf", 1)))
    return fit_gbt(X, y, int(h["n_trees"]), float(h["learning_rate"]), int(h["max_depth"]), seed)


def _grid_predictions(family, specs, Xtr, ytr, Xva, seed) -> dict[tuple, np.ndarray]:
    """Validation predictions for every grid point, sharing fits where possible."""
    out = {}
    if family == "RandomForest":
        by_rest = {}
        for s in specs:
            rest = tuple(sorted((k, v) for k, v in s.hyperparameters.items() if k != "n_trees"))
            by_rest.setdefault(rest, []).append(s)
        for rest, group in by_rest.items():
            sizes = [int(s.hyperparameters["n_trees"]) for s in group]
            m = fit_forest(Xtr, ytr, max(sizes), seed, min_leaf=int(dict(rest).get("min_leaf", 1)))
            staged = m.staged_mean(Xva, sizes)
            for s in group:
                out[s.key()] = staged[int(s.hyperparameters["n_trees"])]
    elif family == "GBT":
        by_rest = {}
        for s in specs:
            h = s.hyperparameters
            by_rest.setdefault((h["learning_rate"], h["max_depth"]), []).append(s)
        for (lr, depth), group in by_rest.items():
            stages = [int(s.hyperparameters["n_trees"]) for s in group]
            m = fit_gbt(Xtr, ytr, max(stages), float(lr), int(depth), seed)
            staged = m.staged_predict(Xva, stages)
            for s in group:
                out[s.key()] = staged[int(s.hyperparameters["n_trees"])]
    elif family == "ElasticNet":
        by_alpha = {}
        for s in specs:
            by_alpha.setdefault(s.hyperparameters["alpha"], []).append(s)
        for alpha, group in by_alpha.items():
            warm = None
            for s in sorted(group, key=lambda s: -s.hyperparameters["lam"]):
                warm = fit_elastic_net(Xtr, ytr, alpha, s.hyperparameters["lam"], warm_start=warm)
                out[s.key()] = warm.predict(Xva)
    else:
        for s in specs:
            out[s.key()] = fit_spec(s, Xtr, ytr, seed).predict(Xva)
    return out


def select_spec(family, specs, X, y, seed, folds: int = 3) -> ModelSpec:
    """Grid point with the lowest inner-CV MSE; ties go to the smallest model."""
    if len(specs) == 1:
        return specs[0]
    X = _as_frame(X).reset_index(drop=True)
    y = np.asarray(y, dtype=float)
    mse = {s.key(): 0.0 for s in specs}
    kf = KFold(n_splits=folds, shuffle=True, random_state=_sub_seed(seed, 1))
    for f, (tr, va) in enumerate(kf.split(X)):
        preds = _grid_predictions(family, specs, X.iloc[tr], y[tr], X.iloc[va],
                                  _sub_seed(seed, 2, f))
        for k, p in preds.items():
            mse[k] += float(np.mean((y[va] - p) ** 2)) / folds
    best = min(mse.values())
    tied = [s for s in specs if mse[s.key()] <= best + 1e-12 * max(1.0, abs(best))]
    return min(tied, key=_size_key)


def grid_search_cv(X, y, family: str, grid: dict, seed: int, outer_folds: int = 5,
                   inner_folds: int = 3) -> CvMetrics:
    """Nested CV: outer folds split students; each training portion picks its
    hyperparameters by inner CV, refits, and is scored on the held-out fold.
    Reported R2/RMSE are means over the outer test folds."""
    specs = expand_grid(family, grid)
    X = _as_frame(X).reset_index(drop=True)
    y = np.asarray(y, dtype=float)
    kf = KFold(n_splits=outer_folds, shuffle=True, random_state=_sub_seed(seed, 0))
    per_fold, chosen = [], []
    for f, (tr, te) in enumerate(kf.split(X)):
        spec = select_spec(family, specs, X.iloc[tr], y[tr], _sub_seed(seed, 10, f), inner_folds)
        model = fit_spec(spec, X.iloc[tr], y[tr], _sub_seed(seed, 20, f))
        per_fold.append(r2_rmse(y[te], model.predict(X.iloc[te])))
        chosen.append(spec)
    counts = Counter(s.key() for s in chosen)
    top = max(counts.values())
    modal = next(s for s in chosen if counts[s.key()] == top)
    return CvMetrics(r2=float(np.mean([a for a, _ in per_fold])),
                     rmse=float(np.mean([b for _, b in per_fold])),
                     per_fold=per_fold, chosen_spec=modal, fold_specs=chosen)


def cv_fold_ids(n: int, seed: int, folds: int = 5) -> np.ndarray:
    """Outer test-fold index of each row, as used by :func:`grid_search_cv`."""
    ids = np.empty(n, dtype=int)
    kf = KFold(n_splits=folds, shuffle=True, random_state=_sub_seed(seed, 0))
    for f, (_, te) in enumerate(kf.split(np.zeros(n))):
        ids[te] = f
    return ids


def write_metrics(metrics: dict[str, CvMetrics], path: str | Path) -> None:
    Path(path).write_text(json.dumps({k: v.to_dict() for k, v in metrics.items()}, indent=2) + "\n")
