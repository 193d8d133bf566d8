"""Sparse multiple canonical correlation analysis.

One weight vector per feature group, found by block-coordinate ascent with
L1-bounded, unit-L2 weights (penalized matrix decomposition style).  Each
block update soft-thresholds the unpenalized update direction and
renormalizes, with the threshold chosen so that ``||w||_1``
meets the group's bound.

Two covariance models are available.  ``"identity"`` treats every
standardized block as if its columns were uncorrelated, so the update
direction is ``sum_j X_i' X_j w_j`` and the objective is the summed
cross-covariance.  ``"within"`` (default) accounts for within-block
correlation: the update direction is premultiplied by the inverse
within-block covariance and the objective is the total pairwise
correlation of the composites.  With no sparsity and two groups the
``"within"`` model converges to classical CCA.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd


@dataclass
class FeatureGroup:
    """A named block of columns, standardized to mean 0 and sample SD 1.

    Constant columns are kept at zero after centering.
    """
    name: str
    columns: list[str]
    data: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def from_frame(cls, name: str, frame: pd.DataFrame) -> "FeatureGroup":
        if frame.shape[1] == 0:
            raise ValueError(f"group {name!r} is empty")
        raw = frame.to_numpy(float)
        if not np.isfinite(raw).all():
            raise ValueError(f"group {name!r} has non-finite values")
        means = raw.mean(axis=0)
        sds = raw.std(axis=0, ddof=1) if len(raw) > 1 else np.zeros(raw.shape[1])
        sds = np.where(sds > 0, sds, 1.0)
        return cls(name, [str(c) for c in frame.columns], (raw - means) / sds, means, sds)

    @property
    def p(self) -> int:
        return len(self.columns)

    @property
    def max_penalty(self) -> float:
        return math.sqrt(self.p)

    def standardize(self, frame: pd.DataFrame) -> np.ndarray:
        if [str(c) for c in frame.columns] != self.columns:
            raise ValueError(f"column mismatch for group {self.name!r}: "
                             f"expected {self.columns}, got {list(frame.columns)}")
        return (frame.to_numpy(float) - self.means) / self.sds


@dataclass
class MccaResult:
    groups: list[FeatureGroup]
    weights: dict[str, np.ndarray]
    composites: pd.DataFrame
    correlations: pd.DataFrame
    penalties: dict[str, float]
    objective_trace: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    covariance: str = "within"
    total_correlation: float = float("nan")

    @property
    def support(self) -> dict[str, int]:
        return {g: int(np.count_nonzero(w)) for g, w in self.weights.items()}

    @property
    def total_support(self) -> int:
        return sum(self.support.values())

    def weight_table(self) -> dict:
        out = {}
        for g in self.groups:
            w = self.weights[g.name]
            out[g.name] = {"weights": {c: float(v) for c, v in zip(g.columns, w)},
                           "penalty": float(self.penalties[g.name]),
                           "support": int(np.count_nonzero(w))}
        return out


def _soft(x: np.ndarray, delta: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - delta, 0.0)


def _unit(x: np.ndarray) -> np.ndarray:
    m = np.abs(x).max() if x.size else 0.0
    if m == 0:
        return np.zeros_like(x, dtype=float)
    x = x / m   # guards against underflow in the norm
    return x / np.linalg.norm(x)


def l1_project(b: np.ndarray, bound: float) -> np.ndarray:
    """Unit-L2 soft-thresholded version of ``b`` with ``||w||_1 <= bound``.

    The threshold is zero when the normalized direction already satisfies
    the bound.  Otherwise it is solved exactly: with the ``k`` largest
    magnitudes active, ``||w||_1 = bound`` is a quadratic in the threshold,
    and ``k`` is the first active-set size whose L1 norm at the lower end
    of its threshold interval exceeds the bound.
    """
    w = _unit(b)
    if not w.any() or np.abs(w).sum() <= bound * (1 + 1e-12):
        return w
    a = np.sort(np.abs(b))[::-1]
    c2 = bound * bound
    for k in range(1, len(a) + 1):
        lo = a[k] if k < len(a) else 0.0
        S1, S2 = a[:k].sum(), (a[:k] ** 2).sum()
        num = S1 - k * lo
        den = math.sqrt(max(S2 - 2 * lo * S1 + k * lo * lo, 0.0))
        if den > 0 and num / den > bound:
            break
    # solve k(k-c2) d^2 - 2 S1 (k-c2) d + S1^2 - c2 S2 = 0 on [lo, a[k-1]]
    hi = a[k - 1]
    A, B, C = k * (k - c2), -2 * S1 * (k - c2), S1 * S1 - c2 * S2
    if abs(A) > 1e-12:
        disc = math.sqrt(max(B * B - 4 * A * C, 0.0))
        roots = [(-B - disc) / (2 * A), (-B + disc) / (2 * A)]
    else:
        roots = [lo]
    inside = [r for r in roots if lo - 1e-12 <= r <= hi + 1e-12]
    delta = min(max(inside[0] if inside else lo, lo), hi)
    if hi - delta <= 1e-12 * a[0]:
        delta = hi
    w = _unit(_soft(b, delta))
    if not w.any() or np.abs(w).sum() > bound * (1 + 1e-9):
        # tied leading magnitudes cannot be thresholded apart: keep the first
        w = np.zeros_like(b, dtype=float)
        j = int(np.argmax(np.abs(b)))
        w[j] = np.sign(b[j])
    return w


def _sign_fix(w: np.ndarray) -> np.ndarray:
    if w.any() and w[np.argmax(np.abs(w))] < 0:
        return -w + 0.0
    return w + 0.0


class _Ascent:
    def __init__(self, blocks: list[np.ndarray], covariance: str, ridge: float):
        n = blocks[0].shape[0]
        self.K = len(blocks)
        self.covariance = covariance
        big = np.hstack(blocks)
        cov = big.T @ big / max(n - 1, 1)
        edges = np.cumsum([0] + [b.shape[1] for b in blocks])
        self.S = [[cov[edges[i]:edges[i + 1], edges[j]:edges[j + 1]]
                   for j in range(self.K)] for i in range(self.K)]
        self.inv = []
        for i in range(self.K):
            Sii = self.S[i][i]
            if covariance == "within":
                self.inv.append(np.linalg.pinv(Sii + ridge * np.eye(len(Sii)), hermitian=True))
            else:
                self.inv.append(None)

    def _var(self, i: int, w: np.ndarray) -> float:
        return float(w @ self.S[i][i] @ w)

    def _scaled(self, i: int, w: np.ndarray) -> np.ndarray:
        if self.covariance == "identity":
            return w
        v = self._var(i, w)
        return w / math.sqrt(v) if v > 1e-300 else np.zeros_like(w)

    def objective(self, W: list[np.ndarray]) -> float:
        Z = [self._scaled(i, w) for i, w in enumerate(W)]
        return float(sum(Z[i] @ self.S[i][j] @ Z[j] for i, j in combinations(range(self.K), 2)))

    def direction(self, i: int, W: list[np.ndarray]) -> np.ndarray:
        a = sum(self.S[i][j] @ self._scaled(j, W[j]) for j in range(self.K) if j != i)
        return a if self.covariance == "identity" else self.inv[i] @ a


def sparse_mcca(groups: Sequence[FeatureGroup], penalties: Sequence[float] | dict | None = None,
                max_iters: int = 25, seed: int = 0, tol: float = 1e-6,
                covariance: str = "within", ridge: float = 1e-8) -> MccaResult:
    """Fit one sparse canonical weight vector per group.

    Parameters
    ----------
    groups : two or more FeatureGroup sharing a row count.
    penalties : L1 bound per group, each in ``[1, sqrt(p_g)]``.  ``None``
        means no sparsity (every bound at its maximum).
    max_iters : number of full sweeps over the blocks.
    seed : breaks ties in the singular-vector initialization when a block
        has no variance.
    tol : stop when the relative change of the objective over a sweep is
        below this value.
    covariance : ``"within"`` or ``"identity"``, see the module docstring.

    Returns
    -------
    MccaResult whose ``objective_trace`` holds the objective after the
    initialization and after every block update.
    """
    groups = list(groups)
    if len(groups) < 2:
        raise ValueError("sparse_mcca needs at least two groups")
    if covariance not in ("within", "identity"):
        raise ValueError(f"unknown covariance model {covariance!r}")
    n = groups[0].data.shape[0]
    names = [g.name for g in groups]
    if len(set(names)) != len(names):
        raise ValueError("group names must be unique")
    for g in groups:
        if g.p == 0:
            raise ValueError(f"group {g.name!r} is empty")
        if g.data.shape[0] != n:
            raise ValueError("groups must share a row count")
    if penalties is None:
        pen = [g.max_penalty for g in groups]
    elif isinstance(penalties, dict):
        pen = [float(penalties[g.name]) for g in groups]
    else:
        pen = [float(c) for c in penalties]
    if len(pen) != len(groups):
        raise ValueError("one penalty per group required")
    for g, c in zip(groups, pen):
        if not (1.0 - 1e-12 <= c <= g.max_penalty + 1e-12):
            raise ValueError(f"penalty {c} for group {g.name!r} outside [1, {g.max_penalty:.4g}]")

    rng = np.random.default_rng(seed)
    W = []
    for g, c in zip(groups, pen):
        _, s, vt = np.linalg.svd(g.data, full_matrices=False)
        v = vt[0] if s.size and s[0] > 0 else rng.standard_normal(g.p)
        W.append(l1_project(_sign_fix(v), c))

    asc = _Ascent([g.data for g in groups], covariance, ridge)
    obj = asc.objective(W)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        start = obj
        for i in range(len(groups)):
            cand = l1_project(asc.direction(i, W), pen[i])
            trial = W[:i] + [cand] + W[i + 1:]
            new = asc.objective(trial)
            # keep the incumbent when the thresholded step would lose ground
            if new >= obj:
                W, obj = trial, new
            trace.append(obj)
        if abs(obj - start) <= tol * max(abs(start), 1e-12):
            converged = True
            break

    # total correlation before the sign convention flips any block
    raw = _corr(pd.DataFrame({g.name: g.data @ w for g, w in zip(groups, W)}))
    total = float(np.nansum(raw.to_numpy()[np.triu_indices(len(groups), k=1)]))
    W = [_sign_fix(w) for w in W]
    weights = {g.name: w for g, w in zip(groups, W)}
    comp = pd.DataFrame({g.name: g.data @ w for g, w in zip(groups, W)})
    return MccaResult(groups=groups, weights=weights, composites=comp,
                      correlations=_corr(comp), penalties=dict(zip(names, pen)),
                      objective_trace=trace, n_iter=it, converged=converged,
                      covariance=covariance, total_correlation=total)


def _corr(comp: pd.DataFrame) -> pd.DataFrame:
    X = comp.to_numpy()
    sd = X.std(axis=0)
    k = X.shape[1]
    out = np.full((k, k), np.nan)
    Xc = X - X.mean(axis=0)
    for i in range(k):
        for j in range(k):
            if sd[i] > 0 and sd[j] > 0:
                out[i, j] = float(Xc[:, i] @ Xc[:, j] / (len(X) * sd[i] * sd[j]))
    return pd.DataFrame(out, index=comp.columns, columns=comp.columns)


def _penalty_vector(point, groups: list[FeatureGroup]) -> list[float]:
    """A grid point is a fraction in (0, 1] of each group's maximum bound,
    or an explicit per-group sequence / mapping of bounds."""
    if isinstance(point, dict):
        return [float(point[g.name]) for g in groups]
    if np.isscalar(point):
        s = float(point)
        if not 0 < s <= 1:
            raise ValueError(f"penalty fraction {s} outside (0, 1]")
        return [max(1.0, s * g.max_penalty) for g in groups]
    return [float(c) for c in point]


@dataclass
class GridSearchResult:
    penalties: dict[str, float]
    result: MccaResult
    diagnostics: list[dict]
    screened: bool


def mcca_grid_search(groups: Sequence[FeatureGroup], penalty_grid: Sequence,
                     max_iters: int = 25, seed: int = 0, max_support: float = 0.5,
                     covariance: str = "within") -> GridSearchResult:
    """Choose penalties by total pairwise composite correlation.

    Candidates whose total support exceeds ``max_support`` of all columns
    are screened out; ties in correlation go to the smaller support.  When
    nothing survives the screen the best-correlation point is used and a
    warning is raised.
    """
    groups = list(groups)
    grid = list(penalty_grid)
    if not grid:
        raise ValueError("empty penalty grid")
    total_cols = sum(g.p for g in groups)
    fits, diag = [], []
    for idx, point in enumerate(grid):
        pen = _penalty_vector(point, groups)
        res = sparse_mcca(groups, pen, max_iters=max_iters, seed=seed, covariance=covariance)
        ok = res.total_support <= max_support * total_cols
        fits.append(res)
        diag.append({"index": idx, "penalties": dict(zip([g.name for g in groups], pen)),
                     "total_correlation": res.total_correlation,
                     "support": res.total_support, "passes_screen": bool(ok)})
    pool = [d for d in diag if d["passes_screen"]]
    screened = bool(pool)
    if not pool:
        warnings.warn(f"no penalty point has support <= {max_support:.0%} of columns; "
                      "using the best-correlation point")
        pool = diag
    best = min(pool, key=lambda d: (-round(d["total_correlation"], 9), d["support"], d["index"]))
    return GridSearchResult(best["penalties"], fits[best["index"]], diag, screened)


def composite_scores(result: MccaResult, blocks: dict[str, pd.DataFrame] | Sequence[pd.DataFrame]
                     ) -> pd.DataFrame:
    """Project new raw data blocks onto the fitted weights.

    Blocks are standardized with the training means and SDs, so the
    training blocks reproduce the training composites.
    """
    if not isinstance(blocks, dict):
        blocks = dict(zip([g.name for g in result.groups], blocks))
    missing = [g.name for g in result.groups if g.name not in blocks]
    if missing:
        raise ValueError(f"missing blocks: {missing}")
    index = None
    out = {}
    for g in result.groups:
        frame = blocks[g.name]
        if index is None:
            index = frame.index
        elif not frame.index.equals(index):
            raise ValueError("blocks must share a row index")
        out[g.name] = g.standardize(frame) @ result.weights[g.name]
    return pd.DataFrame(out, index=index)


def groups_from_frame(X: pd.DataFrame, families: dict[str, list[str]]) -> list[FeatureGroup]:
    return [FeatureGroup.from_frame(name, X[cols]) for name, cols in families.items()]


def write_mcca(result: MccaResult, composites: pd.DataFrame, directory: str | Path,
               diagnostics: list[dict] | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    comp = composites.copy()
    comp.index.name = "student_id"
    comp.to_csv(directory / "composites.csv", float_format="%.12g", lineterminator="\n")
    payload = {"covariance": result.covariance,
               "total_correlation": result.total_correlation,
               "n_iter": result.n_iter, "converged": result.converged,
               "groups": result.weight_table()}
    if diagnostics is not None:
        payload["grid"] = diagnostics
    (directory / "mcca_weights.json").write_text(json.dumps(payload, indent=2) + "\n")
