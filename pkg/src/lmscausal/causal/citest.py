"""Conditional independence tests used by the structure searches.

Both tests are exposed as plain functions and as small callable classes that
cache work across the many queries a search issues.  A test object is called
as ``test(x, y, cond)`` with column names and returns a :class:`CIResult`.
"""

from __future__ import annotations

import logging
import math
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy import stats

logger = logging.getLogger(__name__)


class CIResult(NamedTuple):
    p: float
    independent: bool
    statistic: float
    singular: bool = False


def _as_frame(data) -> pd.DataFrame:
    if isinstance(data, pd.DataFrame):
        return data
    arr = np.asarray(data, dtype=float)
    return pd.DataFrame(arr, columns=list(range(arr.shape[1])))


def fisher_z_from_corr(r: float, n: int, n_cond: int) -> tuple[float, float]:
    """Return ``(statistic, two-sided p)`` for a (partial) correlation ``r``."""
    r = float(np.clip(r, -1 + 1e-15, 1 - 1e-15))
    z = 0.5 * math.log((1 + r) / (1 - r))
    stat = math.sqrt(n - n_cond - 3) * abs(z)
    return stat, float(2 * stats.norm.sf(stat))


class FisherZ:
    """Fisher-z partial correlation test on a cached correlation matrix."""

    def __init__(self, data, alpha: float = 0.05):
        df = _as_frame(data)
        self.columns = list(df.columns)
        self._index = {c: k for k, c in enumerate(self.columns)}
        x = df.to_numpy(dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("Fisher-z test requires finite continuous data")
        self.n = x.shape[0]
        self.corr = np.corrcoef(x, rowvar=False) if x.shape[1] > 1 else np.ones((1, 1))
        self.alpha = alpha

    def partial_corr(self, x, y, cond: Sequence = ()) -> tuple[float, bool]:
        idx = [self._index[v] for v in (x, y, *cond)]
        sub = self.corr[np.ix_(idx, idx)]
        if not np.all(np.isfinite(sub)):
            return 0.0, True
        if len(idx) == 2:
            return float(sub[0, 1]), abs(sub[0, 1]) >= 1 - 1e-12
        if np.linalg.cond(sub) > 1e12:
            return 0.0, True
        prec = np.linalg.inv(sub)
        r = -prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1])
        return float(r), False

    def __call__(self, x, y, cond: Sequence = ()) -> CIResult:
        cond = tuple(cond)
        if self.n <= len(cond) + 3:
            raise ValueError(f"need n > |cond| + 3 (n={self.n}, |cond|={len(cond)})")
        r, singular = self.partial_corr(x, y, cond)
        if singular:
            return CIResult(0.0, False, math.inf, True)
        stat, p = fisher_z_from_corr(r, self.n, len(cond))
        return CIResult(p, p > self.alpha, stat)


def fisher_z_test(data, i, j, cond: Sequence = (), alpha: float = 0.05) -> CIResult:
    """Test ``i`` independent of ``j`` given ``cond`` for jointly Gaussian data.

    Parameters
    ----------
    data : DataFrame or array of shape (n, p)
        Continuous variables; ``i``, ``j`` and ``cond`` are column labels
        (integer positions for arrays).
    alpha : float
        Independence is declared when ``p > alpha``.
    """
    return FisherZ(data, alpha)(i, j, cond)


def _is_categorical(s: pd.Series) -> bool:
    return isinstance(s.dtype, pd.CategoricalDtype) or s.dtype == object or s.dtype == bool


class MixedCI:
    """Nested-regression F test for mixed continuous/categorical data.

    Categorical columns (object, bool or ``category`` dtype, or listed in
    ``categorical``) are dummy coded with the first observed level dropped.
    """

    def __init__(self, data: pd.DataFrame, alpha: float = 0.05,
                 categorical: Sequence[str] | None = None):
        self.data = data
        self.alpha = alpha
        cats = set(categorical or ())
        cats |= {c for c in data.columns if _is_categorical(data[c])}
        self.categorical = cats
        self.n = len(data)
        self._blocks: dict = {}
        for c in data.columns:
            self._blocks[c] = self._block(c)

    def _block(self, col) -> np.ndarray:
        s = self.data[col]
        if col not in self.categorical:
            return s.to_numpy(dtype=float)[:, None]
        if isinstance(s.dtype, pd.CategoricalDtype):
            unused = [c for c in s.cat.categories if not (s == c).any()]
            if unused:
                logger.warning("column %s: dropping categories with zero count %s", col, unused)
        levels = sorted(pd.unique(s.astype(str)))
        vals = s.astype(str).to_numpy()
        return np.column_stack([(vals == lv).astype(float) for lv in levels[1:]]) \
            if len(levels) > 1 else np.zeros((self.n, 0))

    def _rss(self, y: np.ndarray, design: np.ndarray) -> tuple[float, int]:
        beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ beta
        return float(resid @ resid), int(rank)

    def _f_test(self, y: np.ndarray, base: np.ndarray, extra: np.ndarray) -> tuple[float, float]:
        rss0, r0 = self._rss(y, base)
        full = np.column_stack([base, extra])
        rss1, r1 = self._rss(y, full)
        q = r1 - r0
        dof = self.n - r1
        if q <= 0 or dof <= 0:
            return 0.0, 1.0
        if rss1 <= 1e-12 * max(rss0, 1e-300):
            return math.inf, 0.0 if rss0 > 1e-12 else 1.0
        f = ((rss0 - rss1) / q) / (rss1 / dof)
        return float(f), float(stats.f.sf(f, q, dof))

    def __call__(self, x, y, cond: Sequence = ()) -> CIResult:
        base = np.column_stack([np.ones(self.n)] + [self._blocks[c] for c in cond])
        xb, yb = self._blocks[x], self._blocks[y]
        if xb.shape[1] == 0 or yb.shape[1] == 0:
            return CIResult(1.0, True, 0.0)
        if x in self.categorical and y not in self.categorical:
            x, y, xb, yb = y, x, yb, xb
        if x not in self.categorical:
            f, p = self._f_test(xb[:, 0], base, yb)
        else:
            # both categorical: one regression per dummy of x, Bonferroni-combined
            ps, fs = [], []
            for k in range(xb.shape[1]):
                f, pk = self._f_test(xb[:, k], base, yb)
                ps.append(pk)
                fs.append(f)
            p = min(1.0, min(ps) * len(ps))
            f = max(fs)
        return CIResult(p, p > self.alpha, f)


def mixed_ci_test(data: pd.DataFrame, i, j, cond: Sequence = (), alpha: float = 0.05,
                  categorical: Sequence[str] | None = None) -> CIResult:
    """Conditional independence of ``i`` and ``j`` given ``cond`` for mixed data.

    The continuous member is regressed on ``cond`` with and without the other
    variable's block and the residual sums are compared with an F test.
    """
    cols = list(dict.fromkeys([i, j, *cond]))
    return MixedCI(data[cols], alpha, categorical)(i, j, cond)
