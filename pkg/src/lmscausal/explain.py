"""Feature importance: correlation-based LIME, univariate correlations and
group-wise OLS with t-test significance."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

DEFAULT_SCALE = 0.3
DEFAULT_SAMPLES = 500


@dataclass
class ImportanceReport:
    scope: str
    method: str                      # "LIME" | "Correlation" | "Regression"
    per_feature: dict                # feature -> (signed importance, magnitude)
    n: int = 0
    flagged: list = field(default_factory=list)

    def signed(self) -> pd.Series:
        return pd.Series({k: v[0] for k, v in self.per_feature.items()})

    def magnitude(self) -> pd.Series:
        return pd.Series({k: v[1] for k, v in self.per_feature.items()})

    def to_dict(self) -> dict:
        return {"scope": self.scope, "method": self.method, "n": self.n,
                "flagged": self.flagged,
                "features": {k: {"signed": float(a), "magnitude": float(b)}
                             for k, (a, b) in self.per_feature.items()}}

    def records(self) -> list[dict]:
        return [{"feature": k, "group": self.scope, "method": self.method, "value": float(a),
                 "magnitude": float(b)} for k, (a, b) in self.per_feature.items()]


def _indicator_columns(X: pd.DataFrame) -> list[str]:
    return [c for c in X.columns if set(np.unique(X[c].to_numpy())) <= {0.0, 1.0}]


class _Perturber:
    """Draws the neighbourhood of one row: Gaussian noise of ``scale`` times the
    training SD on numeric columns, independent Bernoulli draws from the
    training marginals on 0/1 indicator columns."""

    def __init__(self, background: pd.DataFrame, scale: float):
        self.columns = list(background.columns)
        ind = set(_indicator_columns(background))
        self.is_ind = np.array([c in ind for c in self.columns])
        self.sd = background.std(ddof=1).to_numpy(dtype=float)
        self.sd = np.nan_to_num(self.sd)
        self.p = background.mean().to_numpy(dtype=float)
        self.scale = scale

    def draw(self, x: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        Z = x[None, :] + rng.normal(size=(n, len(x))) * (self.scale * self.sd)[None, :]
        if self.is_ind.any():
            u = rng.random((n, int(self.is_ind.sum())))
            Z[:, self.is_ind] = (u < self.p[self.is_ind][None, :]).astype(float)
        return Z


def _corr_columns(Z: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson r of each column of ``Z`` with ``f``; 0 (flagged) where undefined."""
    Zc = Z - Z.mean(axis=0)
    fc = f - f.mean()
    den = np.sqrt((Zc ** 2).sum(axis=0) * (fc ** 2).sum())
    bad = den <= 1e-12 * max(1.0, float(np.abs(f).max()) if f.size else 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(bad, 0.0, (Zc * fc[:, None]).sum(axis=0) / np.where(bad, 1.0, den))
    return np.clip(r, -1.0, 1.0), bad


def _row_seed(seed: int, row: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(row)])


def _predict(model, Z: np.ndarray, columns) -> np.ndarray:
    if hasattr(model, "predict"):
        return np.asarray(model.predict(pd.DataFrame(Z, columns=columns)), dtype=float)
    return np.asarray(model(pd.DataFrame(Z, columns=columns)), dtype=float)


def lime_local(model, x, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
               background: pd.DataFrame | None = None, scale: float = DEFAULT_SCALE,
               row: int = 0) -> pd.Series:
    """Signed importance of each feature around one sample.

    The model scores ``n_samples`` perturbed copies of ``x``; a feature's
    importance is the Pearson correlation between its perturbed values and
    the predictions.  Features whose correlation is undefined get 0 and are
    listed in ``result.attrs["flagged"]``.
    """
    if n_samples < 30:
        raise ValueError("n_samples must be >= 30")
    if background is None:
        raise ValueError("background data required for perturbation scales")
    x = x if isinstance(x, pd.Series) else pd.Series(np.asarray(x, dtype=float),
                                                      index=background.columns)
    pert = _Perturber(background[list(x.index)], scale)
    Z = pert.draw(x.to_numpy(dtype=float), n_samples, _row_seed(seed, row))
    r, bad = _corr_columns(Z, _predict(model, Z, pert.columns))
    out = pd.Series(r, index=pert.columns, name="importance")
    out.attrs["flagged"] = [c for c, b in zip(pert.columns, bad) if b]
    return out


def lime_local_batch(model, X: pd.DataFrame, n_samples: int, seed: int,
                     background: pd.DataFrame, scale: float = DEFAULT_SCALE,
                     rows=None, chunk_rows: int = 40000) -> tuple[np.ndarray, np.ndarray]:
    """:func:`lime_local` for every row of ``X`` with one model call per chunk.

    ``rows`` gives each row's seed index (defaults to 0..n-1) so results do
    not depend on how rows are grouped.  Returns (importances, flags), each
    of shape (n_rows, n_features).
    """
    pert = _Perturber(background[list(X.columns)], scale)
    A = X.to_numpy(dtype=float)
    rows = np.arange(len(A)) if rows is None else np.asarray(rows)
    out = np.zeros(A.shape)
    flags = np.zeros(A.shape, dtype=bool)
    per_chunk = max(1, chunk_rows // n_samples)
    for start in range(0, len(A), per_chunk):
        idx = range(start, min(start + per_chunk, len(A)))
        Zs = [pert.draw(A[i], n_samples, _row_seed(seed, rows[i])) for i in idx]
        preds = _predict(model, np.vstack(Zs), pert.columns)
        for k, i in enumerate(idx):
            out[i], flags[i] = _corr_columns(Zs[k], preds[k * n_samples:(k + 1) * n_samples])
    return out, flags


def lime_global(model, X: pd.DataFrame, group_mask=None, n_samples: int = DEFAULT_SAMPLES,
                seed: int = 0, background: pd.DataFrame | None = None,
                scale: float = DEFAULT_SCALE, scope: str = "All") -> ImportanceReport:
    """Aggregate local importances over a group: signed = mean, magnitude =
    mean absolute value.  Row ``i`` of ``X`` always uses sub-seed ``(seed, i)``."""
    mask = np.ones(len(X), dtype=bool) if group_mask is None else np.asarray(group_mask, dtype=bool)
    if not mask.any():
        raise ValueError(f"empty group {scope!r}")
    background = X if background is None else background
    rows = np.flatnonzero(mask)
    imp, flags = lime_local_batch(model, X.iloc[rows], n_samples, seed, background, scale, rows)
    return _report_from_locals(imp, flags, list(X.columns), scope)


def _report_from_locals(imp, flags, columns, scope) -> ImportanceReport:
    signed = imp.mean(axis=0)
    mag = np.abs(imp).mean(axis=0)
    return ImportanceReport(scope=scope, method="LIME", n=len(imp),
                            per_feature={c: (float(a), float(b)) for c, a, b in zip(columns, signed, mag)},
                            flagged=[c for c, f in zip(columns, flags.all(axis=0)) if f])


def lime_groups(model, X: pd.DataFrame, groups: dict, n_samples: int = DEFAULT_SAMPLES,
                seed: int = 0, scale: float = DEFAULT_SCALE) -> list[ImportanceReport]:
    """LIME reports for several (possibly overlapping) groups from one pass over X."""
    imp, flags = lime_local_batch(model, X, n_samples, seed, X, scale)
    out = []
    for name, mask in groups.items():
        m = np.asarray(mask, dtype=bool)
        if m.any():
            out.append(_report_from_locals(imp[m], flags[m], list(X.columns), name))
    return out


def correlation_importance(X: pd.DataFrame, y, group_mask=None, scope: str = "All") -> ImportanceReport:
    """Pearson correlation of each feature with ``y`` inside the group."""
    mask = np.ones(len(X), dtype=bool) if group_mask is None else np.asarray(group_mask, dtype=bool)
    if mask.sum() < 3:
        raise ValueError(f"group {scope!r} has fewer than 3 members")
    A = X.to_numpy(dtype=float)[mask]
    r, bad = _corr_columns(A, np.asarray(y, dtype=float)[mask])
    return ImportanceReport(scope=scope, method="Correlation", n=int(mask.sum()),
                            per_feature={c: (float(v), float(abs(v))) for c, v in zip(X.columns, r)},
                            flagged=[c for c, b in zip(X.columns, bad) if b])


@dataclass
class RegressionResult:
    scope: str
    coefficients: dict          # name -> estimate (includes "intercept")
    std_errors: dict
    p_values: dict
    dropped: list
    n: int
    alpha: float = 0.05

    def stars(self) -> dict:
        return {k: p < self.alpha for k, p in self.p_values.items()}

    def formatted(self) -> dict:
        return {k: f"{v:.3f}{'*' if self.p_values[k] < self.alpha else ''}"
                for k, v in self.coefficients.items()}

    def report(self) -> ImportanceReport:
        return ImportanceReport(scope=self.scope, method="Regression", n=self.n,
                                per_feature={k: (v, abs(v)) for k, v in self.coefficients.items()
                                             if k != "intercept"})

    def to_dict(self) -> dict:
        return {"scope": self.scope, "n": self.n, "dropped": self.dropped,
                "terms": {k: {"estimate": self.coefficients[k], "se": self.std_errors[k],
                              "p": self.p_values[k], "star": self.p_values[k] < self.alpha}
                          for k in self.coefficients}}


def group_regression(X: pd.DataFrame, y, group_mask=None, scope: str = "All",
                     alpha: float = 0.05) -> RegressionResult:
    """OLS with intercept inside the group; two-sided t-test p-values.

    Columns that are linear combinations of earlier ones (or constant) are
    dropped with a warning.
    """
    mask = np.ones(len(X), dtype=bool) if group_mask is None else np.asarray(group_mask, dtype=bool)
    A = X.to_numpy(dtype=float)[mask]
    yv = np.asarray(y, dtype=float)[mask]
    n = len(yv)
    keep, dropped = [], []
    D = np.ones((n, 1))
    for j, c in enumerate(X.columns):
        trial = np.column_stack([D, A[:, j]])
        if np.linalg.matrix_rank(trial) > D.shape[1]:
            D = trial
            keep.append(c)
        else:
            dropped.append(c)
    if dropped:
        warnings.warn(f"dropping collinear columns: {dropped}")
    p = D.shape[1]
    if n <= p:
        raise ValueError(f"group {scope!r} has {n} rows for {p} parameters")
    beta, *_ = np.linalg.lstsq(D, yv, rcond=None)
    resid = yv - D @ beta
    s2 = float(resid @ resid) / (n - p)
    se = np.sqrt(np.diag(np.linalg.inv(D.T @ D)) * s2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.inf)
    pv = 2.0 * stats.t.sf(np.abs(t), df=n - p)
    names = ["intercept"] + keep
    return RegressionResult(scope=scope, coefficients=dict(zip(names, map(float, beta))),
                            std_errors=dict(zip(names, map(float, se))),
                            p_values=dict(zip(names, map(float, pv))),
                            dropped=dropped, n=n, alpha=alpha)


def student_groups(students: pd.DataFrame) -> dict[str, np.ndarray]:
    """Masks for the reporting groups: all students, GPA bands, gender,
    admit type and ethnicity."""
    g = students["end_term_gpa"].to_numpy(dtype=float)
    out = {"All": np.ones(len(students), dtype=bool),
           "GPA <= 2": g <= 2.0, "2 < GPA <= 3": (g > 2.0) & (g <= 3.0), "GPA > 3": g > 3.0}
    for col in ("gender", "admit_type", "ethnicity"):
        for level in sorted(students[col].astype(str).unique()):
            out[level] = (students[col].astype(str) == level).to_numpy()
    return out


def write_importance(reports: list[ImportanceReport], regressions: list[RegressionResult],
                     directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {"reports": [r.to_dict() for r in reports],
           "regressions": [r.to_dict() for r in regressions]}
    (directory / "importance.json").write_text(json.dumps(doc, indent=2) + "\n")
    rows = [rec for r in reports for rec in r.records()]
    pd.DataFrame(rows, columns=["feature", "group", "method", "value", "magnitude"]).to_csv(
        directory / "importance.csv", index=False, float_format="%.10g", lineterminator="\n")
