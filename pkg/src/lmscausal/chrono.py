"""Chronotype clustering: X-means over DTW distances on hourly login profiles,
with DTW barycenter averaging for centroids, and chi-square association tests."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

DEFAULT_BAND = 3
SENTINEL = -1
GPA_BANDS = ("<=2", "2-3", ">3")


# ------------------------------------------------------------------- DTW
def _dtw_table(X: np.ndarray, c: np.ndarray, band: int) -> np.ndarray:
    """Accumulated squared-cost tables of every row of ``X`` against ``c``.

    Returns an array of shape (n, L+1, L+1); entry [:, i, j] is the minimal
    cost of aligning c[:i] with x[:j].  Cells outside the Sakoe-Chiba band
    stay infinite.
    """
    n, L = X.shape
    if c.shape != (L,):
        raise ValueError("sequences must have equal length")
    if band < 0:
        raise ValueError("band must be >= 0")
    D = np.full((n, L + 1, L + 1), np.inf)
    D[:, 0, 0] = 0.0
    for i in range(1, L + 1):
        for j in range(max(1, i - band), min(L, i + band) + 1):
            cost = (X[:, j - 1] - c[i - 1]) ** 2
            D[:, i, j] = cost + np.minimum(np.minimum(D[:, i - 1, j], D[:, i, j - 1]),
                                           D[:, i - 1, j - 1])
    return D


def dtw_many(X, c, band: int = DEFAULT_BAND) -> np.ndarray:
    """DTW distance from each row of ``X`` to ``c``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    c = np.asarray(c, dtype=float)
    L = X.shape[1]
    return np.sqrt(_dtw_table(X, c, band)[:, L, L])


def dtw_distance(a, b, band: int = DEFAULT_BAND) -> float:
    """Square root of the minimal accumulated squared difference over monotone
    alignments within a Sakoe-Chiba band of half-width ``band``.

    Steps are (1,0), (0,1) and (1,1) with unit weight, so the measure is
    symmetric and never exceeds the Euclidean distance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("dtw_distance needs two 1-D sequences of equal length")
    return float(dtw_many(b[None, :], a, band)[0])


def _dtw_pairwise(X: np.ndarray, C: np.ndarray, band: int) -> np.ndarray:
    return np.column_stack([dtw_many(X, c, band) for c in C]) if len(C) else np.zeros((len(X), 0))


def _align_sums(X: np.ndarray, c: np.ndarray, band: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backtrack optimal paths of every row of ``X`` against ``c``.

    Returns per-centroid-position sums and counts of aligned member values,
    plus each member's squared DTW cost.
    """
    n, L = X.shape
    D = _dtw_table(X, c, band)
    sums = np.zeros(L)
    counts = np.zeros(L)
    i = np.full(n, L)
    j = np.full(n, L)
    rows = np.arange(n)
    active = np.ones(n, dtype=bool)
    while active.any():
        r, ii, jj = rows[active], i[active], j[active]
        np.add.at(sums, ii - 1, X[r, jj - 1])
        np.add.at(counts, ii - 1, 1.0)
        done = (ii == 1) & (jj == 1)
        # predecessors: diagonal preferred on ties
        diag = D[r, ii - 1, jj - 1]
        up = D[r, ii - 1, jj]
        left = D[r, ii, jj - 1]
        step_i = np.where((diag <= up) & (diag <= left), 1, np.where(up <= left, 1, 0))
        step_j = np.where((diag <= up) & (diag <= left), 1, np.where(up <= left, 0, 1))
        i[r] = np.where(done, ii, ii - step_i)
        j[r] = np.where(done, jj, jj - step_j)
        active[r[done]] = False
    return sums, counts, D[:, L, L]


def dba_centroid(profiles, init=None, max_iters: int = 10, band: int = DEFAULT_BAND,
                 tol: float = 1e-9, return_costs: bool = False):
    """DTW barycenter averaging.

    Each iteration aligns every profile to the current centroid and replaces
    each centroid position by the mean of the values aligned to it.  The
    total squared DTW cost never increases.  Stops when the centroid moves
    less than ``tol`` or after ``max_iters`` updates.
    """
    X = np.atleast_2d(np.asarray(profiles, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("dba_centroid needs at least one profile")
    c = X.mean(axis=0) if init is None else np.asarray(init, dtype=float).copy()
    costs = []
    for _ in range(max_iters):
        sums, counts, cost = _align_sums(X, c, band)
        costs.append(float(cost.sum()))
        new = sums / counts
        moved = np.max(np.abs(new - c))
        c = new
        if moved < tol:
            break
    costs.append(float((dtw_many(X, c, band) ** 2).sum()))
    return (c, costs) if return_costs else c


# --------------------------------------------------------------- X-means
@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: pd.Series
    bic: float
    seed: int
    band: int = DEFAULT_BAND
    history: list = field(default_factory=list)   # (k, bic) of each visited model

    def sizes(self) -> dict[int, int]:
        vc = self.labels[self.labels >= 0].value_counts()
        return {int(k): int(vc.get(k, 0)) for k in range(self.k)}

    def predict(self, profiles) -> np.ndarray:
        X = np.atleast_2d(np.asarray(profiles, dtype=float))
        return np.argmin(_dtw_pairwise(X, self.centroids, self.band), axis=1)

    def to_dict(self) -> dict:
        return {"k": self.k, "bic": self.bic, "seed": self.seed, "band": self.band,
                "sizes": {str(k): v for k, v in self.sizes().items()},
                "centroids": [list(map(float, c)) for c in self.centroids],
                "history": [[int(k), float(b)] for k, b in self.history]}


def spherical_bic(sq_dist: np.ndarray, labels: np.ndarray, k: int, dims: int) -> float:
    """BIC of a hard-assignment mixture of spherical Gaussians.

    ``sq_dist`` holds each point's squared distance to its centroid.  The
    clusters share the pooled variance ``sum(sq_dist) / (dims * (n - k))``;
    the penalty counts ``k * (dims + 1)`` free parameters.

    A per-cluster variance would reward separating noisy (low-count)
    profiles from clean ones, which is not chronotype structure.
    """
    n = sq_dist.size
    if n <= k:
        return -np.inf
    var = max(float(sq_dist.sum()) / (dims * (n - k)), 1e-12)
    sizes = np.bincount(labels, minlength=k).astype(float)
    sizes = sizes[sizes > 0]
    ll = (float(np.sum(sizes * np.log(sizes / n)))
          - 0.5 * n * dims * np.log(2 * np.pi * var)
          - float(sq_dist.sum()) / (2 * var))
    return float(ll - 0.5 * k * (dims + 1) * np.log(n))


def partition_bic(X: np.ndarray, labels: np.ndarray, k: int) -> float:
    """:func:`spherical_bic` of a partition, using squared Euclidean residuals
    from each cluster's arithmetic mean.

    Warped (DTW) residuals are not Gaussian residuals: the warp absorbs part
    of the noise, so a likelihood built on them rewards every split.  DTW
    decides the partition; the BIC judges it in the original space.
    """
    sq = np.zeros(len(X))
    for j in range(k):
        m = labels == j
        if m.any():
            sq[m] = ((X[m] - X[m].mean(axis=0)) ** 2).sum(axis=1)
    return spherical_bic(sq, labels, k, X.shape[1])


def _kmeans(X, C, band, max_iter=20):
    C = np.array(C, dtype=float)
    labels = None
    for _ in range(max_iter):
        dist = _dtw_pairwise(X, C, band)
        new = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(C)):
            members = X[labels == j]
            if len(members):
                sums, counts, _ = _align_sums(members, C[j], band)
                C[j] = sums / counts
    dist = _dtw_pairwise(X, C, band)
    labels = np.argmin(dist, axis=1)
    return C, labels, dist[np.arange(len(X)), labels] ** 2


def _kmeanspp(X, k, band, rng):
    idx = [int(rng.integers(len(X)))]
    d2 = dtw_many(X, X[idx[0]], band) ** 2
    for _ in range(1, k):
        p = d2 / d2.sum() if d2.sum() > 0 else np.full(len(X), 1 / len(X))
        idx.append(int(rng.choice(len(X), p=p)))
        d2 = np.minimum(d2, dtw_many(X, X[idx[-1]], band) ** 2)
    return X[idx]


def _split_init(members: np.ndarray, c: np.ndarray, scale: float) -> np.ndarray:
    cov = np.cov(members, rowvar=False) if len(members) > 1 else np.zeros((len(c), len(c)))
    vals, vecs = np.linalg.eigh(np.atleast_2d(cov))
    v = vecs[:, -1]
    v = v if v[np.argmax(np.abs(v))] > 0 else -v   # deterministic sign
    step = scale * np.sqrt(max(vals[-1], 0.0)) * v
    return np.vstack([c + step, c - step])


def xmeans(profiles, kmin: int = 1, kmax: int = 8, band: int = DEFAULT_BAND,
           seed: int = 0, split_scale: float = 0.5, index=None) -> ClusterModel:
    """X-means clustering of hourly profiles under DTW.

    Rows that contain NaN (zero-login sentinels) are labelled -1.  Starting
    from ``kmin`` clusters, every cluster is tentatively split in two (children
    start at the centroid plus/minus ``split_scale`` standard deviations along
    its principal direction); a split is kept when the two-cluster BIC of the
    members beats the one-cluster BIC.  After each round all centroids are
    refined jointly.  The best-BIC model visited is returned, with clusters
    ordered by decreasing size.
    """
    P = np.atleast_2d(np.asarray(profiles, dtype=float))
    if index is None:
        index = profiles.index if isinstance(profiles, pd.DataFrame) else pd.RangeIndex(len(P))
    if not 1 <= kmin <= kmax:
        raise ValueError("need 1 <= kmin <= kmax")
    ok = ~np.isnan(P).any(axis=1)
    X = P[ok]
    if len(X) < kmin:
        raise ValueError(f"kmin={kmin} exceeds the {len(X)} available profiles")
    n, d = X.shape
    rng = np.random.default_rng(seed)
    C0 = dba_centroid(X, band=band)[None, :] if kmin == 1 else _kmeanspp(X, kmin, band, rng)
    C, labels, sq = _kmeans(X, C0, band)
    best = (partition_bic(X, labels, len(C)), C, labels)
    history = [(len(C), best[0])]
    while len(C) < kmax:
        new_C, changed = [], False
        for j in range(len(C)):
            members = X[labels == j]
            if len(members) < 2 * (d + 1) or len(new_C) + (len(C) - j) >= kmax:
                new_C.append(C[j])
                continue
            parent = partition_bic(members, np.zeros(len(members), dtype=int), 1)
            kids, kl, _ = _kmeans(members, _split_init(members, C[j], split_scale), band)
            child = partition_bic(members, kl, 2)
            if child > parent and min(np.bincount(kl, minlength=2)) > 0:
                new_C.extend(kids)
                changed = True
            else:
                new_C.append(C[j])
        if not changed:
            break
        C, labels, sq = _kmeans(X, np.array(new_C), band)
        bic = partition_bic(X, labels, len(C))
        history.append((len(C), bic))
        if bic > best[0]:
            best = (bic, C, labels)
    bic, C, labels = best
    order = np.argsort(-np.bincount(labels, minlength=len(C)), kind="stable")
    remap = np.empty(len(C), dtype=int)
    remap[order] = np.arange(len(C))
    full = np.full(len(P), SENTINEL, dtype=int)
    full[ok] = remap[labels]
    return ClusterModel(k=len(C), centroids=C[order], labels=pd.Series(full, index=index, name="cluster"),
                        bic=float(bic), seed=seed, band=band, history=history)


# ----------------------------------------------------------- association
def chi_square_association(labels_a, labels_b, sentinel=SENTINEL) -> tuple[float, int, float]:
    """Pearson chi-square test of independence between two label vectors.

    Entries equal to ``sentinel`` or missing in either vector are dropped,
    then empty rows/columns of the contingency table are dropped with a
    warning.
    """
    a = pd.Series(np.asarray(labels_a, dtype=object))
    b = pd.Series(np.asarray(labels_b, dtype=object))
    if len(a) != len(b):
        raise ValueError("label vectors must have equal length")
    keep = a.notna() & b.notna() & (a != sentinel) & (b != sentinel)
    table = pd.crosstab(a[keep], b[keep])
    return chi_square_table(table.to_numpy())


def chi_square_table(table) -> tuple[float, int, float]:
    t = np.asarray(table, dtype=float)
    rows, cols = t.sum(axis=1) > 0, t.sum(axis=0) > 0
    if not rows.all() or not cols.all():
        warnings.warn("dropping empty categories from contingency table")
        t = t[rows][:, cols]
    if t.shape[0] < 2 or t.shape[1] < 2:
        raise ValueError("need at least 2 categories in each variable")
    stat, p, df, _ = stats.chi2_contingency(t, correction=False)
    return float(stat), int(df), float(p)


def gpa_band(gpa) -> np.ndarray:
    g = np.asarray(gpa, dtype=float)
    return np.where(g <= 2.0, GPA_BANDS[0], np.where(g <= 3.0, GPA_BANDS[1], GPA_BANDS[2]))


def demographic_associations(labels: pd.Series, students: pd.DataFrame) -> dict:
    """Chi-square association of cluster labels with each demographic and the
    end-of-term GPA band."""
    st = students.loc[labels.index]
    cols = {"gender": st["gender"], "ethnicity": st["ethnicity"],
            "student_year": st["student_year"], "admit_type": st["admit_type"],
            "enrollment_type": st["enrollment_type"],
            "gpa_band": pd.Series(gpa_band(st["end_term_gpa"]), index=st.index)}
    out = {}
    for name, col in cols.items():
        try:
            stat, df, p = chi_square_association(labels.to_numpy(), col.to_numpy())
            out[name] = {"statistic": stat, "df": df, "p": p}
        except ValueError as e:
            out[name] = {"statistic": None, "df": None, "p": None, "note": str(e)}
    return out


def write_clusters(model: ClusterModel, assoc: dict, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model.labels.rename("cluster").to_csv(directory / "clusters.csv", index_label="student_id",
                                          lineterminator="\n")
    (directory / "associations.json").write_text(json.dumps(assoc, indent=2) + "\n")
    (directory / "cluster_model.json").write_text(json.dumps(model.to_dict(), indent=2) + "\n")
