"""PAG to DAG resolution and linear-Gaussian SEM estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .graph import ARROW, CIRCLE, TAIL, CausalGraph, GraphError

ORIENTATIONS = ("->", "<-", "<->", "none")


def pag_to_dag(pag: CausalGraph, overrides=()) -> CausalGraph:
    """Resolve every circle (and undirected) edge of ``pag`` with ``overrides``.

    ``overrides`` is a sequence of ``((a, b), orientation)`` where orientation
    is one of ``"->"``, ``"<-"``, ``"<->"`` or ``"none"`` (drop the edge).
    Arrow-arrow edges survive as bidirected pairs.

    Raises
    ------
    GraphError
        When a circle or undirected edge is left unresolved, an override
        names a non-adjacent pair, or the directed part has a cycle.
    """
    g = pag.copy()
    g.meta = {}
    for (a, b), how in overrides:
        if how not in ORIENTATIONS:
            raise GraphError(f"unknown orientation {how!r} for {a}--{b}")
        if not g.is_adjacent(a, b):
            raise GraphError(f"override for non-adjacent pair {a}--{b}")
        if how == "->":
            g.add_directed(a, b)
        elif how == "<-":
            g.add_directed(b, a)
        elif how == "<->":
            g.add_bidirected(a, b)
        else:
            g.remove_edge(a, b)
    left = [g.edge_string(a, b) for a, b, ma, mb in g.edges()
            if CIRCLE in (ma, mb) or (ma is TAIL and mb is TAIL)]
    if left:
        raise GraphError("unresolved edges: " + ", ".join(left))
    cyc = g.find_directed_cycle()
    if cyc:
        raise GraphError("directed cycle: " + " -> ".join(cyc))
    return g


def domain_overrides(pag: CausalGraph, cause_only=(), default: str = "<->") -> list:
    """Build overrides for all undetermined edges of ``pag``.

    An edge touching a variable in ``cause_only`` is directed out of it
    unless the PAG already has an arrowhead at that end; every other
    undetermined edge gets ``default``.  A PAG edge ``a o-> b`` resolved
    by ``default="<->"`` becomes ``a <-> b``.
    """
    cause_only = set(cause_only)
    out = []
    for a, b, ma, mb in pag.edges():
        if CIRCLE not in (ma, mb) and not (ma is TAIL and mb is TAIL):
            continue
        if a in cause_only and ma is not ARROW:
            out.append(((a, b), "->"))
        elif b in cause_only and mb is not ARROW:
            out.append(((a, b), "<-"))
        elif ma is ARROW and mb is not ARROW and default == "->":
            out.append(((a, b), "<-"))
        else:
            out.append(((a, b), default))
    return out


@dataclass
class SemFit:
    nodes: list[str]
    coefficients: dict[tuple[str, str], float]
    std_errors: dict[tuple[str, str], float]
    covariances: dict[tuple[str, str], float]
    residual_variances: dict[str, float]
    means: dict[str, float]
    chi2: float
    df: int
    p: float
    n: int
    implied_cov: np.ndarray = field(repr=False, default=None)

    def coefficient_matrix(self) -> np.ndarray:
        idx = {v: k for k, v in enumerate(self.nodes)}
        B = np.zeros((len(self.nodes), len(self.nodes)))
        for (a, b), w in self.coefficients.items():
            B[idx[b], idx[a]] = w
        return B

    def error_covariance(self) -> np.ndarray:
        idx = {v: k for k, v in enumerate(self.nodes)}
        O = np.diag([self.residual_variances[v] for v in self.nodes])
        for (a, b), c in self.covariances.items():
            O[idx[a], idx[b]] = O[idx[b], idx[a]] = c
        return O

    def simulate(self, n: int, rng: np.random.Generator) -> pd.DataFrame:
        """Draw ``n`` rows from the fitted model."""
        p = len(self.nodes)
        B = self.coefficient_matrix()
        O = self.error_covariance()
        eps = rng.multivariate_normal(np.zeros(p), O, size=n, method="cholesky")
        inv = np.linalg.inv(np.eye(p) - B)
        X = eps @ inv.T + np.array([self.means[v] for v in self.nodes])
        return pd.DataFrame(X, columns=self.nodes)

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes,
            "coefficients": [{"from": a, "to": b, "estimate": w, "se": self.std_errors[(a, b)]}
                             for (a, b), w in self.coefficients.items()],
            "covariances": [{"a": a, "b": b, "estimate": c} for (a, b), c in self.covariances.items()],
            "residual_variances": self.residual_variances,
            "chi2": self.chi2, "df": self.df, "p": self.p, "n": self.n,
        }


def ml_discrepancy(S: np.ndarray, sigma: np.ndarray) -> float:
    """Maximum-likelihood discrepancy between sample and model-implied covariance."""
    p = S.shape[0]
    _, logdet_sigma = np.linalg.slogdet(sigma)
    _, logdet_s = np.linalg.slogdet(S)
    return float(logdet_sigma + np.trace(S @ np.linalg.inv(sigma)) - logdet_s - p)


def fit_sem(dag: CausalGraph, data: pd.DataFrame) -> SemFit:
    """Fit a recursive linear-Gaussian SEM to ``data``.

    Directed coefficients come from least squares of each node on its parents;
    each bidirected pair gets the covariance of the two residual vectors.  The
    fit statistic is ``n`` times the ML discrepancy with
    ``df = p(p+1)/2 - (coefficients + variances + covariances)``.
    """
    cyc = dag.find_directed_cycle()
    if cyc:
        raise GraphError("directed cycle: " + " -> ".join(cyc))
    bad = [dag.edge_string(a, b) for a, b, ma, mb in dag.edges()
           if not ((ma is TAIL and mb is ARROW) or (ma is ARROW and mb is TAIL)
                   or (ma is ARROW and mb is ARROW))]
    if bad:
        raise GraphError("fit_sem needs directed or bidirected edges only: " + ", ".join(bad))
    missing = [v for v in dag.nodes if v not in data.columns]
    if missing:
        raise ValueError(f"data lacks columns for nodes {missing}")

    nodes = list(dag.nodes)
    X = data[nodes].to_numpy(dtype=float)
    n, p = X.shape
    means = X.mean(axis=0)
    Xc = X - means
    idx = {v: k for k, v in enumerate(nodes)}

    coefs, ses, resid_var = {}, {}, {}
    resid = np.zeros_like(Xc)
    for v in nodes:
        pa = dag.parents(v)
        y = Xc[:, idx[v]]
        if not pa:
            resid[:, idx[v]] = y
            resid_var[v] = float(y @ y / n)
            continue
        Z = Xc[:, [idx[u] for u in pa]]
        if np.linalg.matrix_rank(Z) < len(pa):
            raise GraphError(f"collinear parents for node {v!r}: {pa}")
        ZtZ = Z.T @ Z
        beta = np.linalg.solve(ZtZ, Z.T @ y)
        r = y - Z @ beta
        resid[:, idx[v]] = r
        rss = float(r @ r)
        resid_var[v] = rss / n
        s2 = rss / max(n - len(pa) - 1, 1)
        se = np.sqrt(np.diag(np.linalg.inv(ZtZ)) * s2)
        for u, b, s in zip(pa, beta, se):
            coefs[(u, v)] = float(b)
            ses[(u, v)] = float(s)

    covs = {(a, b): float(resid[:, idx[a]] @ resid[:, idx[b]] / n)
            for a, b in dag.bidirected_edges()}

    fit = SemFit(nodes=nodes, coefficients=coefs, std_errors=ses, covariances=covs,
                 residual_variances=resid_var, means=dict(zip(nodes, map(float, means))),
                 chi2=0.0, df=0, p=1.0, n=n)
    B = fit.coefficient_matrix()
    O = fit.error_covariance()
    inv = np.linalg.inv(np.eye(p) - B)
    sigma = inv @ O @ inv.T
    S = Xc.T @ Xc / n
    fit.implied_cov = sigma
    df = p * (p + 1) // 2 - (len(coefs) + p + len(covs))
    chi2 = max(n * ml_discrepancy(S, sigma), 0.0)
    fit.chi2 = float(chi2)
    fit.df = int(df)
    fit.p = float(stats.chi2.sf(chi2, df)) if df > 0 else 1.0
    return fit
