"""Linear Gaussian data from planted graphs, for checking structure recovery."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .graph import CausalGraph

# 8-node planted DAG: two colliders, a chain and a fork
PLANTED_8 = {
    ("A", "C"): 0.8, ("B", "C"): 0.7, ("C", "D"): 0.9, ("B", "E"): 0.6,
    ("D", "F"): 0.6, ("E", "F"): 0.8, ("F", "G"): 0.7, ("E", "H"): 0.9,
}


def linear_gaussian(edges: dict, n: int, rng: np.random.Generator, noise: float = 1.0,
                    nodes=()) -> pd.DataFrame:
    """Sample a linear SEM with N(0, noise^2) errors.

    ``edges`` maps (cause, effect) to a coefficient; columns come back sorted.
    """
    names = sorted(set(nodes) | {v for e in edges for v in e})
    g = CausalGraph(names)
    for a, b in edges:
        g.add_directed(a, b)
    data = {}
    for v in g.topological_order():
        x = noise * rng.standard_normal(n)
        for u in g.parents(v):
            x = x + edges[(u, v)] * data[u]
        data[v] = x
    return pd.DataFrame({v: data[v] for v in names})


def hidden_common_cause(n: int, rng: np.random.Generator, weight: float = 0.8) -> pd.DataFrame:
    """A -> X <- L -> Y <- B with L dropped from the output."""
    edges = {("A", "X"): weight, ("L", "X"): weight, ("L", "Y"): weight, ("B", "Y"): weight}
    return linear_gaussian(edges, n, rng).drop(columns="L")


def skeleton_f1(found: set, truth: set) -> float:
    """F1 of two sets of unordered node pairs."""
    tp = len(found & truth)
    if tp == 0:
        return 0.0
    prec, rec = tp / len(found), tp / len(truth)
    return 2 * prec * rec / (prec + rec)
