import itertools

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from helpers import PLANTED_8, hidden_common_cause, linear_gaussian, sample_sem_cohort, skeleton_f1
from lmscausal.causal import (ARROW, CIRCLE, CausalGraph, GraphError, KnowledgeTiers,
                              fci, fisher_z_test, fit_sem, mixed_ci_test, pag_to_dag, pc_stable)
from lmscausal.causal.sem import domain_overrides, ml_discrepancy


# ------------------------------------------------------------ graph ----
def test_graph_marks_and_serialization():
    g = CausalGraph(["a", "b", "c"])
    g.add_directed("a", "b")
    g.add_edge("b", "c", CIRCLE, ARROW)
    assert g.is_directed("a", "b") and g.parents("b") == ["a"]
    assert g.edge_string("b", "c") == "b o-> c"
    back = CausalGraph.from_dict(g.to_dict())
    assert back.to_dict() == g.to_dict()
    assert "digraph" in g.to_dot()
    with pytest.raises(GraphError):
        CausalGraph(["a", "a"])


def test_cycle_detection():
    g = CausalGraph(["a", "b", "c"])
    g.add_directed("a", "b")
    g.add_directed("b", "c")
    assert g.find_directed_cycle() is None
    assert g.topological_order() == ["a", "b", "c"]
    g.add_directed("c", "a")
    assert g.find_directed_cycle()


def test_knowledge_tiers():
    k = KnowledgeTiers(tiers=[["d"], ["x", "y"], ["o"]], forbidden=[("x", "y")])
    assert k.is_forbidden("o", "d") and not k.is_forbidden("d", "o") and k.is_forbidden("x", "y")
    with pytest.raises(GraphError):
        KnowledgeTiers(tiers=[["a"], ["a"]])
    with pytest.raises(GraphError, match="contradictory"):
        KnowledgeTiers(tiers=[["a"], ["b"]], required=[("b", "a")])


# ------------------------------------------------------------- tests ----
def test_fisher_z_matches_regression_oracle():
    rng = np.random.default_rng(0)
    df = linear_gaussian({("z", "x"): 1.0, ("z", "y"): 1.0, ("x", "y"): 0.1}, 400, rng)
    res = fisher_z_test(df, "x", "y", ["z"])
    Z = np.column_stack([np.ones(400), df["z"]])
    rx = df["x"] - Z @ np.linalg.lstsq(Z, df["x"], rcond=None)[0]
    ry = df["y"] - Z @ np.linalg.lstsq(Z, df["y"], rcond=None)[0]
    r = np.corrcoef(rx, ry)[0, 1]
    stat = np.sqrt(400 - 1 - 3) * abs(np.arctanh(r))
    assert res.statistic == pytest.approx(stat, rel=1e-9)


def test_fisher_z_independence_calls():
    rng = np.random.default_rng(1)
    df = linear_gaussian({("x", "z"): 1.0, ("z", "y"): 1.0}, 2000, rng)
    assert not fisher_z_test(df, "x", "y").independent
    assert fisher_z_test(df, "x", "y", ["z"]).independent


def test_fisher_z_singular_and_small():
    df = pd.DataFrame({"a": [1.0, 2, 3, 4, 5, 6], "b": [2.0, 4, 6, 8, 10, 12], "c": [1.0, 0, 1, 0, 1, 3]})
    assert fisher_z_test(df, "a", "b").singular
    with pytest.raises(ValueError):
        fisher_z_test(df.iloc[:4], "a", "c", ["b"])


@given(st.integers(0, 10_000))
def test_fisher_z_symmetric(seed):
    df = pd.DataFrame(np.random.default_rng(seed).standard_normal((50, 3)), columns=list("abc"))
    assert fisher_z_test(df, "a", "b", ["c"]).p == pytest.approx(fisher_z_test(df, "b", "a", ["c"]).p)


def test_mixed_ci_categorical():
    rng = np.random.default_rng(2)
    n = 1500
    g = rng.choice(["u", "v", "w"], n)
    x = (g == "u") * 1.0 + rng.standard_normal(n)
    y = 0.8 * x + rng.standard_normal(n)
    df = pd.DataFrame({"g": pd.Categorical(g), "x": x, "y": y})
    assert not mixed_ci_test(df, "g", "y").independent
    assert mixed_ci_test(df, "g", "y", ["x"]).independent


# --------------------------------------------------------------- PC ----
def test_pc_collider_and_chain():
    rng = np.random.default_rng(3)
    df = linear_gaussian({("a", "c"): 0.8, ("b", "c"): 0.8, ("c", "d"): 0.8}, 3000, rng)
    g = pc_stable(df)
    assert g.is_directed("a", "c") and g.is_directed("b", "c")
    assert g.is_directed("c", "d")   # Meek rule 1
    assert not g.is_adjacent("a", "b")


def test_pc_planted_skeleton_and_order_invariance():
    rng = np.random.default_rng(4)
    df = linear_gaussian(PLANTED_8, 3000, rng)
    truth = {frozenset(e) for e in PLANTED_8}
    g = pc_stable(df)
    assert skeleton_f1(g.skeleton(), truth) >= 0.9
    for perm in itertools.islice(itertools.permutations(df.columns), 0, 200, 50):
        h = pc_stable(df[list(perm)])
        assert _canon(h) == _canon(g)


def _canon(g):
    out = set()
    for a, b, ma, mb in g.edges():
        if a > b:
            a, b, ma, mb = b, a, mb, ma
        out.add((a, b, ma.value, mb.value))
    return out


def test_pc_respects_knowledge():
    rng = np.random.default_rng(5)
    df = linear_gaussian({("a", "b"): 0.9}, 1000, rng)
    k = KnowledgeTiers(tiers=[["b"], ["a"]])
    g = pc_stable(df, knowledge=k)
    assert g.is_directed("b", "a")
    assert not k.violations(g)


def test_pc_empty_and_bad_args():
    df = pd.DataFrame(np.random.default_rng(6).standard_normal((500, 3)), columns=list("xyz"))
    assert pc_stable(df).n_edges() == 0
    with pytest.raises(ValueError):
        pc_stable(df, max_cond=-1)


# -------------------------------------------------------------- FCI ----
def test_fci_latent_confounder():
    df = hidden_common_cause(5000, np.random.default_rng(7))
    pag = fci(df)
    assert pag.is_bidirected("X", "Y")
    assert pag.mark("X", "A") is ARROW or pag.mark("A", "X") is ARROW


def test_fci_chain_has_circles_or_tails():
    df = linear_gaussian({("a", "b"): 0.9, ("b", "c"): 0.9}, 2000, np.random.default_rng(9))
    pag = fci(df)
    assert pag.skeleton() == {frozenset("ab"), frozenset("bc")}
    assert not pag.is_bidirected("a", "b")


# -------------------------------------------------------------- SEM ----
def test_pag_to_dag_overrides():
    pag = CausalGraph(["s", "v", "e"])
    pag.add_edge("s", "e", CIRCLE, ARROW)
    pag.add_edge("v", "e", CIRCLE, CIRCLE)
    over = domain_overrides(pag, cause_only=["s"])
    dag = pag_to_dag(pag, over)
    assert dag.is_directed("s", "e") and dag.is_bidirected("v", "e")
    with pytest.raises(GraphError, match="unresolved"):
        pag_to_dag(pag, [(("s", "e"), "->")])
    with pytest.raises(GraphError):
        pag_to_dag(pag, [(("s", "v"), "->")])


def test_sem_recovers_coefficient():
    df = sample_sem_cohort(5000, 0)
    dag = CausalGraph(list(df.columns))
    for a, b in [("start_gpa", "login_volume"), ("regularity", "login_volume"),
                 ("login_volume", "end_gpa"), ("start_gpa", "end_gpa")]:
        dag.add_directed(a, b)
    fit = fit_sem(dag, df)
    assert fit.coefficients[("login_volume", "end_gpa")] == pytest.approx(0.19, abs=0.05)
    assert fit.df == 2 and fit.p > 0.001


def test_sem_saturated_and_discrepancy():
    df = linear_gaussian({("a", "b"): 0.5}, 500, np.random.default_rng(9))
    dag = CausalGraph(["a", "b"])
    dag.add_directed("a", "b")
    fit = fit_sem(dag, df)
    assert fit.df == 0 and fit.chi2 == pytest.approx(0, abs=1e-8)
    S = np.cov(df.T)
    assert ml_discrepancy(S, S) == pytest.approx(0, abs=1e-12)


def test_sem_bidirected_covariance():
    rng = np.random.default_rng(10)
    df = hidden_common_cause(4000, rng)[["X", "Y"]]
    dag = CausalGraph(["X", "Y"])
    dag.add_bidirected("X", "Y")
    fit = fit_sem(dag, df)
    assert fit.covariances[("X", "Y")] == pytest.approx(np.cov(df.T)[0, 1], rel=1e-2)


def test_sem_cycle_rejected():
    g2 = CausalGraph(["a", "b", "c"])
    g2.add_directed("a", "b")
    g2.add_directed("b", "c")
    g2.add_directed("c", "a")
    with pytest.raises(GraphError, match="cycle"):
        fit_sem(g2, pd.DataFrame(np.random.default_rng(0).standard_normal((20, 3)), columns=list("abc")))


def test_linear_gaussian_covariance():
    df = linear_gaussian({("a", "b"): 0.5, ("b", "c"): 2.0}, 200_000, np.random.default_rng(11))
    # var(b) = 1.25, cov(a, c) = 0.5 * 2, var(c) = 4 * 1.25 + 1
    S = np.cov(df[["a", "b", "c"]].T)
    np.testing.assert_allclose([S[1, 1], S[0, 2], S[2, 2]], [1.25, 1.0, 6.0], rtol=0.02)


def test_skeleton_f1():
    t = {frozenset("ab"), frozenset("bc")}
    assert skeleton_f1(t, t) == 1.0
    assert skeleton_f1({frozenset("ab"), frozenset("ac")}, t) == 0.5
    assert skeleton_f1(set(), t) == 0.0
