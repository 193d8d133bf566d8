import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import eigh

from lmscausal.mcca import (FeatureGroup, composite_scores, l1_project, mcca_grid_search,
                            sparse_mcca, write_mcca)


def _group(name, A):
    return FeatureGroup.from_frame(name, pd.DataFrame(A, columns=[f"{name}{i}" for i in range(A.shape[1])]))


def _pair(n=200, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 1))
    A = rng.standard_normal((n, 3)) @ rng.standard_normal((3, 3)) + z
    B = rng.standard_normal((n, 3)) @ rng.standard_normal((3, 3)) + 0.7 * z
    return A, B


def cca_oracle(A, B):
    """Largest canonical correlation from the generalized eigenproblem."""
    C = np.cov(np.hstack([A, B]).T)
    p = A.shape[1]
    S11, S12, S22 = C[:p, :p], C[:p, p:], C[p:, p:]
    ev = eigh(S12 @ np.linalg.solve(S22, S12.T), S11, eigvals_only=True)
    return float(np.sqrt(ev.max()))


def test_identical_single_columns():
    x = np.random.default_rng(0).standard_normal((50, 1))
    r = sparse_mcca([_group("a", x), _group("b", x)])
    assert r.weights["a"][0] == pytest.approx(1) and r.weights["b"][0] == pytest.approx(1)
    assert r.correlations.iloc[0, 1] == pytest.approx(1)


@pytest.mark.parametrize("n,seed", [(6, 1), (200, 2), (200, 3)])
def test_matches_classical_cca(n, seed):
    A, B = _pair(n, seed)
    r = sparse_mcca([_group("a", A), _group("b", B)], max_iters=5000, tol=1e-15)
    assert r.correlations.iloc[0, 1] == pytest.approx(cca_oracle(A, B), abs=1e-6)


def test_identity_model_is_pmd():
    # with identity within-block covariance, two-block PMD without sparsity is the SVD of X1'X2
    A, B = _pair(seed=4)
    ga, gb = _group("a", A), _group("b", B)
    r = sparse_mcca([ga, gb], covariance="identity", max_iters=5000, tol=1e-15)
    U, s, Vt = np.linalg.svd(ga.data.T @ gb.data)
    assert abs(r.weights["a"] @ U[:, 0]) == pytest.approx(1, abs=1e-6)
    assert abs(r.weights["b"] @ Vt[0]) == pytest.approx(1, abs=1e-6)


def test_dominant_median_column():
    rng = np.random.default_rng(5)
    n = 500
    latent = rng.standard_normal(n)
    vol = np.column_stack([latent + 0.3 * rng.standard_normal(n),      # median
                           0.8 * latent + 0.6 * rng.standard_normal(n),  # max
                           rng.standard_normal(n)])
    reg = np.column_stack([-latent + 0.5 * rng.standard_normal(n), rng.standard_normal(n)])
    r = sparse_mcca([_group("vol", vol), _group("reg", reg)], penalties=[1.3, 1.2])
    w = r.weights["vol"]
    assert abs(w[0]) > abs(w[1])
    assert w[0] > 0 and w[1] >= 0


def test_invariants_and_trace():
    rng = np.random.default_rng(6)
    groups = [_group(f"g{k}", rng.standard_normal((120, p)) + rng.standard_normal((120, 1)))
              for k, p in enumerate((4, 3, 5))]
    r = sparse_mcca(groups, penalties=[1.5, 1.2, 1.8])
    for g in groups:
        w = r.weights[g.name]
        assert np.linalg.norm(w) == pytest.approx(1)
        assert np.abs(w).sum() <= r.penalties[g.name] + 1e-9
        assert w[np.argmax(np.abs(w))] > 0
        np.testing.assert_allclose(r.composites[g.name], g.data @ w)
    assert all(b >= a - 1e-12 for a, b in zip(r.objective_trace, r.objective_trace[1:]))


def test_support_path_monotone():
    rng = np.random.default_rng(7)
    z = rng.standard_normal((150, 1))
    groups = [_group("a", rng.standard_normal((150, 6)) + z), _group("b", rng.standard_normal((150, 6)) + z)]
    supports = [sparse_mcca(groups, [c, c]).total_support for c in np.linspace(np.sqrt(6), 1, 8)]
    assert all(b <= a for a, b in zip(supports, supports[1:]))
    assert supports[-1] == 2


def test_errors():
    x = np.ones((10, 2))
    g = _group("a", np.random.default_rng(0).random((10, 2)))
    with pytest.raises(ValueError):
        FeatureGroup.from_frame("e", pd.DataFrame(index=range(10)))
    with pytest.raises(ValueError):
        sparse_mcca([g, _group("b", x)], penalties=[0.5, 1.0])
    with pytest.raises(ValueError):
        sparse_mcca([g, _group("b", x)], penalties=[1.0, 2.0])
    with pytest.raises(ValueError):
        sparse_mcca([g, _group("b", np.ones((9, 2)))])
    with pytest.raises(ValueError):
        sparse_mcca([g])


def test_grid_single_point_and_tie_break():
    rng = np.random.default_rng(8)
    z = rng.standard_normal((100, 1))
    groups = [_group("a", np.hstack([z, rng.standard_normal((100, 3))])),
              _group("b", np.hstack([z, rng.standard_normal((100, 3))]))]
    one = mcca_grid_search(groups, [0.5])
    assert one.diagnostics[0]["index"] == 0 and one.penalties == {"a": 1.0, "b": 1.0}
    # both points give correlation 1 via the shared column: tight wins
    loose, tight = {"a": 1.1, "b": 1.1}, {"a": 1.0, "b": 1.0}
    gs = mcca_grid_search(groups, [loose, tight], max_support=1.0)
    assert gs.penalties == tight


def test_grid_screen_and_audit():
    rng = np.random.default_rng(9)
    z = rng.standard_normal((150, 1))
    groups = [_group(n, rng.standard_normal((150, 5)) + 0.8 * z) for n in "abc"]
    grid = [0.2, 0.4, 0.6, 0.8, 1.0]
    gs = mcca_grid_search(groups, grid)
    chosen = gs.result
    assert chosen.total_support <= 0.5 * 15
    for d in gs.diagnostics:
        if d["passes_screen"] and d["support"] >= chosen.total_support:
            assert chosen.total_correlation >= d["total_correlation"] - 1e-9


def test_grid_fallback_warns():
    rng = np.random.default_rng(10)
    groups = [_group(n, rng.standard_normal((80, 2))) for n in "ab"]
    with pytest.warns(UserWarning, match="support"):
        gs = mcca_grid_search(groups, [1.0], max_support=0.1)
    assert not gs.screened


def test_composite_scores(tmp_path):
    A, B = _pair()
    fa = pd.DataFrame(A, columns=["x", "y", "z"])
    fb = pd.DataFrame(B, columns=["u", "v", "w"])
    r = sparse_mcca([FeatureGroup.from_frame("a", fa), FeatureGroup.from_frame("b", fb)], [1.4, 1.4])
    comp = composite_scores(r, {"a": fa, "b": fb})
    np.testing.assert_allclose(comp.to_numpy(), r.composites.to_numpy())
    dup = composite_scores(r, {"a": fa.iloc[[3, 3]], "b": fb.iloc[[3, 3]]})
    assert dup.iloc[0].equals(dup.iloc[1])
    np.testing.assert_allclose(dup.iloc[0], comp.iloc[3])
    with pytest.raises(ValueError, match="column mismatch"):
        composite_scores(r, {"a": fa[["y", "x", "z"]], "b": fb})
    r.weights["a"] = np.zeros(3)
    assert (composite_scores(r, [fa, fb])["a"] == 0).all()
    write_mcca(r, comp, tmp_path)
    assert (tmp_path / "composites.csv").exists() and (tmp_path / "mcca_weights.json").exists()


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=10), st.floats(0, 1))
def test_l1_projection_property(b, frac):
    b = np.array(b)
    bound = 1 + frac * (np.sqrt(len(b)) - 1)
    w = l1_project(b, bound)
    if not b.any():
        assert not w.any()
        return
    assert np.linalg.norm(w) == pytest.approx(1)
    assert np.abs(w).sum() <= bound + 1e-9
    nz = w != 0
    assert np.all(np.sign(w[nz]) == np.sign(b[nz]))
