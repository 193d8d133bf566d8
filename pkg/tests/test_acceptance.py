"""Acceptance suite: each test checks one criterion at its stated tolerance
and time budget against the generator's planted ground truth.

Run on its own with ``pytest tests/test_acceptance.py -v``; the summary at
the end lists one PASS/FAIL line per criterion.
"""

import dataclasses
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from scipy import stats
from scipy.linalg import eigh
from sklearn.metrics import adjusted_rand_score

from helpers import PLANTED_8, SEM_NODES, hidden_common_cause, linear_gaussian, sample_sem_cohort, skeleton_f1
from lmscausal.causal import CausalGraph, fci, fit_sem, pc_stable
from lmscausal.chrono import chi_square_table, xmeans
from lmscausal.config import load_config
from lmscausal.entropy import kl_entropy
from lmscausal.explain import group_regression, lime_global
from lmscausal.features import build_feature_matrix, course_zscores, hourly_profiles
from lmscausal.mcca import FeatureGroup, sparse_mcca
from lmscausal.pipeline import run_pipeline
from lmscausal.predict import FAST_GRIDS, grid_search_cv
from lmscausal.synthgen import ScmSpec, bayes_r2, generate_cohort, nonlinear_spec

ROOT = Path(__file__).resolve().parents[1]


def test_c01_entropy(verdict):
    t = time.perf_counter()
    rng = np.random.default_rng(0)
    h_norm = kl_entropy(rng.standard_normal(10_000), k=3)
    h_unif = kl_entropy(rng.random(10_000), k=3)
    secs = time.perf_counter() - t
    target = 0.5 * np.log(2 * np.pi * np.e)
    ok = abs(h_norm - target) <= 0.05 and abs(h_unif) <= 0.05 and secs < 5
    verdict("1 KL entropy", ok, f"normal {h_norm:.4f} (target {target:.4f}), uniform {h_unif:.4f}", secs)
    assert ok


def test_c02_zscores(verdict):
    cohort, _ = generate_cohort(ScmSpec(), seed=0)
    t = time.perf_counter()
    # one extra course whose five students never log in: SD 0
    extra = pd.DataFrame({"student_id": cohort.students.index[:5], "course_id": "CZERO"})
    cohort = dataclasses.replace(cohort, enrollments=pd.concat([cohort.enrollments, extra],
                                                               ignore_index=True))
    z = course_zscores(cohort)
    secs = time.perf_counter() - t
    by = z[z.course_id != "CZERO"].groupby("course_id")["z"]
    mean_err = float(by.mean().abs().max())
    sd_err = float((by.std(ddof=1) - 1).abs().max())
    zero = z.loc[z.course_id == "CZERO", "z"]
    ok = mean_err <= 1e-9 and sd_err <= 1e-9 and len(zero) == 5 and (zero == 0).all() and secs < 5
    verdict("2 z-scores", ok, f"max |mean| {mean_err:.1e}, max |sd-1| {sd_err:.1e}, "
            f"SD=0 course z={sorted(set(zero))}", secs)
    assert ok


def test_c03_chronotype(verdict):
    t = time.perf_counter()
    ks, aris = [], []
    for seed in range(10):
        cohort, truth = generate_cohort(ScmSpec(), seed)
        model = xmeans(hourly_profiles(cohort), kmin=1, kmax=8, band=3, seed=seed)
        keep = model.labels >= 0
        ks.append(model.k)
        aris.append(adjusted_rand_score(truth.cluster_labels[model.labels.index[keep]], model.labels[keep]))
    secs = time.perf_counter() - t
    k_med, ari_med = float(np.median(ks)), float(np.median(aris))
    ok = k_med == 3 and ari_med >= 0.9 and secs < 120
    verdict("3 chronotype", ok, f"k per seed {ks}, median ARI {ari_med:.3f}", secs)
    assert ok


def test_c04_predictive(verdict):
    t = time.perf_counter()
    spec = nonlinear_spec()
    b = bayes_r2(spec)
    r2 = {f: [] for f in ("ElasticNet", "RandomForest", "GBT")}
    for seed in range(5):
        cohort, _ = generate_cohort(spec, seed)
        fm = build_feature_matrix(cohort)
        for f in r2:
            r2[f].append(grid_search_cv(fm.X, fm.y, f, FAST_GRIDS[f], seed).r2)
    secs = time.perf_counter() - t
    med = {f: float(np.median(v)) for f, v in r2.items()}
    ok = (abs(b - 0.40) <= 0.03
          and all(0.25 <= med[f] <= 0.45 for f in ("RandomForest", "GBT"))
          and med["RandomForest"] >= med["ElasticNet"] and med["GBT"] >= med["ElasticNet"]
          and secs < 600)
    verdict("4 predictive", ok, f"Bayes R2 {b:.3f}; median CV R2 "
            + ", ".join(f"{f} {v:.3f}" for f, v in med.items()), secs)
    assert ok


class _Linear:
    def __init__(self, coef):
        self.coef = np.asarray(coef, dtype=float)

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef


def test_c05_lime_signs(verdict):
    t = time.perf_counter()
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = pd.DataFrame(rng.standard_normal((100, 6)), columns=[f"x{i}" for i in range(6)])
        X["ind"] = (rng.random(100) < 0.4).astype(float)
        coef = rng.uniform(-2, 2, X.shape[1])
        rep = lime_global(_Linear(coef), X, n_samples=200, seed=seed)
        big = np.abs(coef) >= 0.5
        hits += bool(np.all(np.sign(rep.signed().to_numpy()[big]) == np.sign(coef[big])))
    secs = time.perf_counter() - t
    ok = hits >= 18 and secs < 120
    verdict("5 LIME signs", ok, f"all large-coefficient signs correct in {hits}/20 seeds", secs)
    assert ok


def test_c06_group_regression(verdict):
    t = time.perf_counter()
    rng = np.random.default_rng(0)
    X = pd.DataFrame(rng.standard_normal((400, 2)), columns=["vol_median", "reg_mean"])
    y = 2.0 + 0.171 * X.vol_median - 0.398 * X.reg_mean + 0.3 * rng.standard_normal(400)
    res = group_regression(X, y, scope="low GPA")
    secs = time.perf_counter() - t
    c, star = res.coefficients, res.stars()
    ok = (abs(c["vol_median"] - 0.171) <= 0.08 and abs(c["reg_mean"] + 0.398) <= 0.08
          and star["vol_median"] and star["reg_mean"] and secs < 30)
    verdict("6 group regression", ok, f"{res.formatted()['vol_median']} / {res.formatted()['reg_mean']}", secs)
    assert ok


def test_c07_mcca_oracle(verdict):
    t = time.perf_counter()
    rng = np.random.default_rng(0)
    shared = rng.standard_normal(200)
    A = rng.standard_normal((200, 3)) + np.outer(shared, [0.8, 0.3, 0.0])
    B = rng.standard_normal((200, 3)) + np.outer(shared, [0.0, 0.5, 0.6])
    ga = FeatureGroup.from_frame("a", pd.DataFrame(A, columns=["a0", "a1", "a2"]))
    gb = FeatureGroup.from_frame("b", pd.DataFrame(B, columns=["b0", "b1", "b2"]))
    res = sparse_mcca([ga, gb], penalties=[ga.max_penalty, gb.max_penalty], max_iters=2000, tol=1e-14)
    # oracle: largest root of Sab Sbb^-1 Sba w = rho^2 Saa w
    S = np.cov(np.hstack([A, B]).T)
    Saa, Sbb, Sab = S[:3, :3], S[3:, 3:], S[:3, 3:]
    rho = float(np.sqrt(np.max(eigh(Sab @ np.linalg.solve(Sbb, Sab.T), Saa, eigvals_only=True))))
    got = abs(float(res.correlations.iloc[0, 1]))
    secs = time.perf_counter() - t
    ok = abs(got - rho) <= 1e-6 and secs < 10
    verdict("7 mCCA oracle", ok, f"mCCA {got:.10f} vs eigenproblem {rho:.10f}", secs)
    assert ok


def _canon(g):
    out = set()
    for a, b, ma, mb in g.edges():
        if a > b:
            a, b, ma, mb = b, a, mb, ma
        out.add((a, b, ma.value, mb.value))
    return out


def test_c08_pc_stable(verdict):
    t = time.perf_counter()
    truth = {frozenset(e) for e in PLANTED_8}
    f1s, graphs = [], []
    for seed in range(20):
        df = linear_gaussian(PLANTED_8, 5000, np.random.default_rng(seed))
        g = pc_stable(df, alpha=0.05)
        f1s.append(skeleton_f1(g.skeleton(), truth))
        graphs.append((df, g))
    df, ref = graphs[0]
    rng = np.random.default_rng(99)
    same = sum(_canon(pc_stable(df[list(rng.permutation(df.columns))], alpha=0.05)) == _canon(ref)
               for _ in range(10))
    secs = time.perf_counter() - t
    med = float(np.median(f1s))
    ok = med >= 0.9 and same == 10 and secs < 300
    verdict("8 PC-stable", ok, f"median skeleton F1 {med:.3f}, {same}/10 permutations identical", secs)
    assert ok


def test_c09_fci_latent(verdict):
    t = time.perf_counter()
    hits = sum(fci(hidden_common_cause(5000, np.random.default_rng(s)), alpha=0.05).is_bidirected("X", "Y")
               for s in range(20))
    secs = time.perf_counter() - t
    ok = hits >= 16 and secs < 300
    verdict("9 FCI latent", ok, f"X<->Y in {hits}/20 seeds", secs)
    assert ok


def test_c10_sem(verdict):
    t = time.perf_counter()
    dag = CausalGraph(SEM_NODES)
    for a, b in [("start_gpa", "login_volume"), ("regularity", "login_volume"),
                 ("login_volume", "end_gpa"), ("start_gpa", "end_gpa")]:
        dag.add_directed(a, b)
    coef = fit_sem(dag, sample_sem_cohort(5000, 12345)).coefficients[("login_volume", "end_gpa")]
    ps = [fit_sem(dag, sample_sem_cohort(5000, s)).p for s in range(200)]
    ks = stats.kstest(ps, "uniform").pvalue
    secs = time.perf_counter() - t
    ok = abs(coef - 0.19) <= 0.05 and ks > 0.01 and secs < 300
    verdict("10 SEM", ok, f"login_volume->end_gpa {coef:.3f}, KS p of 200 fit p-values {ks:.3f}", secs)
    assert ok


def test_c11_chi_square(verdict):
    t = time.perf_counter()
    chi2, df, p = chi_square_table([[10, 20], [20, 10]])
    secs = time.perf_counter() - t
    ok = abs(chi2 - 20 / 3) <= 1e-3 and df == 1 and abs(p - 0.0098) <= 1e-3
    verdict("11 chi-square", ok, f"chi2 {chi2:.4f}, df {df}, p {p:.5f}", secs)
    assert ok


def _artifacts(out: Path) -> dict:
    return {p.relative_to(out).as_posix(): p.read_bytes()
            for p in sorted(out.rglob("*")) if p.suffix in (".json", ".csv")}


def test_c12_determinism(tmp_path, verdict):
    cfg = load_config(ROOT / "configs" / "default.yaml")
    times, arts = [], []
    for run in ("a", "b"):
        t = time.perf_counter()
        c = dataclasses.replace(cfg, out_dir=str(tmp_path / run))
        run_pipeline(c, force=True)
        times.append(time.perf_counter() - t)
        arts.append(_artifacts(tmp_path / run))
    diff = sorted(k for k in arts[0].keys() | arts[1].keys() if arts[0].get(k) != arts[1].get(k))
    ok = not diff and len(arts[0]) > 10 and max(times) < 600
    verdict("12 determinism", ok, f"{len(arts[0])} JSON/CSV files, differing: {diff or 'none'}, "
            f"runs {times[0]:.0f}s/{times[1]:.0f}s", sum(times))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
