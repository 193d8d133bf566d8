"""Markdown summary assembled from the JSON artifacts of a run."""

from __future__ import annotations

import json
from pathlib import Path

from .causal import CausalGraph

FAMILY_LABELS = {"ElasticNet": "Linear Regression (elastic net)", "DecisionTree": "Decision Tree",
                 "RandomForest": "Random Forest", "GBT": "Gradient Boosted Trees"}


def _load(out: Path, rel: str):
    return json.loads((out / rel).read_text())


def _fmt(v, digits: int = 3) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.{digits}g}" if abs(v) < 1e-3 and v != 0 else f"{v:.{digits}f}"
    return str(v)


def metrics_table(metrics: dict) -> list[str]:
    lines = ["| Model | R2 | RMSE | Chosen hyperparameters |", "|---|---|---|---|"]
    for fam, m in sorted(metrics.items(), key=lambda kv: -kv[1]["r2"]):
        hp = ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(m["chosen"].items()))
        lines.append(f"| {FAMILY_LABELS.get(fam, fam)} | {m['r2']:.3f} | {m['rmse']:.3f} | {hp} |")
    return lines


def graph_summary(g: CausalGraph, target: str = "end_gpa") -> list[str]:
    directed = sorted(g.directed_edges())
    bidirected = sorted(g.bidirected_edges())
    other = sorted(g.edge_string(a, b) for a, b, ma, mb in g.edges()
                   if (a, b) not in directed and (b, a) not in directed
                   and (a, b) not in bidirected and (b, a) not in bidirected)
    lines = [f"- nodes: {len(g.nodes)}, edges: {g.n_edges()}"]
    if target in g.nodes:
        lines.append(f"- direct causes of {target}: {', '.join(sorted(g.parents(target))) or 'none'}")
    lines.append("- directed: " + ("; ".join(f"{a} --> {b}" for a, b in directed) or "none"))
    lines.append("- bidirected (latent confounding): "
                 + ("; ".join(f"{a} <-> {b}" for a, b in bidirected) or "none"))
    lines.append("- partially oriented: " + ("; ".join(other) or "none"))
    return lines


def build_report(out: str | Path) -> str:
    out = Path(out)
    metrics = _load(out, "models/model_metrics.json")
    assoc = _load(out, "cluster/associations.json")
    cmodel = _load(out, "cluster/cluster_model.json")
    imp = _load(out, "explain/importance.json")
    weights = _load(out, "cca/mcca_weights.json")
    graphs = _load(out, "causal/graph.json")
    sem = _load(out, "causal/sem.json")

    L = ["# Analysis report", ""]
    L += ["## Predictive models (five-fold nested CV)", ""] + metrics_table(metrics) + [""]

    L += ["## Chronotype clusters", "",
          f"X-means selected k = {cmodel['k']} (BIC {cmodel['bic']:.1f}).", "",
          "| Cluster | Students |", "|---|---|"]
    L += [f"| {k} | {v} |" for k, v in cmodel["sizes"].items()]
    L += ["", "| Variable | Chi-square | df | p |", "|---|---|---|---|"]
    for name, a in assoc.items():
        L.append(f"| {name} | {_fmt(a['statistic'])} | {_fmt(a['df'])} | {_fmt(a['p'])} |")
    L.append("")

    L += ["## Feature importance", ""]
    for rep in imp["reports"]:
        if rep["scope"] != "All":
            continue
        top = sorted(rep["features"].items(), key=lambda kv: -kv[1]["magnitude"])[:5]
        L.append(f"- {rep['method']} (all students): "
                 + ", ".join(f"{f} ({v['signed']:+.3f})" for f, v in top))
    L += ["", "| Group | n | " + " | ".join(_reg_terms(imp)) + " |",
          "|---|---|" + "---|" * len(_reg_terms(imp))]
    for r in imp["regressions"]:
        cells = []
        for t in _reg_terms(imp):
            term = r["terms"].get(t)
            cells.append("dropped" if term is None else
                         f"{term['estimate']:.3f}{'*' if term['star'] else ''}")
        L.append(f"| {r['scope']} | {r['n']} | " + " | ".join(cells) + " |")
    L.append("")

    L += ["## Composite variables (sparse mCCA)", "",
          f"Total pairwise correlation {weights['total_correlation']:.3f}.", "",
          "| Composite | Feature | Weight |", "|---|---|---|"]
    for g, info in weights["groups"].items():
        for f, w in info["weights"].items():
            if w != 0:
                L.append(f"| {g} | {f} | {w:.2f} |")
    L.append("")

    L += ["## Causal graphs", "", "### PC-stable (mixed data, background knowledge)", ""]
    L += graph_summary(CausalGraph.from_dict(graphs["pc"]))
    L += ["", "### FCI (continuous composites)", ""]
    L += graph_summary(CausalGraph.from_dict(graphs["fci"]))
    L.append("")

    fit = sem["fit"]
    L += ["## Structural equation model", "",
          f"Chi-square {fit['chi2']:.3f}, df {fit['df']}, p {_fmt(fit['p'])}, n {fit['n']}.", "",
          "| Path | Estimate | SE |", "|---|---|---|"]
    for c in fit["coefficients"]:
        L.append(f"| {c['from']} -> {c['to']} | {c['estimate']:.3f} | {c['se']:.3f} |")
    for c in fit["covariances"]:
        L.append(f"| {c['a']} <-> {c['b']} | {c['estimate']:.3f} | |")
    L.append("")
    return "\n".join(L)


def _reg_terms(imp: dict) -> list[str]:
    terms: list[str] = []
    for r in imp["regressions"]:
        for t in r["terms"]:
            if t != "intercept" and t not in terms:
                terms.append(t)
    return terms
