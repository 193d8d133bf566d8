"""Stage runner: generate, extract, cluster, train, explain, cca, discover,
sem and report, each reading upstream artifacts from the output directory.

Every stage records a key (hash of its config sections and upstream
artifact hashes) and the SHA-256 of each file it wrote in
``manifest.json``.  A stage whose key matches and whose files are intact
is skipped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from . import chrono, explain, mcca, predict, synthgen
from .causal import KnowledgeTiers, fci, fit_sem, pag_to_dag, pc_stable
from .causal.sem import domain_overrides
from .config import PipelineConfig
from .data import CohortError, load_cohort, validate_cohort
from .features import HOURS, FeatureMatrix, build_feature_matrix

log = logging.getLogger("lmscausal")

DEMOGRAPHICS = ["gender", "ethnicity", "student_year", "admit_type", "enrollment_type"]


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Stage:
    name: str
    sections: tuple[str, ...]
    requires: tuple[tuple[str, str], ...]   # (relative path, producing stage)
    run: Callable[["Context"], list[Path]]


class Context:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = cfg.out_path
        self.seed = cfg.seed

    def dir(self, name: str) -> Path:
        d = self.out / name
        d.mkdir(parents=True, exist_ok=True)
        return d

    @property
    def data_dir(self) -> Path:
        if self.cfg.input.generate:
            return self.out / "data"
        return self.cfg.path(self.cfg.input.data_dir)

    def features(self) -> FeatureMatrix:
        return FeatureMatrix.read(self.out / "features")

    def students(self) -> pd.DataFrame:
        st = pd.read_csv(self.out / "features" / "students.csv", dtype={"student_id": str})
        return st.set_index("student_id")


def _json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


# ------------------------------------------------------------ stages ----
def run_generate(ctx: Context) -> list[Path]:
    cfg = ctx.cfg
    make = synthgen.nonlinear_spec if cfg.input.spec == "nonlinear" else synthgen.ScmSpec
    spec = make()
    over = synthgen.spec_to_dict(spec)
    over.update(cfg.input.spec_overrides)
    over.update({"semester_start": cfg.semester.start, "semester_end": cfg.semester.end,
                 "cutoff": cfg.semester.cutoff})
    spec = synthgen.spec_from_dict(over)
    cohort, truth = synthgen.generate_cohort(spec, cfg.seed)
    d = ctx.dir("data")
    synthgen.write_generated(cohort, truth, spec, d)
    _json(d / "generator_spec.json", synthgen.spec_to_dict(spec))
    return sorted(p for p in d.iterdir() if p.is_file() and not p.name.endswith(".sha256"))


def run_extract(ctx: Context) -> list[Path]:
    cfg = ctx.cfg
    t0, t1, cut = cfg.window()
    cohort = load_cohort(ctx.data_dir, semester_window=(t0, t1), cutoff=cut)
    report = validate_cohort(cohort, cfg.features.min_enrollment)
    if not report.ok:
        raise CohortError("; ".join(report.fatal))
    fm = build_feature_matrix(cohort, k=cfg.features.entropy_k,
                              min_enrollment=cfg.features.min_enrollment)
    d = ctx.dir("features")
    fm.write(d)
    st = cohort.students.loc[fm.X.index, DEMOGRAPHICS + ["start_gpa", "end_term_gpa"]]
    st.to_csv(d / "students.csv", index_label="student_id", float_format="%.12g",
              lineterminator="\n")
    _json(d / "validation.json", {"warnings": list(report.warnings),
                                  "rejected_rows": len(cohort.rejects)})
    return [d / "features.csv", d / "manifest.json", d / "students.csv", d / "validation.json"]


def _profiles(fm: FeatureMatrix) -> pd.DataFrame:
    prof = fm.X[HOURS].copy()
    prof.loc[fm.X["hourly_missing"] > 0] = np.nan
    return prof


def run_cluster(ctx: Context) -> list[Path]:
    c = ctx.cfg.cluster
    fm = ctx.features()
    model = chrono.xmeans(_profiles(fm), kmin=c.kmin, kmax=c.kmax, band=c.band, seed=ctx.seed)
    assoc = chrono.demographic_associations(model.labels, ctx.students())
    d = ctx.dir("cluster")
    chrono.write_clusters(model, assoc, d)
    return [d / "clusters.csv", d / "associations.json", d / "cluster_model.json"]


def run_train(ctx: Context) -> list[Path]:
    m = ctx.cfg.models
    fm = ctx.features()
    metrics = {}
    for i, fam in enumerate(m.families):
        t = time.perf_counter()
        metrics[fam] = predict.grid_search_cv(fm.X, fm.y, fam, m.grid(fam), seed=ctx.seed + i,
                                              outer_folds=m.outer_folds, inner_folds=m.inner_folds)
        log.info("train %s: R2 %.3f (%.1fs)", fam, metrics[fam].r2, time.perf_counter() - t)
    d = ctx.dir("models")
    predict.write_metrics(metrics, d / "model_metrics.json")
    return [d / "model_metrics.json"]


def _best_family(metrics: dict, wanted: str | None) -> str:
    if wanted:
        return wanted
    return max(sorted(metrics), key=lambda f: metrics[f]["r2"])


def run_explain(ctx: Context) -> list[Path]:
    lc = ctx.cfg.lime
    fm = ctx.features()
    st = ctx.students()
    metrics = json.loads((ctx.out / "models" / "model_metrics.json").read_text())
    fam = _best_family(metrics, lc.model)
    spec = predict.ModelSpec(fam, metrics[fam]["chosen"])
    model = predict.fit_spec(spec, fm.X, fm.y, ctx.seed)
    groups = explain.student_groups(st)
    reports = explain.lime_groups(model, fm.X, groups, n_samples=lc.n_samples,
                                  seed=ctx.seed, scale=lc.scale)
    regs = []
    R = fm.X[list(lc.regression_features)]
    R = (R - R.mean()) / R.std(ddof=1)
    for name, mask in groups.items():
        if mask.sum() < 3:
            continue
        reports.append(explain.correlation_importance(fm.X, fm.y, mask, scope=name))
        try:
            regs.append(explain.group_regression(R, fm.y, mask, scope=name))
        except ValueError as e:
            log.warning("regression skipped for %s: %s", name, e)
    d = ctx.dir("explain")
    explain.write_importance(reports, regs, d)
    _json(d / "explained_model.json", {"family": fam, "hyperparameters": spec.hyperparameters})
    return [d / "importance.json", d / "importance.csv", d / "explained_model.json"]


def _mcca_groups(ctx: Context, fm: FeatureMatrix) -> list[mcca.FeatureGroup]:
    fams = fm.families()
    out = []
    for name, family in ctx.cfg.mcca.groups.items():
        cols = family if isinstance(family, list) else fams.get(family)
        if not cols:
            raise StageError("cca", f"group {name!r} has no columns ({family!r})")
        out.append(mcca.FeatureGroup.from_frame(name, fm.X[cols]))
    return out


def run_cca(ctx: Context) -> list[Path]:
    mc = ctx.cfg.mcca
    fm = ctx.features()
    groups = _mcca_groups(ctx, fm)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        gs = mcca.mcca_grid_search(groups, mc.penalty_grid, max_iters=mc.max_iters,
                                   seed=ctx.seed, max_support=mc.max_support)
    for w in caught:
        log.warning("cca: %s", w.message)
    comp = gs.result.composites.copy()
    comp.index = fm.X.index
    d = ctx.dir("cca")
    mcca.write_mcca(gs.result, comp, d, gs.diagnostics)
    return [d / "composites.csv", d / "mcca_weights.json"]


def causal_frame(ctx: Context) -> pd.DataFrame:
    """Composites, GPAs, course load, demographics and chronotype label."""
    fm = ctx.features()
    st = ctx.students()
    comp = pd.read_csv(ctx.out / "cca" / "composites.csv", dtype={"student_id": str}
                       ).set_index("student_id")
    lab = pd.read_csv(ctx.out / "cluster" / "clusters.csv", dtype={"student_id": str}
                      ).set_index("student_id")["cluster"]
    df = comp.copy()
    df["start_gpa"] = fm.X["start_gpa"]
    df["end_gpa"] = fm.y
    df["n_courses"] = fm.X["n_courses"]
    for c in DEMOGRAPHICS:
        df[c] = st[c].astype(str).astype("category")
    df["chronotype"] = lab.map(lambda v: "none" if v < 0 else f"c{v}").astype("category")
    return df


def _knowledge(ctx: Context, variables) -> KnowledgeTiers:
    keep = set(variables)
    tiers = [[v for v in t if v in keep] for t in ctx.cfg.causal.tiers]
    return KnowledgeTiers(tiers=[t for t in tiers if t])


def run_discover(ctx: Context) -> list[Path]:
    cc = ctx.cfg.causal
    df = causal_frame(ctx)
    pc_vars = list(df.columns)
    pc = pc_stable(df[pc_vars], knowledge=_knowledge(ctx, pc_vars), alpha=cc.alpha,
                   max_cond=cc.max_cond)
    fv = [v for v in cc.fci_variables if v in df.columns]
    pag = fci(df[fv], knowledge=_knowledge(ctx, fv), alpha=cc.alpha, max_cond=cc.max_cond)
    d = ctx.dir("causal")
    _json(d / "graph.json", {"pc": pc.to_dict(), "fci": pag.to_dict()})
    (d / "graph.dot").write_text(pc.to_dot("pc"))
    (d / "pag.dot").write_text(pag.to_dot("fci"))
    return [d / "graph.json", d / "graph.dot", d / "pag.dot"]


def run_sem(ctx: Context) -> list[Path]:
    cc = ctx.cfg.causal
    from .causal import CausalGraph
    pag = CausalGraph.from_dict(json.loads((ctx.out / "causal" / "graph.json").read_text())["fci"])
    df = causal_frame(ctx)
    over = domain_overrides(pag, cause_only=cc.cause_only, default=cc.pag_default)
    dag = pag_to_dag(pag, over)
    fit = fit_sem(dag, df[list(dag.nodes)].astype(float))
    d = ctx.dir("causal")
    _json(d / "sem.json", {"dag": dag.to_dict(), "overrides": [[list(e), o] for e, o in over],
                           "fit": fit.to_dict()})
    return [d / "sem.json"]


def run_report(ctx: Context) -> list[Path]:
    from .report import build_report
    path = ctx.out / "report.md"
    path.write_text(build_report(ctx.out))
    return [path]


STAGES = [
    Stage("generate", ("input", "semester"), (), run_generate),
    Stage("extract", ("input", "semester", "features"), (), run_extract),
    Stage("cluster", ("cluster",), (("features/features.csv", "extract"),), run_cluster),
    Stage("train", ("models",), (("features/features.csv", "extract"),), run_train),
    Stage("explain", ("lime", "models"), (("features/features.csv", "extract"),
                                          ("models/model_metrics.json", "train")), run_explain),
    Stage("cca", ("mcca",), (("features/features.csv", "extract"),), run_cca),
    Stage("discover", ("causal",), (("cca/composites.csv", "cca"),
                                    ("cluster/clusters.csv", "cluster"),
                                    ("features/features.csv", "extract")), run_discover),
    Stage("sem", ("causal",), (("causal/graph.json", "discover"),
                               ("cca/composites.csv", "cca")), run_sem),
    Stage("report", (), (("models/model_metrics.json", "train"),
                         ("cluster/associations.json", "cluster"),
                         ("explain/importance.json", "explain"),
                         ("cca/mcca_weights.json", "cca"),
                         ("causal/graph.json", "discover"),
                         ("causal/sem.json", "sem")), run_report),
]
STAGE_NAMES = [s.name for s in STAGES]
SUBCOMMAND_STAGE = {n: n for n in STAGE_NAMES}


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json"


def read_manifest(out: Path) -> dict:
    p = _manifest_path(out)
    return json.loads(p.read_text()) if p.exists() else {"stages": {}}


def _stage_key(stage: Stage, ctx: Context) -> str:
    h = hashlib.sha256(ctx.cfg.section_hash(*stage.sections).encode())
    if stage.name == "extract" and not ctx.cfg.input.generate:
        for p in sorted(ctx.data_dir.glob("*.csv")):
            h.update(sha256(p).encode())
    for rel, _ in stage.requires:
        h.update(sha256(ctx.out / rel).encode())
    if stage.name == "extract" and ctx.cfg.input.generate:
        h.update(sha256(ctx.out / "data" / "login_events.csv").encode())
    return h.hexdigest()


def _intact(entry: dict, out: Path) -> bool:
    for rel, digest in entry.get("outputs", {}).items():
        p = out / rel
        if not p.exists() or sha256(p) != digest:
            return False
    return bool(entry.get("outputs"))


def run_stage(name: str, cfg: PipelineConfig, force: bool = False) -> dict:
    """Run one stage, skipping it when its key and outputs are unchanged.

    Returns the manifest entry of the stage.
    """
    stage = next((s for s in STAGES if s.name == name), None)
    if stage is None:
        raise ValueError(f"unknown stage {name!r}")
    ctx = Context(cfg)
    if name == "generate" and not cfg.input.generate:
        return {"skipped": "input.generate is false"}
    if name == "extract" and cfg.input.generate and not (ctx.out / "data" / "login_events.csv").exists():
        raise StageError(name, "generated data missing: run generate first")
    for rel, producer in stage.requires:
        if not (ctx.out / rel).exists():
            raise StageError(name, f"missing {rel}: run {producer} first")
    ctx.out.mkdir(parents=True, exist_ok=True)
    manifest = read_manifest(ctx.out)
    key = _stage_key(stage, ctx)
    entry = manifest["stages"].get(name)
    if not force and entry and entry.get("key") == key and _intact(entry, ctx.out):
        log.info("%s: up to date", name)
        return entry
    t = time.perf_counter()
    try:
        outputs = stage.run(ctx)
    except (CohortError, StageError):
        raise
    except Exception as e:   # noqa: BLE001 - reported with the stage name
        raise StageError(name, f"{type(e).__name__}: {e}") from e
    log.info("%s: done in %.1fs", name, time.perf_counter() - t)
    entry = {"key": key,
             "outputs": {p.relative_to(ctx.out).as_posix(): sha256(p) for p in outputs}}
    sums = "".join(f"{d}  {Path(r).name}\n" for r, d in entry["outputs"].items())
    (outputs[0].parent / f"{name}.sha256").write_text(sums)
    manifest = read_manifest(ctx.out)
    manifest["stages"][name] = entry
    manifest["stages"] = {n: manifest["stages"][n] for n in STAGE_NAMES if n in manifest["stages"]}
    _manifest_path(ctx.out).write_text(json.dumps(manifest, indent=2) + "\n")
    return entry


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> dict:
    """Validate ``cfg`` and run every stage in order; returns the manifest."""
    cfg.validate()
    for s in STAGES:
        run_stage(s.name, cfg, force=force)
    return read_manifest(cfg.out_path)
