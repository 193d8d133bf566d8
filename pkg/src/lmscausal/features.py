"""Student-level features from login events.

Every family is computed from events before the cohort's mid-semester
cutoff.  Rows are ordered by student id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .data import CATEGORIES, DEFAULT_MIN_ENROLLMENT, Cohort
from .entropy import STAT_NAMES, kl_entropy, stat_seven

HOURS = [f"h{h:02d}" for h in range(1, 25)]   # h01 = 00:00-01:00
BANDS = ["t1", "t2", "t3", "t4"]              # 00-06, 06-12, 12-18, 18-24
TIMESTAMP_RESOLUTION_HOURS = 1.0 / 60.0
DEFAULT_K = 3

FAMILY_LABELS = {
    "login_volume": "Normalized Login Volume",
    "regularity": "Login Regularity (Entropy)",
    "hourly": "Hourly Login Volumes",
    "weekday_weekend": "Weekday/Weekend Login Volumes",
    "time_bands": "Time Band Login Volumes",
    "demographics": "Demographics",
    "courses": "Enrolled Courses",
    "prior_gpa": "Student Start GPA",
    "missing_flags": "Missing Indicators",
}


def _sample_ids(c: Cohort) -> list[str]:
    return sorted(c.students.index)


def course_zscores(c: Cohort, min_enrollment: int = DEFAULT_MIN_ENROLLMENT) -> pd.DataFrame:
    """Per-enrollment login counts and course z-scores.

    Counts cover every enrolled student (sample or not) up to the cutoff;
    enrolled students without events count 0.  Courses with fewer than
    ``min_enrollment`` students are dropped.  A course whose counts have
    zero SD gives z = 0 for all its students.
    """
    ev = c.events_until_cutoff()
    counts = ev.groupby(["student_id", "course_id"]).size().rename("logins")
    enr = c.enrollments[["student_id", "course_id"]]
    df = enr.merge(counts.reset_index(), on=["student_id", "course_id"], how="left")
    df["logins"] = df["logins"].fillna(0).astype(float)
    size = df.groupby("course_id")["student_id"].transform("size")
    df = df[size >= min_enrollment].copy()
    g = df.groupby("course_id")["logins"]
    mu = g.transform("mean")
    sd = g.transform(lambda s: s.std(ddof=1))
    z = (df["logins"] - mu) / sd
    df["z"] = np.where(sd > 0, z, 0.0)
    return df.sort_values(["course_id", "student_id"]).reset_index(drop=True)


def _stats_frame(groups: dict[str, list[float]], ids: list[str], prefix: str) -> pd.DataFrame:
    rows = [stat_seven(groups.get(sid, [])) for sid in ids]
    return pd.DataFrame(rows, index=pd.Index(ids, name="student_id"),
                        columns=[f"{prefix}_{s}" for s in STAT_NAMES])


def normalized_login_volume(c: Cohort, min_enrollment: int = DEFAULT_MIN_ENROLLMENT) -> pd.DataFrame:
    """StatSeven of each sample student's per-course login z-scores.

    Students with no eligible course get an all-NaN row.
    """
    z = course_zscores(c, min_enrollment)
    ids = _sample_ids(c)
    z = z[z["student_id"].isin(set(ids))]
    groups = z.groupby("student_id")["z"].apply(list).to_dict()
    return _stats_frame(groups, ids, "vol")


def course_entropies(c: Cohort, k: int = DEFAULT_K) -> pd.DataFrame:
    """Interval entropy per (student, course) for sample students.

    Intervals are in hours; zero intervals (same-minute accesses) are dropped.
    Entropy is NaN when fewer than ``k + 1`` intervals remain.
    """
    ev = c.events_until_cutoff()
    ev = ev[ev["student_id"].isin(set(c.students.index))]
    ev = ev.sort_values(["student_id", "course_id", "timestamp"])
    secs = ev["timestamp"].to_numpy().astype("datetime64[s]").astype(np.int64)
    sid = ev["student_id"].to_numpy()
    cid = ev["course_id"].to_numpy()
    out = []
    if len(ev):
        key_change = np.flatnonzero((sid[1:] != sid[:-1]) | (cid[1:] != cid[:-1])) + 1
        starts = np.concatenate([[0], key_change])
        ends = np.concatenate([key_change, [len(ev)]])
        for s, e in zip(starts, ends):
            iv = np.diff(secs[s:e]) / 3600.0
            iv = iv[iv > 0]
            h = kl_entropy(iv, k, min_distance=TIMESTAMP_RESOLUTION_HOURS) if iv.size else math.nan
            out.append((sid[s], cid[s], iv.size, h))
    return pd.DataFrame(out, columns=["student_id", "course_id", "n_intervals", "entropy"])


def login_regularity(c: Cohort, k: int = DEFAULT_K) -> pd.DataFrame:
    """StatSeven of each sample student's per-course interval entropies.

    Courses with undefined entropy are skipped; a student with none left
    gets an all-NaN row.
    """
    ent = course_entropies(c, k).dropna(subset=["entropy"])
    groups = ent.groupby("student_id")["entropy"].apply(list).to_dict()
    return _stats_frame(groups, _sample_ids(c), "reg")


def _day_counts(start: pd.Timestamp, stop: pd.Timestamp) -> tuple[int, int]:
    days = pd.date_range(start.normalize(), stop, freq="D", inclusive="left")
    weekend = int((days.dayofweek >= 5).sum())
    return len(days) - weekend, weekend


def chronotype_features(c: Cohort) -> pd.DataFrame:
    """Hourly login percentages, T1-T4 band means and weekday/weekend means.

    Band and weekday/weekend values are logins per calendar day between
    semester start and cutoff (per weekday or weekend day respectively),
    divided by the student's number of enrolled courses.  Zero-login
    students get NaN hourly percentages.
    """
    ids = _sample_ids(c)
    ev = c.events_until_cutoff()
    ev = ev[ev["student_id"].isin(set(ids))]
    hour = ev["timestamp"].dt.hour.to_numpy()
    dow = ev["timestamp"].dt.dayofweek.to_numpy()
    sidx = pd.Index(ids).get_indexer(ev["student_id"])
    n = len(ids)
    hourly = np.zeros((n, 24))
    np.add.at(hourly, (sidx, hour), 1.0)
    weekend_counts = np.bincount(sidx, weights=(dow >= 5).astype(float), minlength=n)
    total = hourly.sum(axis=1)

    start = pd.Timestamp(c.semester_window[0])
    stop = min(pd.Timestamp(c.cutoff), pd.Timestamp(c.semester_window[1]))
    n_days = max((stop - start.normalize()).days, 1)
    n_weekday, n_weekend = _day_counts(start, stop)
    n_courses = (c.enrollments.groupby("student_id")["course_id"].nunique()
                 .reindex(ids).fillna(0).to_numpy())
    denom = np.where(n_courses > 0, n_courses, 1.0)

    with np.errstate(invalid="ignore", divide="ignore"):
        pct = np.where(total[:, None] > 0, 100.0 * hourly / total[:, None], np.nan)
    bands = hourly.reshape(n, 4, 6).sum(axis=2) / n_days / denom[:, None]
    out = pd.DataFrame(pct, index=pd.Index(ids, name="student_id"), columns=HOURS)
    for b, name in enumerate(BANDS):
        out[name] = bands[:, b]
    out["weekday"] = (total - weekend_counts) / max(n_weekday, 1) / denom
    out["weekend"] = weekend_counts / max(n_weekend, 1) / denom
    out["n_courses"] = n_courses
    return out


def hourly_profiles(c: Cohort) -> pd.DataFrame:
    return chronotype_features(c)[HOURS]


@dataclass
class FeatureMatrix:
    X: pd.DataFrame
    y: pd.Series
    manifest: list[dict] = field(default_factory=list)

    @property
    def student_ids(self) -> list[str]:
        return list(self.X.index)

    def columns(self, family: str) -> list[str]:
        return [m["name"] for m in self.manifest if m["family"] == family]

    def families(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for m in self.manifest:
            out.setdefault(m["family"], []).append(m["name"])
        return out

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        df = self.X.copy()
        df["end_term_gpa"] = self.y
        df.to_csv(directory / "features.csv", float_format="%.12g", lineterminator="\n")
        manifest = {"target": "end_term_gpa", "columns": self.manifest}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def read(cls, directory: str | Path) -> "FeatureMatrix":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        df = pd.read_csv(directory / "features.csv", index_col="student_id",
                         dtype={"student_id": str})
        names = [m["name"] for m in manifest["columns"]]
        return cls(X=df[names].astype(float), y=df[manifest["target"]].astype(float),
                   manifest=manifest["columns"])


def encode_demographics(students: pd.DataFrame) -> pd.DataFrame:
    """One-hot demographics with the first category of each codomain dropped."""
    out = pd.DataFrame(index=students.index)
    prefixes = {"gender": "gender", "ethnicity": "ethnicity", "student_year": "year",
                "admit_type": "admit", "enrollment_type": "enroll"}
    for col, prefix in prefixes.items():
        for level in CATEGORIES[col][1:]:
            out[f"{prefix}_{level}"] = (students[col] == level).astype(float)
    out["age"] = students["age"].astype(float)
    return out


def build_feature_matrix(c: Cohort, k: int = DEFAULT_K,
                         min_enrollment: int = DEFAULT_MIN_ENROLLMENT) -> FeatureMatrix:
    """Assemble every feature family into one imputed matrix.

    Missing values (students with no eligible course, no defined entropy,
    no logins, or no start GPA) are replaced by the column median and
    flagged in a per-family indicator column.
    """
    if c.students.index.duplicated().any():
        raise ValueError("duplicate student ids")
    ids = _sample_ids(c)
    st = c.students.loc[ids]
    vol = normalized_login_volume(c, min_enrollment)
    reg = login_regularity(c, k)
    chrono = chronotype_features(c)
    demo = encode_demographics(st)

    parts: list[tuple[str, pd.DataFrame]] = [
        ("login_volume", vol),
        ("regularity", reg),
        ("time_bands", chrono[BANDS]),
        ("weekday_weekend", chrono[["weekday", "weekend"]]),
        ("hourly", chrono[HOURS]),
        ("demographics", demo),
        ("courses", chrono[["n_courses"]]),
        ("prior_gpa", st[["start_gpa"]].astype(float)),
    ]
    flags = {
        "vol_missing": vol.isna().all(axis=1),
        "reg_missing": reg.isna().all(axis=1),
        "hourly_missing": chrono[HOURS].isna().all(axis=1),
        "start_gpa_missing": st["start_gpa"].isna(),
    }
    X = pd.concat([p for _, p in parts], axis=1)
    manifest = []
    for fam, p in parts:
        for col in p.columns:
            manifest.append({"name": col, "family": fam, "label": FAMILY_LABELS[fam],
                             "imputed": bool(X[col].isna().any())})
    for name, flag in flags.items():
        X[name] = flag.astype(float).to_numpy()
        manifest.append({"name": name, "family": "missing_flags",
                         "label": FAMILY_LABELS["missing_flags"], "imputed": False})
    for col in X.columns:
        if X[col].isna().any():
            med = X[col].median()
            X[col] = X[col].fillna(0.0 if pd.isna(med) else med)
    X = X.astype(float)
    X.index.name = "student_id"
    y = st["end_term_gpa"].astype(float).rename("end_term_gpa")
    y.index.name = "student_id"
    return FeatureMatrix(X=X, y=y, manifest=manifest)
