"""Cohort ingestion: domain types, CSV loading/writing and validation.

A cohort directory holds four CSV files plus an optional ``cohort.json``
carrying the semester window and the mid-semester cutoff::

    demographics.csv   student_id,gender,ethnicity,student_year,admit_type,enrollment_type,age
    enrollments.csv    student_id,course_id
    login_events.csv   student_id,course_id,timestamp      (YYYY-MM-DDTHH:MM:SS)
    grades.csv         student_id,start_gpa,end_term_gpa   (start_gpa may be empty)

The study sample is the set of students listed in ``demographics.csv``.
Students that only appear in ``enrollments.csv`` are classmates outside the
sample; their logins still count towards per-course statistics.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"

GENDERS = ("Male", "Female")
ETHNICITIES = ("White", "Asian", "Minority")
STUDENT_YEARS = (1, 2, 3, 4)
ADMIT_TYPES = ("Regular", "Transfer")
ENROLLMENT_TYPES = ("FullTime", "PartTime")

CATEGORIES = {
    "gender": GENDERS,
    "ethnicity": ETHNICITIES,
    "student_year": STUDENT_YEARS,
    "admit_type": ADMIT_TYPES,
    "enrollment_type": ENROLLMENT_TYPES,
}

DEMOGRAPHIC_COLUMNS = ["student_id", "gender", "ethnicity", "student_year",
                       "admit_type", "enrollment_type", "age"]
ENROLLMENT_COLUMNS = ["student_id", "course_id"]
EVENT_COLUMNS = ["student_id", "course_id", "timestamp"]
GRADE_COLUMNS = ["student_id", "start_gpa", "end_term_gpa"]

FILES = {
    "demographics.csv": DEMOGRAPHIC_COLUMNS,
    "enrollments.csv": ENROLLMENT_COLUMNS,
    "login_events.csv": EVENT_COLUMNS,
    "grades.csv": GRADE_COLUMNS,
}

DEFAULT_MIN_ENROLLMENT = 3


class CohortError(ValueError):
    """Raised when cohort files are missing or malformed.

    ``problems`` lists every offending item found, not just the first.
    """

    def __init__(self, message: str, problems: list[str] | None = None):
        self.problems = list(problems or [])
        detail = "" if not self.problems else ":\n  " + "\n  ".join(self.problems[:20])
        if len(self.problems) > 20:
            detail += f"\n  ... ({len(self.problems) - 20} more)"
        super().__init__(message + detail)


@dataclass(frozen=True)
class LoginEvent:
    student_id: str
    course_id: str
    timestamp: datetime


@dataclass(frozen=True)
class Enrollment:
    student_id: str
    course_id: str


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    gender: str
    ethnicity: str
    student_year: int
    admit_type: str
    enrollment_type: str
    age: float
    start_gpa: float | None
    end_term_gpa: float


@dataclass(frozen=True)
class Cohort:
    """Joined cohort tables.

    ``students`` is indexed by student_id and holds demographics plus grades.
    ``events`` holds one row per course access with a ``datetime64`` timestamp.
    ``rejects`` itemizes event rows dropped during loading.
    Treat the frames as read-only.
    """

    students: pd.DataFrame
    enrollments: pd.DataFrame
    events: pd.DataFrame
    semester_window: tuple[datetime, datetime]
    cutoff: datetime
    rejects: tuple[str, ...] = ()

    @property
    def student_ids(self) -> list[str]:
        return list(self.students.index)

    def records(self) -> list[StudentRecord]:
        out = []
        for sid, row in self.students.iterrows():
            start = None if pd.isna(row["start_gpa"]) else float(row["start_gpa"])
            out.append(StudentRecord(
                student_id=sid, gender=row["gender"], ethnicity=row["ethnicity"],
                student_year=int(row["student_year"]), admit_type=row["admit_type"],
                enrollment_type=row["enrollment_type"], age=float(row["age"]),
                start_gpa=start, end_term_gpa=float(row["end_term_gpa"])))
        return out

    def events_until_cutoff(self) -> pd.DataFrame:
        return self.events[self.events["timestamp"] < pd.Timestamp(self.cutoff)]


@dataclass
class ValidationReport:
    counts: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    fatal: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.fatal


def _read_csv(path: Path, columns: list[str]) -> pd.DataFrame:
    if not path.exists():
        raise CohortError(f"missing file: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise CohortError(f"{path.name}: missing columns {missing}")
    return df[columns]


def _parse_window(meta: dict) -> tuple[tuple[datetime, datetime], datetime]:
    start = datetime.fromisoformat(meta["semester_start"])
    end = datetime.fromisoformat(meta["semester_end"])
    cutoff = datetime.fromisoformat(meta["cutoff"])
    return (start, end), cutoff


def load_cohort(directory: str | Path,
                semester_window: tuple[datetime, datetime] | None = None,
                cutoff: datetime | None = None) -> Cohort:
    """Load and join the four cohort CSVs found in ``directory``.

    The semester window and cutoff come from the arguments when given,
    otherwise from ``cohort.json`` in the same directory.

    Raises
    ------
    CohortError
        On a missing file, a malformed timestamp (row and column are named),
        a duplicate enrollment, a GPA outside [0, 4], an unknown category,
        or grades for students absent from demographics.
    """
    directory = Path(directory)
    frames = {name: _read_csv(directory / name, cols) for name, cols in FILES.items()}

    meta_path = directory / "cohort.json"
    if semester_window is None or cutoff is None:
        if not meta_path.exists():
            raise CohortError("semester window and cutoff not given and cohort.json missing")
        window_meta, cutoff_meta = _parse_window(json.loads(meta_path.read_text()))
        semester_window = semester_window or window_meta
        cutoff = cutoff or cutoff_meta

    demo = frames["demographics.csv"].copy()
    problems = []
    for col, allowed in CATEGORIES.items():
        values = demo[col]
        if col == "student_year":
            try:
                values = demo[col].astype(int)
            except ValueError:
                values = pd.Series([None] * len(demo))
        bad = ~values.isin(allowed)
        for i in np.flatnonzero(bad.to_numpy()):
            problems.append(f"demographics.csv line {i + 2}, column '{col}': "
                            f"value {demo[col].iloc[i]!r} not in {list(allowed)}")
    if problems:
        raise CohortError("invalid categorical values", problems)
    demo["student_year"] = demo["student_year"].astype(int)
    demo["age"] = pd.to_numeric(demo["age"], errors="raise")
    if demo["student_id"].duplicated().any():
        dups = sorted(demo.loc[demo["student_id"].duplicated(), "student_id"])
        raise CohortError("duplicate student ids in demographics.csv", dups)

    grades = frames["grades.csv"].copy()
    grades["start_gpa"] = pd.to_numeric(grades["start_gpa"].replace("", np.nan))
    grades["end_term_gpa"] = pd.to_numeric(grades["end_term_gpa"])
    unknown = sorted(set(grades["student_id"]) - set(demo["student_id"]))
    if unknown:
        raise CohortError("grades.csv lists students absent from demographics.csv", unknown)
    for col in ("start_gpa", "end_term_gpa"):
        vals = grades[col]
        bad = vals.notna() & ((vals < 0) | (vals > 4))
        if bad.any():
            raise CohortError(f"GPA outside [0,4] in grades.csv column '{col}'",
                              [f"line {i + 2}: {vals.iloc[i]}" for i in np.flatnonzero(bad)])
    if grades["end_term_gpa"].isna().any():
        raise CohortError("end_term_gpa missing",
                          [f"line {i + 2}" for i in np.flatnonzero(grades["end_term_gpa"].isna())])

    students = demo.merge(grades, on="student_id", how="left").set_index("student_id")
    no_grade = students.index[students["end_term_gpa"].isna()]
    if len(no_grade):
        raise CohortError("students without grades", list(no_grade))

    enr = frames["enrollments.csv"]
    dup = enr.duplicated()
    if dup.any():
        raise CohortError("duplicate (student, course) enrollments",
                          [f"line {i + 2}: {enr.iloc[i, 0]},{enr.iloc[i, 1]}"
                           for i in np.flatnonzero(dup)])

    ev = frames["login_events.csv"].copy()
    ts = pd.to_datetime(ev["timestamp"], format=TIMESTAMP_FORMAT, errors="coerce")
    bad_ts = ts.isna()
    if bad_ts.any():
        raise CohortError("malformed timestamps",
                          [f"login_events.csv line {i + 2}, column 'timestamp': "
                           f"{ev['timestamp'].iloc[i]!r}" for i in np.flatnonzero(bad_ts)])
    ev["timestamp"] = ts

    rejects = []
    empty_id = (ev["student_id"] == "") | (ev["course_id"] == "")
    start, end = pd.Timestamp(semester_window[0]), pd.Timestamp(semester_window[1])
    outside = (ev["timestamp"] < start) | (ev["timestamp"] >= end)
    for i in np.flatnonzero(empty_id.to_numpy()):
        rejects.append(f"login_events.csv line {i + 2}: empty id")
    for i in np.flatnonzero((outside & ~empty_id).to_numpy()):
        rejects.append(f"login_events.csv line {i + 2}: timestamp outside semester window")
    keep = ~(empty_id | outside)
    if rejects:
        logger.warning("rejected %d event rows", len(rejects))
    ev = ev[keep].reset_index(drop=True)

    return Cohort(students=students, enrollments=enr.reset_index(drop=True), events=ev,
                  semester_window=tuple(semester_window), cutoff=cutoff,
                  rejects=tuple(rejects))


def write_cohort(cohort: Cohort, directory: str | Path) -> None:
    """Serialize ``cohort`` in the layout :func:`load_cohort` reads."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    st = cohort.students.reset_index()
    st[DEMOGRAPHIC_COLUMNS].to_csv(directory / "demographics.csv", index=False,
                                   lineterminator="\n")
    grades = st[GRADE_COLUMNS].copy()
    grades["start_gpa"] = [_fmt_float(v) for v in grades["start_gpa"]]
    grades["end_term_gpa"] = [_fmt_float(v) for v in grades["end_term_gpa"]]
    grades.to_csv(directory / "grades.csv", index=False, lineterminator="\n")
    cohort.enrollments[ENROLLMENT_COLUMNS].to_csv(directory / "enrollments.csv",
                                                  index=False, lineterminator="\n")
    ev = cohort.events[["student_id", "course_id"]].copy()
    ev["timestamp"] = cohort.events["timestamp"].dt.strftime(TIMESTAMP_FORMAT)
    ev.to_csv(directory / "login_events.csv", index=False, lineterminator="\n")
    meta = {
        "semester_start": cohort.semester_window[0].isoformat(),
        "semester_end": cohort.semester_window[1].isoformat(),
        "cutoff": cohort.cutoff.isoformat(),
    }
    (directory / "cohort.json").write_text(json.dumps(meta, indent=2) + "\n")


def _fmt_float(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return repr(float(v))


def validate_cohort(cohort: Cohort, min_enrollment: int = DEFAULT_MIN_ENROLLMENT) -> ValidationReport:
    """Report orphan events, zero-login students and undersized courses.

    Never raises; structural problems go to ``report.fatal``.
    """
    report = ValidationReport()
    st, enr, ev = cohort.students, cohort.enrollments, cohort.events

    for col, allowed in CATEGORIES.items():
        bad = ~st[col].isin(allowed)
        for sid in st.index[bad]:
            report.fatal.append(f"student {sid}: {col}={st.at[sid, col]!r} not in {list(allowed)}")
    for col in ("start_gpa", "end_term_gpa"):
        vals = st[col]
        for sid in st.index[vals.notna() & ((vals < 0) | (vals > 4))]:
            report.fatal.append(f"student {sid}: {col}={vals[sid]} outside [0,4]")
    if enr.duplicated().any():
        report.fatal.append(f"{int(enr.duplicated().sum())} duplicate enrollments")
    if st.index.duplicated().any():
        report.fatal.append("duplicate student ids")
    start, end = (pd.Timestamp(t) for t in cohort.semester_window)
    outside = int(((ev["timestamp"] < start) | (ev["timestamp"] >= end)).sum())
    if outside:
        report.fatal.append(f"{outside} events outside the semester window")

    pairs = pd.MultiIndex.from_frame(enr[["student_id", "course_id"]])
    ev_pairs = pd.MultiIndex.from_frame(ev[["student_id", "course_id"]])
    orphan = int((~ev_pairs.isin(pairs)).sum()) if len(ev) else 0
    if orphan:
        report.warnings.append(f"orphan events (no matching enrollment): {orphan}")

    active = set(ev["student_id"].unique())
    zero = [sid for sid in st.index if sid not in active]
    if zero:
        report.warnings.append(f"zero-login student: {len(zero)}")

    sizes = enr.groupby("course_id")["student_id"].nunique()
    small = sorted(sizes.index[sizes < min_enrollment])
    if small:
        report.warnings.append(
            f"courses below minimum enrollment {min_enrollment}: {', '.join(small)}")

    report.counts = {
        "students": int(len(st)),
        "enrollments": int(len(enr)),
        "events": int(len(ev)),
        "courses": int(enr["course_id"].nunique()),
        "orphan_events": orphan,
        "zero_login_students": len(zero),
        "small_courses": len(small),
        "rejected_rows": len(cohort.rejects),
    }
    return report
