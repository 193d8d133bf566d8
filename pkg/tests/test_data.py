import json
from datetime import datetime

import pandas as pd
import pytest

from lmscausal.data import CohortError, load_cohort, validate_cohort, write_cohort


def _write(tmp_path, demo=None, enr=None, ev=None, grades=None):
    demo = demo or ["S1,Male,White,2,Regular,FullTime,20", "S2,Female,Asian,1,Transfer,PartTime,24"]
    enr = enr or ["S1,C1", "S2,C1", "X1,C1"]
    ev = ev or ["S1,C1,2019-09-01T10:00:00", "S2,C1,2019-09-02T11:30:00",
                "X1,C1,2019-09-03T09:00:00"]
    grades = grades or ["S1,3.1,3.3", "S2,,2.5"]
    (tmp_path / "demographics.csv").write_text(
        "student_id,gender,ethnicity,student_year,admit_type,enrollment_type,age\n"
        + "\n".join(demo) + "\n")
    (tmp_path / "enrollments.csv").write_text("student_id,course_id\n" + "\n".join(enr) + "\n")
    (tmp_path / "login_events.csv").write_text(
        "student_id,course_id,timestamp\n" + "\n".join(ev) + "\n")
    (tmp_path / "grades.csv").write_text(
        "student_id,start_gpa,end_term_gpa\n" + "\n".join(grades) + "\n")
    (tmp_path / "cohort.json").write_text(json.dumps(
        {"semester_start": "2019-08-26T00:00:00", "semester_end": "2019-12-14T00:00:00",
         "cutoff": "2019-10-19T00:00:00"}))
    return tmp_path


def test_load_minimal(tmp_path):
    c = load_cohort(_write(tmp_path))
    assert sorted(c.students.index) == ["S1", "S2"]
    assert pd.isna(c.students.loc["S2", "start_gpa"])
    assert len(c.events) == 3
    assert c.cutoff == datetime(2019, 10, 19)


def test_malformed_timestamp_names_row(tmp_path):
    _write(tmp_path, ev=["S1,C1,2019-09-01 10:00", "S2,C1,2019-09-02T11:30:00"])
    with pytest.raises(CohortError, match="malformed timestamps") as e:
        load_cohort(tmp_path)
    assert "line 2" in str(e.value.args)


def test_gpa_out_of_range(tmp_path):
    _write(tmp_path, grades=["S1,3.1,4.5", "S2,,2.5"])
    with pytest.raises(CohortError, match="GPA outside"):
        load_cohort(tmp_path)


def test_unknown_category(tmp_path):
    _write(tmp_path, demo=["S1,Other,White,2,Regular,FullTime,20",
                           "S2,Female,Asian,1,Transfer,PartTime,24"])
    with pytest.raises(CohortError, match="categorical"):
        load_cohort(tmp_path)


def test_duplicate_enrollment(tmp_path):
    _write(tmp_path, enr=["S1,C1", "S1,C1", "S2,C1"])
    with pytest.raises(CohortError, match="duplicate"):
        load_cohort(tmp_path)


def test_events_outside_window_rejected(tmp_path):
    _write(tmp_path, ev=["S1,C1,2019-09-01T10:00:00", "S2,C1,2020-01-02T11:30:00"])
    c = load_cohort(tmp_path)
    assert len(c.events) == 1 and len(c.rejects) == 1


def test_missing_file(tmp_path):
    _write(tmp_path)
    (tmp_path / "grades.csv").unlink()
    with pytest.raises(CohortError):
        load_cohort(tmp_path)


def test_round_trip(tmp_path, small_cohort):
    c = small_cohort[0]
    write_cohort(c, tmp_path)
    back = load_cohort(tmp_path)
    pd.testing.assert_frame_equal(back.students.sort_index(), c.students.sort_index(),
                                  check_dtype=False, check_like=True)
    assert len(back.events) == len(c.events)
    assert validate_cohort(back).ok


def test_validation_reports_zero_login(tmp_path):
    _write(tmp_path, ev=["S1,C1,2019-09-01T10:00:00"])
    rep = validate_cohort(load_cohort(tmp_path))
    assert rep.ok
    assert any("S2" in w or "zero" in w.lower() for w in rep.warnings)
