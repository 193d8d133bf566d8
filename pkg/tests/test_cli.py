import json

import pandas as pd
import pytest
import yaml

from lmscausal.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_STAGE, main
from lmscausal.data import write_cohort
from lmscausal.synthgen import generate_cohort

SEMESTER = {"start": "2019-08-26T00:00:00", "end": "2019-12-14T00:00:00",
            "cutoff": "2019-10-19T00:00:00"}


def _config(tmp_path, **extra):
    d = {"seed": 5, "out_dir": "out", "semester": dict(SEMESTER),
         "input": {"generate": True, "spec": "default",
                   "spec_overrides": {"n_students": 200, "n_courses": 40, "n_outside_students": 60}},
         "models": {"families": ["ElasticNet", "DecisionTree"], "outer_folds": 3, "inner_folds": 2}}
    d.update(extra)
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(d))
    return p


def test_missing_cutoff_is_config_error(tmp_path, capsys):
    p = _config(tmp_path, semester={"start": SEMESTER["start"], "end": SEMESTER["end"]})
    assert main(["run", "--config", str(p)]) == EXIT_CONFIG
    assert "cutoff" in capsys.readouterr().err


def test_unknown_key_and_missing_file(tmp_path):
    assert main(["run", "--config", str(_config(tmp_path, bogus=1))]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_bad_data_exit_code(tmp_path, small_spec, capsys):
    cohort, _ = generate_cohort(small_spec, 1)
    data = tmp_path / "cohort"
    write_cohort(cohort, data)
    g = pd.read_csv(data / "grades.csv", dtype=str)
    g.loc[0, "end_term_gpa"] = "5.2"
    g.to_csv(data / "grades.csv", index=False)
    p = _config(tmp_path, input={"generate": False, "data_dir": "cohort"})
    assert main(["extract", "--config", str(p)]) == EXIT_DATA
    assert "grades.csv" in capsys.readouterr().err


def test_stage_out_of_order(tmp_path, capsys):
    p = _config(tmp_path)
    assert main(["discover", "--config", str(p)]) == EXIT_STAGE
    assert "run cca first" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    p = _config(tmp)
    for stage in ("generate", "extract", "train"):
        assert main([stage, "--config", str(p)]) == EXIT_OK
    return p, tmp / "out"


def test_manifest_records_hashes(trained):
    _, out = trained
    m = json.loads((out / "manifest.json").read_text())
    assert list(m["stages"]) == ["generate", "extract", "train"]
    for entry in m["stages"].values():
        assert entry["outputs"] and all(len(h) == 64 for h in entry["outputs"].values())
    assert (out / "models" / "train.sha256").read_text().split()[1] == "model_metrics.json"


def test_rerun_is_noop(trained):
    p, out = trained
    metrics = out / "models" / "model_metrics.json"
    before = metrics.stat().st_mtime_ns, metrics.read_bytes()
    assert main(["train", "--config", str(p)]) == EXIT_OK
    assert (metrics.stat().st_mtime_ns, metrics.read_bytes()) == before


def test_forced_retrain_identical(trained):
    p, out = trained
    metrics = out / "models" / "model_metrics.json"
    before = metrics.read_bytes()
    assert main(["train", "--config", str(p), "--force"]) == EXIT_OK
    assert metrics.read_bytes() == before


def test_tampered_output_reruns(trained):
    p, out = trained
    metrics = out / "models" / "model_metrics.json"
    good = metrics.read_bytes()
    metrics.write_text("{}")
    assert main(["train", "--config", str(p)]) == EXIT_OK
    assert metrics.read_bytes() == good
