import pytest
from hypothesis import settings

from lmscausal.synthgen import ScmSpec, generate_cohort

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def small_spec():
    return ScmSpec(n_students=200, n_courses=40, n_outside_students=60)


@pytest.fixture(scope="session")
def small_cohort(small_spec):
    cohort, truth = generate_cohort(small_spec, seed=3)
    return cohort, truth


@pytest.fixture(scope="session")
def small_features(small_cohort):
    from lmscausal.features import build_feature_matrix
    return build_feature_matrix(small_cohort[0])


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one pass/fail line per acceptance criterion.

    The test calls ``verdict(label, ok, detail)``; the line is printed in the
    terminal summary whether or not the test later fails.
    """
    def record(label: str, ok: bool, detail: str, seconds: float):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail} [{seconds:.1f}s]")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
