import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from lmscausal.entropy import MISSING_STATS, kl_entropy, stat_seven

floats = st.floats(-1e3, 1e3, allow_nan=False)


def test_stat_seven_matches_scipy():
    x = np.random.default_rng(0).gamma(2.0, size=50)
    s = stat_seven(x)
    assert s.mean == pytest.approx(x.mean())
    assert s.median == pytest.approx(np.median(x))
    assert s.sd == pytest.approx(x.std(ddof=1))
    assert s.skew == pytest.approx(stats.skew(x))
    assert s.kurt == pytest.approx(stats.kurtosis(x))


def test_stat_seven_edge_cases():
    assert all(math.isnan(v) for v in stat_seven([]))
    assert stat_seven([])._fields == MISSING_STATS._fields
    one = stat_seven([2.0])
    assert one.sd == 0 and one.skew == 0 and one.kurt == 0
    const = stat_seven([1.0] * 6)
    assert const.sd == 0 and const.skew == 0 and const.kurt == 0


@given(st.lists(floats, min_size=1, max_size=40))
def test_stat_seven_ordering(xs):
    s = stat_seven(xs)
    assert s.min <= s.median <= s.max
    assert s.min - 1e-9 <= s.mean <= s.max + 1e-9
    assert s.sd >= 0


@given(st.lists(floats, min_size=4, max_size=40), st.floats(-100, 100), st.floats(0.1, 10))
def test_stat_seven_affine(xs, a, b):
    s = stat_seven(xs)
    t = stat_seven([a + b * x for x in xs])
    assert t.sd == pytest.approx(b * s.sd, rel=1e-6, abs=1e-6)
    if s.sd > 1e-3 * (1 + max(abs(x) for x in xs)):
        assert t.skew == pytest.approx(s.skew, abs=1e-6)
        assert t.kurt == pytest.approx(s.kurt, abs=1e-6)


def test_entropy_exponential():
    # Exp(1) has differential entropy 1
    x = np.random.default_rng(1).exponential(size=20000)
    assert kl_entropy(x, 3) == pytest.approx(1.0, abs=0.05)


@given(st.floats(0.01, 100))
def test_entropy_scale_shift(c):
    x = np.random.default_rng(2).standard_normal(500)
    assert kl_entropy(c * x + 5, 3) == pytest.approx(kl_entropy(x, 3) + math.log(c), abs=1e-9)


def test_entropy_too_few_samples():
    assert math.isnan(kl_entropy([1.0, 2.0, 3.0], k=3))
    assert not math.isnan(kl_entropy([1.0, 2.0, 3.0, 4.5], k=3))
    with pytest.raises(ValueError):
        kl_entropy([1, 2, 3], k=0)


def test_entropy_duplicates():
    x = np.array([1.0, 1.0, 2.0, 3.0, 5.0, 8.0])
    assert kl_entropy(x, 2) == kl_entropy(np.unique(x), 2)
    floored = kl_entropy(x, 1, min_distance=0.5)
    assert np.isfinite(floored)


def test_regular_logins_have_lower_entropy():
    rng = np.random.default_rng(3)
    regular = 24 + 0.2 * rng.standard_normal(200)
    erratic = rng.exponential(24, 200)
    assert kl_entropy(regular) < kl_entropy(erratic)
