"""Kozachenko-Leonenko entropy and the seven summary statistics."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import digamma

STAT_NAMES = ("mean", "median", "min", "max", "sd", "skew", "kurt")


class StatSeven(NamedTuple):
    mean: float
    median: float
    min: float
    max: float
    sd: float
    skew: float
    kurt: float


MISSING_STATS = StatSeven(*([math.nan] * 7))


def stat_seven(values) -> StatSeven:
    """Mean, median, min, max, sample SD, skewness and excess kurtosis.

    Skewness and kurtosis are the moment ratios ``m3/m2**1.5`` and
    ``m4/m2**2 - 3``.  They are 0 for fewer than 3 (skew) or 4 (kurtosis)
    values and for constant vectors; the SD of a single value is 0.
    An empty input gives :data:`MISSING_STATS`.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        return MISSING_STATS
    mean = float(x.mean())
    d = x - mean
    m2 = float(np.mean(d ** 2))
    sd = float(np.sqrt(np.sum(d ** 2) / (n - 1))) if n > 1 else 0.0
    skew = kurt = 0.0
    if m2 > 1e-300:
        if n >= 3:
            skew = float(np.mean(d ** 3) / m2 ** 1.5)
        if n >= 4:
            kurt = float(np.mean(d ** 4) / m2 ** 2 - 3.0)
    return StatSeven(mean, float(np.median(x)), float(x.min()), float(x.max()), sd, skew, kurt)


def _kth_neighbor_distance(x: np.ndarray, k: int) -> np.ndarray:
    """Distance from each point of sorted 1-D ``x`` to its k-th nearest other point."""
    n = x.size
    pad = np.concatenate([np.full(k, -np.inf), x, np.full(k, np.inf)])
    cand = np.empty((n, 2 * k))
    for j in range(1, k + 1):
        cand[:, j - 1] = x - pad[k - j: k - j + n]
        cand[:, k + j - 1] = pad[k + j: k + j + n] - x
    return np.partition(cand, k - 1, axis=1)[:, k - 1]


def kl_entropy(samples, k: int = 3, min_distance: float | None = None) -> float:
    """Kozachenko-Leonenko k-NN estimate of differential entropy in nats (1-D).

    ``H = psi(n) - psi(k) + log 2 + mean(log eps_i)`` where ``eps_i`` is the
    distance from sample ``i`` to its k-th nearest neighbour.

    Repeated values have zero neighbour distances.  With ``min_distance``
    set, distances are floored at it (the measurement resolution);
    otherwise repeated values are collapsed to one before estimating.

    Returns NaN when fewer than ``k + 1`` usable samples remain.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    x = x[np.isfinite(x)]
    if min_distance is None:
        x = np.unique(x)
    n = x.size
    if n < k + 1:
        return math.nan
    eps = _kth_neighbor_distance(x, k)
    if min_distance is not None:
        eps = np.maximum(eps, min_distance)
    return float(digamma(n) - digamma(k) + math.log(2.0) + np.mean(np.log(eps)))
