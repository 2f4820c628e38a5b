"""Small statistical helpers shared across modules."""

from __future__ import annotations

import numpy as np
from scipy import stats as _st


def wilson_ci(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = k / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def linear_fit(x, y):
    """Least-squares line fit; returns (slope, intercept, r2, slope_se, intercept_se)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    res = _st.linregress(x, y)
    return res.slope, res.intercept, res.rvalue**2, res.stderr, res.intercept_stderr


def fit_through_origin(x, y):
    """Least-squares slope with zero intercept and its R^2 against the data mean."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope = float(np.dot(x, y) / np.dot(x, x))
    resid = y - slope * x
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, r2


def mean_ci(values, z: float = 1.96) -> tuple[float, float, float]:
    """(mean, lo, hi) normal-approximation interval for the sample mean."""
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    if len(v) < 2:
        return m, m, m
    half = z * float(v.std(ddof=1)) / np.sqrt(len(v))
    return m, m - half, m + half
