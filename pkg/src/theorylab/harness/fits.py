"""Small fitting helpers shared by the experiment drivers.

Plain least squares on transformed coordinates; nothing iterative except the
one-dimensional golden-section search used by the order study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float
    n_points: int


def _ols(x: np.ndarray, y: np.ndarray) -> FitResult:
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        raise ValueError("fit needs at least two distinct x values")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float((resid**2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(slope, intercept, r2, n)


def fit_loglog(points: Sequence[tuple[float, float]]) -> FitResult:
    """Ordinary least squares on (ln x, ln y); inputs must be positive."""
    if len(points) < 3:
        raise ValueError(f"need at least 3 points, got {len(points)}")
    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points], dtype=np.float64)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("fit_loglog needs strictly positive coordinates")
    return _ols(np.log(xs), np.log(ys))


def fit_linlog(xs: Sequence[float], ys: Sequence[float]) -> FitResult:
    """Least squares of ln y on x (exponential growth model y = C e^{bx})."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) < 3:
        raise ValueError(f"need at least 3 points, got {len(x)}")
    if np.any(y <= 0):
        raise ValueError("fit_linlog needs strictly positive y")
    return _ols(x, np.log(y))


def fit_through_origin(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of y on x with zero intercept; returns (slope, r2).

    r2 is computed against the mean of y (how much of the variance the
    one-parameter model explains), which can be negative for a bad model.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    sxx = float((x * x).sum())
    if sxx == 0.0:
        raise ValueError("all x are zero")
    slope = float((x * y).sum()) / sxx
    resid = y - slope * x
    ss_res = float((resid**2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, r2


def is_nonincreasing(values: Sequence[float], tol: float = 0.0) -> bool:
    return all(b <= a + tol for a, b in zip(values, values[1:]))


def is_nondecreasing(values: Sequence[float], tol: float = 0.0) -> bool:
    return all(b >= a - tol for a, b in zip(values, values[1:]))


def median(values: Sequence[float]) -> float:
    v = sorted(values)
    n = len(v)
    if n == 0:
        raise ValueError("median of empty sequence")
    mid = n // 2
    return float(v[mid]) if n % 2 else 0.5 * (v[mid - 1] + v[mid])


def quantile_upper(values: Sequence[float], q: float) -> float:
    """The smallest element v with at least a q fraction of the sample <= v
    (conservative upper quantile, exact on small PAC-style samples)."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    v = sorted(values)
    k = max(1, math.ceil(q * len(v)))
    return float(v[k - 1])


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(
    fn: Callable[[float], float], lo: float, hi: float, iters: int = 80
) -> float:
    """Deterministic golden-section minimizer of a unimodal scalar function."""
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)
