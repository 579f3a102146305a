"""Streaming moments, normal confidence intervals, log-log rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DegeneracyError, DomainError, NumericError

# two-sided standard normal quantiles for the supported confidence levels
_Z_TABLE = {
    0.9: 1.6448536269514722,
    0.95: 1.959963984540054,
    0.99: 2.5758293035489004,
}


@dataclass(frozen=True)
class RunningMoments:
    """Welford sufficient statistics (count, mean, sum of squared deviations)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        """Unbiased sample variance; 0.0 until two samples exist."""
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)


def push(moments: RunningMoments, x: float) -> RunningMoments:
    if not math.isfinite(x):
        raise NumericError(f"cannot accumulate non-finite value {x!r}")
    n = moments.count + 1
    delta = x - moments.mean
    mean = moments.mean + delta / n
    m2 = moments.m2 + delta * (x - mean)
    return RunningMoments(n, mean, m2)


def merge(a: RunningMoments, b: RunningMoments) -> RunningMoments:
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return RunningMoments(n, mean, m2)


def from_samples(xs: Iterable[float]) -> RunningMoments:
    mom = RunningMoments()
    for x in xs:
        mom = push(mom, float(x))
    return mom


def normal_ci(moments: RunningMoments, confidence: float) -> tuple[float, float]:
    """Normal-approximation interval mean +- z * sqrt(var / count)."""
    if moments.count < 2:
        raise ConfigurationError("normal_ci needs at least two samples")
    z = _Z_TABLE.get(confidence)
    if z is None:
        raise ConfigurationError(
            f"unsupported confidence {confidence}; supported: {sorted(_Z_TABLE)}"
        )
    half = z * math.sqrt(moments.variance / moments.count)
    return (moments.mean - half, moments.mean + half)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float


def loglog_fit(points: Sequence[tuple[float, float]], skip_coarsest: bool = False) -> RateFit:
    """Ordinary least squares on (log x, log y).

    ``skip_coarsest`` drops the point with the largest x before fitting,
    for sweeps whose coarsest entry is visibly pre-asymptotic.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if skip_coarsest and len(pts) > 2:
        pts.remove(max(pts, key=lambda p: p[0]))
    for x, y in pts:
        if x <= 0 or y <= 0:
            raise DomainError(f"loglog_fit requires positive coordinates, got ({x}, {y})")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if len(set(xs.tolist())) < 2:
        raise DegeneracyError("loglog_fit needs at least two distinct x values")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return RateFit(float(slope), float(intercept), r2)
