"""Behavioral routing: three activation statistics and the continuous/intermittent rule.

A trace is routed "continuous" when it starts inactive for a whole prefix, or
when it combines high nonzero occupancy with low variance of the smoothed
derivative. Everything else is "intermittent".
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, LoadgenError


class DeviceClass(enum.Enum):
    CONTINUOUS = "continuous"
    INTERMITTENT = "intermittent"


@dataclass(frozen=True)
class RoutingConfig:
    prefix_len: int = 100
    occupancy_threshold: float = 0.7
    derivative_variance_threshold: float = 0.1
    smoothing_window: int = 7
    # Divisor for the variance of the T-1 smoothed differences. True uses the
    # count of difference terms (T-1); False uses the unbiased T-2.
    population_variance: bool = True

    def __post_init__(self):
        if self.prefix_len < 1:
            raise LoadgenError("prefix_len must be >= 1")
        if not 0.0 < self.occupancy_threshold < 1.0:
            raise LoadgenError("occupancy_threshold must lie in (0,1)")
        if self.derivative_variance_threshold <= 0.0:
            raise LoadgenError("derivative_variance_threshold must be positive")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise LoadgenError("smoothing_window must be odd and >= 1")


@dataclass(frozen=True)
class RoutingStats:
    r0: bool
    p_nz: float
    var_smoothed_diff: float

    def __post_init__(self):
        if not 0.0 <= self.p_nz <= 1.0:
            raise LoadgenError("p_nz must lie in [0,1]")
        if self.var_smoothed_diff < 0.0:
            raise LoadgenError("var_smoothed_diff must be nonnegative")


def smoothed_diff(x, window: int = 7) -> np.ndarray:
    """Centered moving average (window shrinking symmetrically at the edges)
    followed by first differences. Output length is len(x) - 1."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2:
        raise InsufficientDataError("smoothed_diff needs at least 2 samples")
    if window < 1 or window % 2 == 0:
        raise LoadgenError("window must be odd and >= 1")
    half = window // 2
    sm = np.empty(n)
    for i in range(n):
        k = min(half, i, n - 1 - i)
        sm[i] = x[i - k : i + k + 1].mean()
    return np.diff(sm)


def routing_stats(x, cfg: RoutingConfig) -> RoutingStats:
    """Compute the three routing statistics for one trace."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2:
        raise InsufficientDataError("routing_stats needs at least 2 samples")
    prefix = x[: min(cfg.prefix_len, n)]
    r0 = bool(np.all(prefix == 0.0))
    p_nz = float(np.count_nonzero(x)) / n
    d = smoothed_diff(x, cfg.smoothing_window)
    divisor = d.size if cfg.population_variance else d.size - 1
    if divisor < 1:
        var = 0.0
    else:
        var = float(np.sum((d - d.mean()) ** 2) / divisor)
    return RoutingStats(r0=r0, p_nz=p_nz, var_smoothed_diff=var)


def classify(stats: RoutingStats, cfg: RoutingConfig) -> DeviceClass:
    """Apply the routing rule to precomputed statistics."""
    if stats.r0:
        return DeviceClass.CONTINUOUS
    if (
        stats.p_nz > cfg.occupancy_threshold
        and stats.var_smoothed_diff < cfg.derivative_variance_threshold
    ):
        return DeviceClass.CONTINUOUS
    return DeviceClass.INTERMITTENT


def classify_trace(x, cfg: RoutingConfig) -> tuple[RoutingStats, DeviceClass]:
    stats = routing_stats(x, cfg)
    return stats, classify(stats, cfg)
