"""Critical time and log-frequency from the spacing of successive minima.

If minima accumulate geometrically, ``t_{n+1} - t_n = lambda (t_{n+2} - t_{n+1})``
with ``lambda > 1``, the spacings shrink to zero at the critical time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data_io import PriceSeries

AGGREGATIONS = ("last_triple", "mean_over_triples")


class ScalingError(ValueError):
    """Minima that do not describe a converging geometric sequence."""


@dataclass(frozen=True)
class MinimaSet:
    """Detected local minima.

    ``positions`` index into the source series; ``times`` are the matching
    trading-day indices.
    """

    positions: tuple
    times: tuple
    window: int
    smoothing: int = 1

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("minima times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def triples(self) -> list:
        return [tuple(self.times[i:i + 3]) for i in range(len(self.times) - 2)]


@dataclass(frozen=True)
class ScalingEstimate:
    lam: float
    t_c: float
    omega: float
    source_triples: tuple

    @property
    def source_triple(self) -> tuple:
        return self.source_triples[-1]


def moving_average(values, width: int) -> np.ndarray:
    """Centered moving average, truncated at the ends. ``width=1`` is the identity."""
    y = np.asarray(values, dtype=float)
    if width < 1:
        raise ValueError("smoothing width must be >= 1")
    if width == 1:
        return y.copy()
    left = (width - 1) // 2
    right = width - 1 - left
    csum = np.concatenate(([0.0], np.cumsum(y)))
    idx = np.arange(len(y))
    lo = np.maximum(idx - left, 0)
    hi = np.minimum(idx + right + 1, len(y))
    return (csum[hi] - csum[lo]) / (hi - lo)


def detect_minima(series: PriceSeries, window: int, smoothing: int = 1) -> MinimaSet:
    """Interior points that are the minimum of their ``[i-window, i+window]`` neighbourhood.

    The test runs on the moving-average smoothed log-price. A point qualifies
    when it is the first occurrence of the neighbourhood minimum, so of several
    tied values only the earliest can be reported.
    """
    n = len(series)
    if window < 1:
        raise ValueError("window must be >= 1")
    if n <= 2 * window + 1:
        raise ValueError(f"series of length {n} too short for window {window}")
    y = moving_average(series.log_prices, smoothing)
    first_argmin = np.argmin(sliding_window_view(y, 2 * window + 1), axis=1)
    positions = np.flatnonzero(first_argmin == window) + window
    return MinimaSet(
        positions=tuple(int(p) for p in positions),
        times=tuple(float(series.times[p]) for p in positions),
        window=window,
        smoothing=smoothing,
    )


def _spacings(t1: float, t2: float, t3: float) -> tuple:
    if not t1 < t2 < t3:
        raise ScalingError(f"need t1 < t2 < t3, got {(t1, t2, t3)}")
    return t2 - t1, t3 - t2


def estimate_lambda(t1: float, t2: float, t3: float) -> float:
    """Ratio of successive spacings ``(t2 - t1) / (t3 - t2)``."""
    d1, d2 = _spacings(t1, t2, t3)
    return d1 / d2


def estimate_tc(t1: float, t2: float, t3: float) -> float:
    """Accumulation point ``(t2^2 - t1 t3) / (2 t2 - t1 - t3)`` of a geometric sequence.

    Evaluated as ``t2 + d1 d2 / (d1 - d2)``, which is algebraically identical
    but avoids cancelling the squares of large indices.
    """
    d1, d2 = _spacings(t1, t2, t3)
    if not d1 > d2:
        raise ScalingError(f"spacings {d1} then {d2} do not shrink (lambda <= 1); no critical time ahead")
    return t2 + d1 * d2 / (d1 - d2)


def omega_from_lambda(lam: float) -> float:
    if not lam > 1:
        raise ScalingError(f"lambda must exceed 1, got {lam!r}")
    return 2.0 * math.pi / math.log(lam)


def lambda_from_omega(omega: float) -> float:
    return math.exp(2.0 * math.pi / omega)


def scaling_from_times(times: Sequence[float], aggregation: str = "last_triple") -> ScalingEstimate:
    """Scaling estimate from three or more increasing minima times."""
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    times = tuple(float(t) for t in times)
    if len(times) < 3:
        raise ScalingError(f"need at least 3 minima, got {len(times)}")
    triples = [times[i:i + 3] for i in range(len(times) - 2)]
    if aggregation == "last_triple":
        triples = triples[-1:]
    lams = [estimate_lambda(*tr) for tr in triples]
    tcs = [estimate_tc(*tr) for tr in triples]
    lam = sum(lams) / len(lams)
    return ScalingEstimate(
        lam=lam,
        t_c=sum(tcs) / len(tcs),
        omega=omega_from_lambda(lam),
        source_triples=tuple(triples),
    )


def scaling_from_minima(minima: MinimaSet, aggregation: str = "last_triple") -> ScalingEstimate:
    return scaling_from_times(minima.times, aggregation)
