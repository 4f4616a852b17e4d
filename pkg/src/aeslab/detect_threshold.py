"""Statistical timing-threshold detector.

A run's latency population is summarized by a single cut-off:

    threshold = mean + 3 * (max - min) / n

Blocks strictly above the cut-off are flagged anomalous. The detector sees
only timing, so bit-flip faults (which leave latency untouched) are
invisible to it by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import fmean
from typing import List, Sequence

from .cipher import BlockRecord


@dataclass(frozen=True)
class ThresholdModel:
    mean_us: float
    min_us: float
    max_us: float
    n: int
    threshold_us: float


def fit_threshold(times_us: Sequence[float]) -> ThresholdModel:
    """Fit the cut-off from a latency sample."""
    if len(times_us) == 0:
        raise ValueError("cannot fit a threshold on an empty sample")
    n = len(times_us)
    mean = fmean(times_us)
    lo = min(times_us)
    hi = max(times_us)
    return ThresholdModel(mean, lo, hi, n, mean + 3.0 * (hi - lo) / n)


def classify_threshold(records: Sequence[BlockRecord], model: ThresholdModel) -> List[bool]:
    """Flag records whose latency strictly exceeds the model cut-off."""
    return [r.time_us > model.threshold_us for r in records]
