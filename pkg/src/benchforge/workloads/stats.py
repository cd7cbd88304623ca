"""Order statistics used by the benchmark reports."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

from ..errors import WorkloadError


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the value at rank ceil(p/100 * n), 1-based.

    p = 0 maps to the minimum.  The rank is computed with exact rational
    arithmetic because float rounding at the ceil boundary (for instance
    0.7 * 10 = 7.000000000000001) would otherwise shift the rank.
    """
    if not values:
        raise WorkloadError("percentile of an empty sequence")
    if not 0 <= p <= 100:
        raise WorkloadError(f"percentile p must be in [0, 100], got {p}")
    ordered = sorted(values)
    n = len(ordered)
    rank = math.ceil(Fraction(str(p)) * n / 100)
    if rank < 1:
        rank = 1
    return ordered[rank - 1]
