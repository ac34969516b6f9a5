"""Delay histograms and windowed coincidence matching on sorted tag streams.

The delay convention is ``tau_AB = t_A - t_B``: a pair whose Bob photon took
the long path (slot SL) shows up at ``-tau``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from franson.errors import ParameterError
from franson.event_sim import TimeTagStream, check_sorted


@dataclass(frozen=True)
class CoincidenceWindow:
    offset: float  # ps, target tau_AB
    half_width: float  # ps

    def __post_init__(self):
        if not self.half_width > 0:
            raise ParameterError(f"half_width must be positive, got {self.half_width}")


def slot_windows(tau: float, half_width: float) -> dict[str, CoincidenceWindow]:
    """Disjoint windows on the three arrival slots ``-tau, 0, +tau``."""
    if not half_width < tau / 2:
        raise ParameterError(
            f"half_width {half_width} ps must be < tau/2 = {tau / 2:.3f} ps for disjoint slots")
    return {
        "SL": CoincidenceWindow(-tau, half_width),
        "CENTRAL": CoincidenceWindow(0.0, half_width),
        "LS": CoincidenceWindow(tau, half_width),
    }


@dataclass(frozen=True, eq=False)
class DelayHistogram:
    bin_width: int
    range: int
    counts: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.arange(-self.range, self.range + 1, self.bin_width, dtype=np.int64)

    @property
    def centers(self) -> np.ndarray:
        return self.edges[:-1] + 0.5 * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def area(self, lo: float, hi: float) -> int:
        """Counts in bins whose centers fall in ``[lo, hi]``."""
        c = self.centers
        return int(self.counts[(c >= lo) & (c <= hi)].sum())


def _tags(stream) -> np.ndarray:
    if isinstance(stream, TimeTagStream):
        return stream.tags
    tags = np.ascontiguousarray(stream, dtype=np.int64)
    check_sorted(tags)
    return tags


@numba.njit(cache=True)
def _histogram_sweep(a, b, rng, width, nbins):
    counts = np.zeros(nbins, dtype=np.int64)
    lo = 0
    nb = b.size
    for i in range(a.size):
        t = a[i]
        while lo < nb and b[lo] < t - rng:
            lo += 1
        j = lo
        while j < nb and b[j] <= t + rng:
            k = (t - b[j] + rng) // width
            if k >= nbins:
                k = nbins - 1
            counts[k] += 1
            j += 1
    return counts


def delay_histogram(a, b, bin_width: int, range: int) -> DelayHistogram:
    """Histogram of ``t_A - t_B`` over every tag pair within ``+-range`` ps.

    Bins are left-closed, ``[-range, range]`` split into ``2*range/bin_width``
    equal bins (the last bin also takes ``+range``).
    """
    bin_width, range = int(bin_width), int(range)
    if bin_width <= 0 or range <= 0:
        raise ParameterError("bin_width and range must be positive")
    if (2 * range) % bin_width:
        raise ParameterError(f"2*range={2 * range} is not a multiple of bin_width={bin_width}")
    ta, tb = _tags(a), _tags(b)
    nbins = 2 * range // bin_width
    counts = _histogram_sweep(ta, tb, np.int64(range), np.int64(bin_width), nbins)
    return DelayHistogram(bin_width, range, counts)


@numba.njit(cache=True)
def _greedy_match(a, b, offset, half_width):
    n = min(a.size, b.size)
    ia = np.empty(n, dtype=np.int64)
    ib = np.empty(n, dtype=np.int64)
    i = 0
    j = 0
    count = 0
    while i < a.size and j < b.size:
        d = a[i] - b[j] - offset
        if d > half_width:
            j += 1
        elif d < -half_width:
            i += 1
        else:
            ia[count] = i
            ib[count] = j
            count += 1
            i += 1
            j += 1
    return count, ia[:count], ib[:count]


def match_coincidences(a, b, win: CoincidenceWindow):
    """One-to-one greedy matching of ``a`` against ``b`` in time order.

    Tags ``i`` and ``j`` match when ``|t_A[i] - t_B[j] - offset| <= half_width``.
    Each Alice tag, in order, takes the earliest still-unmatched Bob tag in
    its window. Runs in a single two-cursor pass.

    Returns ``(count, (idx_a, idx_b))``.
    """
    ta, tb = _tags(a), _tags(b)
    count, ia, ib = _greedy_match(ta, tb, float(win.offset), float(win.half_width))
    return int(count), (ia, ib)


def count_coincidences(a, b, win: CoincidenceWindow) -> int:
    return match_coincidences(a, b, win)[0]
