"""Stopping policies of threshold form: stop the first time |X| lies in L,
where L is a finite union of closed intervals of [0, inf)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

INF = math.inf


def _canonical(intervals: Iterable[Sequence[float]]) -> tuple[tuple[float, float], ...]:
    cleaned = []
    for lo, hi in intervals:
        lo = max(float(lo), 0.0)
        hi = INF if hi is None else float(hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoints must not be NaN")
        if hi < lo:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        cleaned.append((lo, hi))
    cleaned.sort()
    merged: list[list[float]] = []
    for lo, hi in cleaned:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return tuple((lo, hi) for lo, hi in merged)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Stop as soon as ``|x|`` belongs to ``stop_set``.

    ``stop_set`` is stored canonically: sorted, disjoint, closed intervals
    with overlapping or touching pieces merged. "Stop on |x| >= a" and "stop
    on |x| > a" describe the same policy for a diffusion, so only closed
    intervals are kept.
    """

    stop_set: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stop_set", _canonical(self.stop_set))

    @classmethod
    def threshold(cls, a: float) -> "ThresholdPolicy":
        return cls(((a, INF),))

    @classmethod
    def stop_everywhere(cls) -> "ThresholdPolicy":
        return cls(((0.0, INF),))

    @classmethod
    def never(cls) -> "ThresholdPolicy":
        return cls(())

    @property
    def threshold_value(self) -> float | None:
        """``a`` when the policy is "stop once |x| >= a", else None."""
        if len(self.stop_set) == 1 and self.stop_set[0][1] == INF:
            return self.stop_set[0][0]
        return None

    def contains(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = np.zeros(r.shape, dtype=bool)
        for lo, hi in self.stop_set:
            out |= (r >= lo) & (r <= hi)
        return out

    def is_interior(self, r):
        """True where a continuous path started at ``|x| = r`` stays in the
        stop set for a short while. 0 counts as interior of [0, u]."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.zeros(r.shape, dtype=bool)
        for lo, hi in self.stop_set:
            out |= ((r > lo) | ((lo == 0.0) & (r >= 0.0))) & (r < hi)
        return out

    def gap(self, r: float) -> tuple[float | None, float]:
        """The gap of the complement containing ``r``: ``(lower, upper)``.

        ``lower`` is None when the gap reaches down to 0 (no stop interval
        below ``r``); ``upper`` is inf when nothing lies above.
        """
        r = abs(float(r))
        lower, upper = None, INF
        for lo, hi in self.stop_set:
            if hi < r:
                lower = hi
            elif lo > r:
                upper = lo
                break
            elif lo <= r <= hi:
                raise ValueError(f"|x|={r} belongs to the stop set")
        return lower, upper

    def boundary_side(self, r: float) -> int:
        """For ``r`` on the edge of a stop interval: -1 when the complement
        lies below, +1 when it lies above, 0 for an isolated point or when
        ``r`` is not on an edge with complement on exactly one side."""
        r = abs(float(r))
        for lo, hi in self.stop_set:
            if lo == hi == r:
                return 0
            if r == lo and lo > 0:
                return -1
            if r == hi:
                return 1
        return 0

    def mask(self, grid) -> np.ndarray:
        return self.contains(grid)

    def equals_on(self, other: "ThresholdPolicy", grid) -> bool:
        return bool(np.array_equal(self.mask(grid), other.mask(grid)))

    @classmethod
    def from_mask(cls, grid, mask, beyond: "ThresholdPolicy | None" = None) -> "ThresholdPolicy":
        """Rebuild a policy from stop flags on a sorted nonnegative grid.

        Each run of flagged grid points becomes the closed interval between
        its first and last point. Beyond the last grid point the policy
        ``beyond`` (if given) is kept unchanged.
        """
        grid = np.asarray(grid, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        intervals = []
        i, n = 0, len(grid)
        while i < n:
            if mask[i]:
                j = i
                while j + 1 < n and mask[j + 1]:
                    j += 1
                intervals.append((grid[i], grid[j]))
                i = j + 1
            else:
                i += 1
        if beyond is not None:
            top = grid[-1]
            for lo, hi in beyond.stop_set:
                if hi > top:
                    # keep the part beyond the grid; close it at the last grid
                    # point when that point is itself a stop point
                    start = top if (mask[-1] and lo <= top) else max(lo, np.nextafter(top, INF))
                    intervals.append((start, hi))
        return cls(tuple(intervals))

    def to_dict(self) -> dict:
        return {"stop_set": [[lo, None if hi == INF else hi] for lo, hi in self.stop_set]}

    @classmethod
    def from_dict(cls, data) -> "ThresholdPolicy":
        return cls(tuple((lo, INF if hi is None else hi) for lo, hi in data["stop_set"]))

    def describe(self) -> str:
        if not self.stop_set:
            return "never stop"
        parts = [f"[{lo:.6g}, {'inf' if hi == INF else f'{hi:.6g}'}]" for lo, hi in self.stop_set]
        return "stop when |x| in " + " U ".join(parts)
