"""Quitting a habit whose cost grows over time, under hyperbolic discounting.

Quitting at time s costs ``x exp((s - t) / 2)`` seen from time t, discounted
by ``1 / (1 + (s - t))``; quitting is forced at the horizon T. The agent
minimizes the discounted cost. Viewed from t the best plan is to quit one
unit later, and every later self repeats that plan, so the naive agent
never quits before T. One improvement step turns this into "quit now"
early on and "wait for T" in the last ``delay_threshold`` time units, and
that policy is already an equilibrium.

Policies on a time grid are stored by their stop flags; the realized quit
time from a grid time is the first flagged time at or after it (the
inclusive entry) or strictly after it (the strict entry). A flagged time
whose successor is also flagged counts as quitting immediately under the
strict entry too, the grid picture of an open stop region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, NonConvergence
from .numerics import RootSpec, find_root

GROWTH = 0.5


def _check(T, t):
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T}")
    if not 0 <= t <= T:
        raise DomainError(f"time {t} outside [0, {T}]")


def discounted_cost(delay):
    """Cost of quitting after ``delay``, relative to quitting now."""
    delay = np.asarray(delay, dtype=float)
    return np.exp(GROWTH * delay) / (1.0 + delay)


def naive_quit_time(T: float, t: float) -> float:
    """Quit time planned at ``t``: one unit later, capped at the horizon."""
    _check(T, t)
    return t + 1.0 if t < T - 1.0 else float(T)


@lru_cache(maxsize=None)
def delay_threshold(x_tol: float = 1e-12) -> float:
    """Delay ``s > 0`` at which waiting and quitting now cost the same:
    the positive root of ``exp(s / 2) = 1 + s``."""
    spec = RootSpec(1.0, 5.0, x_tol=x_tol)
    return find_root(lambda s: math.exp(GROWTH * s) - (1.0 + s), spec)


def improved_quit_time(T: float, t: float) -> float:
    """Quit time after one improvement of the naive plan: now if more than
    ``delay_threshold`` remains, else at the horizon."""
    _check(T, t)
    return float(t) if t < T - delay_threshold() else float(T)


def naive_stop_flags(times) -> np.ndarray:
    """The naive plan quits at ``t`` only when ``t`` is the horizon."""
    flags = np.zeros(len(times), dtype=bool)
    flags[-1] = True
    return flags


def entry_times(times, flags, strict: bool) -> np.ndarray:
    """Realized quit times from each grid time for the given stop flags."""
    times = np.asarray(times, dtype=float)
    n = len(times)
    nxt = np.empty(n)
    upcoming = times[-1]
    for i in range(n - 1, -1, -1):
        # first flagged time strictly after i
        nxt[i] = upcoming
        if flags[i]:
            upcoming = times[i]
    if not strict:
        return np.where(flags, times, nxt)
    open_here = flags & np.append(flags[1:], True)
    return np.where(open_here, times, nxt)


def improve_flags(times, flags, abs_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """One improvement step. Returns the new flags and the labels.

    Quitting now costs 1 (relative units); continuing costs the discounted
    cost at the strict entry time. Cheaper-now states quit, dearer-now
    states continue, ties keep their flag. The horizon always quits.
    """
    times = np.asarray(times, dtype=float)
    cont = discounted_cost(entry_times(times, flags, strict=True) - times)
    labels = np.where(cont > 1.0 + abs_tol, "S", np.where(cont < 1.0 - abs_tol, "C", "I"))
    new = (labels == "S") | ((labels == "I") & flags)
    new[-1] = True
    return new, labels


@dataclass
class SmokingTrace:
    times: np.ndarray
    flags: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    converged: bool = False

    @property
    def steps(self) -> int:
        """Improvement steps that changed the policy."""
        return len(self.flags) - (2 if self.converged else 1)

    def quit_times(self, step: int = -1) -> np.ndarray:
        return entry_times(self.times, self.flags[step], strict=False)

    def switch_time(self, step: int = -1) -> float | None:
        """Last grid time at which the policy quits immediately, before the horizon."""
        early = np.flatnonzero(self.flags[step][:-1])
        return float(self.times[early[-1]]) if early.size else None

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "steps": self.steps,
            "horizon": float(self.times[-1]),
            "switch_times": [self.switch_time(k) for k in range(len(self.flags))],
        }


def smoking_iterate(T: float, n_grid: int = 2001, max_steps: int = 10) -> SmokingTrace:
    """Improve the naive plan on a uniform grid of ``[0, T]`` until fixed."""
    _check(T, 0.0)
    times = np.linspace(0.0, T, n_grid)
    trace = SmokingTrace(times, [naive_stop_flags(times)])
    for _ in range(max_steps):
        new, labels = improve_flags(times, trace.flags[-1])
        trace.labels.append(labels)
        trace.flags.append(new)
        if np.array_equal(new, trace.flags[-2]):
            trace.converged = True
            return trace
    raise NonConvergence(f"no fixed point after {max_steps} steps", trace)
