"""Closed-form analysis of the reflected Brownian problem with hyperbolic discounting.

The agent observes ``|X|`` for a standard Brownian motion X and stopping
at elapsed time s pays ``|X_s| / (1 + beta s)``. Among threshold policies
``tau_a`` (stop once ``|X| >= a``):

* ``tau_a`` is an equilibrium exactly when ``a <= a_star``, where ``a_star``
  is the root of ``boundary_slope(a) = 1``;
* for ``a > a_star`` one improvement step stops above ``x_star(a)``, the
  interior solution of ``discounted_hit_value(x, a) = x``, and a second
  step lands on the equilibrium ``tau_{x_star(a)}``;
* ``tau_{a_star}`` gives the largest value among the equilibria.

The naive agent re-solves the classical problem at each instant; from time t
its free boundary is ``sqrt(1/beta + (s - t))``, so it always stops at
``1/sqrt(beta)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .errors import NoInteriorCrossing, NonConvergence, TimeOrder
from .hitting import HittingContext, boundary_slope, discounted_hit_value
from .numerics import QuadratureSpec, RootSpec, find_root
from .policies import ThresholdPolicy

MAX_IMPROVEMENTS = 10


@dataclass(frozen=True)
class BesselProblem:
    """Hyperbolic rate ``beta`` plus the numerical settings.

    ``roots`` supplies tolerances; brackets are chosen per equation.
    """

    beta: float = 1.0
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    roots: RootSpec = field(default_factory=lambda: RootSpec(0.0, 1.0))

    def __post_init__(self):
        # HittingContext performs the beta check
        object.__setattr__(self, "beta", float(self.beta))
        self.context

    @property
    def context(self) -> HittingContext:
        return HittingContext(self.beta, self.quad)


def naive_threshold(p: BesselProblem) -> float:
    """The level where the naive agent stops: ``1/sqrt(beta)``."""
    return 1.0 / math.sqrt(p.beta)


def naive_boundary(p: BesselProblem, t: float, s: float) -> float:
    """Free boundary at time ``s`` of the classical problem posed at time ``t``."""
    if s < t:
        raise TimeOrder(f"s={s} precedes t={t}")
    return math.sqrt(1.0 / p.beta + (s - t))


def boundary_samples(p: BesselProblem, t: float, s_max: float, n_samples: int) -> list[tuple[float, float]]:
    """``n_samples`` evenly spaced points ``(s, boundary)`` on ``[t, s_max]``."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if s_max < t or (n_samples > 1 and s_max == t):
        raise TimeOrder(f"s_max={s_max} must exceed t={t}")
    s_values = [t] if n_samples == 1 else np.linspace(t, s_max, n_samples)
    return [(float(s), naive_boundary(p, t, float(s))) for s in s_values]


@lru_cache(maxsize=64)
def largest_equilibrium_threshold(p: BesselProblem) -> float:
    """``a_star``: the root of ``boundary_slope(a) = 1`` in ``(0, 1/sqrt(beta))``."""
    ctx = p.context
    hi = naive_threshold(p)
    spec = p.roots.with_bracket(0.1 * hi, hi)
    return find_root(lambda a: boundary_slope(ctx, a) - 1.0, spec)


def optimal_equilibrium(p: BesselProblem) -> float:
    """Threshold of the equilibrium with the largest value from every state."""
    return largest_equilibrium_threshold(p)


def equilibrium_value(p: BesselProblem, x: float) -> float:
    """Value of the optimal equilibrium ``tau_{a_star}`` from state ``x``."""
    a_star = largest_equilibrium_threshold(p)
    r = abs(x)
    return r if r >= a_star else discounted_hit_value(p.context, r, a_star)


def crossing_threshold(p: BesselProblem, a: float) -> float:
    """``x_star(a)``: the unique ``x`` in ``(0, a_star)`` with
    ``discounted_hit_value(x, a) = x``, for ``a > a_star``.

    The bracket is ``[1e-8, min(a_star, a - 1e-8)]``: the function
    ``discounted_hit_value(x, a) - x`` is positive at 0 and negative at
    ``a_star``.

    Raises:
        NoInteriorCrossing: if ``a <= a_star + x_tol``; below ``a_star`` the
            curve stays above the diagonal, and just above it the root is
            too flat to locate reliably.
    """
    a_star = largest_equilibrium_threshold(p)
    if a <= a_star + p.roots.x_tol:
        raise NoInteriorCrossing(f"a={a} does not exceed a_star={a_star:.10g}")
    ctx = p.context
    spec = p.roots.with_bracket(1e-8, min(a_star, a - 1e-8))
    return find_root(lambda x: discounted_hit_value(ctx, x, a) - x, spec)


def improve_threshold(p: BesselProblem, a: float) -> ThresholdPolicy:
    """One improvement step applied to ``tau_a``, written as a threshold policy.

    For ``a <= a_star`` the policy is unchanged. For larger ``a`` the states
    with ``|x| > x_star(a)`` switch to stopping; the rest keep their action,
    so the stop region becomes ``|x| >= x_star(a)``. Inside the numerical
    band just above ``a_star`` the crossing merges with ``a_star`` and the
    result is ``tau_{a_star}``.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    a_star = largest_equilibrium_threshold(p)
    if a <= a_star:
        return ThresholdPolicy.threshold(a)
    if a <= a_star + p.roots.x_tol:
        return ThresholdPolicy.threshold(a_star)
    return ThresholdPolicy.threshold(crossing_threshold(p, a))


@dataclass(frozen=True)
class EquilibriumReport:
    """Outcome of improving ``tau_{start}`` until it no longer changes.

    ``iterations_to_equilibrium`` counts threshold changes (one for any start
    above ``a_star``). ``theta_applications`` counts improvement steps on the
    policy itself: the first step stops above ``x_star`` but from below it
    still waits for the old level, so a second step is needed before the
    realized stopping times equal those of ``tau_{x_star}``.
    """

    beta: float
    start: float
    a_star: float
    naive_threshold: float
    x_star_of_naive: float
    equilibrium_threshold: float
    iterations_to_equilibrium: int
    theta_applications: int
    thresholds: tuple[float, ...]

    @property
    def equilibrium_set(self) -> tuple[float, float]:
        """Thresholds ``a`` for which ``tau_a`` is an equilibrium."""
        return (0.0, self.a_star)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["thresholds"] = list(self.thresholds)
        out["equilibrium_set"] = list(self.equilibrium_set)
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def iterate_to_equilibrium(p: BesselProblem, a0: float) -> EquilibriumReport:
    """Improve ``tau_{a0}`` until it is a fixed point.

    Raises:
        NonConvergence: if more than ``MAX_IMPROVEMENTS`` changes occur,
            which would indicate a numerical fault.
    """
    a_star = largest_equilibrium_threshold(p)
    naive = naive_threshold(p)
    thresholds = [float(a0)]
    current = ThresholdPolicy.threshold(a0)
    while True:
        new = improve_threshold(p, thresholds[-1])
        if new == current:
            break
        if len(thresholds) > MAX_IMPROVEMENTS:
            raise NonConvergence(f"threshold still moving after {MAX_IMPROVEMENTS} steps", thresholds)
        thresholds.append(new.threshold_value)
        current = new
    changes = len(thresholds) - 1
    if a0 > a_star + p.roots.x_tol and thresholds[-1] != crossing_threshold(p, a0):
        raise NonConvergence("the fixed point differs from the crossing of the start level", thresholds)
    return EquilibriumReport(
        beta=p.beta,
        start=float(a0),
        a_star=a_star,
        naive_threshold=naive,
        x_star_of_naive=crossing_threshold(p, naive),
        equilibrium_threshold=thresholds[-1],
        iterations_to_equilibrium=changes,
        theta_applications=0 if changes == 0 else changes + 1,
        thresholds=tuple(thresholds),
    )


def auxiliary_value(p: BesselProblem, t: float, s, x):
    """Value at time ``s`` of the classical problem posed at time ``t``:
    ``sup_tau E[|X_tau| / (1 + beta (tau - t))]`` started from ``X_s = x``.

    Below the boundary ``sqrt(1/beta + (s - t))`` it equals
    ``exp((beta x^2 / u - 1) / 2) / sqrt(beta u)`` with ``u = 1 + beta (s - t)``;
    on and above the boundary it equals the stopping payoff ``|x| / u``.
    Vectorized in ``s`` and ``x``.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < t):
        raise TimeOrder(f"s precedes t={t}")
    x = np.abs(np.asarray(x, dtype=float))
    u = 1.0 + p.beta * (s_arr - t)
    inside = x < np.sqrt(u / p.beta)
    waiting = np.exp(0.5 * (p.beta * x**2 / u - 1.0)) / np.sqrt(p.beta * u)
    out = np.where(inside, waiting, x / u)
    return float(out) if out.ndim == 0 else out
