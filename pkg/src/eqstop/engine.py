"""Policy improvement for threshold policies of 1-D time-homogeneous models.

For a policy with stop set L, each state x is compared with the payoff of
continuing now and following the policy from the next instant on (strict
first entry into L after time 0):

* ``S`` (stop):     g(x) > J(x)
* ``C`` (continue): g(x) < J(x)
* ``I`` (indifferent): otherwise; the current action is kept.

The improved policy stops on S, keeps the old action on I and continues on
C. Iterating the improvement from a policy whose strict entry times shrink
after one step converges to an equilibrium (a fixed point).

J is computed by one of three routes:

``"fd"``    backward finite differences for ``w(s, x) = E[d(s + T) g(X_T)]``
            on the state grid (``w_s + b w_x + sigma^2/2 w_xx = 0`` off L,
            ``w = d(s) g`` on L). Needs a uniform grid starting at 0.
``"mc"``    Monte Carlo per grid state, see :mod:`eqstop.montecarlo`.
``"exact"`` closed form for the deterministic exponential model.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .discounting import DiscountFunction
from .errors import EmptyPath, GridTooCoarse, NonConvergence
from .models import DiffusionModel
from .montecarlo import MonteCarloSpec, bridge_crossing_probability, estimate_payoff, simulate_paths
from .policies import INF, ThresholdPolicy

DEFAULT_ABS_TOL = 1e-8
LABELS = ("S", "C", "I")


def abs_payoff(x):
    return np.abs(x)


# ---------------------------------------------------------------------------
# first entry along a stored path


def first_entry(policy: ThresholdPolicy, path, dt: float, t: float = 0.0, strict: bool = False,
                bridge: bool = False, sigma: float = 1.0, uniforms=None) -> float:
    """First time a sampled path ``|path|`` is in the stop set.

    ``path[k]`` is the state at ``t + k dt``. With ``strict`` an initial
    point on the edge of the stop set does not count and the search starts
    with the first grid time after ``t``; an initial point inside the set
    still stops at ``t``. With ``bridge`` a crossing between grid points is
    declared when ``uniforms[k] <`` the bridge crossing probability of step
    ``k``; the first step out of an edge point is exempt. Returns ``inf``
    when the path never enters.
    """
    path = np.asarray(path, dtype=float)
    if path.size == 0:
        raise EmptyPath("the path has no points")
    inside = policy.contains(path)
    if inside[0] and (not strict or policy.is_interior(path[0])):
        return float(t)
    first = 1
    hits = np.flatnonzero(inside[first:])
    k_direct = hits[0] + first if hits.size else None
    if bridge and path.size > 1:
        if uniforms is None:
            raise ValueError("bridge crossing needs one uniform draw per step")
        uniforms = np.asarray(uniforms, dtype=float)
        ends = sorted({e for lo, hi in policy.stop_set for e in (lo, hi) if 0 < e < INF})
        start = 1 if inside[0] else 0
        stop = path.size - 1 if k_direct is None else k_direct - 1
        if stop > start and ends:
            x0, x1 = path[start:stop], path[start + 1:stop + 1]
            p_none = np.ones(x0.size)
            for c in ends:
                for bar in (c, -c):
                    p_none *= 1.0 - bridge_crossing_probability(x0, x1, bar, dt, sigma)
            crossed = np.flatnonzero(uniforms[start:stop] < 1.0 - p_none)
            if crossed.size:
                return float(t + (start + crossed[0] + 0.5) * dt)
    if k_direct is None:
        return INF
    return float(t + k_direct * dt)


@dataclass(frozen=True)
class EntryComparison:
    """Strict entry times of two policies along shared paths.

    ``fraction_no_later`` is the share of paths on which the new policy
    enters no later than the old one (paths where neither enters count as
    agreeing); ``worst_delay`` is the largest lateness of the new policy.
    """

    n_paths: int
    fraction_no_later: float
    worst_delay: float

    @property
    def holds(self) -> bool:
        return self.fraction_no_later == 1.0


def compare_entry_times(model: DiffusionModel, old: ThresholdPolicy, new: ThresholdPolicy, x0: float,
                        mc: MonteCarloSpec) -> EntryComparison:
    """Check on coupled simulated paths that ``new`` stops no later than
    ``old`` under the strict entry, path by path.

    Both policies are read off the same stored Euler paths, so the
    comparison has no sampling noise between them; it is still limited to
    the sampled paths, the time step and the horizon of ``mc``.
    """
    ensemble = simulate_paths(model, x0, mc)
    delays = []
    for path in ensemble.values:
        t_old = first_entry(old, path, mc.dt, strict=True)
        t_new = first_entry(new, path, mc.dt, strict=True)
        delays.append(0.0 if t_new <= t_old else t_new - t_old)
    delays = np.asarray(delays)
    return EntryComparison(int(delays.size), float(np.mean(delays == 0.0)), float(delays.max()))


# ---------------------------------------------------------------------------
# region classification


@dataclass(frozen=True)
class RegionClassification:
    x: float
    label: str
    immediate_payoff: float
    continuation_value: float
    std_error: float = 0.0


def label_from_gap(payoff: float, value: float, std_error: float = 0.0,
                   abs_tol: float = DEFAULT_ABS_TOL) -> str:
    margin = max(3.0 * std_error, abs_tol)
    if payoff > value + margin:
        return "S"
    if payoff < value - margin:
        return "C"
    return "I"


def _deterministic_value(model: DiffusionModel, d, g, policy, x):
    """Strict first-entry value along ``x exp(rate s)``, stopped at the horizon."""
    r = abs(x)
    if policy.contains(r) and policy.is_interior(r):
        return float(g(np.asarray(x)))
    rate, horizon = model.rate, model.horizon
    if r == 0 or rate == 0:
        hit = INF
    else:
        lower, upper = policy.gap(r) if not policy.contains(r) else _edge_gap(policy, r, rate)
        target = upper if rate > 0 else lower
        hit = INF if target is None or target == INF else math.log(target / r) / rate
    t = min(hit, horizon)
    return float(d(t) * g(np.asarray(x * math.exp(rate * t))))


def _edge_gap(policy, r, rate):
    side = policy.boundary_side(r)
    # moving into the stop interval means stopping immediately
    if (side == -1 and rate > 0) or (side == 1 and rate < 0) or side == 0:
        return r, r
    return policy.gap(np.nextafter(r, INF) if rate > 0 else np.nextafter(r, -INF))


def classify_state(model: DiffusionModel, d: DiscountFunction, g: Callable, policy: ThresholdPolicy,
                   x: float, mc: MonteCarloSpec | None = None,
                   abs_tol: float = DEFAULT_ABS_TOL) -> RegionClassification:
    """Label one state by comparing ``g(x)`` with the value of continuing.

    The continuation value is estimated by Monte Carlo for SDE models and
    computed exactly for the deterministic model. A path started on the
    edge of the stop set is pushed into the complement for its first step
    and stops at its first return, which makes continuing strictly worse
    there than stopping.
    """
    payoff = float(g(np.asarray(float(x))))
    if model.is_deterministic:
        value, se = _deterministic_value(model, d, g, policy, float(x)), 0.0
    elif policy.contains(abs(x)) and policy.is_interior(abs(x)):
        value, se = payoff, 0.0
    else:
        est = estimate_payoff(model, d, g, policy, float(x), True, mc or MonteCarloSpec())
        value, se = est.mean, est.std_error
    return RegionClassification(float(x), label_from_gap(payoff, value, se, abs_tol), payoff, value, se)


# ---------------------------------------------------------------------------
# finite differences


def _is_uniform(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3 or grid[0] != 0.0:
        return False
    steps = np.diff(grid)
    return bool(np.all(steps > 0) and np.ptp(steps) <= 1e-9 * steps.mean())


def _time_mesh(horizon, ds_min, ds_max, growth):
    steps = []
    s = 0.0
    ds = ds_min
    while s < horizon:
        ds_k = min(ds, horizon - s)
        steps.append(ds_k)
        s += ds_k
        ds = min(ds * growth, ds_max)
    return np.concatenate([[0.0], np.cumsum(steps)])


def fd_continuation_values(model: DiffusionModel, d: DiscountFunction, g: Callable,
                           policy: ThresholdPolicy, grid, horizon: float = 200.0,
                           ds_min: float = 1e-3, ds_max: float = 0.25, growth: float = 1.01,
                           rannacher_steps: int = 4) -> np.ndarray:
    """Values of continuing under ``policy`` at the nonnegative grid states.

    Solves for ``w(s, x) = E[d(s + T) g(X_T)]`` backwards from ``s = horizon``
    (where ``w = d(horizon) g``) to 0 with Crank-Nicolson on a graded time
    mesh, started with a few implicit steps. Both signs of x are carried.
    States inside L get ``g``; edge states of L get the limit from the
    continuation side, which is also ``g``. The grid edge is absorbing; a
    warning is issued if the continuation region reaches it.
    """
    grid = np.asarray(grid, dtype=float)
    if not _is_uniform(grid):
        raise ValueError("finite differences need a uniform grid starting at 0")
    dx = grid[1] - grid[0]
    xs = np.concatenate([-grid[:0:-1], grid])
    n = xs.size
    payoff = np.asarray(g(xs), dtype=float)
    fixed = policy.contains(xs)
    if not (fixed[0] and fixed[-1]):
        warnings.warn("the continuation region reaches the grid edge; values there are truncated",
                      RuntimeWarning, stacklevel=2)
    fixed[0] = fixed[-1] = True
    free = ~fixed

    half_var = 0.5 * np.asarray(model.vol(xs), dtype=float) ** 2 * np.ones(n)
    drift = np.asarray(model.drift(xs), dtype=float) * np.ones(n)
    lower = np.where(free, half_var / dx**2 - drift / (2 * dx), 0.0)
    upper = np.where(free, half_var / dx**2 + drift / (2 * dx), 0.0)
    diag = np.where(free, -2.0 * half_var / dx**2, 0.0)

    s_mesh = _time_mesh(horizon, ds_min, ds_max, growth)
    w = d(s_mesh[-1]) * payoff
    ab = np.zeros((3, n))
    for j, k in enumerate(range(len(s_mesh) - 1, 0, -1)):
        ds = s_mesh[k] - s_mesh[k - 1]
        theta = 1.0 if j < rannacher_steps else 0.5
        # explicit part on free rows
        aw = diag * w
        aw[1:] += lower[1:] * w[:-1]
        aw[:-1] += upper[:-1] * w[1:]
        rhs = w + (1.0 - theta) * ds * aw
        rhs[fixed] = d(s_mesh[k - 1]) * payoff[fixed]
        ab[0, 1:] = -theta * ds * upper[:-1]
        ab[1, :] = 1.0 - theta * ds * diag
        ab[2, :-1] = -theta * ds * lower[1:]
        w = solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)
    values = w[n // 2:]
    # states in L, edges included, take the stopping payoff exactly
    return np.where(policy.contains(grid), np.asarray(g(grid), dtype=float), values)


# ---------------------------------------------------------------------------
# grid classification and improvement


@dataclass(frozen=True)
class GridClassification:
    x: np.ndarray
    labels: np.ndarray
    payoff: np.ndarray
    continuation: np.ndarray
    std_error: np.ndarray
    method: str

    def rows(self):
        for x, lab, gx, j, se in zip(self.x, self.labels, self.payoff, self.continuation, self.std_error):
            yield float(x), str(lab), float(gx), float(j), float(se)

    def to_dict(self) -> dict:
        return {"method": self.method, "x": self.x.tolist(), "labels": self.labels.tolist(),
                "g": self.payoff.tolist(), "J_hat": self.continuation.tolist(),
                "stderr": self.std_error.tolist()}


def resolve_method(model: DiffusionModel, grid, method: str = "auto") -> str:
    if method == "auto":
        if model.is_deterministic:
            return "exact"
        return "fd" if _is_uniform(grid) else "mc"
    if method not in ("fd", "mc", "exact"):
        raise ValueError(f"unknown classification method {method!r}")
    if method == "exact" and not model.is_deterministic:
        raise ValueError("exact evaluation only covers the deterministic model")
    return method


def classify_grid(model: DiffusionModel, d: DiscountFunction, g: Callable, policy: ThresholdPolicy,
                  grid, mc: MonteCarloSpec | None = None, method: str = "auto",
                  abs_tol: float = DEFAULT_ABS_TOL, fd_options: dict | None = None) -> GridClassification:
    """Label every grid state; Monte Carlo states use independent seeds
    derived from the master seed and the grid index."""
    grid = np.asarray(grid, dtype=float)
    method = resolve_method(model, grid, method)
    payoff = np.asarray(g(grid), dtype=float)
    se = np.zeros(grid.size)
    if method == "fd":
        opts = {"horizon": (mc.horizon if mc else 200.0)}
        opts.update(fd_options or {})
        value = fd_continuation_values(model, d, g, policy, grid, **opts)
    elif method == "exact":
        value = np.array([_deterministic_value(model, d, g, policy, float(x)) for x in grid])
    else:
        mc = mc or MonteCarloSpec()
        value = payoff.copy()
        for i, x in enumerate(grid):
            if policy.contains(x) and policy.is_interior(x):
                continue
            est = estimate_payoff(model, d, g, policy, float(x), True, mc.derive(i))
            value[i], se[i] = est.mean, est.std_error
    labels = np.array([label_from_gap(p, v, s, abs_tol) for p, v, s in zip(payoff, value, se)])
    return GridClassification(grid, labels, payoff, value, se, method)


def _check_resolution(grid, mask):
    inner = (mask[1:-1] != mask[:-2]) & (mask[1:-1] != mask[2:])
    if np.any(inner):
        i = int(np.flatnonzero(inner)[0]) + 1
        raise GridTooCoarse(f"the improved stop set changes twice around x={grid[i]:.6g}; "
                            "its boundary is not resolved by the grid")


def improve_from_labels(policy: ThresholdPolicy, cls: GridClassification,
                        check_resolution: bool = True) -> ThresholdPolicy:
    old = policy.mask(cls.x)
    mask = (cls.labels == "S") | ((cls.labels == "I") & old)
    if check_resolution:
        _check_resolution(cls.x, mask)
    return ThresholdPolicy.from_mask(cls.x, mask, beyond=policy)


def improve_policy(model: DiffusionModel, d: DiscountFunction, g: Callable, policy: ThresholdPolicy,
                   grid, mc: MonteCarloSpec | None = None, method: str = "auto",
                   abs_tol: float = DEFAULT_ABS_TOL, fd_options: dict | None = None,
                   check_resolution: bool = True) -> ThresholdPolicy:
    """One improvement step on the grid: stop on S, keep the current action
    on I, continue on C. Beyond the grid the policy is left unchanged.

    Raises:
        GridTooCoarse: if the new stop set has a one-point piece or hole,
            i.e. its boundary is not localized to a grid step.
    """
    cls = classify_grid(model, d, g, policy, grid, mc, method, abs_tol, fd_options)
    return improve_from_labels(policy, cls, check_resolution)


@dataclass
class IterationTrace:
    grid: np.ndarray
    policies: list = field(default_factory=list)
    classifications: list = field(default_factory=list)
    monotone_ok: list = field(default_factory=list)
    converged: bool = False

    @property
    def steps(self) -> int:
        return len(self.classifications)

    @property
    def final(self) -> ThresholdPolicy:
        return self.policies[-1]

    def boundaries(self) -> list:
        return [p.threshold_value for p in self.policies]

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "steps": self.steps,
            "policies": [p.to_dict()["stop_set"] for p in self.policies],
            "boundaries": self.boundaries(),
            "monotone_ok": list(self.monotone_ok),
        }

    def write_labels_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "x", "label", "g", "J_hat", "stderr"])
            for step, cls in enumerate(self.classifications):
                for x, lab, gx, j, se in cls.rows():
                    w.writerow([step, f"{x:.12g}", lab, f"{gx:.12g}", f"{j:.12g}", f"{se:.12g}"])


def iterate_policy(model: DiffusionModel, d: DiscountFunction, g: Callable, policy0: ThresholdPolicy,
                   grid, mc: MonteCarloSpec | None = None, max_steps: int = 20, method: str = "auto",
                   abs_tol: float = DEFAULT_ABS_TOL, fd_options: dict | None = None,
                   check_resolution: bool = True) -> IterationTrace:
    """Apply :func:`improve_policy` until the stop set is unchanged on the grid.

    ``monotone_ok[n]`` records whether step ``n`` only added stop states,
    i.e. stopping happened weakly earlier.

    Raises:
        NonConvergence: after ``max_steps`` improvements without a fixed
            point; the partial trace is attached.
    """
    grid = np.asarray(grid, dtype=float)
    trace = IterationTrace(grid, [policy0])
    policy = policy0
    for _ in range(max_steps):
        cls = classify_grid(model, d, g, policy, grid, mc, method, abs_tol, fd_options)
        new = improve_from_labels(policy, cls, check_resolution)
        trace.classifications.append(cls)
        old_mask, new_mask = policy.mask(grid), new.mask(grid)
        trace.monotone_ok.append(bool(np.all(new_mask >= old_mask)))
        trace.policies.append(new)
        if new.equals_on(policy, grid):
            trace.converged = True
            return trace
        policy = new
    raise NonConvergence(f"no fixed point after {max_steps} improvement steps", trace)


def default_grid(beta: float = 1.0, n: int = 2001) -> np.ndarray:
    """Uniform grid on [0, 4/sqrt(beta)]."""
    return np.linspace(0.0, 4.0 / math.sqrt(beta), n)
