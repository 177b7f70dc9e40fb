"""Cross-checks between the independent routes: simulation against the
closed-form hitting analytics, and the grid improvement step against the
analytic threshold map."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .bessel import BesselProblem, crossing_threshold, largest_equilibrium_threshold
from .discounting import DiscountFunction
from .engine import abs_payoff, default_grid, improve_policy
from .hitting import discounted_hit_value, laplace_hitting
from .models import DiffusionModel
from .montecarlo import MonteCarloSpec, estimate_payoff, simulate_entry
from .policies import ThresholdPolicy

Z_BAND = 3.0
LOW_PRECISION_PATHS = 10_000


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    reference: float
    discrepancy: float
    tolerance: float
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _band_check(name, est, se, ref, n_paths):
    tol = Z_BAND * se
    note = "wide band: few paths" if n_paths < LOW_PRECISION_PATHS else ""
    return CheckResult(name, abs(est - ref) <= tol, est, ref, abs(est - ref), tol, note)


def laplace_checks(mc: MonteCarloSpec, cases=((0.0, 1.0, 1.0), (0.5, 1.0, 1.0), (0.0, 1.0, 2.0))):
    """Simulated ``E[exp(-lam^2 T / 2)]`` for two-sided hitting of ``a``
    against ``cosh(x lam) / cosh(a lam)``."""
    model = DiffusionModel.brownian()
    out = []
    for k, (x, a, lam) in enumerate(cases):
        sample = simulate_entry(model, ThresholdPolicy.threshold(a), x, False, mc.derive(k))
        vals = np.exp(-0.5 * lam**2 * sample.times)
        se = float(np.std(vals, ddof=1) / math.sqrt(vals.size))
        out.append(_band_check(f"laplace x={x:g} a={a:g} lam={lam:g}", float(vals.mean()), se,
                               laplace_hitting(x, a, lam), mc.n_paths))
    return out


def payoff_checks(beta: float, mc: MonteCarloSpec, levels=(0.5, 1.0), fractions=(0.0, 0.5)):
    """Simulated value of ``tau_a`` from ``x`` against the quadrature value."""
    problem = BesselProblem(beta)
    model, d = DiffusionModel.brownian(), DiscountFunction.hyperbolic(beta)
    out = []
    k = 100
    for a in levels:
        for f in fractions:
            x = f * a
            est = estimate_payoff(model, d, abs_payoff, ThresholdPolicy.threshold(a), x, False, mc.derive(k))
            k += 1
            out.append(_band_check(f"payoff x={x:g} a={a:g}", est.mean, est.std_error,
                                   discounted_hit_value(problem.context, x, a), mc.n_paths))
    return out


def grid_step_check(beta: float, grid_n: int = 2001, start: float | None = None, horizon: float | None = None):
    """The grid improvement of ``tau_start`` against ``x_star(start)``; the
    tolerance is one grid step."""
    problem = BesselProblem(beta)
    start = 1.0 / math.sqrt(beta) if start is None else start
    grid = default_grid(beta, grid_n)
    step = float(grid[1] - grid[0])
    new = improve_policy(DiffusionModel.brownian(), DiscountFunction.hyperbolic(beta), abs_payoff,
                         ThresholdPolicy.threshold(start), grid, method="fd",
                         fd_options={"horizon": horizon or 200.0 / beta})
    ref = crossing_threshold(problem, start)
    got = new.threshold_value
    measured = math.nan if got is None else got
    ok = got is not None and abs(got - ref) <= step
    return CheckResult(f"grid step from a={start:g}", ok, measured, ref, abs(measured - ref), step)


def scaling_check(betas=(0.25, 1.0, 4.0), tol: float = 1e-6):
    """``a_star(beta) sqrt(beta)`` should not depend on beta."""
    scaled = [largest_equilibrium_threshold(BesselProblem(b)) * math.sqrt(b) for b in betas]
    spread = max(scaled) - min(scaled)
    return CheckResult("a_star scaling", spread <= tol, spread, 0.0, spread, tol)


def run_validation(beta: float = 1.0, mc: MonteCarloSpec | None = None, grid_n: int = 2001) -> list[CheckResult]:
    mc = mc or MonteCarloSpec.for_beta(beta)
    return [*laplace_checks(mc), *payoff_checks(beta, mc), grid_step_check(beta, grid_n), scaling_check()]
