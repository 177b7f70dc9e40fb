"""Acceptance suite: one or more tests per criterion, each tagged with
``criterion(n)``; the terminal summary prints one PASS/FAIL line per test."""

import math
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqstop.bessel import (
    BesselProblem,
    auxiliary_value,
    crossing_threshold,
    equilibrium_value,
    improve_threshold,
    iterate_to_equilibrium,
    largest_equilibrium_threshold,
)
from eqstop.discounting import DiscountFunction, check_decreasing_impatience, check_log_subadditive
from eqstop.engine import abs_payoff, default_grid, improve_policy, iterate_policy
from eqstop.hitting import HittingContext, boundary_slope, discounted_hit_value
from eqstop.models import DiffusionModel
from eqstop.montecarlo import MonteCarloSpec, estimate_payoff
from eqstop.numerics import integrate_exp_weight
from eqstop.policies import ThresholdPolicy
from eqstop.smoking import delay_threshold, improved_quit_time, smoking_iterate
from oracles import bisection, trapezoid_slope, value_iteration_threshold

A_STAR = 0.946475
X_STAR_OF_ONE = 0.92195
SLOPE_CONSTANT = 1.07461
SMOKING_DELAY = 2.51286

BM = DiffusionModel.brownian()
HYP = DiscountFunction.hyperbolic(1.0)
CTX = HittingContext(1.0)


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start


@pytest.mark.criterion(1)
def test_largest_equilibrium_threshold():
    solve = largest_equilibrium_threshold.__wrapped__  # bypass the cache to time a cold solve
    a_star, elapsed = timed(solve, BesselProblem(1.0))
    assert abs(a_star - A_STAR) < 1e-4
    assert elapsed < 1.0
    for beta in (0.25, 4.0):
        assert abs(solve(BesselProblem(beta)) * math.sqrt(beta) - A_STAR) < 1e-4


@pytest.mark.criterion(2)
def test_crossing_of_naive_threshold():
    largest_equilibrium_threshold.cache_clear()
    x_star, elapsed = timed(crossing_threshold, BesselProblem(1.0), 1.0)
    assert abs(x_star - X_STAR_OF_ONE) < 1e-4
    assert elapsed < 1.0


@pytest.mark.criterion(3)
def test_slope_constant():
    # the slope at the naive threshold for beta = 1
    direct = integrate_exp_weight(lambda s: np.sqrt(2 * s) * np.tanh(np.sqrt(2 * s)))
    via_slope = boundary_slope(CTX, 1.0)
    assert abs(direct - SLOPE_CONSTANT) < 1e-4
    assert abs(via_slope - SLOPE_CONSTANT) < 1e-4
    assert abs(trapezoid_slope(1.0) - SLOPE_CONSTANT) < 1e-4


@pytest.mark.criterion(4)
def test_smoking_delay_constant():
    assert abs(delay_threshold() - SMOKING_DELAY) < 1e-4
    independent = bisection(lambda s: math.exp(s / 2) - 1 - s, 1.0, 5.0)
    assert abs(delay_threshold() - independent) < 1e-10


@pytest.mark.criterion(4)
def test_smoking_improved_plan_piecewise():
    T = 10.0
    switch = T - SMOKING_DELAY
    for t in np.linspace(0.0, T, 20):
        expected = t if t < switch else T
        assert improved_quit_time(T, t) == pytest.approx(expected, abs=1e-12)


@pytest.mark.criterion(4)
def test_smoking_improvement_is_idempotent():
    T = 10.0
    trace = smoking_iterate(T, n_grid=2001)
    assert trace.converged
    assert trace.steps == 1
    assert np.array_equal(trace.flags[1], trace.flags[2])
    nodes = np.linspace(0, 2000, 20).astype(int)
    got = trace.quit_times(1)[nodes]
    want = [improved_quit_time(T, t) for t in trace.times[nodes]]
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.criterion(5)
@pytest.mark.parametrize("a0", [1.0, 1.5, 2.0])
def test_two_step_convergence(a0):
    p = BesselProblem(1.0)
    report = iterate_to_equilibrium(p, a0)
    assert report.equilibrium_threshold == pytest.approx(crossing_threshold(p, a0), abs=1e-12)
    assert report.theta_applications <= 2
    assert improve_threshold(p, report.equilibrium_threshold) == ThresholdPolicy.threshold(
        report.equilibrium_threshold)


@pytest.mark.criterion(5)
def test_equilibrium_set_straddles_largest_threshold():
    p = BesselProblem(1.0)
    for a in np.round(np.arange(0.10, 0.945, 0.01), 2):
        assert improve_threshold(p, a) == ThresholdPolicy.threshold(a), a
    for a in np.round(np.arange(0.95, 2.005, 0.01), 2):
        assert improve_threshold(p, a) != ThresholdPolicy.threshold(a), a


@pytest.mark.criterion(6)
def test_monte_carlo_matches_quadrature():
    mc = MonteCarloSpec(n_paths=100_000, dt=1e-3, horizon=200.0, bridge_correction=True)
    start = time.perf_counter()
    misses = []
    key = 0
    for a in (0.5, 0.946475, 1.5):
        for frac in (0.0, 0.25, 0.5, 0.75):
            x = frac * a
            est = estimate_payoff(BM, HYP, abs_payoff, ThresholdPolicy.threshold(a), x, False, mc.derive(key))
            key += 1
            ref = discounted_hit_value(CTX, x, a)
            if abs(est.mean - ref) > 3 * est.std_error:
                misses.append((x, a, est.mean, ref, est.std_error))
    assert not misses
    assert time.perf_counter() - start < 300.0


@pytest.mark.criterion(7)
def test_grid_step_from_naive_threshold():
    grid = np.linspace(0.0, 4.0, 2001)
    new = improve_policy(BM, HYP, abs_payoff, ThresholdPolicy.threshold(1.0), grid, method="fd")
    assert abs(new.threshold_value - X_STAR_OF_ONE) <= 0.002


def _left_derivative(f, x, h):
    # second-order one-sided difference from the continuation side
    return (3 * f(x) - 4 * f(x - h) + f(x - 2 * h)) / (2 * h)


@pytest.mark.criterion(8)
@pytest.mark.parametrize("t", [0.0, 1.5])
def test_auxiliary_value_solves_heat_equation(t):
    p, h = BesselProblem(1.0), 1e-4
    worst = 0.0
    for s in np.linspace(t + 0.05, t + 5.0, 50):
        edge = math.sqrt(1.0 + (s - t))
        for x in np.linspace(0.02, edge - 0.02, 50):
            w = lambda ss, xx: auxiliary_value(p, t, ss, xx)
            w_s = (w(s + h, x) - w(s - h, x)) / (2 * h)
            w_xx = (w(s, x + h) - 2 * w(s, x) + w(s, x - h)) / h**2
            worst = max(worst, abs(w_s + 0.5 * w_xx))
    assert worst < 1e-5


@pytest.mark.criterion(8)
def test_auxiliary_value_obstacle_and_smooth_fit():
    p, t = BesselProblem(1.0), 0.0
    s = np.linspace(0.0, 10.0, 201)[:, None]
    x = np.linspace(0.0, 6.0, 301)[None, :]
    payoff = x / (1.0 + (s - t))
    assert np.all(auxiliary_value(p, t, s, x) >= payoff - 1e-14)
    for sv in np.linspace(0.0, 10.0, 41):
        u = 1.0 + (sv - t)
        edge = math.sqrt(u)
        w = lambda xx: auxiliary_value(p, t, sv, xx)
        assert abs(w(edge) - edge / u) < 1e-12
        assert abs(_left_derivative(w, edge, 1e-4) - 1.0 / u) < 1e-5


@pytest.mark.criterion(9)
@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 4.0), st.lists(st.floats(0.0, 1.0), min_size=3, max_size=8, unique=True))
def test_hit_value_increasing_convex(a, fractions):
    xs = np.sort(np.asarray(fractions)) * a
    vals = np.array([discounted_hit_value(CTX, x, a) for x in xs])
    assert np.all(np.diff(vals) >= -1e-12)
    ok = np.diff(xs) > 1e-6
    slopes = np.diff(vals)[ok] / np.diff(xs)[ok]
    assert np.all(np.diff(slopes) >= -1e-7)
    assert discounted_hit_value(CTX, a, a) == pytest.approx(a, abs=1e-14)


def _families():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return [
            DiscountFunction.exponential(0.5),
            DiscountFunction.hyperbolic(1.0),
            DiscountFunction.hyperbolic(4.0),
            DiscountFunction.quasi_hyperbolic(0.7, 0.3),
        ]


@pytest.mark.criterion(9)
@pytest.mark.parametrize("d", _families(), ids=repr)
def test_decreasing_impatience_implies_log_subadditivity(d):
    if check_decreasing_impatience(d).holds:
        assert check_log_subadditive(d).holds
    if d.family == "hyperbolic":
        assert check_decreasing_impatience(d).holds


@pytest.mark.criterion(9)
@pytest.mark.parametrize("start", [1.0, 1.5, 2.0])
def test_stop_set_grows_along_iteration(start):
    p = BesselProblem(1.0)
    # the first step already stops earlier: x_star(start) < start
    assert crossing_threshold(p, start) < start
    grid = default_grid(1.0, 2001)
    trace = iterate_policy(BM, HYP, abs_payoff, ThresholdPolicy.threshold(start), grid)
    assert trace.converged
    assert all(trace.monotone_ok[1:])
    masks = [pol.mask(grid) for pol in trace.policies]
    assert all(np.all(new >= old) for old, new in zip(masks[1:], masks[2:]))


@pytest.mark.criterion(9)
def test_exponential_optimum_is_fixed_point():
    rho = 1.0
    grid = default_grid(1.0, 2001)
    step = grid[1] - grid[0]
    b = bisection(lambda y: y * math.tanh(y) - 1.0, 0.5, 2.0) / math.sqrt(2 * rho)
    oracle = value_iteration_threshold(rho)
    assert abs(b - oracle) <= 0.02
    trace = iterate_policy(BM, DiscountFunction.exponential(rho), abs_payoff, ThresholdPolicy.threshold(b), grid)
    assert trace.converged
    assert abs(trace.final.threshold_value - b) <= step
    assert abs(trace.final.threshold_value - oracle) <= 0.02


@pytest.mark.criterion(9)
def test_largest_equilibrium_dominates():
    p = BesselProblem(1.0)
    a_star = largest_equilibrium_threshold(p)
    for a in np.linspace(0.05, a_star - 0.01, 12):
        for x in np.linspace(0.0, a_star, 25):
            lower = x if x >= a else discounted_hit_value(CTX, x, a)
            assert equilibrium_value(p, x) >= lower - 1e-12
