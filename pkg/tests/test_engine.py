import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqstop.bessel import BesselProblem, crossing_threshold
from eqstop.discounting import DiscountFunction
from eqstop.engine import (
    GridClassification,
    abs_payoff,
    classify_grid,
    classify_state,
    compare_entry_times,
    default_grid,
    fd_continuation_values,
    first_entry,
    improve_from_labels,
    improve_policy,
    iterate_policy,
    label_from_gap,
)
from eqstop.errors import EmptyPath, GridTooCoarse, NonConvergence
from eqstop.hitting import HittingContext, discounted_hit_value, laplace_hitting
from eqstop.models import DiffusionModel
from eqstop.montecarlo import MonteCarloSpec, simulate_paths
from eqstop.policies import INF, ThresholdPolicy
from oracles import bisection, value_iteration_threshold

BM = DiffusionModel.brownian()
HYP = DiscountFunction.hyperbolic(1.0)
CTX = HittingContext(1.0)
GRID = default_grid(1.0, 2001)
STEP = GRID[1] - GRID[0]


# first entry along stored paths

def test_first_entry_stop_everywhere():
    path = np.array([0.3, 0.1, -0.2])
    policy = ThresholdPolicy.stop_everywhere()
    assert first_entry(policy, path, 0.01, t=2.0) == 2.0
    assert first_entry(policy, path, 0.01, t=2.0, strict=True) == 2.0


def test_first_entry_inside_set():
    path = np.array([1.5, 0.2, 0.1])
    policy = ThresholdPolicy.threshold(1.0)
    assert first_entry(policy, path, 0.1, t=1.0) == 1.0
    assert first_entry(policy, path, 0.1, t=1.0, strict=True) == 1.0


def test_first_entry_on_edge_strict():
    policy = ThresholdPolicy.threshold(1.0)
    path = np.array([1.0, 0.95, 0.9, 1.01])
    assert first_entry(policy, path, 0.1) == 0.0
    assert first_entry(policy, path, 0.1, strict=True) == pytest.approx(0.3)


def test_first_entry_never():
    assert first_entry(ThresholdPolicy.threshold(5.0), np.zeros(10), 0.1) == INF


def test_first_entry_empty():
    with pytest.raises(EmptyPath):
        first_entry(ThresholdPolicy.threshold(1.0), np.array([]), 0.1)


def test_first_entry_bridge_needs_draws():
    with pytest.raises(ValueError):
        first_entry(ThresholdPolicy.threshold(1.0), np.array([0.0, 0.99, 0.5]), 0.01, bridge=True)


def test_first_entry_bridge_detects_near_miss():
    policy = ThresholdPolicy.threshold(1.0)
    path = np.array([0.0, 0.999, 0.998, 1.2])
    t = first_entry(policy, path, 0.01, bridge=True, uniforms=np.array([0.9, 0.0, 0.9]))
    assert t == pytest.approx(0.015)


def test_first_entry_laplace_moment():
    # stored paths, bridge-corrected first entry, 1e5 paths in chunks
    lam, a = 1.0, 1.0
    policy = ThresholdPolicy.threshold(a)
    rng = np.random.default_rng(17)
    vals = []
    for chunk in range(50):
        spec = MonteCarloSpec(n_paths=2000, dt=1e-2, horizon=12.0, master_seed=1000 + chunk)
        ens = simulate_paths(BM, 0.0, spec)
        draws = rng.random(ens.values.shape)
        for path, u in zip(ens.values, draws):
            vals.append(first_entry(policy, path, spec.dt, bridge=True, uniforms=u))
    t_hat = np.array(vals)
    assert np.isfinite(t_hat).mean() > 0.999
    z = np.exp(-0.5 * lam**2 * np.where(np.isfinite(t_hat), t_hat, 1e9))
    se = z.std(ddof=1) / math.sqrt(z.size)
    assert abs(z.mean() - laplace_hitting(0.0, a, lam)) < 3 * se


# labels

def test_label_rule():
    assert label_from_gap(1.0, 0.9) == "S"
    assert label_from_gap(0.9, 1.0) == "C"
    assert label_from_gap(1.0, 1.0 + 1e-9) == "I"
    assert label_from_gap(1.0, 0.99, std_error=0.01) == "I"


@settings(max_examples=300, deadline=None)
@given(st.floats(-1, 1), st.floats(1e-6, 0.1), st.floats(0.01, 1))
def test_more_paths_never_flip_a_clear_label(gap, se, shrink):
    if abs(gap) <= 4 * se:
        return
    before = label_from_gap(1.0 + gap, 1.0, se)
    after = label_from_gap(1.0 + gap, 1.0, se * shrink)
    assert before == after
    assert before in ("S", "C")


def test_classify_state_on_threshold():
    res = classify_state(BM, HYP, abs_payoff, ThresholdPolicy.threshold(1.0), 1.0, MonteCarloSpec(n_paths=20_000))
    assert res.label == "S"
    assert res.std_error > 0


def test_classify_state_below_equilibrium_threshold():
    res = classify_state(BM, HYP, abs_payoff, ThresholdPolicy.threshold(0.5), 0.2, MonteCarloSpec(n_paths=20_000))
    assert res.label == "C"


def test_classify_state_between_crossing_and_threshold():
    res = classify_state(BM, HYP, abs_payoff, ThresholdPolicy.threshold(1.0), 0.96,
                         MonteCarloSpec(n_paths=200_000))
    assert res.label == "S"
    assert abs(res.continuation_value - discounted_hit_value(CTX, 0.96, 1.0)) < 3 * res.std_error


def test_classify_state_inside_stop_set():
    res = classify_state(BM, HYP, abs_payoff, ThresholdPolicy.threshold(1.0), 1.4)
    assert (res.label, res.continuation_value, res.std_error) == ("I", 1.4, 0.0)


def test_classify_state_deterministic_growth():
    model = DiffusionModel.smoking(horizon=10.0)
    res = classify_state(model, HYP, abs_payoff, ThresholdPolicy.threshold(2.0), 1.0)
    hit = math.log(2.0) / 0.5
    assert res.continuation_value == pytest.approx(2.0 / (1.0 + hit), rel=1e-12)
    assert res.label == "S"  # 1 now beats 2 / (1 + 1.386) later
    # a level beyond the horizon is never reached; the horizon value counts
    far = classify_state(model, HYP, abs_payoff, ThresholdPolicy.threshold(1e6), 1.0)
    assert far.continuation_value == pytest.approx(math.exp(5.0) / 11.0)


# finite differences

def test_fd_matches_quadrature():
    values = fd_continuation_values(BM, HYP, abs_payoff, ThresholdPolicy.threshold(1.0), GRID)
    idx = np.arange(0, 500, 20)
    reference = np.array([discounted_hit_value(CTX, x, 1.0) for x in GRID[idx]])
    assert np.max(np.abs(values[idx] - reference)) < 1e-5
    assert np.all(values[GRID >= 1.0] == GRID[GRID >= 1.0])


def test_fd_needs_uniform_grid():
    with pytest.raises(ValueError):
        fd_continuation_values(BM, HYP, abs_payoff, ThresholdPolicy.threshold(1.0), np.array([0.0, 0.1, 0.3, 0.4]))


def test_fd_warns_when_continuation_reaches_edge():
    with pytest.warns(RuntimeWarning, match="grid edge"):
        fd_continuation_values(BM, HYP, abs_payoff, ThresholdPolicy.threshold(5.0), np.linspace(0, 4, 201),
                               horizon=5.0)


# improvement steps

@pytest.mark.parametrize("a", [1.0, 1.5, 2.0])
def test_grid_step_matches_analytic_crossing(a):
    new = improve_policy(BM, HYP, abs_payoff, ThresholdPolicy.threshold(a), GRID)
    assert abs(new.threshold_value - crossing_threshold(BesselProblem(1.0), a)) <= STEP


def test_grid_step_keeps_equilibrium():
    policy = ThresholdPolicy.threshold(0.5)
    cls = classify_grid(BM, HYP, abs_payoff, policy, GRID)
    assert set(cls.labels[GRID < 0.5]) == {"C"}
    assert set(cls.labels[GRID >= 0.5]) == {"I"}
    assert improve_policy(BM, HYP, abs_payoff, policy, GRID).equals_on(policy, GRID)


def test_grid_step_keeps_stop_everywhere():
    policy = ThresholdPolicy.stop_everywhere()
    assert improve_policy(BM, HYP, abs_payoff, policy, GRID) == ThresholdPolicy(((0.0, INF),))


def test_isolated_label_is_too_coarse():
    grid = np.linspace(0, 1, 11)
    labels = np.array(["C"] * 11)
    labels[5] = "S"
    fake = GridClassification(grid, labels, grid, grid, np.zeros(11), "fd")
    with pytest.raises(GridTooCoarse):
        improve_from_labels(ThresholdPolicy.threshold(2.0), fake)


@pytest.mark.slow
def test_monte_carlo_grid_step():
    grid = np.round(np.arange(0.5, 2.0001, 0.05), 10)
    mc = MonteCarloSpec(n_paths=40_000, dt=1e-2)
    new = improve_policy(BM, HYP, abs_payoff, ThresholdPolicy.threshold(2.0), grid, mc, method="mc")
    x_star = crossing_threshold(BesselProblem(1.0), 2.0)
    assert new.stop_set[0][0] - x_star <= 0.05 + 1e-12
    assert new.stop_set[0][0] >= x_star
    assert new.stop_set[-1][1] == INF


# iteration

def test_iterate_from_naive():
    trace = iterate_policy(BM, HYP, abs_payoff, ThresholdPolicy.threshold(1.0), GRID)
    assert trace.converged
    assert trace.steps <= 2
    assert abs(trace.final.threshold_value - 0.92195) <= STEP
    assert trace.final.equals_on(trace.policies[-2], GRID)


@pytest.mark.parametrize("start", [1.0, 1.5, 2.0, 3.0])
def test_stop_region_grows_along_iteration(start):
    trace = iterate_policy(BM, HYP, abs_payoff, ThresholdPolicy.threshold(start), GRID)
    assert all(trace.monotone_ok[1:])
    assert all(trace.monotone_ok)


def test_fixed_point_reclassifies_to_itself():
    trace = iterate_policy(BM, HYP, abs_payoff, ThresholdPolicy.threshold(1.5), GRID)
    again = improve_policy(BM, HYP, abs_payoff, trace.final, GRID)
    assert again.equals_on(trace.final, GRID)


def test_exponential_discount_optimum_is_fixed():
    rho = 1.0
    exponential = DiscountFunction.exponential(rho)
    # smooth fit for the classical problem: y tanh y = 1 with y = b sqrt(2 rho)
    b = bisection(lambda y: y * math.tanh(y) - 1.0, 0.5, 2.0) / math.sqrt(2 * rho)
    assert b == pytest.approx(value_iteration_threshold(rho), abs=0.02)
    trace = iterate_policy(BM, exponential, abs_payoff, ThresholdPolicy.threshold(b), GRID)
    assert trace.converged
    # g and J touch tangentially at b, so the node next to b carries a gap of
    # order STEP^2 and may go either way; the threshold stays within one node
    assert all(abs(p.threshold_value - b) <= STEP for p in trace.policies)
    cls = trace.classifications[-1]
    assert set(cls.labels[GRID < b - STEP]) == {"C"}


def test_iteration_cap():
    with pytest.raises(NonConvergence) as info:
        iterate_policy(BM, HYP, abs_payoff, ThresholdPolicy.threshold(2.0), GRID, max_steps=1)
    assert info.value.trace.steps == 1


def test_trace_exports(tmp_path):
    trace = iterate_policy(BM, HYP, abs_payoff, ThresholdPolicy.threshold(1.0), np.linspace(0, 4, 401))
    data = json.loads(json.dumps(trace.to_dict()))
    assert data["converged"] is True
    assert data["policies"][0] == [[1.0, None]]
    trace.write_labels_csv(tmp_path / "labels.csv")
    lines = (tmp_path / "labels.csv").read_text().splitlines()
    assert lines[0] == "step,x,label,g,J_hat,stderr"
    assert len(lines) == 1 + 401 * trace.steps


def test_improved_policy_enters_no_later_on_shared_paths():
    mc = MonteCarloSpec(n_paths=2000, dt=1e-2, horizon=20.0, master_seed=3)
    naive, improved = ThresholdPolicy.threshold(1.0), ThresholdPolicy.threshold(0.92195)
    result = compare_entry_times(BM, naive, improved, 0.3, mc)
    assert result.holds and result.worst_delay == 0.0
    assert result.n_paths == 2000
    backwards = compare_entry_times(BM, improved, naive, 0.3, mc)
    assert not backwards.holds
    assert 0.0 < backwards.fraction_no_later < 1.0
