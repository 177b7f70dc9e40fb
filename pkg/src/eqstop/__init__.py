"""Equilibrium stopping policies for time-inconsistent stopping problems
under non-exponential discounting."""

from .bessel import (
    BesselProblem,
    EquilibriumReport,
    auxiliary_value,
    crossing_threshold,
    improve_threshold,
    iterate_to_equilibrium,
    largest_equilibrium_threshold,
    naive_boundary,
    naive_threshold,
    optimal_equilibrium,
)
from .discounting import DiscountFunction, check_decreasing_impatience, check_log_subadditive, evaluate
from .engine import (
    GridClassification,
    IterationTrace,
    RegionClassification,
    classify_grid,
    compare_entry_times,
    classify_state,
    first_entry,
    improve_policy,
    iterate_policy,
)
from .estimators import BesselEquilibrium, PolicyIteration
from .hitting import HittingContext, boundary_slope, discounted_hit_value, discounted_hit_value_dx, laplace_hitting
from .models import DiffusionModel
from .montecarlo import MonteCarloSpec, PayoffEstimate, estimate_payoff, simulate_entry, simulate_paths
from .numerics import QuadratureSpec, RootSpec, find_root, integrate_exp_weight
from .policies import ThresholdPolicy

__version__ = "0.1.0"
