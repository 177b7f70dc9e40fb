"""Estimator-style wrappers so the solvers compose with scikit-learn tooling.

Both estimators take states as ``X`` of shape ``(n_samples, 1)`` (or a 1-D
array). ``fit`` computes the equilibrium policy; ``predict`` returns 1 where
the policy stops immediately and 0 where it waits; ``transform`` returns the
policy's value at each state.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .bessel import BesselProblem, equilibrium_value, iterate_to_equilibrium
from .discounting import DiscountFunction
from .hitting import discounted_hit_value
from .engine import abs_payoff, default_grid, iterate_policy
from .models import DiffusionModel
from .montecarlo import MonteCarloSpec
from .policies import ThresholdPolicy


def _states(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    X = check_array(X, ensure_2d=True)
    if X.shape[1] != 1:
        raise ValueError(f"expected a single state column, got {X.shape[1]}")
    return X[:, 0]


class BesselEquilibrium(TransformerMixin, BaseEstimator):
    """Equilibrium threshold for ``|X|`` of a Brownian motion under
    hyperbolic discounting.

    Args:
        beta: hyperbolic discount rate.
        start: initial threshold to improve; None starts from the naive
            threshold ``1/sqrt(beta)``.
        optimal: if True, fit the best equilibrium ``a_star`` instead of the
            one reached from ``start``.
    """

    def __init__(self, beta: float = 1.0, start: float | None = None, optimal: bool = False):
        self.beta = beta
        self.start = start
        self.optimal = optimal

    def fit(self, X=None, y=None):
        problem = BesselProblem(self.beta)
        start = 1.0 / np.sqrt(self.beta) if self.start is None else self.start
        report = iterate_to_equilibrium(problem, start)
        self.problem_ = problem
        self.report_ = report
        self.a_star_ = report.a_star
        self.threshold_ = report.a_star if self.optimal else report.equilibrium_threshold
        self.policy_ = ThresholdPolicy.threshold(self.threshold_)
        return self

    def predict(self, X):
        check_is_fitted(self, "threshold_")
        return self.policy_.contains(_states(X)).astype(int)

    def transform(self, X):
        """Expected discounted payoff of following the fitted policy."""
        check_is_fitted(self, "threshold_")
        ctx = self.problem_.context
        out = []
        for r in np.abs(_states(X)):
            if r >= self.threshold_:
                out.append(r)
            elif self.threshold_ == self.a_star_:
                out.append(equilibrium_value(self.problem_, r))
            else:
                out.append(discounted_hit_value(ctx, r, self.threshold_))
        return np.asarray(out).reshape(-1, 1)


class PolicyIteration(BaseEstimator):
    """Grid improvement iteration for a Brownian state with payoff ``|x|``.

    ``fit(X)`` uses the sorted unique ``|X|`` values as the state grid when
    given, else the default uniform grid.

    Args:
        discount: a :class:`DiscountFunction` or its dict form.
        start_threshold: threshold of the starting policy.
        sigma: volatility.
        method: "auto", "fd" or "mc".
        n_paths, dt, horizon, seed: Monte Carlo settings (also the
            finite-difference horizon).
        max_steps: iteration cap.
    """

    def __init__(self, discount=None, start_threshold: float = 1.0, sigma: float = 1.0,
                 method: str = "auto", n_paths: int = 100_000, dt: float = 1e-3,
                 horizon: float = 200.0, seed: int = 20161027, max_steps: int = 20):
        self.discount = discount
        self.start_threshold = start_threshold
        self.sigma = sigma
        self.method = method
        self.n_paths = n_paths
        self.dt = dt
        self.horizon = horizon
        self.seed = seed
        self.max_steps = max_steps

    def _discount(self):
        if self.discount is None:
            return DiscountFunction.hyperbolic(1.0)
        if isinstance(self.discount, dict):
            return DiscountFunction.from_dict(self.discount)
        return self.discount

    def fit(self, X=None, y=None):
        grid = default_grid() if X is None else np.unique(np.abs(_states(X)))
        mc = MonteCarloSpec(n_paths=self.n_paths, dt=self.dt, horizon=self.horizon,
                            master_seed=self.seed)
        trace = iterate_policy(DiffusionModel.brownian(self.sigma), self._discount(), abs_payoff,
                               ThresholdPolicy.threshold(self.start_threshold), grid, mc,
                               max_steps=self.max_steps, method=self.method)
        self.trace_ = trace
        self.policy_ = trace.final
        self.threshold_ = trace.final.threshold_value
        self.labels_ = trace.classifications[-1].labels
        return self

    def predict(self, X):
        check_is_fitted(self, "policy_")
        return self.policy_.contains(_states(X)).astype(int)
