"""Quadrature against the weight e^{-s} on [0, inf), bracketing root finding,
and overflow-safe hyperbolic functions.

Node generation, adaptive quadrature and Brent iterations come from scipy;
this module owns the tolerance bookkeeping around them.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize
from scipy.special import roots_laguerre

from .errors import MaxIterExceeded, NonFinite, NoSignChange, ToleranceNotMet

_METHODS = ("gauss-laguerre", "adaptive-truncated")
# roots_laguerre loses its weights somewhere above 256 nodes.
_MAX_NODES = 128
_ROUNDING_FACTOR = 256


@dataclass(frozen=True)
class QuadratureSpec:
    """How to evaluate integrals of the form int_0^inf e^{-s} f(s) ds.

    With ``method="gauss-laguerre"`` the rule is evaluated at ``node_count``
    and ``2 * node_count`` nodes; their difference is the error estimate.
    When it exceeds ``abs_tol`` the integral is recomputed adaptively on
    ``[0, truncation]``.
    """

    method: str = "gauss-laguerre"
    node_count: int = 64
    truncation: float = 50.0
    abs_tol: float = 1e-10

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if not 8 <= int(self.node_count) <= _MAX_NODES:
            raise ValueError(f"node_count must lie in [8, {_MAX_NODES}], got {self.node_count}")
        if not self.truncation > 0:
            raise ValueError("truncation must be positive")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")


@dataclass(frozen=True)
class RootSpec:
    bracket_lo: float
    bracket_hi: float
    x_tol: float = 1e-10
    f_tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if not self.bracket_lo < self.bracket_hi:
            raise ValueError("bracket_lo must be smaller than bracket_hi")
        if not (self.x_tol > 0 and self.f_tol > 0 and self.max_iter > 0):
            raise ValueError("tolerances and max_iter must be positive")

    def with_bracket(self, lo: float, hi: float) -> "RootSpec":
        return RootSpec(lo, hi, self.x_tol, self.f_tol, self.max_iter)


class QuadResult(NamedTuple):
    value: float
    error: float
    method: str


@functools.lru_cache(maxsize=None)
def laguerre_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        nodes, weights = roots_laguerre(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _gauss_laguerre(f, n):
    nodes, weights = laguerre_rule(n)
    with np.errstate(over="ignore", invalid="ignore"):
        values = np.asarray(f(nodes), dtype=float)
    if values.shape != nodes.shape:
        values = np.broadcast_to(values, nodes.shape)
    if not np.all(np.isfinite(values)):
        raise NonFinite(f"integrand is not finite at some of the {n} Gauss-Laguerre nodes")
    return float(np.dot(weights, values)), float(np.dot(weights, np.abs(values)))


def _adaptive(f, spec: QuadratureSpec) -> QuadResult:
    def integrand(s):
        v = float(np.exp(-s) * f(s))
        if not np.isfinite(v):
            raise NonFinite(f"integrand is not finite at s={s!r}")
        return v

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(integrand, 0.0, spec.truncation,
                                    epsabs=spec.abs_tol, epsrel=0.0, limit=1000)
    # the neglected tail is at most e^{-truncation} * sup|f|; checked at the cut
    err += abs(float(f(spec.truncation))) * np.exp(-spec.truncation)
    if err > spec.abs_tol:
        raise ToleranceNotMet(f"adaptive quadrature error estimate {err:.3g} exceeds {spec.abs_tol:.3g}")
    return QuadResult(value, err, "adaptive-truncated")


def integrate_exp_weight_err(f: Callable, spec: QuadratureSpec | None = None) -> QuadResult:
    """Like :func:`integrate_exp_weight` but also report the error estimate
    and which rule produced the value."""
    spec = spec or QuadratureSpec()
    if spec.method == "gauss-laguerre":
        coarse, _ = _gauss_laguerre(f, spec.node_count)
        fine, magnitude = _gauss_laguerre(f, 2 * spec.node_count)
        err = abs(fine - coarse)
        # below this the two sums differ by rounding alone
        rounding = _ROUNDING_FACTOR * np.finfo(float).eps * magnitude
        if err <= max(spec.abs_tol, rounding):
            return QuadResult(fine, err, "gauss-laguerre")
    return _adaptive(f, spec)


def integrate_exp_weight(f: Callable, spec: QuadratureSpec | None = None) -> float:
    """Approximate ``int_0^inf e^{-s} f(s) ds``.

    ``f`` must accept a numpy array of nodes and return an array of the same
    shape (scalar input must also work for the adaptive fallback).

    Raises:
        NonFinite: if ``f`` is NaN or infinite at a quadrature node.
        ToleranceNotMet: if neither rule reaches ``spec.abs_tol``.
    """
    return integrate_exp_weight_err(f, spec).value


def find_root(g: Callable[[float], float], spec: RootSpec) -> float:
    """Brent's method on ``spec``'s bracket.

    Returns a point inside the bracket where either ``|g| <= f_tol`` or the
    remaining bracket is narrower than ``x_tol``.
    """
    lo, hi = float(spec.bracket_lo), float(spec.bracket_hi)
    g_lo, g_hi = float(g(lo)), float(g(hi))
    if not (np.isfinite(g_lo) and np.isfinite(g_hi)):
        raise NonFinite("objective is not finite at the bracket ends")
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if g_lo * g_hi > 0:
        raise NoSignChange(f"g({lo})={g_lo:.6g} and g({hi})={g_hi:.6g} have the same sign")
    try:
        root, info = optimize.brentq(g, lo, hi, xtol=spec.x_tol, rtol=4 * np.finfo(float).eps,
                                     maxiter=spec.max_iter, full_output=True, disp=False)
    except RuntimeError as exc:  # pragma: no cover - brentq only raises this with disp=True
        raise MaxIterExceeded(str(exc)) from exc
    if not info.converged:
        raise MaxIterExceeded(f"Brent iteration stopped after {info.iterations} steps: {info.flag}")
    return float(min(max(root, lo), hi))


# Overflow-safe hyperbolic helpers. cosh overflows near 710.

def sech(y):
    y = np.abs(np.asarray(y, dtype=float))
    e = np.exp(-y)
    return 2.0 * e / (1.0 + e * e)


def cosh_ratio(x, a, lam):
    """cosh(x*lam) / cosh(a*lam) for 0 <= x <= a, lam >= 0."""
    x, a, lam = (np.asarray(v, dtype=float) for v in (x, a, lam))
    return np.exp(-(a - x) * lam) * (1.0 + np.exp(-2.0 * x * lam)) / (1.0 + np.exp(-2.0 * a * lam))


def sinh_ratio(x, a, lam):
    """sinh(x*lam) / cosh(a*lam) for 0 <= x <= a, lam >= 0."""
    x, a, lam = (np.asarray(v, dtype=float) for v in (x, a, lam))
    return np.exp(-(a - x) * lam) * (-np.expm1(-2.0 * x * lam)) / (1.0 + np.exp(-2.0 * a * lam))
