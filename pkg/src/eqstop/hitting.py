"""Two-sided first passage of Brownian motion to the level |x| = a.

With T the first time |X| reaches a from |X_0| = x <= a, the Laplace
transform is ``E[exp(-lam^2 T / 2)] = cosh(x lam) / cosh(a lam)``. Writing
``1 / (1 + beta T) = int_0^inf exp(-(1 + beta T) s) ds`` turns the expected
hyperbolically discounted payoff into a single e^{-s}-weighted integral::

    a E[1 / (1 + beta T)] = a int_0^inf e^{-s} cosh(x r) / cosh(a r) ds,   r = sqrt(2 beta s)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .numerics import QuadratureSpec, cosh_ratio, integrate_exp_weight, sinh_ratio


@dataclass(frozen=True)
class HittingContext:
    beta: float = 1.0
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")


def _check_domain(x, a):
    if x < 0 or a < 0:
        raise DomainError(f"need x >= 0 and a >= 0, got x={x}, a={a}")
    if x > a:
        raise DomainError(f"state x={x} lies beyond the barrier a={a}")


def laplace_hitting(x: float, a: float, lam: float) -> float:
    """``E[exp(-lam^2 T / 2)]`` for T the first time |X| hits ``a`` from ``x``."""
    _check_domain(x, a)
    if not lam > 0:
        raise DomainError("lam must be positive")
    if x == a:
        return 1.0
    return float(cosh_ratio(x, a, lam))


def _rate(ctx, s):
    return np.sqrt(2.0 * ctx.beta * np.asarray(s, dtype=float))


# decay rates above this use the substituted form
_SUBSTITUTE_ABOVE = 1.0


def _decaying_integral(ctx, c, cofactor):
    """``int_0^inf e^{-s - c sqrt(s)} cofactor(sqrt(s)) ds`` for ``c > 0``,
    integrated in ``w = s + c sqrt(s)``. ``cofactor`` takes ``sqrt(s)``."""

    def integrand(w):
        w = np.asarray(w, dtype=float)
        root = 2.0 * w / (np.sqrt(c * c + 4.0 * w) + c)  # sqrt(s) at w, cancellation free
        jacobian = 2.0 * root / (2.0 * root + c)
        return cofactor(root) * jacobian

    return integrate_exp_weight(integrand, ctx.quad)


def discounted_hit_value(ctx: HittingContext, x: float, a: float) -> float:
    """``a E[1 / (1 + beta T)]``: payoff ``a`` collected when |X| first hits
    ``a``, discounted hyperbolically. Equals ``a`` at ``x == a``."""
    _check_domain(x, a)
    if a == 0:
        raise DomainError("the barrier must be positive")
    if x == a:
        return float(a)
    c = (a - x) * math.sqrt(2.0 * ctx.beta)
    if c > _SUBSTITUTE_ABOVE:
        k = math.sqrt(2.0 * ctx.beta)

        def cofactor(root):
            r = k * root
            return (1.0 + np.exp(-2.0 * x * r)) / (1.0 + np.exp(-2.0 * a * r))

        return a * _decaying_integral(ctx, c, cofactor)
    return a * integrate_exp_weight(lambda s: cosh_ratio(x, a, _rate(ctx, s)), ctx.quad)


def discounted_hit_value_dx(ctx: HittingContext, x: float, a: float) -> float:
    """Derivative of :func:`discounted_hit_value` in the starting state,
    taken under the integral sign."""
    _check_domain(x, a)
    if a == 0:
        raise DomainError("the barrier must be positive")
    if x == 0:
        return 0.0
    c = (a - x) * math.sqrt(2.0 * ctx.beta)
    if c > _SUBSTITUTE_ABOVE:
        k = math.sqrt(2.0 * ctx.beta)

        def cofactor(root):
            r = k * root
            return r * (-np.expm1(-2.0 * x * r)) / (1.0 + np.exp(-2.0 * a * r))

        return a * _decaying_integral(ctx, c, cofactor)

    def integrand(s):
        r = _rate(ctx, s)
        return r * sinh_ratio(x, a, r)

    return a * integrate_exp_weight(integrand, ctx.quad)


def boundary_slope(ctx: HittingContext, a: float) -> float:
    """Slope of :func:`discounted_hit_value` at ``x = a``:
    ``a int e^{-s} r tanh(a r) ds``. Zero at ``a = 0``, increasing in ``a``;
    it equals 1 exactly at the largest equilibrium threshold."""
    if a < 0:
        raise DomainError("a must be nonnegative")
    if a == 0:
        return 0.0
    k = math.sqrt(2.0 * ctx.beta)
    c = 2.0 * a * k
    if c > _SUBSTITUTE_ABOVE:
        # tanh = 1 - 2 e^{-2ar} / (1 + e^{-2ar}); int e^{-s} r ds = k sqrt(pi) / 2
        def cofactor(root):
            r = k * root
            return 2.0 * r / (1.0 + np.exp(-2.0 * a * r))

        return a * (k * math.sqrt(math.pi) / 2.0 - _decaying_integral(ctx, c, cofactor))

    def integrand(s):
        r = _rate(ctx, s)
        return r * np.tanh(a * r)

    return a * integrate_exp_weight(integrand, ctx.quad)
