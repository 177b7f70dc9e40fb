"""Discount functions and grid checks of the structural assumptions.

A discount function maps elapsed time to a weight in [0, 1] with weight 1 at
zero delay. Four families are supported: exponential ``exp(-rho s)``,
hyperbolic ``1 / (1 + beta s)``, quasi-hyperbolic ``delta0 exp(-rho s)`` for
``s > 0`` (and 1 at ``s = 0``), and arbitrary user callables.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import DivisionByZero, NegativeTime

FAMILIES = ("exponential", "hyperbolic", "quasi_hyperbolic", "custom")
CHECK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscountFunction:
    family: str
    params: Mapping[str, float] = field(default_factory=dict)
    func: Callable | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown discount family {self.family!r}")
        p = dict(self.params)
        if self.family == "exponential":
            if p.get("rho", -1.0) < 0:
                raise ValueError("exponential discounting needs rho >= 0")
        elif self.family == "hyperbolic":
            if not p.get("beta", 0.0) > 0:
                raise ValueError("hyperbolic discounting needs beta > 0")
        elif self.family == "quasi_hyperbolic":
            if not 0 < p.get("delta0", 0.0) <= 1 or p.get("rho", -1.0) < 0:
                raise ValueError("quasi-hyperbolic discounting needs 0 < delta0 <= 1 and rho >= 0")
            if p["delta0"] < 1:
                warnings.warn("quasi-hyperbolic discounting is discontinuous at s=0", stacklevel=3)
        elif self.func is None:
            raise ValueError("a custom discount function needs func")
        object.__setattr__(self, "params", p)

    @classmethod
    def exponential(cls, rho: float) -> "DiscountFunction":
        return cls("exponential", {"rho": float(rho)})

    @classmethod
    def hyperbolic(cls, beta: float = 1.0) -> "DiscountFunction":
        return cls("hyperbolic", {"beta": float(beta)})

    @classmethod
    def quasi_hyperbolic(cls, delta0: float, rho: float) -> "DiscountFunction":
        return cls("quasi_hyperbolic", {"delta0": float(delta0), "rho": float(rho)})

    @classmethod
    def custom(cls, func: Callable, **params: float) -> "DiscountFunction":
        return cls("custom", params, func)

    @property
    def discontinuous_at_zero(self) -> bool:
        return self.family == "quasi_hyperbolic" and self.params["delta0"] < 1

    def __call__(self, s):
        return evaluate(self, s)

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"DiscountFunction.{self.family}({args})"

    def __eq__(self, other):
        if not isinstance(other, DiscountFunction):
            return NotImplemented
        return (self.family, dict(self.params), self.func) == (other.family, dict(other.params), other.func)

    __hash__ = None

    def to_dict(self) -> dict[str, Any]:
        if self.family == "custom":
            raise ValueError("custom discount functions are not serializable")
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DiscountFunction":
        family = data.get("family")
        if family == "custom":
            raise ValueError("custom discount functions cannot be loaded from JSON")
        return cls(family, {k: float(v) for k, v in dict(data.get("params", {})).items()})


def evaluate(d: DiscountFunction, s):
    """Evaluate the discount weight at elapsed time(s) ``s >= 0``.

    Scalars in, float out; arrays in, array out.
    """
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0):
        raise NegativeTime(f"discount function evaluated at negative time {arr.min()!r}")
    p = d.params
    if d.family == "exponential":
        out = np.exp(-p["rho"] * arr)
    elif d.family == "hyperbolic":
        out = 1.0 / (1.0 + p["beta"] * arr)
    elif d.family == "quasi_hyperbolic":
        out = np.where(arr > 0, p["delta0"] * np.exp(-p["rho"] * arr), 1.0)
    else:
        out = np.asarray(d.func(arr), dtype=float)
        if out.shape != arr.shape:
            out = np.broadcast_to(out, arr.shape).copy()
        if np.any((out < 0) | (out > 1)) or not np.all(np.isfinite(out)):
            raise ValueError("custom discount function left [0, 1]")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SubadditivityReport:
    holds: bool
    worst_violation: float
    witness: tuple[float, float]
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ImpatienceReport:
    holds: bool
    min_increment: float
    witness: float
    flags: tuple[str, ...] = ()


def _flags(d):
    return ("discontinuous_at_zero",) if d.discontinuous_at_zero else ()


def check_log_subadditive(d: DiscountFunction, grid_max: float = 100.0,
                          grid_n: int = 500) -> SubadditivityReport:
    """Scan ``d(s) d(t) - d(s + t)`` over the square grid ``[0, grid_max]^2``.

    The assumption holds when the maximum is at most 1e-12.
    """
    if not grid_max > 0 or grid_n < 2:
        raise ValueError("need grid_max > 0 and grid_n >= 2")
    grid = np.linspace(0.0, grid_max, grid_n)
    ds = evaluate(d, grid)
    gap = np.outer(ds, ds) - evaluate(d, grid[:, None] + grid[None, :])
    i, j = np.unravel_index(np.argmax(gap), gap.shape)
    worst = float(gap[i, j])
    return SubadditivityReport(worst <= CHECK_TOL, worst, (float(grid[i]), float(grid[j])), _flags(d))


def check_decreasing_impatience(d: DiscountFunction, s: float = 1.0, grid_max: float = 100.0,
                                grid_n: int = 500) -> ImpatienceReport:
    """Check that ``t -> d(t + s) / d(t)`` strictly increases on ``[0, grid_max]``.

    Strictness means every successive difference exceeds 1e-12.

    Raises:
        DivisionByZero: if ``d`` vanishes somewhere on the grid.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    if not grid_max > 0 or grid_n < 2:
        raise ValueError("need grid_max > 0 and grid_n >= 2")
    t = np.linspace(0.0, grid_max, grid_n)
    base = evaluate(d, t)
    if np.any(base == 0):
        raise DivisionByZero(f"discount function vanishes at t={t[np.argmax(base == 0)]!r}")
    steps = np.diff(evaluate(d, t + s) / base)
    k = int(np.argmin(steps))
    return ImpatienceReport(bool(steps[k] > CHECK_TOL), float(steps[k]), float(t[k]), _flags(d))
