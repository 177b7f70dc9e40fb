"""State dynamics: 1-D time-homogeneous SDEs dX = b(X) dt + sigma(X) dW and
the deterministic exponential cost path used in the smoking example."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


class _Constant:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def __repr__(self):
        return f"constant({self.value})"


class _Linear:
    def __init__(self, slope):
        self.slope = float(slope)

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float)

    def __repr__(self):
        return f"linear({self.slope})"


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    """Drift and volatility are vectorized callables of the state.

    ``kind="deterministic_exponential"`` describes ``X_s = x exp(rate (s - t))``
    on a finite ``horizon``; drift and volatility are then ``rate * x`` and 0.
    """

    drift: Callable = _zero
    vol: Callable = _Constant(1.0)
    kind: str = "sde"
    rate: float | None = None
    horizon: float | None = None

    def __post_init__(self):
        if self.kind not in ("sde", "deterministic_exponential"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "deterministic_exponential" and not (self.horizon and self.horizon > 0):
            raise ValueError("the deterministic model needs a positive horizon")

    @classmethod
    def brownian(cls, sigma: float = 1.0) -> "DiffusionModel":
        return cls(_zero, _Constant(sigma))

    @classmethod
    def smoking(cls, horizon: float, rate: float = 0.5) -> "DiffusionModel":
        return cls(_Linear(rate), _Constant(0.0), "deterministic_exponential", rate, horizon)

    @property
    def is_deterministic(self) -> bool:
        return self.kind == "deterministic_exponential"

    @property
    def constant_vol(self) -> float | None:
        return self.vol.value if isinstance(self.vol, _Constant) else None

    def lipschitz_ok(self, K: float, lo: float = -10.0, hi: float = 10.0, n_pairs: int = 1000,
                     seed: int = 0) -> bool:
        """Spot-check ``|b(x)-b(y)| + |sigma(x)-sigma(y)| <= K |x-y|`` on random pairs."""
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(lo, hi, (2, n_pairs))
        lhs = np.abs(self.drift(x) - self.drift(y)) + np.abs(self.vol(x) - self.vol(y))
        return bool(np.all(lhs <= K * np.abs(x - y) + 1e-12))

    def to_dict(self) -> dict:
        if self.is_deterministic:
            return {"kind": self.kind, "rate": self.rate, "horizon": self.horizon}
        return {"kind": self.kind, "drift": repr(self.drift), "vol": repr(self.vol)}
