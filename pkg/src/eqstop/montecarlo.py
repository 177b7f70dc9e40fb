"""Euler-Maruyama path simulation with first-entry detection into a
threshold policy's stop set, and Monte Carlo estimates of expected
discounted payoffs.

Random numbers come from counter-based Philox streams, one per block of
``chunk_size`` paths, keyed by ``(master_seed, block index)``. Blocks are
independent, so results do not depend on ``n_jobs``.
"""

from __future__ import annotations

import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .discounting import DiscountFunction
from .errors import HorizonTruncationWarning
from .models import DiffusionModel, _zero
from .policies import INF, ThresholdPolicy

# bridge probabilities below exp(-_BRIDGE_CUTOFF) are treated as zero
_BRIDGE_CUTOFF = 40.0
TRUNCATION_WARN = 1e-3


@dataclass(frozen=True)
class MonteCarloSpec:
    n_paths: int = 100_000
    dt: float = 1e-3
    horizon: float = 200.0
    master_seed: int = 20161027
    bridge_correction: bool = True
    chunk_size: int = 32768
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_paths < 100:
            raise ValueError("n_paths must be at least 100")
        if not 0 < self.dt <= self.horizon:
            raise ValueError("need 0 < dt <= horizon")
        if self.chunk_size < 1 or self.n_jobs < 1:
            raise ValueError("chunk_size and n_jobs must be positive")

    @classmethod
    def for_beta(cls, beta: float, **overrides) -> "MonteCarloSpec":
        """Defaults scaled to the hyperbolic rate: dt = 1e-3/beta, horizon = 200/beta."""
        return cls(**{"dt": 1e-3 / beta, "horizon": 200.0 / beta, **overrides})

    def derive(self, key: int) -> "MonteCarloSpec":
        """A spec with an independent seed for sub-task ``key``."""
        seed = np.random.SeedSequence(entropy=self.master_seed & (2**64 - 1), spawn_key=(int(key),))
        return replace(self, master_seed=int(seed.generate_state(1, np.uint64)[0]))

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon / self.dt - 1e-9))

    def blocks(self):
        for start in range(0, self.n_paths, self.chunk_size):
            yield start // self.chunk_size, min(self.chunk_size, self.n_paths - start)

    def rng(self, block: int) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.master_seed & (2**64 - 1), spawn_key=(block,))
        return np.random.Generator(np.random.Philox(seq))

    def to_dict(self) -> dict:
        return {"n_paths": self.n_paths, "dt": self.dt, "horizon": self.horizon,
                "master_seed": self.master_seed, "bridge_correction": self.bridge_correction}


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    std_error: float
    n_effective: int
    truncated_fraction: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error,
                "n_effective": self.n_effective, "truncated_fraction": self.truncated_fraction}


@dataclass(frozen=True)
class EntrySample:
    """Per-path stopping times, states at stopping and horizon flags."""

    times: np.ndarray
    values: np.ndarray
    truncated: np.ndarray


@dataclass(frozen=True)
class PathEnsemble:
    dt: float
    values: np.ndarray  # (n_paths, n_steps + 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.shape[1])


def bridge_crossing_probability(x_start, x_end, barrier, dt, sigma=1.0):
    """Probability that a Brownian bridge from ``x_start`` to ``x_end`` over
    a step of length ``dt`` touches ``barrier``. Vectorized."""
    x_start, x_end, barrier = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x_start, x_end, barrier)))
    gap = (barrier - x_start) * (barrier - x_end)
    with np.errstate(invalid="ignore", over="ignore"):
        p = np.where(gap <= 0, 1.0, np.exp(-2.0 * np.where(gap > 0, gap, 0.0) / (sigma * sigma * dt)))
    return float(p) if p.ndim == 0 else p


def bridge_crossed(x_start: float, x_end: float, barrier: float, dt: float, uniform_draw: float,
                   sigma: float = 1.0) -> bool:
    """Decide a bridge crossing from one uniform draw in (0, 1)."""
    return bool(uniform_draw < bridge_crossing_probability(x_start, x_end, barrier, dt, sigma))


def _barriers(policy: ThresholdPolicy, x: np.ndarray):
    """Signed barriers ``(lower, upper)`` enclosing each state's gap in X-space."""
    los = np.array([lo for lo, _ in policy.stop_set], dtype=float)
    his = np.array([hi for _, hi in policy.stop_set], dtype=float)
    r = np.abs(x)
    k = np.searchsorted(los, r, side="right")
    g_hi = np.where(k < len(los), los[np.minimum(k, len(los) - 1)] if len(los) else INF, INF)
    has_lo = k > 0
    g_lo = np.where(has_lo, his[np.maximum(k - 1, 0)] if len(his) else 0.0, 0.0)
    pos = x > 0
    lower = np.where(has_lo, np.where(pos, g_lo, -g_hi), -g_hi)
    upper = np.where(has_lo, np.where(pos, g_hi, -g_lo), g_hi)
    return lower, upper


class _Stepper:
    def __init__(self, model: DiffusionModel, spec: MonteCarloSpec):
        self.model = model
        self.dt = spec.dt
        self.sqdt = math.sqrt(spec.dt)
        self.no_drift = model.drift is _zero
        self.sigma = model.constant_vol

    def vol(self, x):
        return self.sigma if self.sigma is not None else self.model.vol(x)

    def step(self, x, z):
        out = x + self.vol(x) * self.sqdt * z
        if not self.no_drift:
            out += self.model.drift(x) * self.dt
        return out


def _entry_block(model, policy, x0, strict, spec, block, n):
    rng = spec.rng(block)
    stepper = _Stepper(model, spec)
    dt, n_steps = spec.dt, spec.n_steps
    times = np.empty(n)
    values = np.empty(n)
    truncated = np.zeros(n, dtype=bool)

    r0 = abs(x0)
    start_step = 0
    if policy.contains(r0):
        if not strict or policy.is_interior(r0):
            times[:] = 0.0
            values[:] = x0
            return times, values, truncated
        # On the edge of a stop interval with strict entry: take the first
        # step into the complement and count only returns after it.
        x = stepper.step(np.full(n, float(x0)), rng.standard_normal(n))
        side = policy.boundary_side(r0)
        sign = 1.0 if x0 >= 0 else -1.0
        if side == -1:
            x = sign * (r0 - np.abs(np.abs(x) - r0))
        elif side == 1:
            x = sign * (r0 + np.abs(np.abs(x) - r0))
        start_step = 1
        inside = policy.contains(x)
        times[inside] = dt
        values[inside] = x[inside]
        idx = np.flatnonzero(~inside)
        x = x[idx]
    else:
        idx = np.arange(n)
        x = np.full(n, float(x0))

    lower, upper = _barriers(policy, x)
    bridge = spec.bridge_correction
    for k in range(start_step, n_steps):
        if idx.size == 0:
            break
        x1 = stepper.step(x, rng.standard_normal(idx.size))
        up = x1 >= upper
        dn = x1 <= lower
        hit = up | dn
        t0 = k * dt
        if bridge:
            sig = stepper.vol(x)
            s2dt = (sig * sig) * dt
            with np.errstate(invalid="ignore", over="ignore"):
                e_up = 2.0 * (upper - x) * (upper - x1) / s2dt
                e_dn = 2.0 * (x - lower) * (x1 - lower) / s2dt
            cand = ~hit & ((e_up < _BRIDGE_CUTOFF) | (e_dn < _BRIDGE_CUTOFF))
            ci = np.flatnonzero(cand)
            level = np.where(up, upper, lower)
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(hit, (level - x) / (x1 - x), 1.0)
            if ci.size:
                p_up = np.exp(-e_up[ci])
                p_dn = np.exp(-e_dn[ci])
                p = 1.0 - (1.0 - p_up) * (1.0 - p_dn)
                u = rng.random(ci.size)
                crossed = u < p
                cc = ci[crossed]
                hit[cc] = True
                level[cc] = np.where(u[crossed] < p_up[crossed], upper[cc], lower[cc])
                frac[cc] = 0.5
            hi_idx = np.flatnonzero(hit)
            if hi_idx.size:
                gi = idx[hi_idx]
                times[gi] = t0 + np.clip(frac[hi_idx], 0.0, 1.0) * dt
                values[gi] = level[hi_idx]
        else:
            hi_idx = np.flatnonzero(hit)
            if hi_idx.size:
                gi = idx[hi_idx]
                times[gi] = t0 + dt
                values[gi] = x1[hi_idx]
        if hi_idx.size:
            keep = ~hit
            idx = idx[keep]
            x = x1[keep]
            lower = lower[keep]
            upper = upper[keep]
        else:
            x = x1
    if idx.size:
        times[idx] = n_steps * dt
        values[idx] = x
        truncated[idx] = True
    return times, values, truncated


def _run_blocks(fn, spec: MonteCarloSpec):
    blocks = list(spec.blocks())
    if spec.n_jobs > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(spec.n_jobs) as pool:
            return list(pool.map(lambda b: fn(*b), blocks))
    return [fn(*b) for b in blocks]


def simulate_entry(model: DiffusionModel, policy: ThresholdPolicy, x0: float, strict: bool,
                   spec: MonteCarloSpec) -> EntrySample:
    """Simulate the first time after 0 (``strict``) or from 0 on that ``|X|``
    enters the stop set.

    With the bridge correction, a crossing inside a step is detected from the
    Brownian-bridge crossing probability, the state at stopping is the
    barrier itself and the time is interpolated inside the step. Paths still
    running at the horizon are flagged as truncated.
    """
    parts = _run_blocks(lambda b, n: _entry_block(model, policy, float(x0), strict, spec, b, n), spec)
    return EntrySample(*(np.concatenate(p) for p in zip(*parts)))


def estimate_payoff(model: DiffusionModel, d: DiscountFunction, g: Callable, policy: ThresholdPolicy,
                    x0: float, strict: bool, spec: MonteCarloSpec) -> PayoffEstimate:
    """Monte Carlo estimate of ``E[d(T) g(X_T)]`` with T the (strict) first
    entry time. Truncated paths contribute ``d(horizon) g(X_horizon)``."""
    sample = simulate_entry(model, policy, x0, strict, spec)
    vals = np.asarray(d(sample.times), dtype=float) * np.asarray(g(sample.values), dtype=float)
    return _summarize(vals, sample.truncated)


def _summarize(vals, truncated):
    n = vals.size
    std = float(np.std(vals, ddof=1)) if n > 1 else 0.0
    frac = float(np.mean(truncated))
    if frac > TRUNCATION_WARN:
        warnings.warn(f"{frac:.2%} of paths reached the horizon without stopping",
                      HorizonTruncationWarning, stacklevel=3)
    if n and np.all(vals == vals[0]):
        # every path stopped with the same payoff, e.g. at time 0
        return PayoffEstimate(float(vals[0]), 0.0, n, frac)
    return PayoffEstimate(float(np.mean(vals)), std / math.sqrt(n), n, frac)


def simulate_paths(model: DiffusionModel, x0: float, spec: MonteCarloSpec,
                   max_values: int = 200_000_000) -> PathEnsemble:
    """Full Euler-Maruyama paths on ``[0, horizon]``. Meant for small
    ensembles; refuses to allocate more than ``max_values`` doubles."""
    n_steps = spec.n_steps
    if spec.n_paths * (n_steps + 1) > max_values:
        raise MemoryError(f"{spec.n_paths} x {n_steps + 1} path values exceed max_values={max_values}")

    def block(b, n):
        rng = spec.rng(b)
        stepper = _Stepper(model, spec)
        out = np.empty((n, n_steps + 1))
        out[:, 0] = x0
        for k in range(n_steps):
            out[:, k + 1] = stepper.step(out[:, k], rng.standard_normal(n))
        return out

    return PathEnsemble(spec.dt, np.concatenate(_run_blocks(block, spec)))


_HEADER = struct.Struct("<qqd")


def write_ensemble(path, ensemble: PathEnsemble) -> None:
    """Binary dump: little-endian header (n_paths int64, n_steps int64,
    dt float64) followed by row-major float64 values."""
    n_paths, n_cols = ensemble.values.shape
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(n_paths, n_cols - 1, ensemble.dt))
        fh.write(np.ascontiguousarray(ensemble.values, dtype="<f8").tobytes())


def read_ensemble(path) -> PathEnsemble:
    raw = Path(path).read_bytes()
    n_paths, n_steps, dt = _HEADER.unpack_from(raw)
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n_paths, n_steps + 1)
    return PathEnsemble(dt, values.copy())
