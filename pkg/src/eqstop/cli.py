"""Command-line interface.

Subcommands:

    constants   thresholds and delays of the closed-form examples
    iterate     improve a starting policy until it is an equilibrium
    boundary    samples of the naive free boundary
    classify    stop / continue / indifferent labels on a state grid
    validate    simulation and grid cross-checks
    smoking     quit times of the habit example

Settings come from built-in defaults, then an optional JSON file
(``--config``), then flags. ``EQSTOP_SEED`` overrides the seed.

Exit codes: 0 success, 1 usage or configuration error, 2 no convergence,
3 a validation check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import bessel, smoking
from .discounting import DiscountFunction
from .engine import abs_payoff, classify_grid, default_grid, iterate_policy
from .errors import ConfigError, EqStopError, InvalidBeta, NonConvergence
from .hitting import boundary_slope, discounted_hit_value
from .models import DiffusionModel
from .montecarlo import MonteCarloSpec
from .numerics import QuadratureSpec, RootSpec
from .policies import ThresholdPolicy
from .validation import run_validation

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_CHECK_FAILED = 0, 1, 2, 3
SEED_ENV = "EQSTOP_SEED"


@dataclass
class RunConfig:
    """Every setting a command can use. Fields left as None take a
    beta-dependent default when the config is resolved."""

    command: str = "constants"
    beta: float = 1.0
    discount: str = "hyperbolic"
    rho: float = 1.0
    delta0: float = 0.7
    model: str = "bessel"
    engine: str = "analytic"
    method: str = "auto"
    start_threshold: float | None = None
    grid_n: int = 2001
    grid_max: float | None = None
    n_paths: int = 100_000
    dt: float | None = None
    horizon: float | None = None
    seed: int = 20161027
    bridge: bool = True
    max_steps: int = 20
    node_count: int = 64
    x_tol: float = 1e-10
    t: float = 0.0
    s_max: float = 15.0
    n_samples: int = 151
    smoking_horizon: float = 10.0
    out: str | None = None
    format: str = "json"

    def resolved(self) -> "RunConfig":
        if not (isinstance(self.beta, (int, float)) and self.beta > 0):
            raise InvalidBeta(f"beta must be positive, got {self.beta}")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"unknown format {self.format!r}")
        cfg = RunConfig(**asdict(self))
        cfg.dt = cfg.dt if cfg.dt is not None else 1e-3 / cfg.beta
        cfg.horizon = cfg.horizon if cfg.horizon is not None else 200.0 / cfg.beta
        cfg.grid_max = cfg.grid_max if cfg.grid_max is not None else 4.0 / math.sqrt(cfg.beta)
        return cfg

    def problem(self) -> bessel.BesselProblem:
        return bessel.BesselProblem(self.beta, QuadratureSpec(node_count=self.node_count),
                                    RootSpec(0.0, 1.0, x_tol=self.x_tol))

    def monte_carlo(self) -> MonteCarloSpec:
        return MonteCarloSpec(n_paths=self.n_paths, dt=self.dt, horizon=self.horizon,
                              master_seed=self.seed, bridge_correction=self.bridge)

    def discount_function(self) -> DiscountFunction:
        if self.discount == "hyperbolic":
            return DiscountFunction.hyperbolic(self.beta)
        if self.discount == "exponential":
            return DiscountFunction.exponential(self.rho)
        if self.discount == "quasi_hyperbolic":
            return DiscountFunction.quasi_hyperbolic(self.delta0, self.rho)
        raise ConfigError(f"unknown discount family {self.discount!r}")

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.grid_max, self.grid_n)


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("the config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def build_config(args: argparse.Namespace) -> RunConfig:
    values = load_config(args.config) if args.config else {}
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    values["command"] = args.command
    env_seed = os.environ.get(SEED_ENV)
    if env_seed:
        try:
            values["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    try:
        return RunConfig(**values).resolved()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".12g")
    if v is None:
        return ""
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_clean(obj.item())
    return obj


def json_text(obj) -> str:
    return json.dumps(_json_clean(obj), indent=2, sort_keys=True) + "\n"


def emit(cfg: RunConfig, name: str, text: str, stream=None) -> None:
    """Print ``text``; also write it to ``<out>/<name>`` when ``--out`` is set."""
    (stream or sys.stdout).write(text)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def write_only(cfg: RunConfig, name: str, text: str) -> None:
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def emit_records(cfg: RunConfig, name: str, header, rows, payload) -> None:
    if cfg.format == "csv":
        emit(cfg, f"{name}.csv", csv_text(header, rows))
    else:
        emit(cfg, f"{name}.json", json_text(payload))


# ---------------------------------------------------------------------------
# commands


def cmd_constants(cfg: RunConfig) -> int:
    p = cfg.problem()
    ctx = p.context
    a_star = bessel.largest_equilibrium_threshold(p)
    naive = bessel.naive_threshold(p)
    x_star = bessel.crossing_threshold(p, naive)
    delay = smoking.delay_threshold()

    values = {
        "beta": cfg.beta,
        "a_star": a_star,
        "naive_threshold": naive,
        "x_star_of_naive": x_star,
        "smoking_delay": delay,
        "slope_at_naive": boundary_slope(ctx, naive),
        "residual_a_star": abs(boundary_slope(ctx, a_star) - 1.0),
        "residual_x_star": abs(discounted_hit_value(ctx, x_star, naive) - x_star),
        "residual_smoking_delay": abs(math.exp(delay / 2) - 1 - delay),
        "x_tol": cfg.x_tol,
    }
    emit_records(cfg, "constants", ["name", "value"], list(values.items()), values)
    return EXIT_OK


def _start(cfg: RunConfig) -> float:
    return cfg.start_threshold if cfg.start_threshold is not None else 1.0 / math.sqrt(cfg.beta)


def cmd_iterate(cfg: RunConfig) -> int:
    if cfg.model == "smoking":
        trace = smoking.smoking_iterate(cfg.smoking_horizon, max_steps=cfg.max_steps)
        rows = [(k, s) for k, s in enumerate(trace.to_dict()["switch_times"])]
        write_only(cfg, "trace.json", json_text(trace.to_dict()))
        emit_records(cfg, "boundaries", ["step", "switch_time"], rows, trace.to_dict())
        return EXIT_OK
    if cfg.model != "bessel":
        raise ConfigError(f"unknown model {cfg.model!r}")
    start = _start(cfg)
    if cfg.engine == "analytic":
        report = bessel.iterate_to_equilibrium(cfg.problem(), start)
        payload = report.to_dict()
        rows = list(enumerate(report.thresholds))
    elif cfg.engine == "grid":
        trace = iterate_policy(DiffusionModel.brownian(), cfg.discount_function(), abs_payoff,
                               ThresholdPolicy.threshold(start), cfg.grid(), cfg.monte_carlo(),
                               max_steps=cfg.max_steps, method=cfg.method)
        payload = trace.to_dict()
        # the last step only confirms the fixed point
        rows = list(enumerate(trace.boundaries()[:-1]))
        if cfg.out:
            Path(cfg.out).mkdir(parents=True, exist_ok=True)
            trace.write_labels_csv(Path(cfg.out) / "labels.csv")
    else:
        raise ConfigError(f"unknown engine {cfg.engine!r}")
    write_only(cfg, "trace.json", json_text(payload))
    emit_records(cfg, "boundaries", ["step", "boundary"], rows, payload)
    return EXIT_OK


def cmd_boundary(cfg: RunConfig) -> int:
    rows = bessel.boundary_samples(cfg.problem(), cfg.t, cfg.s_max, cfg.n_samples)
    emit_records(cfg, "boundary", ["s", "boundary"], rows,
                 {"beta": cfg.beta, "t": cfg.t, "s": [r[0] for r in rows], "boundary": [r[1] for r in rows]})
    return EXIT_OK


def cmd_classify(cfg: RunConfig) -> int:
    policy = ThresholdPolicy.threshold(_start(cfg))
    cls = classify_grid(DiffusionModel.brownian(), cfg.discount_function(), abs_payoff, policy,
                        cfg.grid(), cfg.monte_carlo(), method=cfg.method)
    emit_records(cfg, "labels", ["x", "label", "g", "J_hat", "stderr"], cls.rows(), cls.to_dict())
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    checks = run_validation(cfg.beta, cfg.monte_carlo(), cfg.grid_n)
    passed = all(c.passed for c in checks)
    payload = {"passed": passed, "monte_carlo": cfg.monte_carlo().to_dict(),
               "checks": [c.to_dict() for c in checks]}
    header = ["name", "passed", "measured", "reference", "discrepancy", "tolerance", "note"]
    rows = [(c.name, c.passed, c.measured, c.reference, c.discrepancy, c.tolerance, c.note) for c in checks]
    emit_records(cfg, "validation", header, rows, payload)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_smoking(cfg: RunConfig) -> int:
    T = cfg.smoking_horizon
    times = np.linspace(0.0, T, cfg.n_samples)
    rows = [(float(t), smoking.naive_quit_time(T, t), smoking.improved_quit_time(T, t)) for t in times]
    trace = smoking.smoking_iterate(T, max_steps=cfg.max_steps)
    payload = {"horizon": T, "delay": smoking.delay_threshold(), "switch_time": T - smoking.delay_threshold(),
               "trace": trace.to_dict(), "t": [r[0] for r in rows],
               "naive": [r[1] for r in rows], "improved": [r[2] for r in rows]}
    emit_records(cfg, "smoking", ["t", "naive", "improved"], rows, payload)
    return EXIT_OK


COMMANDS = {
    "constants": cmd_constants,
    "iterate": cmd_iterate,
    "boundary": cmd_boundary,
    "classify": cmd_classify,
    "validate": cmd_validate,
    "smoking": cmd_smoking,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with settings; flags override it")
    common.add_argument("--beta", type=float, help="hyperbolic discount rate (default 1)")
    common.add_argument("--discount", choices=["hyperbolic", "exponential", "quasi_hyperbolic"])
    common.add_argument("--rho", type=float, help="exponential rate for exponential families")
    common.add_argument("--delta0", type=float, help="immediate factor of the quasi-hyperbolic family")
    common.add_argument("--start-threshold", dest="start_threshold", type=float,
                        help="threshold of the starting policy (default 1/sqrt(beta))")
    common.add_argument("--grid-n", dest="grid_n", type=int, help="number of grid states")
    common.add_argument("--grid-max", dest="grid_max", type=float, help="largest grid state")
    common.add_argument("--method", choices=["auto", "fd", "mc"], help="continuation value route")
    common.add_argument("--n-paths", dest="n_paths", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--horizon", type=float, help="simulation horizon")
    common.add_argument("--seed", type=int)
    common.add_argument("--bridge", dest="bridge", action="store_const", const=True,
                        help="Brownian-bridge crossing correction (default on)")
    common.add_argument("--no-bridge", dest="bridge", action="store_const", const=False)
    common.add_argument("--max-steps", dest="max_steps", type=int)
    common.add_argument("--out", help="directory for output files")
    common.add_argument("--format", choices=["json", "csv"])

    parser = _Parser(prog="eqstop", description="Equilibrium stopping under non-exponential discounting")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("constants", parents=[common], help="closed-form thresholds and delays")
    it = sub.add_parser("iterate", parents=[common], help="iterate the improvement step")
    it.add_argument("--model", choices=["bessel", "smoking"])
    it.add_argument("--engine", choices=["analytic", "grid"])
    it.add_argument("--smoking-horizon", dest="smoking_horizon", type=float)
    bd = sub.add_parser("boundary", parents=[common], help="naive free boundary samples")
    bd.add_argument("--t", type=float, help="time the problem is posed")
    bd.add_argument("--s-max", dest="s_max", type=float)
    bd.add_argument("--n-samples", dest="n_samples", type=int)
    sub.add_parser("classify", parents=[common], help="label grid states S / C / I")
    sub.add_parser("validate", parents=[common], help="simulation and grid cross-checks")
    sm = sub.add_parser("smoking", parents=[common], help="quit times of the habit example")
    sm.add_argument("--smoking-horizon", dest="smoking_horizon", type=float)
    sm.add_argument("--n-samples", dest="n_samples", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[cfg.command](cfg)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigError, InvalidBeta) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EqStopError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
