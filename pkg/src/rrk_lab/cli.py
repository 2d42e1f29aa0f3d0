"""Command-line experiment runner.

Every subcommand reproduces one experiment with built-in default parameters
(printed by ``--show-defaults``). Values come from, in increasing priority:
the experiment defaults, a JSON ``--config`` file, and command-line flags.
Each run writes a CSV table and a JSON summary next to it.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import difflib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from . import analysis
from .errors import ConfigError, NumericalError, RRKError
from .integrators import Scheme, integrate
from .problems import PROBLEMS, get_problem
from .tableaux import method_names, registry_get

__all__ = ["ExperimentSpec", "ExperimentReport", "DEFAULTS", "parse_config", "run", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

EXPERIMENTS = ("integrate", "converge", "errgrowth", "poincare", "volume", "kdv",
               "solar", "argon", "lemma-a2", "gamma-asymptotic")


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    problem: str | None = None
    method: str | None = None
    scheme: str = "relaxation"
    invariant: str | None = "energy"
    dt: float | None = None
    t_end: float | None = None
    seed: int = analysis.DEFAULT_SEED
    output_path: str | None = None
    dts: tuple[float, ...] | None = None
    gamma_mode: str = "root"
    samples: int | None = None
    plane_coord: int = 0
    plane_value: float = 0.0
    record_coords: tuple[int, int] = (1, 3)
    direction: str = "positive"
    refine: str = "restep"
    n_points: int = 200
    radius: float = 1e-3
    sample_stride: int = 1
    grid: int | None = None
    max_s: int = 12

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


SPEC_KEYS = tuple(f.name for f in dataclasses.fields(ExperimentSpec))

# Common alternative spellings, used to suggest the right key.
ALIASES = {
    "stepsize": "dt", "step_size": "dt", "h": "dt", "timestep": "dt", "time_step": "dt",
    "tend": "t_end", "t_final": "t_end", "tfinal": "t_end", "final_time": "t_end",
    "output": "output_path", "out": "output_path", "tableau": "method", "rk": "method",
    "hamiltonian": "invariant", "rng_seed": "seed", "N": "grid", "n": "grid",
}

_COMMON = dict(scheme="relaxation", invariant="energy")

# Default parameter set per experiment.
DEFAULTS: dict[str, dict[str, Any]] = {
    "integrate": dict(_COMMON, problem="duffing", method="rk44", dt=0.5, t_end=500.0),
    "converge": dict(_COMMON, problem="harmonic", method="heun3", t_end=10.0,
                     dts=(0.4, 0.2, 0.1, 0.05, 0.025)),
    "errgrowth": dict(_COMMON, problem="nonlinear-oscillator", method="heun3", dt=0.025,
                      t_end=2000.0, samples=400),
    "poincare": dict(_COMMON, problem="henon-heiles", method="ssprk33", dt=0.1, t_end=2000.0,
                     plane_coord=0, plane_value=0.0, record_coords=(1, 3),
                     direction="positive", refine="restep"),
    "volume": dict(_COMMON, problem="harmonic", method="rk44", dt=0.25, t_end=200.0,
                   n_points=200, radius=1e-3, sample_stride=1),
    "kdv": dict(_COMMON, problem="kdv", method="norsett23", dt=0.5, t_end=200.0, grid=128),
    "solar": dict(_COMMON, problem="solar", method="ssprk22", dt=200.0, t_end=20000.0),
    "argon": dict(_COMMON, problem="argon", method="rk44", dt=1e-4, t_end=0.2),
    "lemma-a2": dict(max_s=12),
    "gamma-asymptotic": dict(method="heun3", problem="harmonic",
                             dts=(0.2, 0.1, 0.05, 0.025, 0.0125)),
}


@dataclass
class ExperimentReport:
    """Result of one experiment: a column table plus summary scalars."""

    spec: ExperimentSpec
    columns: list[str]
    rows: list[Sequence[Any]]
    summary: dict[str, Any] = field(default_factory=dict)
    fits: dict[str, dict[str, Any]] = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = __version__


# ---------------------------------------------------------------------------
# Configuration


def _suggest(key: str) -> str | None:
    if key in ALIASES:
        return ALIASES[key]
    norm = key.replace("-", "_")
    if norm in SPEC_KEYS:
        return norm
    close = difflib.get_close_matches(norm, SPEC_KEYS, n=1)
    return close[0] if close else None


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        return None
    try:
        if key in ("dt", "t_end", "plane_value", "radius"):
            return float(value)
        if key in ("seed", "samples", "plane_coord", "n_points", "sample_stride", "grid",
                   "max_s"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if key == "dts":
            if isinstance(value, str):
                value = value.split(",")
            return tuple(float(x) for x in value)
        if key == "record_coords":
            if isinstance(value, str):
                value = value.split(",")
            pair = tuple(int(x) for x in value)
            if len(pair) != 2:
                raise ValueError(value)
            return pair
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} for {key!r}", key=key) from None
    return str(value)


def _validate(spec: ExperimentSpec) -> None:
    if spec.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {spec.experiment!r}", key="experiment")
    if spec.experiment == "lemma-a2":
        if spec.max_s < 1:
            raise ConfigError("max_s must be >= 1", key="max_s")
        return
    if spec.method is not None:
        registry_get(spec.method)
    if spec.experiment == "gamma-asymptotic":
        return
    if spec.problem not in PROBLEMS:
        raise ConfigError(
            f"unknown problem {spec.problem!r}; choose from {', '.join(PROBLEMS)}", key="problem")
    try:
        scheme = Scheme(spec.scheme)
    except ValueError:
        raise ConfigError(
            f"unknown scheme {spec.scheme!r}; choose from "
            f"{', '.join(s.value for s in Scheme)}", key="scheme") from None
    for key in ("dt", "t_end", "radius"):
        v = getattr(spec, key)
        if v is not None and not (math.isfinite(v) and v > 0):
            raise ConfigError(f"{key} must be positive", key=key)
    if spec.gamma_mode not in ("root", "quadratic"):
        raise ConfigError("gamma_mode must be 'root' or 'quadratic'", key="gamma_mode")
    if spec.direction not in ("positive", "negative", "both"):
        raise ConfigError("direction must be positive, negative or both", key="direction")
    if spec.refine not in ("restep", "hermite"):
        raise ConfigError("refine must be 'restep' or 'hermite'", key="refine")
    if scheme is not Scheme.SYMPLECTIC_EULER and spec.method is None:
        raise ConfigError(f"scheme {scheme.value} needs --method", key="method")
    if scheme in (Scheme.RELAXATION, Scheme.PROJECTION) or scheme is Scheme.SYMPLECTIC_EULER:
        problem = _build_problem(spec)
        if scheme is Scheme.SYMPLECTIC_EULER:
            if problem.partition is None:
                raise ConfigError(
                    f"scheme symplectic-euler needs a partitioned problem; "
                    f"{spec.problem!r} has none", key="scheme")
        else:
            if spec.invariant is None:
                raise ConfigError(f"scheme {scheme.value} needs --invariant", key="invariant")
            problem.invariant(spec.invariant)


def parse_config(experiment: str, config: dict[str, Any] | str | Path | None = None,
                 flags: dict[str, Any] | None = None) -> ExperimentSpec:
    """Merge defaults, a config file (path or mapping) and flags into a spec.

    Flags override file values, which override the experiment defaults.
    Unknown keys raise :class:`ConfigError` naming the key and a suggestion.
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}", key="experiment")
    if isinstance(config, (str, Path)):
        path = Path(config)
        text = path.read_text()
        try:
            config = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {str(path)!r} is not valid JSON: {exc}",
                              key="config") from None
        if not isinstance(config, dict):
            raise ConfigError("config file must contain a JSON object", key="config")
    config = dict(config or {})
    values: dict[str, Any] = dict(DEFAULTS[experiment])
    for source in (config, flags or {}):
        for key, value in source.items():
            if key == "experiment":
                if value != experiment:
                    raise ConfigError(
                        f"config is for experiment {value!r}, not {experiment!r}", key=key)
                continue
            if key not in SPEC_KEYS:
                hint = _suggest(key)
                msg = f"unknown configuration key {key!r}"
                if hint:
                    msg += f"; did you mean {hint!r}?"
                raise ConfigError(msg, key=key)
            if value is None and source is flags:
                continue
            values[key] = _coerce(key, value)
    spec = ExperimentSpec(experiment=experiment, **values)
    _validate(spec)
    return spec


# ---------------------------------------------------------------------------
# Experiments


def _build_problem(spec: ExperimentSpec):
    if spec.problem == "kdv" and spec.grid is not None:
        return get_problem("kdv", N=spec.grid)
    return get_problem(spec.problem)


def _tableau(spec: ExperimentSpec):
    return None if spec.scheme == "symplectic-euler" else registry_get(spec.method)


def _fit_dict(fit, window) -> dict[str, Any]:
    return {"slope": fit.slope, "r_squared": fit.r_squared, "window": list(window)}


def _drift(series: np.ndarray, scale: float) -> float:
    return float(np.max(np.abs(series - series[0])) / scale) if scale > 0 else math.nan


def _trajectory_table(traj, problem, state_columns: bool = True):
    names = list(traj.invariant_series)
    cols = ["time", "gamma"] + names
    if state_columns:
        cols += [f"u{i}" for i in range(problem.dim)]
    gam = np.concatenate([[math.nan], traj.gammas])
    rows = []
    for k in range(len(traj.times)):
        row = [traj.times[k], gam[k]] + [traj.invariant_series[n][k] for n in names]
        if state_columns:
            row += list(traj.states[k])
        rows.append(row)
    return cols, rows


def _invariant_summary(traj) -> dict[str, Any]:
    """Largest deviation of each invariant, scaled by max(1, |H0|) and by |H0|.

    The second is omitted for invariants that start (numerically) at zero.
    """
    out: dict[str, Any] = {}
    for n, series in traj.invariant_series.items():
        h0 = abs(float(series[0]))
        out[f"max_drift_{n}"] = _drift(series, max(1.0, h0))
        if h0 > 1e-12:
            out[f"max_relative_drift_{n}"] = _drift(series, h0)
    return out


def _run_integrate(spec: ExperimentSpec) -> ExperimentReport:
    problem = _build_problem(spec)
    traj = integrate(problem, _tableau(spec), spec.scheme, t_end=spec.t_end, dt=spec.dt,
                     invariant=spec.invariant, gamma_mode=spec.gamma_mode)
    cols, rows = _trajectory_table(traj, problem, state_columns=problem.dim <= 64)
    summary = _invariant_summary(traj)
    summary.update(steps=len(traj.times) - 1, final_time=traj.final_time)
    return ExperimentReport(spec, cols, rows, summary)


def _run_converge(spec: ExperimentSpec) -> ExperimentReport:
    problem = _build_problem(spec)
    fit = analysis.convergence_order(problem, _tableau(spec), spec.scheme, spec.dts,
                                     spec.t_end, invariant=spec.invariant,
                                     gamma_mode=spec.gamma_mode)
    rows = [[fit.dts[i], fit.final_times[i], fit.errors[i], int(fit.window[i])]
            for i in range(len(fit.dts))]
    used = fit.dts[fit.window]
    window = [float(used.max()), float(used.min())] if len(used) else []
    return ExperimentReport(
        spec, ["dt", "final_time", "error", "in_window"], rows,
        {"slope": fit.slope, "observed_order": fit.observed_order},
        {"order": {"slope": fit.slope, "r_squared": fit.r_squared, "window": window}},
    )


def _sample_times(spec: ExperimentSpec, problem) -> np.ndarray:
    period = problem.metadata.get("period")
    if period:
        return period * np.arange(1, int(spec.t_end / period) + 1)
    n = spec.samples or 400
    return np.linspace(spec.t_end / n, spec.t_end, n)


def _run_errgrowth(spec: ExperimentSpec) -> ExperimentReport:
    problem = _build_problem(spec)
    g = analysis.error_growth_fit(problem, _tableau(spec), spec.scheme, spec.dt, spec.t_end,
                                  _sample_times(spec, problem), invariant=spec.invariant)
    rows = [[g.sample_times[i], g.trajectory_times[i], g.errors[i], int(g.used[i])]
            for i in range(len(g.sample_times))]
    return ExperimentReport(
        spec, ["time", "trajectory_time", "error", "in_window"], rows,
        {"exponent": g.exponent, "final_error": float(g.errors[-1])},
        {"growth": {"slope": g.exponent, "r_squared": g.r_squared, "window": list(g.window)}},
    )


def _run_poincare(spec: ExperimentSpec) -> ExperimentReport:
    problem = _build_problem(spec)
    tab = _tableau(spec)
    traj = integrate(problem, tab, spec.scheme, t_end=spec.t_end, dt=spec.dt,
                     invariant=spec.invariant, gamma_mode=spec.gamma_mode)
    stepper = None
    if spec.refine == "restep":
        stepper = analysis.make_stepper(problem, tab, spec.scheme, spec.invariant,
                                        spec.gamma_mode)
    pairs, states = analysis.poincare_section(
        traj, problem, spec.plane_coord, spec.plane_value, spec.record_coords,
        spec.direction, stepper=stepper, return_states=True)
    names = list(problem.invariants)
    i, j = spec.record_coords
    rows = [[pairs[k, 0], pairs[k, 1]] + [problem.invariants[n](states[k]) for n in names]
            for k in range(len(pairs))]
    summary: dict[str, Any] = {"crossings": len(pairs)}
    for n in names:
        h0 = problem.invariants[n](problem.u0)
        vals = [abs(r[2 + names.index(n)] - h0) for r in rows]
        summary[f"max_abs_deviation_{n}"] = max(vals) if vals else 0.0
    return ExperimentReport(spec, [f"u{i}", f"u{j}"] + names, rows, summary)


def _run_volume(spec: ExperimentSpec) -> ExperimentReport:
    problem = _build_problem(spec)
    cloud = analysis.disk_cloud(problem.u0, spec.radius, spec.n_points, spec.seed)
    vs = analysis.volume_series(problem, _tableau(spec), spec.scheme, cloud, spec.dt,
                                spec.t_end, spec.sample_stride, spec.invariant,
                                gamma_mode=spec.gamma_mode)
    rows = [[vs.times[k], vs.areas[k], vs.relative_change[k]] for k in range(len(vs.times))]
    window = [float(vs.times[0]), float(vs.times[-1])]
    return ExperimentReport(
        spec, ["time", "area", "relative_change"], rows,
        {"slope": vs.slope, "initial_area": float(vs.areas[0])},
        {"relative_area_change": _fit_dict(vs.fit, window)},
    )


def _run_kdv(spec: ExperimentSpec) -> ExperimentReport:
    problem = _build_problem(spec)
    traj = integrate(problem, _tableau(spec), spec.scheme, t_end=spec.t_end, dt=spec.dt,
                     invariant=spec.invariant, gamma_mode=spec.gamma_mode)
    ref = problem.analytic_solution
    errors = [problem.error_norm(traj.states[k] - ref(traj.times[k]))
              for k in range(len(traj.times))]
    cols, rows = _trajectory_table(traj, problem, state_columns=False)
    cols.append("error")
    for r, e in zip(rows, errors):
        r.append(e)
    summary = _invariant_summary(traj)
    summary.update(final_error=errors[-1], final_time=traj.final_time,
                   max_newton_iterations=int(traj.newton_iterations.max()))
    return ExperimentReport(spec, cols, rows, summary)


def _run_solar(spec: ExperimentSpec) -> ExperimentReport:
    problem = _build_problem(spec)
    traj = integrate(problem, _tableau(spec), spec.scheme, t_end=spec.t_end, dt=spec.dt,
                     invariant=spec.invariant, gamma_mode=spec.gamma_mode)
    names = problem.metadata["names"]
    dim = problem.metadata["space_dim"]
    cols, rows = _trajectory_table(traj, problem, state_columns=False)
    axes = "xyz"[:dim]
    cols += [f"{n}_{a}" for n in names for a in axes]
    for k, r in enumerate(rows):
        r.extend(traj.states[k, : len(names) * dim])
    summary = _invariant_summary(traj)
    return ExperimentReport(spec, cols, rows, summary)


def _run_argon(spec: ExperimentSpec) -> ExperimentReport:
    problem = _build_problem(spec)
    traj = integrate(problem, _tableau(spec), spec.scheme, t_end=spec.t_end, dt=spec.dt,
                     invariant=spec.invariant, gamma_mode=spec.gamma_mode)
    md = problem.metadata
    ts = analysis.temperature_series(traj, md["masses"], md["k_B"], md["space_dim"])
    cols, rows = _trajectory_table(traj, problem, state_columns=False)
    cols.append("temperature")
    for r, v in zip(rows, ts.values):
        r.append(v)
    summary = _invariant_summary(traj)
    summary.update(temperature_slope=ts.slope, mean_temperature=float(np.mean(ts.values)))
    window = [float(traj.times[0]), traj.final_time]
    return ExperimentReport(spec, cols, rows, summary,
                            {"temperature": _fit_dict(ts.fit, window)})


def _run_lemma(spec: ExperimentSpec) -> ExperimentReport:
    rows = []
    for s in range(1, spec.max_s + 1):
        for m in range(1, (s + 1) // 2 + 1):
            lhs, rhs, res = analysis.verify_lemma_a2(s, m)
            rows.append([s, m, lhs, rhs, res])
    all_zero = all(r[4] == 0 for r in rows)
    return ExperimentReport(spec, ["s", "m", "lhs", "rhs", "residual"], rows,
                            {"cases": len(rows), "all_residuals_zero": all_zero})


def _run_gamma(spec: ExperimentSpec) -> ExperimentReport:
    res = analysis.gamma_asymptotic_check(registry_get(spec.method), dts=spec.dts)
    rows = [[res.dts[i], res.gammas[i], res.gammas[i] - 1.0] for i in range(len(res.dts))]
    return ExperimentReport(
        spec, ["dt", "gamma", "gamma_minus_1"], rows,
        {"exponent": res.exponent, "constant": res.constant,
         "predicted_constant": res.predicted_constant,
         "relative_constant_error": res.relative_constant_error},
        {"gamma_minus_1": {"slope": res.exponent, "r_squared": None,
                           "window": [float(res.dts.max()), float(res.dts.min())]}},
    )


RUNNERS: dict[str, Callable[[ExperimentSpec], ExperimentReport]] = {
    "integrate": _run_integrate,
    "converge": _run_converge,
    "errgrowth": _run_errgrowth,
    "poincare": _run_poincare,
    "volume": _run_volume,
    "kdv": _run_kdv,
    "solar": _run_solar,
    "argon": _run_argon,
    "lemma-a2": _run_lemma,
    "gamma-asymptotic": _run_gamma,
}


def run(spec: ExperimentSpec) -> ExperimentReport:
    """Execute ``spec`` and return its report (nothing is written)."""
    t0 = time.perf_counter()
    report = RUNNERS[spec.experiment](spec)
    report.wall_time = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# Output


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_value(v: Any) -> Any:
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, Fraction):
        return str(v)
    return v


def default_output(spec: ExperimentSpec) -> Path:
    return Path(spec.output_path or f"{spec.experiment}.csv")


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def write_summary(path: Path, payload: dict[str, Any]) -> None:
    with open(path, "w") as fh:
        json.dump(_json_value(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def summary_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with experiment settings (flags override it)")
    p.add_argument("--show-defaults", action="store_true",
                   help="print the default settings of this experiment and exit")
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--method", help=f"Runge-Kutta method: {', '.join(method_names())}")
    p.add_argument("--scheme", choices=[s.value for s in Scheme])
    p.add_argument("--invariant", help="functional conserved by relaxation/projection")
    p.add_argument("--dt", type=float, help="nominal step size")
    p.add_argument("--t-end", dest="t_end", type=float, help="final time")
    p.add_argument("--seed", type=int, help="RNG seed for point clouds")
    p.add_argument("--output", dest="output_path",
                   help="CSV output path; the JSON summary uses the same stem")
    p.add_argument("--dts", help="comma-separated step sizes (converge, gamma-asymptotic)")
    p.add_argument("--gamma-mode", dest="gamma_mode", choices=["root", "quadratic"])
    p.add_argument("--samples", type=int, help="number of error samples (errgrowth)")
    p.add_argument("--plane-coord", dest="plane_coord", type=int)
    p.add_argument("--plane-value", dest="plane_value", type=float)
    p.add_argument("--record-coords", dest="record_coords", help="two comma-separated indices")
    p.add_argument("--direction", choices=["positive", "negative", "both"])
    p.add_argument("--refine", choices=["restep", "hermite"],
                   help="Poincare crossing refinement")
    p.add_argument("--n-points", dest="n_points", type=int, help="cloud size (volume)")
    p.add_argument("--radius", type=float, help="cloud radius (volume)")
    p.add_argument("--sample-stride", dest="sample_stride", type=int)
    p.add_argument("--grid", type=int, help="number of Fourier nodes (kdv)")
    p.add_argument("--max-s", dest="max_s", type=int, help="largest stage count (lemma-a2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrk-lab",
        description="Relaxation Runge-Kutta experiments. Exit codes: 0 ok, 2 config, "
                    "3 numerical failure, 4 I/O.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        defaults = ", ".join(f"{k}={_json_value(v)}" for k, v in DEFAULTS[name].items())
        p = sub.add_parser(name, help=f"defaults: {defaults}",
                           description=f"Defaults: {defaults}")
        _add_common(p)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    experiment = args.experiment
    if args.show_defaults:
        print(json.dumps(_json_value(DEFAULTS[experiment]), indent=2, sort_keys=True))
        return EXIT_OK
    flags = {k: v for k, v in vars(args).items()
             if k not in ("experiment", "config", "show_defaults") and v is not None}
    try:
        spec = parse_config(experiment, args.config, flags)
    except ConfigError as exc:
        print(f"rrk-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"rrk-lab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    out = default_output(spec)
    payload: dict[str, Any] = {"spec": spec.to_dict(), "version": __version__}
    t0 = time.perf_counter()
    try:
        report = run(spec)
    except NumericalError as exc:
        payload.update(status="numerical-failure", wall_time=time.perf_counter() - t0,
                       error={"type": type(exc).__name__, "message": str(exc),
                              "step_index": exc.step_index,
                              "point_index": getattr(exc, "point_index", None)})
        print(f"rrk-lab: numerical failure ({type(exc).__name__}) at step "
              f"{exc.step_index}: {exc}", file=sys.stderr)
        try:
            write_summary(summary_path(out), payload)
        except OSError:
            pass
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"rrk-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RRKError) as exc:
        if isinstance(exc, OSError):
            print(f"rrk-lab: I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"rrk-lab: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    payload.update(status="ok", columns=report.columns, summary=report.summary,
                   fits=report.fits, wall_time=report.wall_time, csv=str(out))
    try:
        write_csv(out, report.columns, report.rows)
        write_summary(summary_path(out), payload)
    except OSError as exc:
        print(f"rrk-lab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if experiment == "lemma-a2" and report.summary["all_residuals_zero"]:
        print("all residuals zero")
    print(json.dumps(_json_value(report.summary), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
