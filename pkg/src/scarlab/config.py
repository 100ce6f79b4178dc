"""Experiment configuration for the CLI driver.

A config file is one JSON object, validated completely before any
computation starts; a rejected config must never leave partial output.
Sections are plain dicts in the file and typed specs here. Every key is
checked: unknown keys are rejected so typos fail loudly instead of
silently picking up a default.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mps_engine import SchedulePhase
from .spin_core import ModelParams


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


_REQUIRED = object()

_BOOL = (bool,)
_INT = (int,)
_FLOAT = (int, float)  # ints are acceptable wherever floats are


def _get(section: dict, key: str, kinds, default=_REQUIRED, where: str = ""):
    if key not in section:
        if default is _REQUIRED:
            raise ConfigError(f"{where}.{key} is required")
        return default
    val = section[key]
    # bool is an int subclass; demand exact booleans where asked and
    # reject them where numbers are expected
    if kinds is _BOOL:
        if not isinstance(val, bool):
            raise ConfigError(f"{where}.{key} must be a boolean")
        return val
    if isinstance(val, bool) or not isinstance(val, kinds):
        want = "an integer" if kinds is _INT else "a number"
        raise ConfigError(f"{where}.{key} must be {want}, got {val!r}")
    if kinds is _FLOAT:
        val = float(val)
        if not math.isfinite(val):
            raise ConfigError(f"{where}.{key} must be finite")
    return val


def _reject_unknown(section: dict, allowed, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _subsection(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object")
    return sec


# ---------------------------------------------------------------------------
# per-command sections


@dataclass(frozen=True)
class GridSpec:
    """Space-time grid of the correlator: positions are offsets from x0."""

    x0: int
    positions: tuple
    times: tuple
    dt: float  # integrator step (mps method only)


@dataclass(frozen=True)
class MpsSpec:
    eps: float
    max_bond: Optional[int]
    krylov_tol: float
    mode: str  # direct | half_time
    schedule: Optional[tuple]  # SchedulePhase tuple, None -> default


@dataclass(frozen=True)
class AnalysisSpec:
    inputs: tuple
    omega: Optional[float]  # None -> derived from each sidecar (2h)
    z_candidates: tuple
    fit_window: tuple
    t_min: float
    front_threshold: float
    self_test: bool


@dataclass(frozen=True)
class VerifySpec:
    omega_override: Optional[float]  # fault injection: expected frequency


@dataclass(frozen=True)
class EthSpec:
    N: int
    site: int
    bin_width: float
    broadening: Optional[float]
    dense_cap: int


@dataclass(frozen=True)
class TraceSpec:
    """Infinite-temperature trace controls."""

    n_samples: int
    dense_cap: int


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    model: Optional[ModelParams]
    zeta: complex
    method: Optional[str]
    grid: Optional[GridSpec]
    mps: Optional[MpsSpec]
    analysis: Optional[AnalysisSpec]
    verify: Optional[VerifySpec]
    eth: Optional[EthSpec]
    trace: Optional[TraceSpec]
    seed: int
    raw: dict = field(repr=False)


# ---------------------------------------------------------------------------
# section parsers


def _parse_model(raw: dict) -> ModelParams:
    sec = _subsection(raw, "model")
    _reject_unknown(sec, {"J", "h", "D", "J3", "L", "boundary"}, "model")
    L = _get(sec, "L", _INT, where="model")
    boundary = sec.get("boundary", "open")
    if not isinstance(boundary, str):
        raise ConfigError("model.boundary must be a string")
    try:
        return ModelParams(
            J=_get(sec, "J", _FLOAT, 1.0, where="model"),
            h=_get(sec, "h", _FLOAT, 0.5, where="model"),
            D=_get(sec, "D", _FLOAT, 0.1, where="model"),
            J3=_get(sec, "J3", _FLOAT, 0.5, where="model"),
            L=L,
            boundary=boundary,
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def _parse_zeta(raw: dict) -> complex:
    sec = _subsection(raw, "zeta")
    _reject_unknown(sec, {"re", "im"}, "zeta")
    return complex(
        _get(sec, "re", _FLOAT, 0.0, where="zeta"),
        _get(sec, "im", _FLOAT, -1.0, where="zeta"),
    )


def _parse_grid(raw: dict, model: ModelParams) -> GridSpec:
    sec = _subsection(raw, "grid")
    _reject_unknown(
        sec, {"x0", "x_min", "x_max", "t_max", "n_times", "dt"}, "grid"
    )
    L = model.L
    x0 = _get(sec, "x0", _INT, L // 2, where="grid")
    if not 0 <= x0 < L:
        raise ConfigError(f"grid.x0 = {x0} outside the chain (L = {L})")
    x_min = _get(sec, "x_min", _INT, -x0, where="grid")
    x_max = _get(sec, "x_max", _INT, L - 1 - x0, where="grid")
    if x_min > x_max:
        raise ConfigError("grid.x_min exceeds grid.x_max")
    if x0 + x_min < 0 or x0 + x_max >= L:
        raise ConfigError(
            f"grid offsets [{x_min}, {x_max}] leave the chain (x0 = {x0}, L = {L})"
        )
    t_max = _get(sec, "t_max", _FLOAT, where="grid")
    if t_max <= 0:
        raise ConfigError("grid.t_max must be positive")
    n_times = _get(sec, "n_times", _INT, where="grid")
    if n_times < 2:
        raise ConfigError("grid.n_times must be at least 2")
    dt = _get(sec, "dt", _FLOAT, 0.1, where="grid")
    if dt <= 0:
        raise ConfigError("grid.dt must be positive")
    times = tuple(float(t) for t in np.linspace(0.0, t_max, n_times))
    return GridSpec(
        x0=x0,
        positions=tuple(range(x_min, x_max + 1)),
        times=times,
        dt=dt,
    )


def _parse_schedule(entries) -> tuple:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("mps.schedule must be a non-empty array of phases")
    phases = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"mps.schedule[{i}] must be an object")
        where = f"mps.schedule[{i}]"
        _reject_unknown(entry, {"method", "dt", "eps", "max_bond", "t_end"}, where)
        method = entry.get("method", "tdvp2")
        max_bond = entry.get("max_bond")
        if max_bond is not None:
            max_bond = _get(entry, "max_bond", _INT, where=where)
        try:
            phases.append(
                SchedulePhase(
                    method=method,
                    dt=_get(entry, "dt", _FLOAT, where=where),
                    eps=_get(entry, "eps", _FLOAT, 0.0, where=where),
                    max_bond=max_bond,
                    t_end=_get(entry, "t_end", _FLOAT, where=where),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return tuple(phases)


def _parse_mps(raw: dict) -> MpsSpec:
    sec = _subsection(raw, "mps")
    _reject_unknown(
        sec, {"eps", "max_bond", "krylov_tol", "mode", "schedule"}, "mps"
    )
    eps = _get(sec, "eps", _FLOAT, 1e-12, where="mps")
    if eps < 0:
        raise ConfigError("mps.eps must be non-negative")
    max_bond = sec.get("max_bond", 128)
    if max_bond is not None:
        max_bond = _get(sec, "max_bond", _INT, 128, where="mps")
        if max_bond < 1:
            raise ConfigError("mps.max_bond must be at least 1")
    krylov_tol = _get(sec, "krylov_tol", _FLOAT, 1e-12, where="mps")
    if krylov_tol <= 0:
        raise ConfigError("mps.krylov_tol must be positive")
    mode = sec.get("mode", "direct")
    if mode not in ("direct", "half_time"):
        raise ConfigError(f"mps.mode must be 'direct' or 'half_time', got {mode!r}")
    schedule = sec.get("schedule")
    if schedule is not None:
        schedule = _parse_schedule(schedule)
    return MpsSpec(
        eps=eps, max_bond=max_bond, krylov_tol=krylov_tol, mode=mode, schedule=schedule
    )


def _parse_analysis(raw: dict) -> AnalysisSpec:
    sec = _subsection(raw, "analysis")
    _reject_unknown(
        sec,
        {
            "inputs",
            "omega",
            "z_candidates",
            "fit_window",
            "t_min",
            "front_threshold",
            "self_test",
        },
        "analysis",
    )
    self_test = _get(sec, "self_test", _BOOL, False, where="analysis")
    inputs = sec.get("inputs", [])
    if not isinstance(inputs, list) or not all(isinstance(p, str) for p in inputs):
        raise ConfigError("analysis.inputs must be an array of file paths")
    if not self_test and not inputs:
        raise ConfigError("analysis.inputs is required unless self_test is on")
    omega = sec.get("omega")
    if omega is not None:
        omega = _get(sec, "omega", _FLOAT, where="analysis")
        if omega <= 0:
            raise ConfigError("analysis.omega must be positive")
    zs = sec.get("z_candidates", [1.0, 1.5, 2.0])
    if (
        not isinstance(zs, list)
        or not zs
        or not all(isinstance(z, (int, float)) and not isinstance(z, bool) for z in zs)
        or any(z <= 0 for z in zs)
    ):
        raise ConfigError("analysis.z_candidates must be an array of positive numbers")
    window = sec.get("fit_window", [2.0, None])
    if not isinstance(window, list) or len(window) != 2:
        raise ConfigError("analysis.fit_window must be [t_lo, t_hi] (t_hi may be null)")
    lo, hi = window
    if isinstance(lo, bool) or not isinstance(lo, (int, float)) or lo < 0:
        raise ConfigError("analysis.fit_window[0] must be a non-negative number")
    if hi is not None and (
        isinstance(hi, bool) or not isinstance(hi, (int, float)) or hi <= lo
    ):
        raise ConfigError("analysis.fit_window[1] must be null or exceed the lower end")
    t_min = _get(sec, "t_min", _FLOAT, 2.0, where="analysis")
    if t_min <= 0:
        raise ConfigError("analysis.t_min must be positive")
    thr = _get(sec, "front_threshold", _FLOAT, 0.02, where="analysis")
    if thr <= 0:
        raise ConfigError("analysis.front_threshold must be positive")
    return AnalysisSpec(
        inputs=tuple(inputs),
        omega=omega,
        z_candidates=tuple(float(z) for z in zs),
        fit_window=(float(lo), None if hi is None else float(hi)),
        t_min=t_min,
        front_threshold=thr,
        self_test=self_test,
    )


def _parse_verify(raw: dict) -> VerifySpec:
    sec = _subsection(raw, "verify")
    _reject_unknown(sec, {"omega_override"}, "verify")
    override = sec.get("omega_override")
    if override is not None:
        override = _get(sec, "omega_override", _FLOAT, where="verify")
    return VerifySpec(omega_override=override)


def _parse_eth(raw: dict, model: ModelParams) -> EthSpec:
    sec = _subsection(raw, "eth")
    _reject_unknown(sec, {"N", "site", "bin_width", "broadening", "dense_cap"}, "eth")
    N = _get(sec, "N", _INT, where="eth")
    if not 0 <= N < model.L:
        raise ConfigError(
            f"eth.N = {N} has no target sector (need 0 <= N < L = {model.L})"
        )
    site = _get(sec, "site", _INT, model.L // 2, where="eth")
    if not 0 <= site < model.L:
        raise ConfigError(f"eth.site = {site} outside the chain")
    bin_width = _get(sec, "bin_width", _FLOAT, 0.2, where="eth")
    if bin_width <= 0:
        raise ConfigError("eth.bin_width must be positive")
    broadening = sec.get("broadening")
    if broadening is not None:
        broadening = _get(sec, "broadening", _FLOAT, where="eth")
        if broadening <= 0:
            raise ConfigError("eth.broadening must be positive")
    dense_cap = _get(sec, "dense_cap", _INT, 20000, where="eth")
    if dense_cap < 1:
        raise ConfigError("eth.dense_cap must be positive")
    return EthSpec(
        N=N, site=site, bin_width=bin_width, broadening=broadening, dense_cap=dense_cap
    )


def _parse_trace(raw: dict) -> TraceSpec:
    sec = _subsection(raw, "trace")
    _reject_unknown(sec, {"n_samples", "dense_cap"}, "trace")
    n_samples = _get(sec, "n_samples", _INT, 16, where="trace")
    if n_samples < 1:
        raise ConfigError("trace.n_samples must be at least 1")
    dense_cap = _get(sec, "dense_cap", _INT, 20000, where="trace")
    if dense_cap < 1:
        raise ConfigError("trace.dense_cap must be positive")
    return TraceSpec(n_samples=n_samples, dense_cap=dense_cap)


# ---------------------------------------------------------------------------
# top level

_SECTIONS = {
    "verify": {"model", "zeta", "verify", "seed"},
    "autocorr": {"model", "zeta", "method", "grid", "mps", "trace", "seed"},
    "analyze": {"analysis", "seed"},
    "eth": {"model", "eth", "seed"},
}

_METHODS = ("ed", "mps", "infinite_temperature")


def parse_config(raw: dict, command: str) -> ExperimentConfig:
    """Validate a parsed JSON object for one subcommand."""
    if command not in _SECTIONS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, _SECTIONS[command], "config")

    seed = _get(raw, "seed", _INT, 0, where="config")
    if seed < 0:
        raise ConfigError("seed must be non-negative")

    model = zeta = method = grid = mps = analysis = verify = eth = trace = None
    if command in ("verify", "autocorr", "eth"):
        model = _parse_model(raw)
        zeta = _parse_zeta(raw)
    if command == "verify":
        verify = _parse_verify(raw)
    if command == "autocorr":
        method = raw.get("method")
        if method not in _METHODS:
            raise ConfigError(f"method must be one of {_METHODS}, got {method!r}")
        grid = _parse_grid(raw, model)
        mps = _parse_mps(raw)
        trace = _parse_trace(raw)
    if command == "analyze":
        analysis = _parse_analysis(raw)
    if command == "eth":
        eth = _parse_eth(raw, model)

    return ExperimentConfig(
        command=command,
        model=model,
        zeta=zeta if zeta is not None else complex(0.0, -1.0),
        method=method,
        grid=grid,
        mps=mps,
        analysis=analysis,
        verify=verify,
        eth=eth,
        trace=trace,
        seed=seed,
        raw=raw,
    )


def load_config(path, command: str) -> ExperimentConfig:
    """Read and validate a config file; all failures become ConfigError."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, command)
