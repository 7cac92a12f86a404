"""Scenario sweeps over ``(scenario, delta, eta, observable)`` and reports.

Configuration files are INI-style: ``[section]`` headers followed by
``key = value`` lines.  Recognized sections::

    [model]       E0, tau
    [occupation]  kind = fermi | constant | step | table, beta, mu, value, x, y
    [sweep]       scenarios, deltas, etas, observables, dt, n_lead,
                  diagonalization_cap, current_samples, tail_fraction,
                  custom_site
    [scenarioN]   per-scenario overrides: etas, deltas, s_c, s_c_prime,
                  easing, ramp, v_peak, v_final, ramp_end
    [output]      path, workers, deterministic

Lists are comma separated.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .lattice import LatticeLayout, basis_vector, embed_bound_state
from .profiles import (
    DEFAULT_S_C,
    DEFAULT_S_C_PRIME,
    BiasProfile,
    FermiSpec,
    ScenarioKind,
    Side,
    evaluate,
    make_scenario,
)
from .propagation import (
    DEFAULT_TAIL_FRACTION,
    Observable,
    PropagatorConfig,
    adiabatic_expectation,
    bound_state_occupation,
    steady_current,
    tail_duration,
)
from .scattering import memory_term, steady_state_expectation
from .spectral import ModelParams, bound_state

__all__ = [
    "ExperimentConfig",
    "Cell",
    "SweepResult",
    "CSV_HEADER",
    "parse_config",
    "load_config",
    "run",
    "run_cell",
    "extrapolate",
    "report",
    "scenario_profile",
    "target_value",
]

CSV_HEADER = ["scenario", "delta", "eta", "observable", "value", "drift", "runtime_s"]
DEFAULT_ETAS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
DEFAULT_CROSSING_ETAS = (1e-2, 3e-3, 1e-3, 3e-4)
DEFAULT_DELTAS = (0.4, 0.2, 0.1, 0.05)
CUSTOM = "custom"


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _strictly_decreasing(values) -> bool:
    return all(a > b for a, b in zip(values[:-1], values[1:]))


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams = field(default_factory=ModelParams)
    fermi: FermiSpec = field(default_factory=FermiSpec.fermi_dirac)
    scenarios: tuple[int, ...] = (1, 2, 3)
    deltas: tuple[float, ...] = DEFAULT_DELTAS
    etas: tuple[float, ...] = DEFAULT_ETAS
    observables: tuple[str, ...] = (Observable.BOUND_OCCUPATION.value,)
    dt: float = 0.02
    n_lead: Optional[int] = None
    diagonalization_cap: int = 16384
    current_samples: int = 16
    tail_fraction: float = DEFAULT_TAIL_FRACTION
    custom_site: str = "dot"
    scenario_overrides: tuple = ()
    output: str = "results"
    workers: int = 1
    deterministic: bool = False

    def __post_init__(self):
        for kind in self.scenarios:
            ScenarioKind(kind)
        if not _strictly_decreasing(self.deltas):
            raise ValueError("delta list must be strictly decreasing")
        if not _strictly_decreasing(self.etas):
            raise ValueError("eta list must be strictly decreasing")
        for name in self.observables:
            if name != CUSTOM:
                Observable(name)
        for kind, over in self.scenario_overrides:
            over = dict(over)
            if "etas" in over and not _strictly_decreasing(_floats(over["etas"])):
                raise ValueError(f"eta list of scenario {kind} must be strictly decreasing")
            if "deltas" in over and not _strictly_decreasing(_floats(over["deltas"])):
                raise ValueError(f"delta list of scenario {kind} must be strictly decreasing")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def overrides(self, kind: int) -> dict:
        for k, over in self.scenario_overrides:
            if k == kind:
                return dict(over)
        return {}

    def etas_for(self, kind: int) -> tuple[float, ...]:
        over = self.overrides(kind)
        return _floats(over["etas"]) if "etas" in over else self.etas

    def deltas_for(self, kind: int) -> tuple[float, ...]:
        if kind == ScenarioKind.SMOOTH_NO_CROSSING:
            return (0.0,)
        over = self.overrides(kind)
        return _floats(over["deltas"]) if "deltas" in over else self.deltas

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def default_config() -> ExperimentConfig:
    """Reference sweep: three scenarios, crossing runs reaching ``eta = 3e-4``."""
    crossing = {"etas": ", ".join(repr(e) for e in DEFAULT_CROSSING_ETAS)}
    return ExperimentConfig(scenario_overrides=((2, crossing), (3, crossing)))


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string(text)
    base = default_config()
    kw: dict = {}
    if parser.has_section("model"):
        sec = parser["model"]
        kw["params"] = ModelParams(float(sec.get("E0", 10.0)), float(sec.get("tau", 0.1)))
    if parser.has_section("occupation"):
        kw["fermi"] = FermiSpec.from_config(dict(parser["occupation"]))
    if parser.has_section("sweep"):
        sec = parser["sweep"]
        if "scenarios" in sec:
            kw["scenarios"] = tuple(int(t) for t in _floats(sec["scenarios"]))
        if "deltas" in sec:
            kw["deltas"] = _floats(sec["deltas"])
        if "etas" in sec:
            kw["etas"] = _floats(sec["etas"])
        if "observables" in sec:
            kw["observables"] = tuple(t.strip() for t in sec["observables"].split(",") if t.strip())
        for key, conv in (("dt", float), ("n_lead", int), ("diagonalization_cap", int),
                          ("current_samples", int), ("tail_fraction", float), ("custom_site", str)):
            if key in sec:
                kw[key] = conv(sec[key])
    overrides = dict(base.scenario_overrides)
    for kind in (1, 2, 3):
        name = f"scenario{kind}"
        if parser.has_section(name):
            overrides[kind] = {**overrides.get(kind, {}), **dict(parser[name])}
    if "etas" in kw:
        # an explicit global list replaces the built-in crossing lists
        for kind in (2, 3):
            if kind in overrides and not (parser.has_section(f"scenario{kind}")
                                          and "etas" in parser[f"scenario{kind}"]):
                overrides[kind] = {k: v for k, v in overrides[kind].items() if k != "etas"}
    kw["scenario_overrides"] = tuple(sorted((k, tuple(sorted(v.items()))) for k, v in overrides.items()))
    if parser.has_section("output"):
        sec = parser["output"]
        if "path" in sec:
            kw["output"] = sec["path"]
        if "workers" in sec:
            kw["workers"] = int(sec["workers"])
        if "deterministic" in sec:
            kw["deterministic"] = sec.getboolean("deterministic")
    return replace(base, **kw)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# ------------------------------------------------------------------ cells


@dataclass(frozen=True)
class Cell:
    scenario: int
    delta: float
    eta: float
    observable: str
    value: float = math.nan
    drift: float = math.nan
    runtime_s: float = math.nan
    error: Optional[str] = None

    @property
    def key(self):
        return (self.scenario, self.delta, self.eta, self.observable)

    @property
    def ok(self) -> bool:
        return self.error is None and math.isfinite(self.value)


def scenario_profile(config: ExperimentConfig, kind: int, delta: float) -> BiasProfile:
    over = config.overrides(kind)
    kwargs = {}
    for key in ("ramp", "v_peak", "v_final", "ramp_end"):
        if key in over:
            kwargs[key] = float(over[key])
    if "easing" in over:
        kwargs["easing"] = over["easing"].strip()
    s_c = float(over.get("s_c", DEFAULT_S_C))
    s_cp = float(over.get("s_c_prime", DEFAULT_S_C_PRIME))
    return make_scenario(ScenarioKind(kind), config.params, delta, s_c, s_cp, **kwargs)


def _custom_target(config: ExperimentConfig, layout: LatticeLayout) -> np.ndarray:
    site = config.custom_site.strip().lower()
    if site in ("dot", "s"):
        return basis_vector(layout, "dot")
    lead, m = site.split(":")
    return basis_vector(layout, (lead, int(m)))


def _propagator(config: ExperimentConfig, eta: float, observable: str) -> PropagatorConfig:
    extra = 0.0
    if observable in (Observable.CURRENT_LEFT.value, Observable.CURRENT_RIGHT.value):
        extra = tail_duration(eta, config.tail_fraction)
    layout = None
    if config.n_lead is not None:
        layout = LatticeLayout.symmetric(config.n_lead)
    return PropagatorConfig(eta=eta, dt=config.dt, layout=layout, extra_time=extra,
                            diagonalization_cap=config.diagonalization_cap)


def run_cell(config: ExperimentConfig, kind: int, delta: float, eta: float, observable: str) -> Cell:
    start = time.perf_counter()
    try:
        profile = scenario_profile(config, kind, delta)
        prop = _propagator(config, eta, observable)
        if observable == Observable.BOUND_OCCUPATION.value:
            value, res = bound_state_occupation(profile, config.fermi, prop, full_output=True)
            drift = res.drift
        elif observable == CUSTOM:
            value, res = adiabatic_expectation(profile, config.fermi, prop,
                                               _custom_target(config, prop.layout), full_output=True)
            drift = res.drift
        else:
            value, res = steady_current(profile, config.fermi, prop, Observable(observable),
                                        n_samples=config.current_samples,
                                        tail_fraction=config.tail_fraction, full_output=True)
            drift = res.drift
        return Cell(kind, delta, eta, observable, float(value), float(drift),
                    time.perf_counter() - start)
    except Exception as exc:  # aggregated and reported per cell
        return Cell(kind, delta, eta, observable, runtime_s=time.perf_counter() - start,
                    error=f"{type(exc).__name__}: {exc}")


def _run_cell_args(args):
    return run_cell(*args)


# ---------------------------------------------------------------- results


def extrapolate(etas, values) -> Optional[float]:
    """Linear fit in ``eta`` through the two smallest ``eta``, evaluated at 0."""
    pairs = sorted((float(e), float(v)) for e, v in zip(etas, values) if math.isfinite(v))
    if len(pairs) < 2:
        return None
    (e1, v1), (e2, v2) = pairs[0], pairs[1]
    return v1 - e1 * (v2 - v1) / (e2 - e1)


@dataclass(frozen=True)
class Target:
    scenario: int
    value: float
    tag: str


def target_value(config: ExperimentConfig, kind: int) -> Target:
    """Limit of the final bound-state occupation predicted for each scenario."""
    f = config.fermi
    if kind == ScenarioKind.SMOOTH_NO_CROSSING:
        lam = bound_state(0.0, config.params).lam
        return Target(kind, float(f(lam)), "no-crossing limit f_eq(lambda(-1))")
    if kind == ScenarioKind.CROSS_AND_RETURN:
        return Target(kind, float(f(2.0)), "return-crossing small-delta limit f_eq(2)")
    return Target(kind, float(f(-2.0)), "second-regime small-delta limit f_eq(-2)")


def scattering_prediction(config: ExperimentConfig, kind: int, delta: float, observable: str) -> Optional[float]:
    """Stationary prediction for a cell column, independent of propagation."""
    profile = scenario_profile(config, kind, delta)
    params = config.params
    if observable == Observable.BOUND_OCCUPATION.value:
        if kind == ScenarioKind.SMOOTH_NO_CROSSING:
            return target_value(config, kind).value
        v_window = evaluate(profile, profile.s_c_prime, Side.LEFT)
        v_after = evaluate(profile, profile.s_c_prime, Side.RIGHT)
        state = bound_state(v_after, params)
        layout = LatticeLayout.symmetric(max(64, state.sites_for_tail(1e-24)))
        psi = embed_bound_state(state, layout)
        return memory_term(v_window, psi, config.fermi, params, layout)
    if observable in (Observable.CURRENT_LEFT.value, Observable.CURRENT_RIGHT.value):
        return steady_state_expectation(profile.final_bias, config.fermi, Observable(observable), params)
    return None


@dataclass
class SweepResult:
    config: ExperimentConfig
    cells: list[Cell]
    extrapolated: dict = field(default_factory=dict)
    predictions: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[Cell]:
        return [c for c in self.cells if not c.ok]

    def column(self, kind: int, delta: float, observable: str) -> list[Cell]:
        return sorted((c for c in self.cells
                       if c.scenario == kind and c.delta == delta and c.observable == observable),
                      key=lambda c: -c.eta)

    def delta_trend(self, kind: int, observable: str = Observable.BOUND_OCCUPATION.value):
        """``(delta, extrapolated, prediction)`` rows for a crossing scenario."""
        rows = []
        for delta in self.config.deltas_for(kind):
            rows.append((delta, self.extrapolated.get((kind, delta, observable)),
                         self.predictions.get((kind, delta, observable))))
        return rows


def _cell_plan(config: ExperimentConfig):
    plan = []
    for kind in config.scenarios:
        for delta in config.deltas_for(kind):
            for eta in config.etas_for(kind):
                for obs in config.observables:
                    plan.append((kind, delta, eta, obs))
    # cells sharing eta share the lattice and its equilibrium eigensystem
    plan.sort(key=lambda t: (-t[2], t[0], -t[1], t[3]))
    return plan


def run(config: ExperimentConfig, progress=None) -> SweepResult:
    """Compute every requested cell, extrapolate in ``eta`` and attach
    stationary predictions and targets.  Failed cells carry their error."""
    plan = _cell_plan(config)
    args = [(config, *p) for p in plan]
    cells: list[Cell] = []
    if config.workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for cell in pool.map(_run_cell_args, args):
                cells.append(cell)
                if progress:
                    progress(cell)
    else:
        for a in args:
            cell = _run_cell_args(a)
            cells.append(cell)
            if progress:
                progress(cell)
    cells.sort(key=lambda c: (c.scenario, -c.delta, -c.eta, c.observable))
    result = SweepResult(config, cells)
    for kind in config.scenarios:
        result.targets[kind] = target_value(config, kind)
        for delta in config.deltas_for(kind):
            for obs in config.observables:
                col = result.column(kind, delta, obs)
                if len(col) >= 2:
                    result.extrapolated[(kind, delta, obs)] = extrapolate(
                        [c.eta for c in col], [c.value for c in col])
                try:
                    pred = scattering_prediction(config, kind, delta, obs)
                except Exception:
                    pred = None
                if pred is not None:
                    result.predictions[(kind, delta, obs)] = pred
    return result


# ----------------------------------------------------------------- output


def _fmt(x: float) -> str:
    return "" if x is None or not math.isfinite(x) else repr(float(x))


def write_csv(result: SweepResult, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for c in result.cells:
        runtime = "" if result.config.deterministic else _fmt(c.runtime_s)
        writer.writerow([c.scenario, repr(c.delta), repr(c.eta), c.observable,
                         _fmt(c.value), _fmt(c.drift), runtime])


def summary_table(result: SweepResult) -> str:
    out = io.StringIO()
    cfg = result.config
    out.write(f"E0 = {cfg.params.E0!r}, tau = {cfg.params.tau!r}, occupation = {cfg.fermi.to_config()}\n\n")
    out.write("targets\n")
    for kind in sorted(result.targets):
        t = result.targets[kind]
        out.write(f"  scenario {kind}: {t.value:.10f}  [{t.tag}]\n")
    out.write("\n")
    header = f"{'scen':>4} {'delta':>6} {'observable':>17} {'eta->0 extrap.':>16} {'stationary':>14} {'target':>14}\n"
    out.write(header)
    for kind in cfg.scenarios:
        for delta in cfg.deltas_for(kind):
            for obs in cfg.observables:
                ext = result.extrapolated.get((kind, delta, obs))
                pred = result.predictions.get((kind, delta, obs))
                tgt = result.targets[kind].value if obs == Observable.BOUND_OCCUPATION.value else None
                cells = [f"{x:.10f}" if x is not None else "-" for x in (ext, pred, tgt)]
                out.write(f"{kind:>4} {delta:>6g} {obs:>17} {cells[0]:>16} {cells[1]:>14} {cells[2]:>14}\n")
    if any(k != ScenarioKind.SMOOTH_NO_CROSSING for k in cfg.scenarios):
        out.write("\ncrossing extrapolations use the same linear rule; rates there are empirical\n")
    for kind in cfg.scenarios:
        if kind == ScenarioKind.SMOOTH_NO_CROSSING:
            continue
        tgt = result.targets[kind].value
        out.write(f"\ndelta trend, scenario {kind} (distance to target)\n")
        for delta, ext, pred in result.delta_trend(kind):
            de = f"{abs(ext - tgt):.3e}" if ext is not None else "-"
            dp = f"{abs(pred - tgt):.3e}" if pred is not None else "-"
            out.write(f"  delta={delta:<6g} extrapolated {de:>10}   stationary {dp:>10}\n")
    if result.failures:
        out.write("\nfailed cells\n")
        for c in result.failures:
            out.write(f"  {c.key}: {c.error}\n")
    return out.getvalue()


def report(result: SweepResult, out_dir=None, formats=("csv", "table")) -> list[Path]:
    """Write ``sweep.csv`` and ``summary.txt`` into ``out_dir``."""
    out_dir = Path(out_dir if out_dir is not None else result.config.output)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out_dir / "sweep.csv"
            with open(path, "w", newline="") as fh:
                write_csv(result, fh)
            written.append(path)
        if "table" in formats:
            path = out_dir / "summary.txt"
            path.write_text(summary_table(result))
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write report into {out_dir}: {exc}") from exc
    return written


def cpu_workers(requested: Optional[int]) -> int:
    if requested is not None:
        return max(1, requested)
    return max(1, min(4, os.cpu_count() or 1))
