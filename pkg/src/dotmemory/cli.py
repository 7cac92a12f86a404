"""Command line entry point: ``dotmemory {spectrum,evolve,sweep,scatter,check}``.

Exit status is 0 when every requested cell was computed and every check
passed, 1 when some cell or check failed and 2 for usage or config errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checks import run_checks
from .experiments import (
    ExperimentConfig,
    default_config,
    load_config,
    report,
    run,
    run_cell,
    scenario_profile,
    summary_table,
    target_value,
)
from .lattice import LatticeLayout, embed_bound_state
from .profiles import ScenarioKind, Side, evaluate
from .propagation import Observable
from .scattering import channel_grids, memory_term, spectral_weights, steady_state_expectation, write_overlap_csv
from .spectral import bound_state, critical_biases, write_spectrum_csv

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dotmemory", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep_flags=True):
        p.add_argument("--config", type=Path, help="INI-style experiment config")
        p.add_argument("--out", type=Path, help="output directory")
        if sweep_flags:
            p.add_argument("--scenario", type=int, choices=(1, 2, 3), help="restrict to one scenario")
            p.add_argument("--eta", type=_float_list, help="comma separated eta values (decreasing)")
            p.add_argument("--delta", type=_float_list, help="comma separated delta values (decreasing)")

    p = sub.add_parser("spectrum", help="eigenvalue curve and critical biases")
    common(p, sweep_flags=False)
    p.add_argument("--vmin", type=float, default=-5.0)
    p.add_argument("--vmax", type=float, default=20.0)
    p.add_argument("--points", type=int, default=501)

    p = sub.add_parser("evolve", help="single trajectory")
    common(p)
    p.add_argument("--observable", default=Observable.BOUND_OCCUPATION.value,
                   choices=[o.value for o in Observable] + ["custom"])

    p = sub.add_parser("sweep", help="full (scenario, delta, eta) harness")
    common(p)
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--deterministic", action="store_true", help="leave runtime_s empty")

    p = sub.add_parser("scatter", help="stationary scattering diagnostics")
    common(p)

    p = sub.add_parser("check", help="numerical invariant suite")
    common(p, sweep_flags=False)
    return parser


def _config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else default_config()
    changes = {}
    if getattr(args, "scenario", None):
        changes["scenarios"] = (args.scenario,)
    if getattr(args, "eta", None):
        changes["etas"] = args.eta
        # an explicit list applies to every scenario
        changes["scenario_overrides"] = tuple(
            (k, tuple((key, val) for key, val in dict(over).items() if key != "etas"))
            for k, over in config.scenario_overrides)
    if getattr(args, "delta", None):
        changes["deltas"] = args.delta
        changes["scenario_overrides"] = tuple(
            (k, tuple((key, val) for key, val in dict(over).items() if key != "deltas"))
            for k, over in changes.get("scenario_overrides", config.scenario_overrides))
    if getattr(args, "out", None):
        changes["output"] = str(args.out)
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    if getattr(args, "deterministic", False):
        changes["deterministic"] = True
    return replace(config, **changes)


def _cmd_spectrum(args, config: ExperimentConfig) -> int:
    crit = critical_biases(config.params)
    print(f"vc1 = {crit.vc1!r}")
    print(f"vc2 = {crit.vc2!r}")
    out = Path(args.out or config.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "spectrum.csv"
    n = write_spectrum_csv(path, np.linspace(args.vmin, args.vmax, args.points), config.params)
    print(f"wrote {n} rows to {path}")
    return EXIT_OK


def _cmd_evolve(args, config: ExperimentConfig) -> int:
    kind = config.scenarios[0]
    eta = config.etas_for(kind)[-1]
    delta = config.deltas_for(kind)[-1]
    cell = run_cell(config, kind, delta, eta, args.observable)
    if not cell.ok:
        print(f"failed: {cell.error}", file=sys.stderr)
        return EXIT_FAILED
    print(f"scenario={kind} delta={delta!r} eta={eta!r} observable={args.observable}")
    print(f"value={cell.value!r} drift={cell.drift:.3e} runtime_s={cell.runtime_s:.2f}")
    if args.observable == Observable.BOUND_OCCUPATION.value:
        t = target_value(config, kind)
        print(f"target={t.value!r} [{t.tag}]")
    return EXIT_OK


def _cmd_sweep(args, config: ExperimentConfig) -> int:
    def progress(cell):
        status = "ok" if cell.ok else f"FAILED ({cell.error})"
        print(f"scenario={cell.scenario} delta={cell.delta:g} eta={cell.eta:g} "
              f"{cell.observable}: {status} [{cell.runtime_s:.1f}s]", file=sys.stderr)

    result = run(config, progress=progress)
    for path in report(result):
        print(f"wrote {path}")
    print(summary_table(result))
    return EXIT_FAILED if result.failures else EXIT_OK


def _cmd_scatter(args, config: ExperimentConfig) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    params, fermi = config.params, config.fermi
    for kind in config.scenarios:
        for delta in config.deltas_for(kind):
            profile = scenario_profile(config, kind, delta)
            v_final = profile.final_bias
            for obs in (Observable.CURRENT_LEFT, Observable.CURRENT_RIGHT):
                value = steady_state_expectation(v_final, fermi, obs, params)
                print(f"scenario={kind} delta={delta:g} stationary {obs.value} = {value!r}")
            if kind == ScenarioKind.SMOOTH_NO_CROSSING:
                continue
            v_window = evaluate(profile, profile.s_c_prime, Side.LEFT)
            state = bound_state(evaluate(profile, profile.s_c_prime, Side.RIGHT), params)
            layout = LatticeLayout.symmetric(max(64, state.sites_for_tail(1e-24)))
            psi = embed_bound_state(state, layout)
            grids = channel_grids(v_window, params)
            weights = spectral_weights(psi, layout, v_window, params, grids)
            m = memory_term(v_window, psi, fermi, params, layout, grids)
            print(f"scenario={kind} delta={delta:g} memory term = {m!r} "
                  f"(completeness {weights.total(lambda e: np.ones_like(e))!r})")
            path = out / f"overlaps_s{kind}_d{delta:g}.csv"
            write_overlap_csv(path, weights, fermi)
            print(f"wrote {path}")
    return EXIT_OK


def _cmd_check(args, config: ExperimentConfig) -> int:
    results = run_checks(config.params)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {
    "spectrum": _cmd_spectrum,
    "evolve": _cmd_evolve,
    "sweep": _cmd_sweep,
    "scatter": _cmd_scatter,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config(args)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
