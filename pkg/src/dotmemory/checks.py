"""Fast numerical invariants used by ``dotmemory check``.

Each check returns a :class:`CheckResult` with the measured error and the
tolerance it is held to.  The whole suite runs in a few seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import LatticeLayout, assemble, eigenvalues_in, embed_bound_state
from .profiles import ScenarioKind, make_scenario, validate
from .propagation import PropagatorConfig, evolve
from .scattering import Direction, channel_grids, s_matrix, spectral_weights, wave_operator_apply
from .spectral import (
    ModelParams,
    bound_state,
    critical_biases,
    find_eigenvalue,
    g_function,
    zeta1,
)

__all__ = ["CheckResult", "CHECKS", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<42} error={self.error:.3e}  tol={self.tolerance:.1e}"


def _eigenvalue_residual(params: ModelParams) -> CheckResult:
    worst = 0.0
    for v in (0.0, 2.5, 5.0, 7.5, 12.5, 20.0):
        lam, _ = find_eigenvalue(v, params)
        worst = max(worst, abs(g_function(lam, v, params)))
    return CheckResult("secular function at eigenvalues", worst, 1e-12)


def _critical_continuity(params: ModelParams) -> CheckResult:
    crit = critical_biases(params)
    g1 = abs(g_function(crit.vc1 + 2.0, crit.vc1, params))
    g2 = abs(g_function(crit.vc2 - 2.0, crit.vc2, params))
    return CheckResult("secular function at critical biases", max(g1, g2), 1e-12)


def _zeta_identity(params: ModelParams) -> CheckResult:
    z = np.array([2.5, 10.0, 1e3, 1e8, -3.0, -1e6])
    zeta = zeta1(z)
    err = np.max(np.abs(zeta + 1.0 / zeta - z) / np.abs(z))
    return CheckResult("zeta + 1/zeta = z", float(err), 1e-13)


def _lattice_eigenvalue(params: ModelParams) -> CheckResult:
    lam, _ = find_eigenvalue(0.0, params)
    H = assemble(0.0, params, LatticeLayout.symmetric(400))
    found = eigenvalues_in(H, 2.5, 2.0 * params.E0)
    return CheckResult("truncated vs closed-form eigenvalue", float(np.min(np.abs(found - lam))), 1e-12)


def _bound_state_norm(params: ModelParams) -> CheckResult:
    worst = 0.0
    for v in (0.0, 7.9, 12.2):
        state = bound_state(v, params)
        layout = LatticeLayout.symmetric(max(64, state.sites_for_tail(1e-20)))
        psi = embed_bound_state(state, layout, renormalize=False)
        worst = max(worst, abs(np.linalg.norm(psi) - 1.0))
    return CheckResult("closed-form bound state normalization", worst, 1e-12)


def _completeness(params: ModelParams) -> CheckResult:
    v = 10.0
    layout = LatticeLayout.symmetric(200)
    psi = np.zeros(layout.dim, dtype=complex)
    psi[layout.dot] = 1.0
    total = spectral_weights(psi, layout, v, params, channel_grids(v, params)).total(lambda e: np.ones_like(e))
    return CheckResult("continuum completeness on the dot", abs(total - 1.0), 1e-10)


def _unitarity(params: ModelParams) -> CheckResult:
    worst = 0.0
    for energy, v in ((0.3, 1.0), (10.0, 10.0), (9.7, 8.5), (-1.0, 0.0)):
        S, _ = s_matrix(energy, v, params)
        worst = max(worst, float(np.max(np.abs(S.conj().T @ S - np.eye(len(S))))))
    return CheckResult("S-matrix unitarity", worst, 1e-12)


def _profiles_valid(params: ModelParams) -> CheckResult:
    bad = 0
    for kind in ScenarioKind:
        delta = 0.0 if kind is ScenarioKind.SMOOTH_NO_CROSSING else 0.2
        bad += len(validate(make_scenario(kind, params, delta)))
    return CheckResult("scenario profile constraints", float(bad), 0.0)


def _norm_drift(params: ModelParams) -> CheckResult:
    profile = make_scenario(ScenarioKind.CROSS_AND_RETURN, params, 0.2)
    config = PropagatorConfig(eta=0.1)
    state = bound_state(0.0, params)
    psi = embed_bound_state(state, config.layout).astype(complex)
    res = evolve(profile, config, -10.0, 0.0, psi, full_output=True)
    return CheckResult("Crank-Nicolson norm drift", res.drift, 1e-10)


def _wave_isometry(params: ModelParams) -> CheckResult:
    layout = LatticeLayout.symmetric(300)
    m = np.arange(1, 301)
    amps = np.exp(-0.5 * ((m - 60) / 8.0) ** 2 + 1j * 1.2 * m)
    psi = layout.from_leads(amps / np.linalg.norm(amps), 0.0, np.zeros(0))
    out = wave_operator_apply(10.0, Direction.FORWARD, psi, 50.0, params, layout)
    return CheckResult("wave operator isometry", abs(np.linalg.norm(out) - 1.0), 1e-10)


CHECKS: tuple[Callable[[ModelParams], CheckResult], ...] = (
    _zeta_identity,
    _eigenvalue_residual,
    _critical_continuity,
    _lattice_eigenvalue,
    _bound_state_norm,
    _completeness,
    _unitarity,
    _profiles_valid,
    _norm_drift,
    _wave_isometry,
)


def run_checks(params: ModelParams = ModelParams()) -> list[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            results.append(check(params))
        except Exception as exc:
            name = check.__name__.strip("_").replace("_", " ")
            results.append(CheckResult(f"{name} ({type(exc).__name__})", math.inf, 0.0))
    return results
