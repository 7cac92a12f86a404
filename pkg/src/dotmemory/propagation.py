"""Time-dependent propagation under ``h(v(eta t))`` on a truncated lattice.

The integrator is Crank-Nicolson with the Hamiltonian taken at the step
midpoint.  Each step solves one complex tridiagonal system; the loop lives
in a compiled kernel because a Python-level step costs more than the solve.

Expectations in the adiabatically switched state are computed backwards:
the observable vector is propagated from ``t = 0`` to ``t = -1/eta`` and the
equilibrium occupation of the initial Hamiltonian is applied there.
"""

from __future__ import annotations

import enum
import functools
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numba
import numpy as np

from .lattice import (
    DEFAULT_DIAGONALIZATION_CAP,
    LatticeLayout,
    TruncatedHamiltonian,
    assemble,
    basis_vector,
    embed_bound_state,
    equilibrium_expectation,
)
from .profiles import BiasProfile, ScenarioKind, Side, evaluate
from .spectral import Lead, ModelParams, bound_state

__all__ = [
    "Observable",
    "PropagatorConfig",
    "EvolutionResult",
    "ConfigError",
    "SolverBreakdown",
    "crank_nicolson_steps",
    "evolve",
    "adiabatic_expectation",
    "bound_state_occupation",
    "steady_current",
    "decoupling_overlap",
    "tail_duration",
]

DEFAULT_DT = 0.02
# Fraction of the total lab time spent at frozen v(0) for current averages.
DEFAULT_TAIL_FRACTION = 0.1


class ConfigError(ValueError):
    pass


class SolverBreakdown(ArithmeticError):
    pass


class Observable(enum.Enum):
    BOUND_OCCUPATION = "bound_occupation"
    CURRENT_LEFT = "current_left"
    CURRENT_RIGHT = "current_right"

    @property
    def lead(self) -> Lead:
        if self is Observable.CURRENT_LEFT:
            return Lead.LEFT
        if self is Observable.CURRENT_RIGHT:
            return Lead.RIGHT
        raise ValueError(f"{self} is not a current")


def tail_duration(eta: float, fraction: float = DEFAULT_TAIL_FRACTION) -> float:
    """Frozen-bias time after ``t = 0`` making up ``fraction`` of all lab time."""
    return fraction / (1.0 - fraction) / eta


@dataclass(frozen=True)
class PropagatorConfig:
    eta: float
    dt: float = DEFAULT_DT
    solver_tol: float = 1e-12
    layout: Optional[LatticeLayout] = None
    extra_time: float = 0.0
    diagonalization_cap: int = DEFAULT_DIAGONALIZATION_CAP

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.layout is None:
            object.__setattr__(self, "layout", LatticeLayout.for_duration(self.total_time))

    @property
    def total_time(self) -> float:
        return 1.0 / self.eta + self.extra_time

    def check(self, profile: BiasProfile) -> None:
        """Raise :class:`ConfigError` if the step or lattice is too coarse."""
        v_max = max(max(abs(p.v0), abs(p.v1)) for p in profile.pieces)
        radius = max(v_max, profile.params.E0) + 2.0 + 2.0 * abs(profile.params.tau)
        if self.dt * radius >= 0.5:
            raise ConfigError(f"dt * spectral radius = {self.dt * radius:.3g} >= 0.5")
        need = int(math.ceil(2.0 * self.total_time)) + 64
        if min(self.layout.n_left, self.layout.n_right) < need:
            raise ConfigError(f"leads shorter than {need} sites for lab time {self.total_time:.6g}")


@dataclass
class EvolutionResult:
    state: np.ndarray
    drift: float
    steps: int
    wall_time: float


@numba.njit(cache=True)
def crank_nicolson_steps(psi, diag0, left_mask, off, v_mid, h):  # pragma: no cover - compiled
    """Advance the columns of ``psi`` in place by ``len(v_mid)`` steps of
    size ``h``; step ``s`` uses the bias ``v_mid[s]`` on the left lead."""
    n, m = psi.shape
    hh = 0.5j * h
    cp = np.empty(n, np.complex128)
    rhs = np.empty((n, m), np.complex128)
    hoff = np.empty(n - 1, np.complex128)
    for i in range(n - 1):
        hoff[i] = hh * off[i]
    for s in range(v_mid.shape[0]):
        v = v_mid[s]
        for i in range(n):
            a = 1.0 + hh * (diag0[i] + v * left_mask[i])
            if i == 0:
                den = a
            else:
                den = a - hoff[i - 1] * cp[i - 1]
            inv = 1.0 / den
            if i < n - 1:
                cp[i] = hoff[i] * inv
            c = 2.0 - a
            for j in range(m):
                r = c * psi[i, j]
                if i > 0:
                    r -= hoff[i - 1] * (psi[i - 1, j] + rhs[i - 1, j])
                if i < n - 1:
                    r -= hoff[i] * psi[i + 1, j]
                rhs[i, j] = r * inv
        for j in range(m):
            psi[n - 1, j] = rhs[n - 1, j]
        for i in range(n - 2, -1, -1):
            for j in range(m):
                psi[i, j] = rhs[i, j] - cp[i] * psi[i + 1, j]
    return psi


def _segments(profile: BiasProfile, eta: float, t0: float, t1: float) -> list[tuple[float, float]]:
    cuts = {-1.0 / eta, 0.0}
    cuts.update(s / eta for s in profile.breakpoints)
    lo, hi = min(t0, t1), max(t0, t1)
    inner = sorted(c for c in cuts if lo < c < hi)
    points = [lo] + inner + [hi]
    segs = list(zip(points[:-1], points[1:]))
    if t1 < t0:
        segs = [(b, a) for a, b in reversed(segs)]
    return segs


def _first_step_residual(psi, H: TruncatedHamiltonian, new, h) -> float:
    # ||(1 + i h/2 H) new - (1 - i h/2 H) psi|| / ||psi||
    lhs = new + 0.5j * h * H.matvec(new.copy())
    rhs = psi - 0.5j * h * H.matvec(psi.copy())
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(psi), 1e-300))


def evolve(
    profile: BiasProfile,
    config: PropagatorConfig,
    t0: float,
    t1: float,
    psi: np.ndarray,
    *,
    params: Optional[ModelParams] = None,
    full_output: bool = False,
) -> Union[np.ndarray, EvolutionResult]:
    """Approximate ``U(t1, t0) psi`` for ``i dU/dt = h(v(eta t)) U``.

    Integration is split at ``-1/eta``, ``0`` and at every breakpoint of the
    profile, so a step never straddles a jump and the one-sided limits of the
    bias are used on each side.  Outside ``[-1/eta, 0]`` the bias is frozen.

    Parameters
    ----------
    profile : BiasProfile
    config : PropagatorConfig
    t0, t1 : float
        Lab times; ``t1 < t0`` propagates backwards.
    psi : ndarray, shape (dim,) or (dim, k)
        One state or a block of states in chain ordering.
    params : ModelParams, optional
        Override of ``profile.params``; ``ModelParams.decoupled`` gives the
        free comparison dynamics.
    full_output : bool
        Return an :class:`EvolutionResult` instead of the bare state.
    """
    start = time.perf_counter()
    params = profile.params if params is None else params
    config.check(profile)
    layout = config.layout
    psi = np.asarray(psi)
    if psi.shape[0] != layout.dim:
        raise ConfigError(f"state has {psi.shape[0]} components, layout needs {layout.dim}")
    single = psi.ndim == 1
    work = np.array(psi.reshape(layout.dim, -1), dtype=np.complex128, order="C")
    norms0 = np.linalg.norm(work, axis=0)

    H0 = assemble(0.0, params, layout)
    diag0 = H0.diagonal.copy()
    mask = layout.left_mask()
    off = H0.offdiagonal.copy()

    steps = 0
    checked = False
    for a, b in _segments(profile, config.eta, t0, t1):
        length = b - a
        n = max(1, int(math.ceil(abs(length) / config.dt - 1e-9)))
        h = length / n
        mid = a + (np.arange(n) + 0.5) * h
        v_mid = profile.values(config.eta * mid)
        if not checked:
            before = work[:, 0].copy()
            crank_nicolson_steps(work, diag0, mask, off, v_mid[:1], h)
            H = assemble(float(v_mid[0]), params, layout)
            res = _first_step_residual(before, H, work[:, 0], h)
            if not np.isfinite(res) or res > config.solver_tol * 10 * max(1.0, abs(h) * H.norm_bound()):
                raise SolverBreakdown(f"tridiagonal solve residual {res:.3g}")
            checked = True
            v_mid = v_mid[1:]
            steps += 1
        if v_mid.size:
            crank_nicolson_steps(work, diag0, mask, off, v_mid, h)
            steps += v_mid.size

    norms1 = np.linalg.norm(work, axis=0)
    drift = float(np.max(np.abs(norms1 - norms0) / np.where(norms0 > 0, norms0, 1.0)))
    out = work[:, 0] if single else work
    if full_output:
        return EvolutionResult(out, drift, steps, time.perf_counter() - start)
    return out


@functools.lru_cache(maxsize=1)
def _initial_hamiltonian(v: float, params: ModelParams, layout: LatticeLayout) -> TruncatedHamiltonian:
    # One large eigendecomposition is reused across observables of a sweep.
    return assemble(v, params, layout)


def _observable_columns(target, layout: LatticeLayout) -> tuple[np.ndarray, Optional[Lead]]:
    if isinstance(target, Observable):
        if target is Observable.BOUND_OCCUPATION:
            raise ValueError("use bound_state_occupation for the bound-state observable")
        lead = target.lead
        cols = np.stack([basis_vector(layout, "dot"), basis_vector(layout, (lead, 0))], axis=1)
        return cols, lead
    vec = np.asarray(target, dtype=complex)
    if vec.shape != (layout.dim,):
        raise ConfigError("target vector does not match the layout")
    norm = np.linalg.norm(vec)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"target vector must have unit norm, got {norm}")
    return vec, None


def adiabatic_expectation(
    profile: BiasProfile,
    fermi: Callable,
    config: PropagatorConfig,
    target,
    *,
    full_output: bool = False,
):
    """``Tr(rho_eta A)`` at ``t = 0`` for a rank-one projector or a bond current.

    ``rho_eta`` evolves from ``f(h(v(-1)))`` at ``t = -1/eta``.  For a unit
    vector ``target`` the result is ``<chi|f(h(v(-1)))|chi>`` with
    ``chi = U(-1/eta, 0) target``.  For ``Observable.CURRENT_LEFT`` (resp.
    ``RIGHT``) it is ``2 tau Im <S|rho|0>`` on the corresponding dot bond,
    i.e. the rate of change of the charge in that lead.
    """
    layout = config.layout
    cols, lead = _observable_columns(target, layout)
    result = evolve(profile, config, 0.0, -1.0 / config.eta, cols, full_output=True)
    H = _initial_hamiltonian(evaluate(profile, -1.0), profile.params, layout)
    if lead is None:
        value = equilibrium_expectation(fermi, H, result.state, config.diagonalization_cap)
    else:
        gram = equilibrium_expectation(fermi, H, result.state, config.diagonalization_cap)
        value = 2.0 * profile.params.tau * float(gram[0, 1].imag)
    if full_output:
        return value, result
    return value


def bound_state_occupation(profile: BiasProfile, fermi: Callable, config: PropagatorConfig,
                           *, full_output: bool = False):
    """Occupation of the final bound state ``P_d(v(0))`` after switching."""
    state = bound_state(profile.final_bias, profile.params)
    target = embed_bound_state(state, config.layout).astype(complex)
    return adiabatic_expectation(profile, fermi, config, target, full_output=full_output)


def steady_current(
    profile: BiasProfile,
    fermi: Callable,
    config: PropagatorConfig,
    observable: Observable = Observable.CURRENT_LEFT,
    n_samples: int = 16,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    *,
    full_output: bool = False,
):
    """Time average of a bond current over a frozen-bias tail after ``t = 0``.

    The tail lasts ``tail_fraction`` of the total lab time.  The current is
    sampled at ``n_samples`` midpoints of the tail; the dot and bond-site
    columns for all samples are propagated back to ``t = -1/eta`` as one
    block, adding columns as the backward sweep passes each sample time.
    ``config.extra_time`` must cover the tail.
    """
    tail = tail_duration(config.eta, tail_fraction)
    if config.extra_time < tail - 1e-9:
        raise ConfigError(f"config.extra_time must be >= {tail:.6g} for the current tail")
    layout = config.layout
    lead = observable.lead
    pair = np.stack([basis_vector(layout, "dot"), basis_vector(layout, (lead, 0))], axis=1)
    times = (np.arange(n_samples) + 0.5) * tail / n_samples
    block = np.zeros((layout.dim, 0), dtype=complex)
    drift = 0.0
    start = time.perf_counter()
    steps = 0
    t_now = times[-1]
    for t_k in times[::-1]:
        if block.shape[1]:
            res = evolve(profile, config, t_now, t_k, block, full_output=True)
            block, drift, steps = res.state, max(drift, res.drift), steps + res.steps
        block = np.concatenate([block, pair], axis=1)
        t_now = t_k
    res = evolve(profile, config, t_now, -1.0 / config.eta, block, full_output=True)
    drift, steps = max(drift, res.drift), steps + res.steps
    H = _initial_hamiltonian(evaluate(profile, -1.0), profile.params, layout)
    gram = equilibrium_expectation(fermi, H, res.state, config.diagonalization_cap)
    idx = np.arange(n_samples) * 2
    samples = 2.0 * profile.params.tau * gram[idx, idx + 1].imag
    # block columns were added latest-first
    samples = samples[::-1]
    value = float(np.mean(samples))
    if full_output:
        return value, EvolutionResult(samples, drift, steps, time.perf_counter() - start)
    return value


def decoupling_overlap(profile: BiasProfile, config: PropagatorConfig) -> float:
    """``|<psi(s_c - 0)| U(s_c/eta, s_c'/eta) |psi(s_c' + 0)>|`` for a
    crossing profile, with ``psi`` the instantaneous bound states."""
    if profile.kind is ScenarioKind.SMOOTH_NO_CROSSING:
        raise ValueError("the no-crossing profile has no crossing window")
    layout = config.layout
    v_before = evaluate(profile, profile.s_c, Side.LEFT)
    v_after = evaluate(profile, profile.s_c_prime, Side.RIGHT)
    bra = embed_bound_state(bound_state(v_before, profile.params), layout)
    ket = embed_bound_state(bound_state(v_after, profile.params), layout).astype(complex)
    moved = evolve(profile, config, profile.s_c_prime / config.eta, profile.s_c / config.eta, ket)
    return float(abs(np.vdot(bra, moved)))
