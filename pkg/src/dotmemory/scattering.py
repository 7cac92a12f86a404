"""Stationary scattering states, wave operators and the memory term.

Generalized eigenfunctions are built from a sine wave in the source lead
plus the closed-form column ``R(E+i0)|S>``::

    Phi = phi - tau * phi(0) * R(E + i0) |S>

On the source lead this is the incident wave plus an outgoing geometric
tail, on the dot ``-tau phi(0) / G`` and on the other lead a purely outgoing
tail.  ``ScatteringState`` is normalized to ``delta(eps - eps')``.  Internally
the quadratures work with the ``delta(k - k')`` normalization, whose weights
stay regular at the band edges.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar

from .lattice import (
    DEFAULT_DIAGONALIZATION_CAP,
    LatticeLayout,
    assemble,
    exact_evolution,
    lead_sine_transform,
)
from .profiles import BiasProfile, evaluate
from .propagation import Observable, PropagatorConfig, evolve
from .spectral import Lead, ModelParams, critical_biases, g_function, zeta1

__all__ = [
    "Direction",
    "ScatteringState",
    "ChannelGrid",
    "SpectralWeights",
    "RegimeError",
    "BandEdgeError",
    "HorizonError",
    "PreconditionError",
    "scattering_state",
    "s_matrix",
    "channel_grids",
    "spectral_weights",
    "steady_state_expectation",
    "memory_term",
    "wave_operator_apply",
    "select_horizon",
    "gaussian_packet",
    "propagation_estimate_check",
    "write_overlap_csv",
]

K_NORM = math.sqrt(2.0 / math.pi)
BAND_EDGE_GUARD = 1e-12
DEFAULT_NODES = 64
_CHUNK = 128


class RegimeError(ValueError):
    pass


class BandEdgeError(ValueError):
    pass


class HorizonError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


class Direction(enum.Enum):
    FORWARD = "forward"
    ADJOINT = "adjoint"


def _channel_energy(channel: Lead, eps, v: float):
    return eps + v if channel is Lead.LEFT else eps


# ------------------------------------------------------------ single state


@dataclass(frozen=True)
class ScatteringState:
    """One generalized eigenfunction of ``h(v)``.

    ``channel`` is the lead the wave comes in through, ``eps = 2 cos k`` its
    free-lead energy and ``energy`` the total energy (``eps + v`` on the
    biased left lead).
    """

    channel: Lead
    eps: float
    k: float
    energy: float
    v: float
    g: complex
    decay_left: complex
    decay_right: complex
    tau: float

    @property
    def incident_amplitude(self) -> float:
        # sine-wave prefactor for delta(eps - eps') normalization
        return 1.0 / math.sqrt(math.pi * math.sin(self.k))

    @property
    def dot(self) -> complex:
        return -self.tau * self.incident_amplitude * math.sin(self.k) / self.g

    def lead_components(self, lead, n_sites: int) -> np.ndarray:
        lead = Lead.parse(lead)
        m1 = np.arange(1, n_sites + 1)
        a = self.incident_amplitude
        source_at_dot = a * math.sin(self.k)
        decay = self.decay_left if lead is Lead.LEFT else self.decay_right
        tail = -(self.tau**2) * source_at_dot * decay**m1 / self.g
        if lead is self.channel:
            return a * np.sin(self.k * m1) + tail
        return tail

    def chain_vector(self, layout: LatticeLayout) -> np.ndarray:
        return layout.from_leads(
            self.lead_components(Lead.LEFT, layout.n_left),
            self.dot,
            self.lead_components(Lead.RIGHT, layout.n_right),
        )

    def overlap(self, psi: np.ndarray, layout: LatticeLayout) -> complex:
        """``<Phi|psi>``."""
        return complex(np.vdot(self.chain_vector(layout), psi))


def scattering_state(channel, eps: float, v: float, params: ModelParams) -> ScatteringState:
    channel = Lead.parse(channel)
    if not abs(eps) < 2.0 - BAND_EDGE_GUARD:
        raise BandEdgeError(f"eps={eps} at or beyond the band edge")
    k = math.acos(eps / 2.0)
    energy = _channel_energy(channel, eps, v)
    g = g_function(energy, v, params, side=+1)
    return ScatteringState(
        channel=channel,
        eps=float(eps),
        k=k,
        energy=float(energy),
        v=float(v),
        g=g,
        decay_left=zeta1(energy - v, side=+1),
        decay_right=zeta1(energy, side=+1),
        tau=params.tau,
    )


def s_matrix(energy: float, v: float, params: ModelParams) -> tuple[np.ndarray, list[Lead]]:
    """Flux-normalized S-matrix over the channels open at ``energy``.

    Returns the matrix (ordered as the returned channel list) with
    ``S[out, in]``; reflection ``-1 - 2 i tau^2 sin k / G``, transmission
    ``-2 i tau^2 sqrt(sin k_in sin k_out) / G``.
    """
    open_channels = []
    sines = {}
    for lead in Lead:
        eps = energy - v if lead is Lead.LEFT else energy
        if abs(eps) < 2.0:
            open_channels.append(lead)
            sines[lead] = math.sqrt(1.0 - eps * eps / 4.0)
    if not open_channels:
        raise BandEdgeError(f"no channel open at E={energy}")
    g = g_function(energy, v, params, side=+1)
    tau2 = params.tau**2
    n = len(open_channels)
    S = np.empty((n, n), dtype=complex)
    for j, lead_in in enumerate(open_channels):
        for i, lead_out in enumerate(open_channels):
            amp = -2j * tau2 * math.sqrt(sines[lead_in] * sines[lead_out]) / g
            S[i, j] = amp - 1.0 if i == j else amp
    return S, open_channels


# ------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class ChannelGrid:
    """Composite Gauss-Legendre rule in ``k`` for one channel.

    ``eps_weights`` integrate functions of ``eps = 2 cos k`` over ``(-2, 2)``.
    """

    channel: Lead
    k: np.ndarray
    k_weights: np.ndarray
    panels: tuple

    @property
    def eps(self) -> np.ndarray:
        return 2.0 * np.cos(self.k)

    @property
    def eps_weights(self) -> np.ndarray:
        return self.k_weights * 2.0 * np.sin(self.k)

    @classmethod
    def from_breakpoints(cls, channel: Lead, breakpoints: Sequence[float], n_nodes: int = DEFAULT_NODES):
        x, w = leggauss(n_nodes)
        pts = np.unique(np.clip(np.asarray(breakpoints, float), 0.0, math.pi))
        ks, ws = [], []
        for a, b in zip(pts[:-1], pts[1:]):
            ks.append(0.5 * (b - a) * x + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * w)
        return cls(channel, np.concatenate(ks), np.concatenate(ws), tuple(pts))


def _resonance_k(channel: Lead, v: float, params: ModelParams) -> Optional[float]:
    """``k`` where ``|G(E + i0)|`` is smallest, if the dot level is in reach."""
    k = np.linspace(1e-3, math.pi - 1e-3, 2001)
    energy = _channel_energy(channel, 2.0 * np.cos(k), v)
    mag = np.abs(g_function(energy, v, params, side=+1))
    i = int(np.argmin(mag))
    if mag[i] > 0.5:
        return None
    lo, hi = k[max(i - 1, 0)], k[min(i + 1, k.size - 1)]
    res = minimize_scalar(
        lambda kk: abs(g_function(_channel_energy(channel, 2.0 * math.cos(kk), v), v, params, side=+1)),
        bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
    )
    return float(res.x)


def channel_grids(v: float, params: ModelParams, n_nodes: int = DEFAULT_NODES) -> list[ChannelGrid]:
    """Panels graded toward both band edges, toward the energies where the
    other channel opens, and around the dot resonance."""
    grids = []
    edge = [0.0, 1e-3, 1e-2, 0.1, 0.4]
    base = edge + [math.pi - e for e in edge] + [math.pi / 2]
    for channel in Lead:
        pts = list(base)
        # the other lead's band edges put square-root kinks into the integrand
        for edge_energy in (-2.0, 2.0):
            eps_kink = edge_energy - v if channel is Lead.LEFT else edge_energy + v
            if abs(eps_kink) < 2.0:
                k_kink = math.acos(eps_kink / 2.0)
                pts += [k_kink + d for d in (-0.1, -1e-2, -1e-3, 0.0, 1e-3, 1e-2, 0.1)]
        k_res = _resonance_k(channel, v, params)
        if k_res is not None:
            width = params.tau**2
            for f in (0.3, 1.0, 3.0, 10.0, 30.0):
                pts += [k_res - f * width, k_res + f * width]
            pts.append(k_res)
        grids.append(ChannelGrid.from_breakpoints(channel, pts, n_nodes))
    return grids


def _overlaps_k(grid: ChannelGrid, v: float, params: ModelParams, psi: np.ndarray,
                layout: LatticeLayout) -> np.ndarray:
    """``<Phi_k|psi>`` (k-normalized) for every node of ``grid``; ``psi``
    may hold columns."""
    channel = grid.channel
    k = grid.k
    eps = 2.0 * np.cos(k)
    energy = _channel_energy(channel, eps, v)
    g = g_function(energy, v, params, side=+1)
    tau = params.tau
    phi0 = K_NORM * np.sin(k)
    coef = -(tau**2) * phi0 / g
    decay = {Lead.LEFT: zeta1(energy - v, side=+1), Lead.RIGHT: zeta1(energy, side=+1)}
    dot = -tau * phi0 / g
    psi = np.asarray(psi)
    cols = psi.reshape(layout.dim, -1)
    leads = {lead: layout.lead_view(cols, lead) for lead in Lead}
    out = np.conj(dot)[:, None] * cols[layout.dot][None, :]
    for lead, amps in leads.items():
        n = amps.shape[0]
        m1 = np.arange(1, n + 1)
        for lo in range(0, k.size, _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            z = decay[lead][sl]
            # Powers of unimodular factors via phases to avoid drift.
            on_circle = np.abs(np.abs(z) - 1.0) < 1e-13
            powers = np.where(
                on_circle[:, None],
                np.exp(1j * np.angle(z)[:, None] * m1[None, :]),
                z[:, None] ** m1[None, :],
            )
            rows = coef[sl, None] * powers
            if lead is channel:
                rows = rows + K_NORM * np.sin(np.outer(k[sl], m1))
            out[sl] += np.conj(rows) @ amps
    if psi.ndim == 1:
        out = out[:, 0]
    return out


@dataclass
class SpectralWeights:
    """Per-channel densities ``|<Phi_eps|psi>|^2`` on the grid nodes."""

    grids: list[ChannelGrid]
    densities: list[np.ndarray]

    def total(self, fermi: Optional[Callable] = None) -> float:
        acc = 0.0
        for grid, dens in zip(self.grids, self.densities):
            f = 1.0 if fermi is None else np.asarray(fermi(grid.eps))
            acc += float(np.sum(grid.eps_weights * f * dens))
        return acc

    def rows(self, fermi: Optional[Callable] = None):
        for grid, dens in zip(self.grids, self.densities):
            f = np.ones_like(grid.eps) if fermi is None else np.asarray(fermi(grid.eps))
            for e, d, fw in zip(grid.eps, dens, f):
                yield grid.channel.value, float(e), float(d), float(fw)


def spectral_weights(psi: np.ndarray, layout: LatticeLayout, v: float, params: ModelParams,
                     grids: Optional[list[ChannelGrid]] = None) -> SpectralWeights:
    grids = grids or channel_grids(v, params)
    dens = []
    for grid in grids:
        ov = _overlaps_k(grid, v, params, psi, layout)
        # k-normalized |overlap|^2 divided by d eps / dk
        dens.append(np.abs(ov) ** 2 / (2.0 * np.sin(grid.k)))
    return SpectralWeights(grids, dens)


def _dot_and_site0(grid: ChannelGrid, v: float, params: ModelParams, lead: Lead):
    """k-normalized amplitudes of every node on the dot and on site 0 of
    ``lead``."""
    energy = _channel_energy(grid.channel, grid.eps, v)
    g = g_function(energy, v, params, side=+1)
    phi0 = K_NORM * np.sin(grid.k)
    decay = zeta1(energy - v, side=+1) if lead is Lead.LEFT else zeta1(energy, side=+1)
    site0 = -(params.tau**2) * phi0 * decay / g
    if lead is grid.channel:
        site0 = site0 + phi0
    return -params.tau * phi0 / g, site0


def steady_state_expectation(v_final: float, fermi: Callable, A, params: ModelParams,
                             grids: Optional[list[ChannelGrid]] = None,
                             layout: Optional[LatticeLayout] = None) -> float:
    """Continuous-spectrum part of the switched steady state.

    Sums over channels ``int d eps f(eps) <Phi_eps|A|Phi_eps>``, the
    occupation weighted with the free lead energy ``eps``.  ``A`` is a unit
    chain vector (``layout`` required) or a current :class:`Observable`.
    """
    grids = grids or channel_grids(v_final, params)
    if isinstance(A, Observable):
        total = 0.0
        for grid in grids:
            dot, site0 = _dot_and_site0(grid, v_final, params, A.lead)
            density = -2.0 * params.tau * np.imag(np.conj(dot) * site0)
            total += float(np.sum(grid.k_weights * np.asarray(fermi(grid.eps)) * density))
        return total
    if layout is None:
        raise ValueError("a vector observable needs its layout")
    weights = spectral_weights(np.asarray(A), layout, v_final, params, grids)
    return weights.total(fermi)


def memory_term(v: float, psi: np.ndarray, fermi: Callable, params: ModelParams,
                layout: LatticeLayout, grids: Optional[list[ChannelGrid]] = None) -> float:
    """``sum_channels int d eps f(eps) |<Phi_eps|psi>|^2`` at a bias with
    purely continuous spectrum."""
    crit = critical_biases(params)
    if not crit.vc1 < v < crit.vc2:
        raise RegimeError(f"v={v} outside ({crit.vc1:.6g}, {crit.vc2:.6g})")
    return spectral_weights(psi, layout, v, params, grids).total(fermi)


def write_overlap_csv(path, weights: SpectralWeights, fermi: Optional[Callable] = None) -> int:
    """Rows of ``channel, eps, overlap_sq, f_weight``; returns the row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "eps", "overlap_sq", "f_weight"])
        for row in weights.rows(fermi):
            writer.writerow([row[0]] + [repr(x) for x in row[1:]])
            n += 1
    return n


# ---------------------------------------------------------- wave operators


def _free_phase(layout: LatticeLayout, x: np.ndarray, t: float, v: float) -> np.ndarray:
    """``exp(-i t (h_leads + v Pi_left)) x`` with the dot component dropped."""
    out = np.zeros_like(x, dtype=complex)
    for lead, shift in ((Lead.LEFT, v), (Lead.RIGHT, 0.0)):
        amps = layout.lead_view(x, lead)
        n = amps.shape[0]
        energies = 2.0 * np.cos(np.arange(1, n + 1) * math.pi / (n + 1)) + shift
        coeffs = lead_sine_transform(np.asarray(amps, dtype=complex))
        phases = np.exp(-1j * t * energies)
        if coeffs.ndim > 1:
            phases = phases[:, None]
        moved = lead_sine_transform(phases * coeffs)
        if lead is Lead.LEFT:
            out[: layout.n_left] = moved[::-1]
        else:
            out[layout.n_left + 1:] = moved
    return out


def _check_horizon(T: float, layout: LatticeLayout, margin: float = 0.0):
    limit = (min(layout.n_left, layout.n_right) - 64 - margin) / 2.0
    if T > limit:
        raise HorizonError(f"horizon {T} exceeds {limit:.6g} allowed by the layout")


def wave_operator_apply(v: float, direction: Direction, psi: np.ndarray, T: float,
                        params: ModelParams, layout: LatticeLayout,
                        cap: int = DEFAULT_DIAGONALIZATION_CAP) -> np.ndarray:
    """Time-``T`` approximant of the wave operator of ``h(v)`` against the
    decoupled biased leads.

    ``FORWARD``: ``exp(-iT h(v)) exp(iT h_0(v)) P psi``; ``ADJOINT``:
    ``P exp(-iT h_0(v)) exp(iT h(v)) psi``, where ``h_0(v)`` is the
    decoupled lead Hamiltonian with the left lead shifted by ``v`` and ``P``
    drops the dot component.  Both exponentials are exact (eigenbasis of
    the truncated ``h(v)``, sine transform on the leads).
    """
    direction = Direction(direction)
    _check_horizon(T, layout)
    H = assemble(v, params, layout)
    psi = np.asarray(psi, dtype=complex)
    if direction is Direction.FORWARD:
        return exact_evolution(H, T, _free_phase(layout, psi, -T, v), cap)
    return _free_phase(layout, exact_evolution(H, -T, psi, cap), T, v)


def select_horizon(v: float, direction: Direction, psi: np.ndarray, params: ModelParams,
                   layout: LatticeLayout, T0: float = 25.0, tol: float = 1e-4,
                   cap: int = DEFAULT_DIAGONALIZATION_CAP,
                   max_horizon: Optional[float] = None) -> tuple[np.ndarray, float, float]:
    """Double ``T`` until the Cauchy increment between ``T/2`` and ``T`` is
    below ``tol``.  Returns the image, the horizon and the last increment.

    ``max_horizon`` caps ``T`` below the layout limit when ``psi`` itself
    already sits far out in a lead.
    """
    prev = wave_operator_apply(v, direction, psi, T0, params, layout, cap)
    T = T0
    while True:
        T *= 2.0
        if max_horizon is not None and T > max_horizon:
            raise HorizonError(f"no convergence to {tol} within horizon {max_horizon}")
        try:
            cur = wave_operator_apply(v, direction, psi, T, params, layout, cap)
        except HorizonError as exc:
            raise HorizonError(f"no convergence to {tol} before the layout horizon") from exc
        inc = float(np.linalg.norm(cur - prev))
        if inc < tol:
            return cur, T, inc
        prev = cur


# ------------------------------------------------------- propagation check


def _bump(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def gaussian_packet(layout: LatticeLayout, lead=Lead.LEFT, k0: float = math.pi / 2,
                    width: float = 0.15, cutoff: float = 3.0, position: float = 40.0,
                    outgoing: bool = True, n_k: int = 4001) -> np.ndarray:
    """Unit lead vector with a Gaussian energy profile of compact support.

    The ``k`` amplitude is ``exp(-(k-k0)^2/(2 width^2))`` times a smooth
    bump vanishing outside ``|k - k0| < cutoff * width``; the phase centres
    the packet at ``position`` moving away from the dot (``outgoing``) or
    toward it.
    """
    lead = Lead.parse(lead)
    half = cutoff * width
    if k0 - half <= 0.0 or k0 + half >= math.pi:
        raise PreconditionError("packet energy support touches a band edge")
    k = np.linspace(k0 - half, k0 + half, n_k)
    dk = k[1] - k[0]
    profile = np.exp(-0.5 * ((k - k0) / width) ** 2) * _bump((k - k0) / half)
    phase = np.exp((1j if outgoing else -1j) * k * position)
    n = layout.n_left if lead is Lead.LEFT else layout.n_right
    m1 = np.arange(1, n + 1)
    amps = np.sin(np.outer(m1, k)) @ (profile * phase) * dk
    amps /= np.linalg.norm(amps)
    if lead is Lead.LEFT:
        return layout.from_leads(amps, 0.0, np.zeros(0))
    return layout.from_leads(np.zeros(0), 0.0, amps)


def _free_reference(profile: BiasProfile, layout: LatticeLayout, t_from: float, t_to: float,
                    phi: np.ndarray, eta: float) -> np.ndarray:
    """Closed-form decoupled evolution: free lead propagation times the
    accumulated bias phase on the left lead."""
    s = np.linspace(eta * t_from, eta * t_to, 20001)
    vals = profile.values(s)
    phase_integral = trapezoid(vals, s) / eta  # int v dt from t_from to t_to
    moved = _free_phase(layout, phi, t_to - t_from, 0.0)
    moved[: layout.n_left] *= np.exp(-1j * phase_integral)
    return moved


def propagation_estimate_check(
    profile: BiasProfile,
    eta: float,
    packet: Optional[np.ndarray] = None,
    config: Optional[PropagatorConfig] = None,
    s_start: float = -1.0,
    s_end: float = 0.0,
    *,
    tol: float = 1e-4,
    position: float = 40.0,
    max_horizon: float = 400.0,
    reference: str = "integrator",
    full_output: bool = False,
):
    """Deviation between switched and asymptotically free dynamics.

    Returns ``|| U(s_start/eta, s_end/eta) Omega_f phi - Omega_i U_0 phi ||``
    where ``Omega_f``, ``Omega_i`` are the wave operators at the end and
    start biases and ``U_0`` the decoupled lead dynamics over the same
    interval.  ``reference="integrator"`` computes ``U_0`` with the same
    Crank-Nicolson stepper as ``U`` so that its phase error cancels;
    ``reference="exact"`` uses the closed form (free propagation times the
    accumulated bias phase).
    """
    params = profile.params
    duration = (s_end - s_start) / eta
    if config is None:
        layout = LatticeLayout.for_duration(duration + max_horizon + position + 20.0)
        config = PropagatorConfig(eta=eta, layout=layout)
    layout = config.layout
    if packet is None:
        packet = gaussian_packet(layout, position=position)
    if packet.shape != (layout.dim,):
        raise PreconditionError("packet does not match the layout")
    if abs(packet[layout.dot]) > 1e-12:
        raise PreconditionError("packet has a dot component (point spectrum of the decoupled system)")
    config.check(profile)

    v_end = evaluate(profile, s_end, "left") if s_end > -1.0 else evaluate(profile, s_end)
    v_start = evaluate(profile, s_start, "right") if s_start < 0.0 else evaluate(profile, s_start)
    out_f, T_f, inc_f = select_horizon(v_end, Direction.FORWARD, packet, params, layout, tol=tol,
                                       cap=config.diagonalization_cap, max_horizon=max_horizon)
    lhs = evolve(profile, config, s_end / eta, s_start / eta, out_f)
    if reference == "integrator":
        free = evolve(profile, config, s_end / eta, s_start / eta, packet,
                      params=ModelParams.decoupled(params.E0))
        free[layout.dot] = 0.0
    elif reference == "exact":
        free = _free_reference(profile, layout, s_end / eta, s_start / eta, packet, eta)
    else:
        raise ValueError(f"unknown reference {reference!r}")
    rhs, T_i, inc_i = select_horizon(v_start, Direction.FORWARD, free, params, layout, tol=tol,
                                     cap=config.diagonalization_cap, max_horizon=max_horizon)
    deviation = float(np.linalg.norm(lhs - rhs))
    if full_output:
        return deviation, {"horizon_final": T_f, "horizon_initial": T_i,
                           "increment_final": inc_f, "increment_initial": inc_i}
    return deviation

