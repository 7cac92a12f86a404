"""Exact spectral analysis of the dot coupled to two semi-infinite leads.

The Hamiltonian ``h(v)`` couples a single site (the dot, energy ``E0``) with
strength ``tau`` to the first site of two discrete half-line Laplacians.  The
left lead is shifted by the bias ``v``.  Everything here is closed form up to
one-dimensional root finding.
"""

from __future__ import annotations

import csv
import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "DomainError",
    "ThresholdProximityError",
    "PoleError",
    "ModelParams",
    "CriticalBiases",
    "Interval",
    "Lead",
    "BoundState",
    "ThresholdData",
    "ResolventColumn",
    "ProjectionAsymptote",
    "zeta1",
    "zeta1_derivative",
    "lead_resolvent_element",
    "g_function",
    "dg_dx",
    "threshold_function",
    "find_eigenvalue",
    "critical_biases",
    "bound_state",
    "projection_matrix_element",
    "projection_asymptote",
    "threshold_data",
    "resolvent_column_dot",
    "write_spectrum_csv",
]

# Distance from a critical bias below which bound_state refuses to work.
THRESHOLD_FLOOR = 1e-6
ROOT_XTOL = 1e-15


class DomainError(ValueError):
    """Argument on a branch cut without a boundary-value side."""


class ThresholdProximityError(ValueError):
    """Bias too close to a critical value for a normalizable bound state."""


class PoleError(ZeroDivisionError):
    """Spectral parameter sits on the discrete eigenvalue."""


Side = Union[int, str, None]


def _side_sign(side: Side) -> int:
    if side is None:
        return 0
    if side in (1, "+", "plus", "upper"):
        return 1
    if side in (-1, "-", "minus", "lower"):
        return -1
    raise ValueError(f"unknown boundary-value side {side!r}")


@dataclass(frozen=True)
class ModelParams:
    """Dot energy ``E0`` and dot-lead coupling ``tau``.

    The working regime is ``E0 >= 10`` and ``0 < |tau| <= 1``.  The
    decoupled reference system (``tau = 0``) is only reachable through
    :meth:`decoupled`, which the comparison dynamics and limiting-case tests
    need.
    """

    E0: float = 10.0
    tau: float = 0.1
    _allow_decoupled: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.E0) or self.E0 < 10.0:
            raise ValueError(f"E0 must be >= 10, got {self.E0}")
        if not np.isfinite(self.tau) or abs(self.tau) > 1.0:
            raise ValueError(f"|tau| must be <= 1, got {self.tau}")
        if self.tau == 0.0 and not self._allow_decoupled:
            raise ValueError("tau = 0 is only available via ModelParams.decoupled")

    @classmethod
    def decoupled(cls, E0: float = 10.0) -> "ModelParams":
        return cls(E0=E0, tau=0.0, _allow_decoupled=True)

    @property
    def is_decoupled(self) -> bool:
        return self.tau == 0.0

    def with_tau(self, tau: float) -> "ModelParams":
        if tau == 0.0:
            return ModelParams.decoupled(self.E0)
        return ModelParams(E0=self.E0, tau=tau)


class Interval(enum.Enum):
    ABOVE_LEFT_BAND = "above_left_band"
    BETWEEN_BANDS = "between_bands"


class Lead(enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    @classmethod
    def parse(cls, value) -> "Lead":
        if isinstance(value, Lead):
            return value
        key = str(value).lower()
        if key in ("left", "l", "-", "minus"):
            return cls.LEFT
        if key in ("right", "r", "+", "plus"):
            return cls.RIGHT
        raise ValueError(f"unknown lead {value!r}")


# ---------------------------------------------------------------- zeta1


def zeta1(z, side: Side = None):
    """Decaying solution of ``zeta + 1/zeta = z`` on the half-line lattice.

    Off the band ``[-2, 2]`` this is ``(z/2)(1 - sqrt(1 - 4/z**2))`` with the
    principal square root, evaluated in the cancellation-free form
    ``2 / (z (1 + sqrt(1 - 4/z**2)))``.  On the band, ``side=+1`` gives the
    boundary value from the upper half-plane, ``E + i0``, which equals
    ``exp(-ik)`` for ``E = 2 cos k``; ``side=-1`` gives the conjugate.

    Parameters
    ----------
    z : complex or array_like
    side : {None, +1, -1, "+", "-"}
        Required whenever a real ``z`` lies strictly inside ``(-2, 2)``.

    Returns
    -------
    complex or ndarray of complex
    """
    sign = _side_sign(side)
    arr = np.asarray(z, dtype=complex)
    on_band = (arr.imag == 0.0) & (np.abs(arr.real) < 2.0)
    if np.any(on_band) and sign == 0:
        raise DomainError("zeta1 needs a boundary-value side for z inside (-2, 2)")

    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(1.0 - 4.0 / (arr * arr))
        out = 2.0 / (arr * (1.0 + root))
    if np.any(on_band):
        e = arr.real
        band = e / 2.0 - sign * 1j * np.sqrt(np.clip(1.0 - e * e / 4.0, 0.0, None))
        out = np.where(on_band, band, out)
    if np.ndim(z) == 0:
        return complex(out)
    return out


def zeta1_derivative(z, side: Side = None):
    """``d zeta1 / dz = zeta1**2 / (zeta1**2 - 1)``."""
    zeta = np.asarray(zeta1(z, side))
    out = zeta * zeta / (zeta * zeta - 1.0)
    return complex(out) if np.ndim(z) == 0 else out


def _even_power_sum(zeta: complex, count):
    # sum_{j<count} zeta**(2j), stable near |zeta| = 1
    q = zeta * zeta
    count = np.asarray(count)
    if abs(1.0 - q) > 1e-6:
        out = (1.0 - q**count) / (1.0 - q)
    else:
        partial = np.concatenate([[0.0], np.cumsum(q ** np.arange(int(count.max())))])
        out = partial[count]
    return complex(out) if out.ndim == 0 else out


def lead_resolvent_element(m, n, z, side: Side = None):
    """``<m|(h_lead - z)^{-1}|n>`` for the Dirichlet half-line Laplacian.

    Uses ``zeta/(zeta**2 - 1) (zeta**|m-n| - zeta**(m+n+2))`` rewritten as
    ``-zeta**(|m-n|+1) * sum_{j<=min(m,n)} zeta**(2j)``, which stays finite
    at the band edges.  ``m`` and ``n`` may be integer arrays (broadcast).
    """
    m, n = np.asarray(m), np.asarray(n)
    if np.any(m < 0) or np.any(n < 0):
        raise ValueError("site indices are non-negative")
    zeta = complex(zeta1(z, side))
    lo = np.minimum(m, n)
    out = -(zeta ** (np.abs(m - n) + 1)) * _even_power_sum(zeta, lo + 1)
    return complex(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------------- G function


def g_function(z, v: float, params: ModelParams, side: Side = None):
    """Feshbach scalar ``E0 - z + tau**2 (zeta1(z - v) + zeta1(z))``."""
    z = np.asarray(z, dtype=complex)
    out = params.E0 - z + params.tau**2 * (zeta1(z - v, side) + zeta1(z, side))
    return complex(out) if out.ndim == 0 else out


def dg_dx(x, v: float, params: ModelParams, side: Side = None):
    """Derivative of ``G(x; v)`` in the spectral variable."""
    x = np.asarray(x, dtype=complex)
    out = -1.0 + params.tau**2 * (
        np.asarray(zeta1_derivative(x - v, side)) + np.asarray(zeta1_derivative(x, side))
    )
    return complex(out) if out.ndim == 0 else out


def _zeta_edge(t: float) -> tuple[float, float]:
    """``zeta1(2 + t**2)`` and ``1 - zeta1(2 + t**2)`` without cancellation."""
    s = t * math.sqrt(4.0 + t * t)
    one_minus = (s - t * t) / 2.0
    return 1.0 - one_minus, one_minus


def _zeta_real(x: float) -> float:
    # real |x| > 2
    return 2.0 / (x * (1.0 + math.sqrt(1.0 - 4.0 / (x * x))))


def threshold_function(t: float, v: float, params: ModelParams, regime: int = 1) -> float:
    """``G`` on the threshold parametrization of the eigenvalue.

    ``regime=1`` evaluates ``G(v + 2 + t**2; v)``, ``regime=2`` evaluates
    ``G(v - 2 - t**2; v)``.  Both are written in terms of ``t`` so that the
    result is accurate even when ``t**2`` is below the resolution of ``v``.
    """
    tau2 = params.tau**2
    zeta_edge, _ = _zeta_edge(t)
    if regime == 1:
        x = v + 2.0 + t * t
        return params.E0 - x + tau2 * (zeta_edge + _zeta_real(x))
    if regime == 2:
        x = v - 2.0 - t * t
        return params.E0 - x + tau2 * (-zeta_edge + _zeta_real(x))
    raise ValueError("regime is 1 or 2")


# -------------------------------------------------------- critical biases


@dataclass(frozen=True)
class CriticalBiases:
    vc1: float
    vc2: float

    def __post_init__(self):
        if not 4.0 < self.vc1 < self.vc2:
            raise ValueError(f"expected 4 < vc1 < vc2, got {self.vc1}, {self.vc2}")

    def regime(self, v: float) -> int:
        """0 below vc1, 1 between the critical values, 2 above vc2."""
        if v < self.vc1:
            return 0
        if v <= self.vc2:
            return 1
        return 2

    def distance(self, v: float) -> float:
        return min(abs(v - self.vc1), abs(v - self.vc2))


@functools.lru_cache(maxsize=64)
def critical_biases(params: ModelParams) -> CriticalBiases:
    """Bias values at which the discrete eigenvalue meets a band edge.

    ``vc1`` solves ``G(2 + v; v) = 0`` and ``vc2`` solves ``G(v - 2; v) = 0``.
    Both left-hand sides decrease strictly in ``v``.
    """
    tau2 = params.tau**2
    E0 = params.E0

    def upper_edge(v):
        return E0 - 2.0 - v + tau2 * (1.0 + _zeta_real(v + 2.0))

    def lower_edge(v):
        if v == 4.0:
            return E0 - 2.0 + tau2 * (-1.0 + 1.0)
        return E0 + 2.0 - v + tau2 * (-1.0 + _zeta_real(v - 2.0))

    span = E0 + 10.0
    vc1 = brentq(upper_edge, 0.0, span, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
    vc2 = brentq(lower_edge, vc1, span + 4.0, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
    return CriticalBiases(vc1=vc1, vc2=vc2)


# ------------------------------------------------------------ eigenvalues


@dataclass(frozen=True)
class ThresholdData:
    """Square-root distance ``t`` of the eigenvalue from its band edge."""

    t_of_v: float
    gap: float
    regime: int


def _solve_threshold(v: float, params: ModelParams) -> Optional[ThresholdData]:
    if params.is_decoupled:
        raise ValueError("the decoupled dot has an eigenvalue at E0 for every v")
    crit = critical_biases(params)
    regime = crit.regime(v)
    if regime == 1:
        return None
    fn_regime = 1 if regime == 0 else 2
    # F(0, v) > 0 in the bound regimes and F decreases in t.
    t_hi = math.sqrt(params.E0 + 10.0 + abs(v))
    f0 = threshold_function(0.0, v, params, fn_regime)
    if fn_regime == 1 and f0 <= 0.0 or fn_regime == 2 and f0 >= 0.0:
        # v numerically on the threshold
        return ThresholdData(t_of_v=0.0, gap=0.0, regime=fn_regime)
    if fn_regime == 2:
        # between bands: x = v - 2 - t**2 must stay above 2
        t_hi = math.sqrt(max(v - 4.0, 0.0)) * (1.0 - 1e-15)

    def fn(t):
        return threshold_function(t, v, params, fn_regime)

    t = brentq(fn, 0.0, t_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=400)
    return ThresholdData(t_of_v=t, gap=t * t, regime=fn_regime)


def find_eigenvalue(v: float, params: ModelParams) -> Optional[tuple[float, Interval]]:
    """Discrete eigenvalue of ``h(v)`` or ``None`` between the critical biases.

    The root of ``G(x; v)`` is bracketed in the threshold variable
    ``x = v + 2 + t**2`` (resp. ``v - 2 - t**2``), which keeps the bracket
    valid arbitrarily close to the critical biases.
    """
    if v < 0:
        raise ValueError("bias must be non-negative")
    data = _solve_threshold(v, params)
    if data is None:
        return None
    if data.regime == 1:
        return v + 2.0 + data.gap, Interval.ABOVE_LEFT_BAND
    return v - 2.0 - data.gap, Interval.BETWEEN_BANDS


def threshold_data(v: float, params: ModelParams) -> ThresholdData:
    """``t(v)`` and the gap ``t(v)**2`` between eigenvalue and band edge."""
    data = _solve_threshold(v, params)
    if data is None:
        raise ValueError(f"no discrete eigenvalue at v={v}")
    return data


# ------------------------------------------------------------ bound state


@dataclass(frozen=True)
class BoundState:
    """Closed-form normalized eigenvector of the discrete eigenvalue.

    Lead amplitudes are ``tau * psi_dot * decay**(m + 1)`` on site ``m`` of
    the respective lead; ``psi_dot > 0``.  ``norm`` is the norm of the
    unnormalized vector with unit dot amplitude.
    """

    v: float
    lam: float
    interval: Interval
    psi_dot: float
    decay_left: float
    decay_right: float
    norm: float
    tau: float

    def decay(self, lead) -> float:
        return self.decay_left if Lead.parse(lead) is Lead.LEFT else self.decay_right

    def lead_amplitudes(self, lead, n_sites: int) -> np.ndarray:
        """Amplitudes on sites ``0 .. n_sites-1`` of one lead."""
        powers = self.decay(lead) ** np.arange(1, n_sites + 1)
        return self.tau * self.psi_dot * powers

    def lead_weight(self, lead, start: int = 0) -> float:
        """Norm squared carried by sites ``m >= start`` of one lead."""
        q = self.decay(lead) ** 2
        return (self.tau * self.psi_dot) ** 2 * q ** (start + 1) / (1.0 - q)

    def sites_for_tail(self, tail: float = 1e-20) -> int:
        """Lead length beyond which both tails carry less than ``tail``."""
        n = 1
        for lead in Lead:
            q = self.decay(lead) ** 2
            if q == 0.0:
                continue
            w0 = (self.tau * self.psi_dot) ** 2 * q / (1.0 - q)
            if w0 > tail:
                n = max(n, int(math.ceil(math.log(tail / w0) / math.log(q))) + 1)
        return n


def bound_state(v: float, params: ModelParams, floor: float = THRESHOLD_FLOOR) -> BoundState:
    crit = critical_biases(params)
    if crit.distance(v) < floor:
        raise ThresholdProximityError(f"v={v} is within {floor} of a critical bias")
    data = _solve_threshold(v, params)
    if data is None:
        raise ValueError(f"no discrete eigenvalue at v={v}")
    t = data.t_of_v
    zeta_edge, one_minus = _zeta_edge(t)
    if data.regime == 1:
        lam = v + 2.0 + data.gap
        interval = Interval.ABOVE_LEFT_BAND
        decay_left = zeta_edge
        decay_right = _zeta_real(lam)
    else:
        lam = v - 2.0 - data.gap
        interval = Interval.BETWEEN_BANDS
        decay_left = -zeta_edge
        decay_right = _zeta_real(lam)
    edge_tail = zeta_edge**2 / (one_minus * (1.0 + zeta_edge))
    other_tail = decay_right**2 / (1.0 - decay_right**2)
    norm_sq = 1.0 + params.tau**2 * (edge_tail + other_tail)
    norm = math.sqrt(norm_sq)
    return BoundState(
        v=v,
        lam=lam,
        interval=interval,
        psi_dot=1.0 / norm,
        decay_left=decay_left,
        decay_right=decay_right,
        norm=norm,
        tau=params.tau,
    )


def projection_matrix_element(m: int, lead, v: float, params: ModelParams) -> float:
    """``<m|P_d(v)|m>`` on site ``m`` of ``lead``."""
    state = bound_state(v, params)
    amp = state.tau * state.psi_dot * state.decay(lead) ** (m + 1)
    return amp * amp


@dataclass(frozen=True)
class ProjectionAsymptote:
    """Rank-one operator ``coefficient * |w><w|`` on the left lead,
    ``w_m = decay**(m + 1)``."""

    coefficient: float
    decay: float

    def vector(self, n_sites: int) -> np.ndarray:
        return self.decay ** np.arange(1, n_sites + 1)

    def apply(self, x: np.ndarray) -> np.ndarray:
        w = self.vector(len(x))
        return self.coefficient * w * np.dot(w, x)


def projection_asymptote(v: float, params: ModelParams) -> ProjectionAsymptote:
    """Leading part of the bound-state projector near a critical bias.

    The coefficient is ``tau**2 / |G'(lambda)|``.  The residue of ``1/G`` at
    the eigenvalue gives ``psi_dot**2 = 1/|G'(lambda)|``, so the coefficient is
    formed from the bound-state normalization, which stays accurate where
    ``G'`` itself loses digits near the band edge.
    """
    state = bound_state(v, params)
    return ProjectionAsymptote(coefficient=(params.tau * state.psi_dot) ** 2, decay=state.decay_left)


# --------------------------------------------------------- resolvent column


@dataclass(frozen=True)
class ResolventColumn:
    """``R(z)|S>`` as dot coefficient plus two geometric lead tails.

    Component on site ``m`` of a lead is ``lead_coefficient * (-decay**(m+1))``.
    """

    dot: complex
    left: complex
    right: complex
    decay_left: complex
    decay_right: complex

    def lead_components(self, lead, n_sites: int) -> np.ndarray:
        if Lead.parse(lead) is Lead.LEFT:
            coef, decay = self.left, self.decay_left
        else:
            coef, decay = self.right, self.decay_right
        return -coef * decay ** np.arange(1, n_sites + 1)


def resolvent_column_dot(
    z, v: float, params: ModelParams, side: Side = None, pole_tol: float = 1e-12
) -> ResolventColumn:
    g = g_function(z, v, params, side)
    if abs(g) < pole_tol:
        raise PoleError(f"G({z}; {v}) = {g} vanishes: z is the discrete eigenvalue")
    inv = 1.0 / g
    return ResolventColumn(
        dot=inv,
        left=-params.tau * inv,
        right=-params.tau * inv,
        decay_left=zeta1(complex(z) - v, side),
        decay_right=zeta1(z, side),
    )


# ------------------------------------------------------------- diagnostics


def write_spectrum_csv(path, biases: Iterable[float], params: ModelParams) -> int:
    """Write ``v, lambda, gap, psi_dot_sq, decay_left, decay_right`` rows.

    Biases without a discrete eigenvalue (or too close to a threshold for a
    normalizable state) get empty fields.  Returns the row count.
    """
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["v", "lambda", "gap", "psi_dot_sq", "decay_left", "decay_right"])
        for v in biases:
            v = float(v)
            try:
                state = bound_state(v, params)
            except (ThresholdProximityError, ValueError):
                writer.writerow([repr(v), "", "", "", "", ""])
            else:
                gap = threshold_data(v, params).gap
                writer.writerow(
                    [repr(v), repr(state.lam), repr(gap), repr(state.psi_dot**2),
                     repr(state.decay_left), repr(state.decay_right)]
                )
            rows += 1
    return rows
