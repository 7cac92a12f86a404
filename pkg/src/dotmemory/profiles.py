"""Bias switching profiles ``v(s)`` on ``[-1, 0]`` and equilibrium occupations.

A profile is a list of pieces, each easing between two bias values over an
interval of macroscopic time ``s``.  Crossing scenarios carry jumps of size
``2*delta`` at ``s_c`` and ``s_c_prime`` so the instantaneous Hamiltonian
never sits on a threshold.  At both jump points the point value belongs to
the inner piece ``[s_c, s_c_prime]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .spectral import CriticalBiases, ModelParams, critical_biases, find_eigenvalue

__all__ = [
    "ScenarioKind",
    "Side",
    "Easing",
    "Piece",
    "BiasProfile",
    "FermiSpec",
    "ProfileError",
    "make_scenario",
    "alternate_profile",
    "evaluate",
    "validate",
    "DEFAULT_S_C",
    "DEFAULT_S_C_PRIME",
    "DEFAULT_RAMP",
]

DEFAULT_S_C = -0.8
DEFAULT_S_C_PRIME = -0.2
# Width in s of the fast ramps that move the bias into the middle of the
# window right after a crossing.
DEFAULT_RAMP = 0.05
SUBCRITICAL_MARGIN = 0.5


class ProfileError(ValueError):
    pass


class ScenarioKind(enum.IntEnum):
    SMOOTH_NO_CROSSING = 1
    CROSS_AND_RETURN = 2
    CROSS_TO_SECOND_REGIME = 3


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    POINT = "point"


class Easing(enum.Enum):
    """Monotone maps of ``[0, 1]`` onto itself.

    ``QUINTIC`` has vanishing first and second derivatives at both ends,
    ``CUBIC`` vanishing first derivatives, ``LINEAR`` none.
    """

    QUINTIC = "quintic"
    CUBIC = "cubic"
    LINEAR = "linear"

    def __call__(self, u):
        u = np.clip(u, 0.0, 1.0)
        if self is Easing.QUINTIC:
            return u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
        if self is Easing.CUBIC:
            return u * u * (3.0 - 2.0 * u)
        return u

    @property
    def max_second_derivative(self) -> float:
        # sup |d2/du2| over [0, 1]
        if self is Easing.QUINTIC:
            return 10.0 / math.sqrt(3.0)
        if self is Easing.CUBIC:
            return 6.0
        return 0.0


@dataclass(frozen=True)
class Piece:
    s0: float
    s1: float
    v0: float
    v1: float
    easing: Easing = Easing.QUINTIC

    def value(self, s):
        return self.v0 + (self.v1 - self.v0) * self.easing((np.asarray(s) - self.s0) / (self.s1 - self.s0))

    @property
    def second_derivative_bound(self) -> float:
        return abs(self.v1 - self.v0) * self.easing.max_second_derivative / (self.s1 - self.s0) ** 2


@dataclass(frozen=True)
class BiasProfile:
    kind: ScenarioKind
    params: ModelParams
    pieces: tuple[Piece, ...]
    delta: float = 0.0
    s_c: Optional[float] = None
    s_c_prime: Optional[float] = None
    settings: tuple = field(default=(), compare=False)

    @property
    def jumps(self) -> tuple[float, ...]:
        """Points where ``v`` jumps."""
        out = []
        for a, b in zip(self.pieces[:-1], self.pieces[1:]):
            if a.v1 != b.v0:
                out.append(a.s1)
        return tuple(out)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(p.s1 for p in self.pieces[:-1])

    @property
    def final_bias(self) -> float:
        return self.pieces[-1].v1

    @property
    def second_derivative_bound(self) -> float:
        return max(p.second_derivative_bound for p in self.pieces)

    def __call__(self, s, side: Side = Side.POINT):
        return evaluate(self, s, side)

    def values(self, s: np.ndarray) -> np.ndarray:
        """Vectorized point evaluation; points outside ``[-1, 0]`` are
        clamped (``v`` is frozen before -1 and after 0)."""
        s = np.clip(np.asarray(s, dtype=float), -1.0, 0.0)
        out = np.empty_like(s)
        inner = set(self._inner_piece_indices())
        for i, piece in enumerate(self.pieces):
            lo_closed = i == 0 or i in inner or self.pieces[i - 1].v1 == piece.v0
            hi_closed = i == len(self.pieces) - 1 or i in inner
            lo = s >= piece.s0 if lo_closed else s > piece.s0
            hi = s <= piece.s1 if hi_closed else s < piece.s1
            sel = lo & hi
            out[sel] = piece.value(s[sel])
        return out

    def _inner_piece_indices(self):
        if self.s_c is None:
            return []
        return [i for i, p in enumerate(self.pieces) if p.s0 >= self.s_c and p.s1 <= self.s_c_prime]

    def to_config(self) -> dict[str, str]:
        """``key = value`` pairs recreating this profile with make_scenario."""
        out = {"kind": str(int(self.kind)), "delta": repr(self.delta)}
        for key, value in self.settings:
            out[key] = value.value if isinstance(value, Easing) else repr(value)
        return out

    @classmethod
    def from_config(cls, section: dict, params: ModelParams) -> "BiasProfile":
        kwargs = {}
        for key, raw in section.items():
            if key in ("kind", "delta"):
                continue
            if key == "easing":
                kwargs[key] = Easing(raw.strip())
            elif raw.strip() == "None":
                kwargs[key] = None
            else:
                kwargs[key] = float(raw)
        return make_scenario(ScenarioKind(int(section["kind"])), params,
                             delta=float(section.get("delta", 0.0)), **kwargs)


def evaluate(profile: BiasProfile, s: float, side: Side = Side.POINT) -> float:
    """Bias at macroscopic time ``s`` with one-sided limits at jumps."""
    s = float(s)
    if not -1.0 <= s <= 0.0:
        raise ProfileError(f"s={s} outside [-1, 0]")
    side = Side(side) if not isinstance(side, Side) else side
    pieces = profile.pieces
    for i, piece in enumerate(pieces):
        if s == piece.s1 and i + 1 < len(pieces):
            nxt = pieces[i + 1]
            if side is Side.LEFT:
                return float(piece.v1)
            if side is Side.RIGHT:
                return float(nxt.v0)
            inner = profile._inner_piece_indices()
            return float(nxt.v0 if (i + 1) in inner else piece.v1)
        if piece.s0 <= s < piece.s1 or (s == piece.s1 and i + 1 == len(pieces)):
            return float(piece.value(s))
    raise ProfileError(f"no piece covers s={s}")


# --------------------------------------------------------------- builders


def _check_window(s_c: float, s_c_prime: float, ramp: float):
    if not -1.0 < s_c < s_c_prime < 0.0:
        raise ProfileError(f"need -1 < s_c < s_c_prime < 0, got {s_c}, {s_c_prime}")
    if 2.0 * ramp >= s_c_prime - s_c:
        raise ProfileError("ramps do not fit into the crossing window")


def _check_delta(delta: float, crit: CriticalBiases):
    limit = min(crit.vc1 - 4.0, crit.vc2 - crit.vc1) / 4.0
    if not 0.0 <= delta < limit:
        raise ProfileError(f"delta={delta} infeasible; need 0 <= delta < {limit:.6g}")


def make_scenario(
    kind: ScenarioKind,
    params: ModelParams,
    delta: float = 0.0,
    s_c: Optional[float] = DEFAULT_S_C,
    s_c_prime: Optional[float] = DEFAULT_S_C_PRIME,
    *,
    easing: Optional[Easing] = None,
    ramp: float = DEFAULT_RAMP,
    v_final: Optional[float] = None,
    v_peak: Optional[float] = None,
    ramp_end: float = 0.0,
) -> BiasProfile:
    """Build one of the three switching scenarios.

    Parameters
    ----------
    kind : ScenarioKind
    params : ModelParams
    delta : float
        Half-size of the jumps at the crossings.
    s_c, s_c_prime : float
        Jump times of the crossing scenarios (ignored for no crossing).
    easing : Easing, optional
        Shape of every smooth piece.  Defaults to ``LINEAR`` without
        crossing and ``QUINTIC`` otherwise.  A quintic no-crossing ramp has
        an adiabatic error that falls below double precision already at
        moderate ``eta``, which leaves no measurable convergence trend.
    ramp : float
        Duration in ``s`` of the fast ramps next to each crossing.
    v_final : float, optional
        Final bias ``v(0)`` of the no-crossing scenario (default ``vc1 - 1``).
    v_peak : float, optional
        Plateau bias inside the window of the cross-and-return scenario
        (default ``E0``, the centre of the shifted band; the dot level then
        sits in the middle of the left band and decays fastest).  For the
        second-regime scenario the window sweeps slowly through
        ``[v_peak - 0.5, v_peak + 0.5]``.
    ramp_end : float
        End of the single smooth piece of the no-crossing scenario; the bias
        is frozen on ``[ramp_end, 0]``.
    """
    kind = ScenarioKind(kind)
    if easing is None:
        easing = Easing.LINEAR if kind is ScenarioKind.SMOOTH_NO_CROSSING else Easing.QUINTIC
    easing = Easing(easing)
    crit = critical_biases(params)
    vc1, vc2 = crit.vc1, crit.vc2
    settings: list[tuple[str, object]] = [("easing", easing)]

    if kind is ScenarioKind.SMOOTH_NO_CROSSING:
        v_final = vc1 - 1.0 if v_final is None else float(v_final)
        if not 0.0 <= v_final < vc1:
            raise ProfileError(f"v_final={v_final} must stay below vc1={vc1}")
        if not -1.0 < ramp_end <= 0.0:
            raise ProfileError("ramp_end must lie in (-1, 0]")
        pieces = [Piece(-1.0, ramp_end, 0.0, v_final, easing)]
        if ramp_end < 0.0:
            pieces.append(Piece(ramp_end, 0.0, v_final, v_final, easing))
        settings += [("v_final", v_final), ("ramp_end", ramp_end), ("s_c", None), ("s_c_prime", None)]
        return BiasProfile(kind, params, tuple(pieces), 0.0, None, None, tuple(settings))

    if s_c is None or s_c_prime is None:
        raise ProfileError("crossing scenarios need s_c and s_c_prime")
    _check_window(s_c, s_c_prime, ramp)
    _check_delta(delta, crit)
    lo, hi = vc1 + delta, vc2 - delta
    settings += [("s_c", s_c), ("s_c_prime", s_c_prime), ("ramp", ramp)]

    if kind is ScenarioKind.CROSS_AND_RETURN:
        peak = params.E0 if v_peak is None else float(v_peak)
        peak = min(max(peak, lo), hi)
        settings.append(("v_peak", peak))
        pieces = [
            Piece(-1.0, s_c, 0.0, vc1 - delta, easing),
            Piece(s_c, s_c + ramp, lo, peak, easing),
            Piece(s_c + ramp, s_c_prime - ramp, peak, peak, easing),
            Piece(s_c_prime - ramp, s_c_prime, peak, lo, easing),
            Piece(s_c_prime, 0.0, vc1 - delta, vc1 - 1.0, easing),
        ]
    else:
        centre = params.E0 if v_peak is None else float(v_peak)
        w_lo = min(max(centre - 0.5, lo), hi)
        w_hi = min(max(centre + 0.5, w_lo), hi)
        settings.append(("v_peak", centre))
        pieces = [
            Piece(-1.0, s_c, 0.0, vc1 - delta, easing),
            Piece(s_c, s_c + ramp, lo, w_lo, easing),
            Piece(s_c + ramp, s_c_prime - ramp, w_lo, w_hi, easing),
            Piece(s_c_prime - ramp, s_c_prime, w_hi, hi, easing),
            Piece(s_c_prime, 0.0, vc2 + delta, vc2 + 1.0, easing),
        ]
    return BiasProfile(kind, params, tuple(pieces), float(delta), float(s_c), float(s_c_prime),
                       tuple(settings))


def alternate_profile(profile: BiasProfile, ramp_end: float = -0.4,
                      easing: Easing = Easing.QUINTIC) -> BiasProfile:
    """Different C2 path between the same endpoints as a no-crossing profile."""
    if profile.kind is not ScenarioKind.SMOOTH_NO_CROSSING:
        raise ProfileError("alternate paths are defined for the no-crossing scenario")
    return make_scenario(ScenarioKind.SMOOTH_NO_CROSSING, profile.params, easing=easing,
                         v_final=profile.final_bias, ramp_end=ramp_end)


# --------------------------------------------------------------- validation


def validate(profile: BiasProfile, criticals: Optional[CriticalBiases] = None,
             n_grid: int = 4001, spectral_samples: int = 41) -> list[str]:
    """Numerically re-check the scenario invariants; returns violations."""
    crit = criticals or critical_biases(profile.params)
    vc1, vc2 = crit.vc1, crit.vc2
    problems: list[str] = []
    tol = 1e-12
    kind, delta = profile.kind, profile.delta
    pieces = profile.pieces

    if abs(evaluate(profile, -1.0)) > tol:
        problems.append("v(-1) != 0")
    if pieces[0].s0 != -1.0 or pieces[-1].s1 != 0.0:
        problems.append("pieces do not cover [-1, 0]")
    for a, b in zip(pieces[:-1], pieces[1:]):
        if a.s1 != b.s0:
            problems.append(f"gap between pieces at s={a.s1}")
    expected_jumps = () if kind is ScenarioKind.SMOOTH_NO_CROSSING else (profile.s_c, profile.s_c_prime)
    if profile.jumps != expected_jumps:
        problems.append(f"jumps at {profile.jumps}, expected {expected_jumps}")

    s = np.linspace(-1.0, 0.0, n_grid)
    v = profile.values(s)

    # bounded second derivative on every piece
    for piece in pieces:
        ss = np.linspace(piece.s0, piece.s1, 201)
        h = ss[1] - ss[0]
        vv = piece.value(ss)
        d2 = np.abs(np.diff(vv, 2)) / h**2
        if d2.size and d2.max() > piece.second_derivative_bound * (1 + 1e-6) + 1e-6:
            problems.append(f"second derivative exceeds bound on [{piece.s0}, {piece.s1}]")

    if kind is ScenarioKind.SMOOTH_NO_CROSSING:
        if v.max() >= vc1:
            problems.append("sup v reaches vc1")
        elif v.max() > vc1 - SUBCRITICAL_MARGIN:
            problems.append(f"sup v = {v.max():.6g} within margin {SUBCRITICAL_MARGIN} of vc1")
    else:
        if delta <= 0.0:
            problems.append("degenerate crossing: delta must be positive (a jump is required)")
        sc, scp = profile.s_c, profile.s_c_prime
        left = lambda x: evaluate(profile, x, Side.LEFT)
        right = lambda x: evaluate(profile, x, Side.RIGHT)
        if abs(left(sc) - (vc1 - delta)) > 1e-9 or abs(right(sc) - (vc1 + delta)) > 1e-9:
            problems.append("first jump does not straddle vc1 by delta")
        if abs(evaluate(profile, sc) - right(sc)) > tol:
            problems.append("v(s_c) is not the right limit")
        if abs(evaluate(profile, scp) - left(scp)) > tol:
            problems.append("v(s_c_prime) is not the left limit")
        outside = (s < sc) | (s > scp)
        inside = ~outside
        if kind is ScenarioKind.CROSS_AND_RETURN:
            if abs(left(scp) - (vc1 + delta)) > 1e-9 or abs(right(scp) - (vc1 - delta)) > 1e-9:
                problems.append("second jump does not straddle vc1 by delta")
            if np.any(v[outside] > vc1 - delta + 1e-12):
                problems.append("v exceeds vc1 - delta outside the window")
            if np.any(v[inside] < vc1 + delta - 1e-12):
                problems.append("v drops below vc1 + delta inside the window")
            if np.any(v[inside] >= vc2):
                problems.append("sup v reaches vc2 inside the window")
            if abs(evaluate(profile, 0.0) - (vc1 - 1.0)) > 1e-9:
                problems.append("v(0) != vc1 - 1")
        else:
            if abs(left(scp) - (vc2 - delta)) > 1e-9 or abs(right(scp) - (vc2 + delta)) > 1e-9:
                problems.append("second jump does not straddle vc2 by delta")
            if np.any(np.diff(v) < -1e-12):
                problems.append("v is not increasing")
            if abs(evaluate(profile, 0.0) - (vc2 + 1.0)) > 1e-9:
                problems.append("v(0) != vc2 + 1")

        # spectral classification at continuity points
        if delta > 0.0:
            grid = np.linspace(-1.0, 0.0, spectral_samples)
            grid = grid[(grid != sc) & (grid != scp)]
            for si in grid:
                has = find_eigenvalue(evaluate(profile, si), profile.params) is not None
                want = not (sc <= si <= scp)
                if has != want:
                    problems.append(f"spectral classification wrong at s={si:.4g}")
                    break
    return problems


# --------------------------------------------------------------- occupation


@dataclass(frozen=True)
class FermiSpec:
    """Equilibrium occupation ``f_eq`` as a callable.

    Build with :meth:`fermi_dirac`, :meth:`constant`, :meth:`step` or
    :meth:`tabulated`.
    """

    kind: str
    beta: float = 1.0
    mu: float = 0.0
    value: float = 1.0
    table_x: tuple = ()
    table_y: tuple = ()

    def __post_init__(self):
        if self.kind not in ("fermi", "constant", "step", "table"):
            raise ValueError(f"unknown occupation kind {self.kind!r}")
        if self.kind == "fermi" and not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.kind == "table":
            x, y = np.asarray(self.table_x, float), np.asarray(self.table_y, float)
            if x.size < 2 or x.shape != y.shape or np.any(np.diff(x) <= 0):
                raise ValueError("table needs strictly increasing abscissae")
            if np.any(np.diff(y) > 0) and np.any(np.diff(y) < 0):
                raise ValueError("tabulated occupation must be monotone")
            if np.any(y < 0):
                raise ValueError("occupations are non-negative")
        if not 0.0 < self.sup <= 1.0:
            raise ValueError(f"need 0 < sup f <= 1, got {self.sup}")

    @classmethod
    def fermi_dirac(cls, beta: float = 1.0, mu: float = 10.0) -> "FermiSpec":
        return cls("fermi", beta=float(beta), mu=float(mu))

    @classmethod
    def constant(cls, value: float = 1.0) -> "FermiSpec":
        return cls("constant", value=float(value))

    @classmethod
    def step(cls, mu: float) -> "FermiSpec":
        """Indicator of ``x < mu`` (a spectral projection)."""
        return cls("step", mu=float(mu))

    @classmethod
    def tabulated(cls, x: Sequence[float], y: Sequence[float]) -> "FermiSpec":
        return cls("table", table_x=tuple(map(float, x)), table_y=tuple(map(float, y)))

    @property
    def sup(self) -> float:
        if self.kind == "fermi" or self.kind == "step":
            return 1.0
        if self.kind == "constant":
            return self.value
        return float(max(self.table_y))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "fermi":
            out = expit(-self.beta * (x - self.mu))
        elif self.kind == "constant":
            out = np.full_like(x, self.value)
        elif self.kind == "step":
            out = (x < self.mu).astype(float)
        else:
            out = np.interp(x, self.table_x, self.table_y)
        return float(out) if out.ndim == 0 else out

    def to_config(self) -> dict[str, str]:
        out = {"kind": self.kind}
        if self.kind == "fermi":
            out.update(beta=repr(self.beta), mu=repr(self.mu))
        elif self.kind == "constant":
            out["value"] = repr(self.value)
        elif self.kind == "step":
            out["mu"] = repr(self.mu)
        else:
            out["x"] = ", ".join(map(repr, self.table_x))
            out["y"] = ", ".join(map(repr, self.table_y))
        return out

    @classmethod
    def from_config(cls, section: dict) -> "FermiSpec":
        kind = section.get("kind", "fermi").strip()
        if kind == "fermi":
            return cls.fermi_dirac(float(section.get("beta", 1.0)), float(section.get("mu", 10.0)))
        if kind == "constant":
            return cls.constant(float(section.get("value", 1.0)))
        if kind == "step":
            return cls.step(float(section["mu"]))
        if kind == "table":
            xs = [float(t) for t in section["x"].split(",")]
            ys = [float(t) for t in section["y"].split(",")]
            return cls.tabulated(xs, ys)
        raise ValueError(f"unknown occupation kind {kind!r}")
