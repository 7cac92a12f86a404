"""Finite truncations of ``h(v)`` in chain ordering.

Chain ordering lists the left lead reversed, then the dot, then the right
lead::

    (n_left-1)_-, ..., 1_-, 0_-, S, 0_+, 1_+, ..., (n_right-1)_+

so the Hamiltonian is exactly tridiagonal.  Both far ends carry Dirichlet
boundary conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.fft import dst
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal

from .spectral import BoundState, Lead, ModelParams

__all__ = [
    "DEFAULT_DIAGONALIZATION_CAP",
    "DimensionCapError",
    "LatticeLayout",
    "TruncatedHamiltonian",
    "Eigensystem",
    "assemble",
    "diagonalize",
    "eigenvalues_in",
    "apply_equilibrium",
    "equilibrium_expectation",
    "free_lead_eigenbasis",
    "lead_sine_transform",
    "embed_bound_state",
    "exact_evolution",
    "basis_vector",
]

DEFAULT_DIAGONALIZATION_CAP = 8192
SIZING_PAD = 64


class DimensionCapError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeLayout:
    n_left: int
    n_right: int

    def __post_init__(self):
        if self.n_left < 1 or self.n_right < 1:
            raise ValueError("each lead needs at least one site")

    @classmethod
    def symmetric(cls, n_lead: int) -> "LatticeLayout":
        return cls(n_lead, n_lead)

    @classmethod
    def for_duration(cls, duration: float, pad: int = SIZING_PAD) -> "LatticeLayout":
        """Leads long enough that nothing reflected at the far ends returns
        to the dot within ``duration`` (group velocity at most 2)."""
        n = int(math.ceil(2.0 * duration)) + pad
        return cls(n, n)

    @property
    def dim(self) -> int:
        return self.n_left + 1 + self.n_right

    @property
    def dot(self) -> int:
        return self.n_left

    def index(self, lead, m: int) -> int:
        """Chain index of site ``m`` of ``lead``."""
        lead = Lead.parse(lead)
        if lead is Lead.LEFT:
            if not 0 <= m < self.n_left:
                raise IndexError(m)
            return self.n_left - 1 - m
        if not 0 <= m < self.n_right:
            raise IndexError(m)
        return self.n_left + 1 + m

    def lead_view(self, x: np.ndarray, lead) -> np.ndarray:
        """Amplitudes of one lead in lead order (site 0 first)."""
        if Lead.parse(lead) is Lead.LEFT:
            return x[: self.n_left][::-1]
        return x[self.n_left + 1:]

    def from_leads(self, left: np.ndarray, dot, right: np.ndarray, dtype=complex) -> np.ndarray:
        """Assemble a chain vector from lead-ordered pieces (zero padded)."""
        out = np.zeros(self.dim, dtype=dtype)
        left = np.asarray(left)[: self.n_left]
        right = np.asarray(right)[: self.n_right]
        out[self.n_left - len(left): self.n_left] = left[::-1]
        out[self.n_left] = dot
        out[self.n_left + 1: self.n_left + 1 + len(right)] = right
        return out

    def left_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim)
        mask[: self.n_left] = 1.0
        return mask


def basis_vector(layout: LatticeLayout, site) -> np.ndarray:
    """Unit vector on the dot (``site="dot"``) or on ``(lead, m)``."""
    e = np.zeros(layout.dim, dtype=complex)
    if isinstance(site, str) and site.lower() in ("dot", "s"):
        e[layout.dot] = 1.0
    else:
        lead, m = site
        e[layout.index(lead, m)] = 1.0
    return e


@dataclass(frozen=True, eq=False)
class TruncatedHamiltonian:
    layout: LatticeLayout
    v: float
    params: ModelParams
    diagonal: np.ndarray
    offdiagonal: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def to_dense(self) -> np.ndarray:
        mat = np.diag(self.diagonal) + np.diag(self.offdiagonal, 1) + np.diag(self.offdiagonal, -1)
        return mat

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diagonal.reshape((-1,) + (1,) * (x.ndim - 1)) * x
        off = self.offdiagonal.reshape((-1,) + (1,) * (x.ndim - 1))
        y[:-1] += off * x[1:]
        y[1:] += off * x[:-1]
        return y

    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral radius."""
        off = np.abs(self.offdiagonal)
        row = np.abs(self.diagonal).copy()
        row[:-1] += off
        row[1:] += off
        return float(row.max())


def assemble(v: float, params: ModelParams, layout: LatticeLayout) -> TruncatedHamiltonian:
    n_left, dim = layout.n_left, layout.dim
    diagonal = np.zeros(dim)
    diagonal[:n_left] = v
    diagonal[n_left] = params.E0
    offdiagonal = np.ones(dim - 1)
    offdiagonal[n_left - 1] = params.tau
    offdiagonal[n_left] = params.tau
    return TruncatedHamiltonian(layout, float(v), params, diagonal, offdiagonal)


@dataclass(frozen=True)
class Eigensystem:
    values: np.ndarray
    vectors: np.ndarray


def diagonalize(H: TruncatedHamiltonian, cap: int = DEFAULT_DIAGONALIZATION_CAP) -> Eigensystem:
    """Full eigendecomposition, cached on ``H``.

    Raises :class:`DimensionCapError` above ``cap`` sites; the acceptance
    crossing runs raise the cap explicitly because they need leads of a few
    thousand sites each.
    """
    if H.dim > cap:
        raise DimensionCapError(f"dimension {H.dim} exceeds diagonalization cap {cap}")
    cached = H._cache.get("eig")
    if cached is None:
        values, vectors = eigh_tridiagonal(H.diagonal, H.offdiagonal, lapack_driver="stemr")
        cached = Eigensystem(values, vectors)
        H._cache["eig"] = cached
    return cached


def eigenvalues_in(H: TruncatedHamiltonian, lo: float, hi: float) -> np.ndarray:
    """Eigenvalues in ``(lo, hi]`` without forming eigenvectors."""
    return eigvalsh_tridiagonal(H.diagonal, H.offdiagonal, select="v", select_range=(lo, hi))


def _coefficients(eig: Eigensystem, psi: np.ndarray) -> np.ndarray:
    return eig.vectors.T @ psi


def apply_equilibrium(fermi: Callable, H: TruncatedHamiltonian, psi: np.ndarray,
                      cap: int = DEFAULT_DIAGONALIZATION_CAP) -> np.ndarray:
    """``f(H) psi`` through the eigenbasis of ``H``."""
    eig = diagonalize(H, cap)
    coeffs = _coefficients(eig, psi)
    weights = np.asarray(fermi(eig.values), dtype=float)
    if coeffs.ndim > 1:
        weights = weights[:, None]
    return eig.vectors @ (weights * coeffs)


def equilibrium_expectation(fermi: Callable, H: TruncatedHamiltonian, psi: np.ndarray,
                            cap: int = DEFAULT_DIAGONALIZATION_CAP) -> np.ndarray:
    """``<psi|f(H)|psi>``; for a matrix of columns, the full Gram matrix
    ``psi^H f(H) psi``."""
    eig = diagonalize(H, cap)
    coeffs = _coefficients(eig, psi)
    weights = np.asarray(fermi(eig.values), dtype=float)
    if coeffs.ndim == 1:
        return float(np.sum(weights * np.abs(coeffs) ** 2))
    return coeffs.conj().T @ (weights[:, None] * coeffs)


def free_lead_eigenbasis(length: int, shift: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a Dirichlet lead of ``length`` sites shifted by ``shift``.

    Returns energies ``2 cos(k pi / (L+1)) + shift`` for ``k = 1..L`` (so in
    descending order) and the matrix whose column ``k-1`` holds
    ``sqrt(2/(L+1)) sin(m k pi / (L+1))`` on sites ``m = 1..L``.
    """
    if length < 1:
        raise ValueError("lead length must be >= 1")
    k = np.arange(1, length + 1)
    angles = k * math.pi / (length + 1)
    energies = 2.0 * np.cos(angles) + shift
    vectors = math.sqrt(2.0 / (length + 1)) * np.sin(np.outer(k, k) * math.pi / (length + 1))
    return energies, vectors


def lead_sine_transform(x: np.ndarray) -> np.ndarray:
    """Coefficients of a lead-ordered vector in the free-lead eigenbasis.

    The orthonormal type-I sine transform is its own inverse, so the same
    call maps coefficients back to site amplitudes.
    """
    return dst(x, type=1, norm="ortho", axis=0)


def embed_bound_state(state: BoundState, layout: LatticeLayout, renormalize: bool = True) -> np.ndarray:
    """Closed-form bound state truncated to ``layout``."""
    left = state.lead_amplitudes(Lead.LEFT, layout.n_left)
    right = state.lead_amplitudes(Lead.RIGHT, layout.n_right)
    psi = layout.from_leads(left, state.psi_dot, right, dtype=float)
    if renormalize:
        psi /= np.linalg.norm(psi)
    return psi


def exact_evolution(H: TruncatedHamiltonian, t: float, psi: np.ndarray,
                    cap: int = DEFAULT_DIAGONALIZATION_CAP) -> np.ndarray:
    """``exp(-i t H) psi`` through the cached eigendecomposition."""
    eig = diagonalize(H, cap)
    coeffs = _coefficients(eig, psi)
    phases = np.exp(-1j * t * eig.values)
    if coeffs.ndim > 1:
        phases = phases[:, None]
    return eig.vectors @ (phases * coeffs)
