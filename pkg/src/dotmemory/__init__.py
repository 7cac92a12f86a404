"""Time-dependent transport through a single-level dot between two
tight-binding leads, with a bias switched adiabatically on the left lead.

Modules
-------
spectral
    Closed-form resolvent, critical biases and the discrete eigenpair.
lattice
    Finite tridiagonal truncations and their eigensystems.
profiles
    Switching profiles for the three scenarios and equilibrium occupations.
propagation
    Crank-Nicolson evolution and adiabatic expectation values.
scattering
    Scattering states, memory term, wave operators.
experiments
    Sweeps, extrapolation and reports; ``cli`` wraps them.
"""

from .spectral import ModelParams, bound_state, critical_biases, find_eigenvalue, zeta1
from .profiles import FermiSpec, ScenarioKind, make_scenario
from .propagation import Observable, PropagatorConfig, adiabatic_expectation, bound_state_occupation
from .scattering import memory_term, steady_state_expectation
from .experiments import ExperimentConfig, run, report

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "bound_state",
    "critical_biases",
    "find_eigenvalue",
    "zeta1",
    "FermiSpec",
    "ScenarioKind",
    "make_scenario",
    "Observable",
    "PropagatorConfig",
    "adiabatic_expectation",
    "bound_state_occupation",
    "memory_term",
    "steady_state_expectation",
    "ExperimentConfig",
    "run",
    "report",
]
