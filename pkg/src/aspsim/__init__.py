"""
aspsim - Archimedean survival processes

Simulation, transition densities and copula checks for Archimedean survival
processes and their Liouville generalisation, built on gamma random bridges.
"""

__version__ = "0.1.0"

from .config import RunConfig
from .copula import EmpiricalSample, asp_terminal_copula, copula_eval, empirical_copula
from .genlaw import (
    ArchGenerator,
    FiniteMixture,
    GammaLaw,
    GeneratingLaw,
    PointMass,
    TabulatedDensity,
    big_psi,
    conditional_norm_law,
    marginal_survival,
    williamson_inverse,
)
from .procs import (
    MultiPath,
    ProcessSpec,
    TimeGrid,
    asp_transition_density,
    conditional_moments,
    sample_asp_split,
    sample_liouville_split,
    sample_transition_stepping,
    simulate,
)
from .util import AspError, ConfigError, DomainError, NumericError, OutOfSupportError
from .validate import ValidationEngine

__all__ = [
    "RunConfig",
    "EmpiricalSample",
    "asp_terminal_copula",
    "copula_eval",
    "empirical_copula",
    "ArchGenerator",
    "FiniteMixture",
    "GammaLaw",
    "GeneratingLaw",
    "PointMass",
    "TabulatedDensity",
    "big_psi",
    "conditional_norm_law",
    "marginal_survival",
    "williamson_inverse",
    "MultiPath",
    "ProcessSpec",
    "TimeGrid",
    "asp_transition_density",
    "conditional_moments",
    "sample_asp_split",
    "sample_liouville_split",
    "sample_transition_stepping",
    "simulate",
    "AspError",
    "ConfigError",
    "DomainError",
    "NumericError",
    "OutOfSupportError",
    "ValidationEngine",
]
