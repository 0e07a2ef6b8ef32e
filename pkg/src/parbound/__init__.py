"""Numerical laboratory for boundary regularity of non-divergence parabolic equations.

Submodules
----------
moduli      moduli of continuity, Dini tests, the weighted-exponential transform
geometry    parabolic distance, cylinders, graph domains, C^1 condition checks
regdist     regularized distance to a graph boundary and its pointwise bounds
barriers    Pucci operators, power barriers of the distance, C0 calibration
solver      Shortley-Weller finite differences on curved parabolic domains
harness     theorem-level experiments and reports
cli         manifest runner
"""

from .errors import (CalibrationError, ConfigError, ContractError, DegeneracyError,
                     DomainError, ParboundError, PropertyFailure, ResolutionError, SolverError)

__all__ = ["CalibrationError", "ConfigError", "ContractError", "DegeneracyError", "DomainError",
           "ParboundError", "PropertyFailure", "ResolutionError", "SolverError"]
