"""Spectral concentration for -y'' + q y = mu y with q = -c (1+x)^-a cos x."""
from .concentrate import (
    ConcentrationPoint,
    ScanConfig,
    detect_transition,
    find_rho_maxima,
    scan_concentration,
    trace_point,
)
from .estimator import ConcentrationScanner, SpectralDensity
from .integrate import (
    SolverConfig,
    rho_prime_accelerated,
    rho_prime_direct,
    solve_theta,
)
from .potential import PotentialSpec, classify_validity
from .symbolic import (
    ExcludedValueError,
    Expansion,
    evaluate_constant,
    evaluate_residual,
    expand,
)

__version__ = "0.1.0"

__all__ = [
    "ConcentrationPoint",
    "ConcentrationScanner",
    "ExcludedValueError",
    "Expansion",
    "PotentialSpec",
    "ScanConfig",
    "SolverConfig",
    "SpectralDensity",
    "classify_validity",
    "detect_transition",
    "evaluate_constant",
    "evaluate_residual",
    "expand",
    "find_rho_maxima",
    "rho_prime_accelerated",
    "rho_prime_direct",
    "scan_concentration",
    "solve_theta",
    "trace_point",
]
