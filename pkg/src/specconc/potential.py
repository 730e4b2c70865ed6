"""Slowly decaying oscillatory potentials q(x) = xi(x) cos x.

The amplitude is xi(x) = -c (1 + x)**(-a).  Its derivatives have the closed
form -c (-1)**k a(a+1)...(a+k-1) (1 + x)**(-a-k), which the accelerated
integrand evaluates at every solver step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "PotentialSpec",
    "UnsupportedOrderError",
    "ValidityReport",
    "classify_validity",
    "xi_derivative",
]

DEFAULT_MAX_ORDER = 6


class UnsupportedOrderError(ValueError):
    """Requested derivative order exceeds the configured maximum."""


@dataclass(frozen=True)
class PotentialSpec:
    """Coupling ``c`` and decay exponent ``a`` of q(x) = -c (1+x)^-a cos x.

    ``c = 0`` is accepted and gives the free problem; it is used throughout
    as a closed-form check.
    """

    c: float
    a: float
    max_order: int = DEFAULT_MAX_ORDER

    def __post_init__(self):
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError(f"coupling c must be finite and >= 0, got {self.c!r}")
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError(f"decay exponent a must be finite and > 0, got {self.a!r}")
        if self.max_order < 0:
            raise ValueError("max_order must be nonnegative")

    def xi(self, x, k=0):
        return xi_derivative(self, k, x)

    def q(self, x):
        x = np.asarray(x, dtype=float)
        return -self.c * (1.0 + x) ** (-self.a) * np.cos(x)

    @property
    def integrable(self) -> bool:
        return self.a > 1


def _rising(a: float, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= a + j
    return out


def xi_derivative(spec: PotentialSpec, k: int, x):
    """k-th derivative of xi(x) = -c (1+x)^-a, vectorised over ``x``."""
    if k < 0 or k > spec.max_order:
        raise UnsupportedOrderError(
            f"derivative order {k} outside 0..{spec.max_order}"
        )
    const = -spec.c * (-1.0) ** k * _rising(spec.a, k)
    out = const * (1.0 + np.asarray(x, dtype=float)) ** (-spec.a - k)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ValidityReport:
    integrability_class: int
    excluded_resonances: frozenset = field(default_factory=frozenset)
    case: int = 1

    @property
    def note(self) -> str:
        return {
            1: "case 1: xi integrable, formula valid for all mu > 0",
            2: "case 2: M = 1, only mu = N^2/4 with nonzero Fourier coefficient c_N excluded",
            3: "case 3: M >= 2, whole resonance set N^2/4 excluded",
        }[self.case]


# Complex Fourier coefficients of cos x: c_{+1} = c_{-1} = 1/2, others zero.
_COS_FOURIER = {1: Fraction(1, 2), -1: Fraction(1, 2)}


def classify_validity(spec: PotentialSpec, depth: int = 4) -> ValidityReport:
    """Which mu > 0 the spectral-derivative formula is known to hold for.

    ``depth`` bounds the enumeration N = 1..depth of the resonance set in
    case 3 (it is infinite in principle).
    """
    if depth < 1:
        raise ValueError("depth must be a positive integer")
    a = Fraction(spec.a)
    if a > 1:
        return ValidityReport(0, frozenset(), 1)
    # xi is in L^p iff a p > 1, so M is the largest integer with a M <= 1.
    m = math.floor(1 / a)
    if m == 1:
        excluded = frozenset(
            Fraction(n * n, 4) for n in range(1, depth + 1) if _COS_FOURIER.get(n, 0) != 0
        )
        return ValidityReport(m, excluded, 2)
    excluded = frozenset(Fraction(n * n, 4) for n in range(1, depth + 1))
    return ValidityReport(m, excluded, 3)
