"""Pruefer angle and the spectral derivative rho'(mu).

    theta' = s - s^-1 q(x) sin^2 theta,   theta(0) = 0,  s = sqrt(mu)
    rho'(mu) = s / pi * exp(-s^-1 int_0^inf q sin 2 theta dx)

Two evaluators are provided.  The accelerated one advances theta together
with the residual integrand of an :class:`~specconc.symbolic.Expansion`
from I0(0) = C(mu).  The direct one integrates q sin 2 theta itself over
a (long) truncated range; it is the oracle for the accelerated path and
the only route for the general boundary condition.

All solvers are batched over mu: one ODE system carries every mu of the
batch, so a whole scan grid costs a single integration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .potential import PotentialSpec
from .symbolic import DEFAULT_GUARD, Expansion, ResidualEvaluator

__all__ = [
    "PruferTrace",
    "SolverConfig",
    "SolverFailure",
    "SpectralSample",
    "rho_prime_accelerated",
    "rho_prime_accelerated_batch",
    "rho_prime_direct",
    "rho_prime_direct_batch",
    "solve_theta",
    "theta_at",
]


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    x_max: float = 100.0
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = 0.1
    method: str = "DOP853"

    def __post_init__(self):
        if not self.x_max > 0:
            raise ValueError("x_max must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


@dataclass
class PruferTrace:
    """theta(x, mu) on a grid; theta is not reduced mod pi."""

    mu: float
    grid: np.ndarray
    theta: np.ndarray
    i0: Optional[np.ndarray] = None

    def mod_pi(self):
        return np.mod(self.theta, np.pi)


@dataclass(frozen=True)
class SpectralSample:
    mu: float
    s: float
    rho_prime: float
    i0_infinity: float
    method: str
    extra: dict = field(default_factory=dict, compare=False)


def _dirichlet_theta0(s):
    return np.zeros_like(s)


def _general_theta0(s, bc_angle):
    # -pi < theta(0) < 0 branch of -arctan(s tan alpha).
    t = -np.arctan(s * math.tan(bc_angle))
    return np.where(t > 0, t - np.pi, t)


def _general_prefactor(s, bc_angle):
    return s / math.sin(bc_angle) ** 2 / (s**2 + 1.0 / math.tan(bc_angle) ** 2)


def _integrate(rhs, y0, x_end, cfg: SolverConfig, t_eval=None):
    sol = solve_ivp(
        rhs,
        (0.0, float(x_end)),
        y0,
        method=cfg.method,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
        t_eval=t_eval,
    )
    if not sol.success:
        raise SolverFailure(sol.message)
    return sol


def theta_at(spec: PotentialSpec, mus, xs, cfg: SolverConfig = SolverConfig(), theta0=None):
    """theta at the sorted points ``xs`` for every mu; shape ``(len(xs), len(mus))``."""
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(mus <= 0):
        raise ValueError("mu must be positive")
    if np.any(np.diff(xs) < 0) or xs[0] < 0:
        raise ValueError("xs must be sorted and nonnegative")
    s = np.sqrt(mus)
    y0 = np.zeros_like(s) if theta0 is None else np.asarray(theta0, dtype=float)
    c, a = spec.c, spec.a

    def rhs(x, th):
        q = -c * (1.0 + x) ** (-a) * math.cos(x)
        return s - q / s * np.sin(th) ** 2

    out = np.empty((len(xs), len(mus)))
    start = 0
    if xs[0] == 0.0:
        n0 = int(np.searchsorted(xs, 0.0, side="right"))
        out[:n0] = y0
        start = n0
    if start < len(xs):
        sol = _integrate(rhs, y0, xs[-1], cfg, t_eval=xs[start:])
        out[start:] = sol.y.T
    return out


def solve_theta(spec: PotentialSpec, mu: float, cfg: SolverConfig = SolverConfig(),
                grid: Optional[Sequence[float]] = None) -> PruferTrace:
    """theta(x, mu) on ``grid`` (default: 0..x_max with spacing max_step)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    if grid is None:
        n = int(round(cfg.x_max / cfg.max_step))
        grid = np.linspace(0.0, cfg.x_max, n + 1)
    grid = np.asarray(grid, dtype=float)
    th = theta_at(spec, [mu], grid, cfg)[:, 0]
    return PruferTrace(mu=float(mu), grid=grid, theta=th)


def _coupled_rhs(spec, s, residual):
    c, a = spec.c, spec.a
    m = len(s)

    def rhs(x, y):
        th = y[m:]
        q = -c * (1.0 + x) ** (-a) * math.cos(x)
        dth = s - q / s * np.sin(th) ** 2
        di = residual(x, th)
        return np.concatenate([di, dth])

    return rhs


def rho_prime_accelerated_batch(exp: Expansion, spec: PotentialSpec, mus,
                                cfg: SolverConfig = SolverConfig(), guard: float = DEFAULT_GUARD):
    """rho' for every mu via the coupled system (I0, theta)' = (F, Pruefer rhs).

    Returns ``(rho_prime, i0_infinity)`` arrays.  Raises ExcludedValueError
    if any mu is excluded by the expansion.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    if np.any(mus <= 0):
        raise ValueError("mu must be positive")
    residual = ResidualEvaluator(exp, spec, mus, guard)
    s = np.sqrt(mus)
    y0 = np.concatenate([residual.constant, np.zeros_like(s)])
    sol = _integrate(_coupled_rhs(spec, s, residual), y0, cfg.x_max, cfg, t_eval=[cfg.x_max])
    i0 = sol.y[: len(s), -1]
    return s / np.pi * np.exp(-i0 / s), i0


def rho_prime_accelerated(exp: Expansion, spec: PotentialSpec, mu: float,
                          cfg: SolverConfig = SolverConfig(), guard: float = DEFAULT_GUARD) -> SpectralSample:
    rho, i0 = rho_prime_accelerated_batch(exp, spec, [mu], cfg, guard)
    return SpectralSample(float(mu), math.sqrt(mu), float(rho[0]), float(i0[0]), "accelerated")


def rho_prime_direct_batch(spec: PotentialSpec, mus, x_trunc: float,
                           bc_angle: Optional[float] = None, cfg: SolverConfig = SolverConfig()):
    """Truncated, unaccelerated rho'.  ``bc_angle=None`` means Dirichlet.

    For y(0) cos(alpha) + y'(0) sin(alpha) = 0 the prefactor s becomes
    s csc^2(alpha) / (s^2 + cot^2(alpha)) and theta(0) = -arctan(s tan(alpha)).
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    if np.any(mus <= 0):
        raise ValueError("mu must be positive")
    if not x_trunc > 0:
        raise ValueError("x_trunc must be positive")
    s = np.sqrt(mus)
    if bc_angle is None:
        th0, pref = _dirichlet_theta0(s), s
    else:
        if not 0 < bc_angle < math.pi:
            raise ValueError("boundary angle must lie in (0, pi)")
        th0, pref = _general_theta0(s, bc_angle), _general_prefactor(s, bc_angle)
    c, a = spec.c, spec.a
    m = len(s)

    def rhs(x, y):
        th = y[m:]
        q = -c * (1.0 + x) ** (-a) * math.cos(x)
        return np.concatenate([q * np.sin(2.0 * th), s - q / s * np.sin(th) ** 2])

    y0 = np.concatenate([np.zeros(m), th0])
    sol = _integrate(rhs, y0, x_trunc, replace(cfg, x_max=float(x_trunc)), t_eval=[x_trunc])
    i0 = sol.y[:m, -1]
    return pref / np.pi * np.exp(-i0 / s), i0


def rho_prime_direct(spec: PotentialSpec, mu: float, x_trunc: float = 1e3,
                     bc_angle: Optional[float] = None, cfg: SolverConfig = SolverConfig()) -> SpectralSample:
    rho, i0 = rho_prime_direct_batch(spec, [mu], x_trunc, bc_angle, cfg)
    return SpectralSample(float(mu), math.sqrt(mu), float(rho[0]), float(i0[0]), "direct",
                          {"x_trunc": float(x_trunc), "bc_angle": bc_angle})
