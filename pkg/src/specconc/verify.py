"""Quick self-checks run by ``specconc verify``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .concentrate import ScanConfig, find_rho_maxima
from .integrate import SolverConfig, rho_prime_accelerated_batch, rho_prime_direct_batch, theta_at
from .potential import PotentialSpec
from .symbolic import PRODUCT_TO_SUM, DerivativeProduct, expand

__all__ = ["CheckResult", "identity_residual", "run_checks", "CHECKS"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def identity_residual(alpha, beta, theta, x, trig=np.sin):
    """8 cos x sin^2 theta trig(alpha theta + beta x) minus its product-to-sum form."""
    lhs = 8.0 * np.cos(x) * np.sin(theta) ** 2 * trig(alpha * theta + beta * x)
    rhs = sum(w * trig((alpha + da) * theta + (beta + db) * x) for w, da, db in PRODUCT_TO_SUM)
    return lhs - rhs


def _check_identity():
    rng = np.random.default_rng(20240601)
    n = 10_000
    alpha = rng.integers(-8, 9, n).astype(float)
    beta = rng.integers(-8, 9, n).astype(float)
    theta = rng.uniform(-10, 10, n)
    x = rng.uniform(0, 50, n)
    err = max(np.max(np.abs(identity_residual(alpha, beta, theta, x, t))) for t in (np.sin, np.cos))
    return err <= 1e-12, f"max |lhs - rhs| = {err:.2e}"


_EXPECTED_FACTORS = {
    DerivativeProduct.xi(4),
    DerivativeProduct.of({0: 1, 3: 1}),
    DerivativeProduct.of({0: 1, 2: 1}),
    DerivativeProduct.of({0: 2, 1: 1}),
    DerivativeProduct.xi(1, 2),
    DerivativeProduct.xi(0, 3),
}


def _check_inventory():
    exp = expand(PotentialSpec(1.0, 2.0))
    ok = exp.residual_factors == _EXPECTED_FACTORS and exp.excluded_mu == {Fraction(1, 4), Fraction(1)}
    deep = expand(PotentialSpec(1.0, 2.0), 100, 10, max_generations=3)
    want = {Fraction(n, d) for n, d in [(1, 36), (1, 16), (1, 4), (9, 16), (1, 1), (9, 4)]}
    ok = ok and deep.excluded_mu == want
    labels = ", ".join(f.label() for f in sorted(exp.residual_factors))
    return ok, f"factors {{{labels}}}; depth-3 exclusions {sorted(str(m) for m in deep.excluded_mu)}"


def _check_oracle():
    spec = PotentialSpec(1.0, 3.0)
    mus = np.array([0.5, 2.0, 5.0])
    acc, _ = rho_prime_accelerated_batch(expand(spec), spec, mus)
    direct, _ = rho_prime_direct_batch(spec, mus, 1e4, cfg=SolverConfig(max_step=1.0))
    err = float(np.max(np.abs(acc - direct)))
    return err <= 1e-4, f"max |accelerated - direct| = {err:.2e}"


def _check_free():
    spec = PotentialSpec(0.0, 2.0)
    mus = np.array([0.3, 1.0, 4.0])
    rho, _ = rho_prime_accelerated_batch(expand(spec), spec, mus)
    err = float(np.max(np.abs(rho - np.sqrt(mus) / np.pi)))
    xs = np.linspace(0, 20, 11)
    th = theta_at(spec, mus, xs)
    terr = float(np.max(np.abs(th - np.outer(xs, np.sqrt(mus)))))
    return err <= 1e-9 and terr <= 1e-7, f"rho' error {err:.1e}, theta error {terr:.1e}"


def _check_scan_row():
    spec = PotentialSpec(2.0, 2.0)
    found = find_rho_maxima(expand(spec), spec, ScanConfig(mu_min=0.3, mu_max=0.7))
    mus = [m.mu for m in found]
    ok = any(abs(m - 0.45) <= 0.03 for m in mus)
    return ok, f"a=2 c=2 maxima {[round(m, 3) for m in mus]} (expected 0.45)"


CHECKS = {
    "identity": _check_identity,
    "inventory": _check_inventory,
    "oracle": _check_oracle,
    "free": _check_free,
    "scan-row": _check_scan_row,
}


def run_checks(names=None) -> list:
    out = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = CHECKS[name]()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
