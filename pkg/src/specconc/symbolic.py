"""Integration-by-parts acceleration of the oscillatory integral.

The slowly converging integral

    I0(mu) = int_0^inf q(x) sin 2 theta(x, mu) dx,   q = xi cos x,

is rewritten as a constant C(mu) plus integrals of faster decaying
integrands.  Terms are integrals of the two kinds

    I(F, alpha, beta) = int F(x) sin(alpha theta + beta x) dx
    J(F, alpha, beta) = int F(x) cos(alpha theta + beta x) dx

where F is a product of powers of derivatives of xi.  Using the Pruefer
equation theta' = s - s^-1 xi cos x sin^2 theta, an integration by parts
gives

    (alpha s + beta) I(F) = F(0) + J(F') + alpha s^-1 K(F xi)
    (alpha s + beta) J(F) = -I(F') + alpha s^-1 L(F xi)

and the product-to-sum expansion of 8 cos x sin^2 theta trig(.) turns the
K and L integrals back into six I or J terms each.  Coefficients are kept
exact: a rational times s^-m times a list of symbolic divisors
(alpha s + beta), so that the values of mu where a divisor vanishes are
exact rationals.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from .potential import PotentialSpec, xi_derivative

__all__ = [
    "Coefficient",
    "DerivativeProduct",
    "ExcludedValueError",
    "Expansion",
    "IrreducibleTermError",
    "ResidualEvaluator",
    "SymbolicTerm",
    "evaluate_constant",
    "evaluate_residual",
    "expand",
    "rewrite_I",
    "rewrite_J",
    "seed",
]

DEFAULT_EPSILON_ORDER = 6.0
DEFAULT_MAX_DEGREE = 3
DEFAULT_GUARD = 1e-3

# (weight, d_alpha, d_beta) of the product-to-sum expansion
#   8 cos x sin^2 t trig(a t + b x) = sum w trig((a + da) t + (b + db) x)
# valid for trig = sin and trig = cos alike.
PRODUCT_TO_SUM = (
    (2, 0, 1),
    (2, 0, -1),
    (-1, 2, 1),
    (-1, -2, -1),
    (-1, 2, -1),
    (-1, -2, 1),
)


class IrreducibleTermError(ValueError):
    """A term with alpha = beta = 0 has no integration-by-parts divisor."""


class ExcludedValueError(ValueError):
    """mu hits (or comes too close to) a zero of some divisor alpha s + beta."""

    def __init__(self, mu, resonance, distance):
        self.mu = mu
        self.resonance = resonance
        self.distance = distance
        super().__init__(
            f"mu={mu!r} is excluded: divisor vanishes at mu={resonance} "
            f"(|alpha s + beta| = {distance:.3g})"
        )


_PRIMES = {0: "", 1: "'", 2: "''", 3: "'''", 4: "''''"}


def _prime_label(k):
    return _PRIMES.get(k, f"^({k})")


@dataclass(frozen=True, order=True)
class DerivativeProduct:
    """F(x) = prod_k (xi^(k)(x))^(p_k), stored as sorted ``(k, p_k)`` pairs."""

    powers: tuple = ()

    @classmethod
    def of(cls, mapping):
        items = dict(mapping).items()
        if any(p <= 0 or k < 0 for k, p in items):
            raise ValueError("orders must be >= 0 and exponents positive")
        return cls(tuple(sorted(items)))

    @classmethod
    def xi(cls, k=0, p=1):
        return cls(((k, p),))

    def as_dict(self):
        return dict(self.powers)

    @property
    def degree(self) -> int:
        return sum(p for _, p in self.powers)

    @property
    def max_derivative(self) -> int:
        return max((k for k, _ in self.powers), default=0)

    def order(self, a) -> float:
        """Decay rate of F at infinity: F(x) ~ x^-order."""
        return sum(p * (a + k) for k, p in self.powers)

    def times_xi(self) -> "DerivativeProduct":
        d = self.as_dict()
        d[0] = d.get(0, 0) + 1
        return DerivativeProduct.of(d)

    def derivative(self) -> list:
        """Product rule: F' as a list of ``(integer multiplicity, product)``."""
        out = defaultdict(int)
        for k, p in self.powers:
            d = self.as_dict()
            if p == 1:
                del d[k]
            else:
                d[k] = p - 1
            d[k + 1] = d.get(k + 1, 0) + 1
            out[DerivativeProduct.of(d)] += p
        return sorted((n, f) for f, n in out.items())

    def evaluate(self, spec: PotentialSpec, x):
        val = 1.0
        for k, p in self.powers:
            val = val * xi_derivative(spec, k, x) ** p
        return val

    def label(self) -> str:
        if not self.powers:
            return "1"
        parts = []
        for k, p in self.powers:
            sym = "xi" + _prime_label(k)
            parts.append(sym if p == 1 else f"{sym}^{p}")
        return "*".join(parts)

    def __str__(self):
        return self.label()


ONE = DerivativeProduct()


@dataclass(frozen=True)
class Coefficient:
    """rational * s^-m / prod (alpha_i s + beta_i), with alpha_i >= 1.

    Constant divisors (alpha = 0) are folded into the rational part on
    construction, so every stored divisor depends on s.
    """

    rational: Fraction
    inv_s_power: int = 0
    divisors: tuple = ()

    def scaled(self, r) -> "Coefficient":
        return Coefficient(self.rational * Fraction(r), self.inv_s_power, self.divisors)

    def times_inv_s(self, n=1) -> "Coefficient":
        return Coefficient(self.rational, self.inv_s_power + n, self.divisors)

    def divided_by(self, alpha: int, beta: int) -> "Coefficient":
        if alpha < 0:
            raise ValueError("divisors are normalised to alpha >= 0")
        if alpha == 0:
            if beta == 0:
                raise IrreducibleTermError("divisor 0*s + 0")
            return self.scaled(Fraction(1, beta))
        return Coefficient(
            self.rational, self.inv_s_power, tuple(sorted(self.divisors + ((alpha, beta),)))
        )

    def value(self, s):
        s = np.asarray(s, dtype=float)
        val = float(self.rational) * s ** (-self.inv_s_power)
        for alpha, beta in self.divisors:
            val = val / (alpha * s + beta)
        return val

    def resonances(self) -> set:
        """Exact mu > 0 at which a divisor vanishes."""
        return {Fraction(-beta, alpha) ** 2 for alpha, beta in self.divisors if beta < 0}

    @property
    def key(self):
        return (self.inv_s_power, self.divisors)

    def __str__(self):
        den = "".join(f"({a}s{b:+d})" for a, b in self.divisors)
        sp = f"s^{self.inv_s_power}" if self.inv_s_power > 1 else ("s" if self.inv_s_power else "")
        den = sp + den
        return f"{self.rational}" + (f"/[{den}]" if den else "")


@dataclass(frozen=True)
class SymbolicTerm:
    """coeff(s) * int_0^inf factor(x) trig(alpha theta + beta x) dx."""

    kind: str
    coeff: Coefficient
    alpha: int
    beta: int
    factor: DerivativeProduct

    def __post_init__(self):
        if self.kind not in ("I", "J"):
            raise ValueError(f"kind must be 'I' or 'J', got {self.kind!r}")

    @property
    def is_null(self) -> bool:
        return self.alpha == 0 and self.beta == 0

    @property
    def is_normalized(self) -> bool:
        return self.alpha > 0 or (self.alpha == 0 and self.beta >= 0)

    def normalized(self) -> "SymbolicTerm":
        """Return an equivalent term with alpha >= 0 (beta >= 0 if alpha = 0)."""
        if self.is_normalized:
            return self
        coeff = self.coeff.scaled(-1) if self.kind == "I" else self.coeff
        return SymbolicTerm(self.kind, coeff, -self.alpha, -self.beta, self.factor)

    def integrand(self, spec: PotentialSpec, x, theta, s):
        trig = np.sin if self.kind == "I" else np.cos
        return (
            self.coeff.value(s)
            * self.factor.evaluate(spec, x)
            * trig(self.alpha * np.asarray(theta) + self.beta * np.asarray(x))
        )

    def __str__(self):
        return f"{self.coeff} {self.kind}({self.factor}, {self.alpha}, {self.beta})"


def _make(kind, coeff, alpha, beta, factor):
    """Build a normalised term; returns None for the identically zero I(F,0,0)."""
    if coeff.rational == 0:
        return None
    term = SymbolicTerm(kind, coeff, alpha, beta, factor).normalized()
    if term.kind == "I" and term.is_null:
        return None
    return term


def seed() -> list:
    """I0 = 1/2 I(xi, 2, 1) + 1/2 I(xi, 2, -1)."""
    half = Coefficient(Fraction(1, 2))
    return [
        SymbolicTerm("I", half, 2, 1, DerivativeProduct.xi()),
        SymbolicTerm("I", half, 2, -1, DerivativeProduct.xi()),
    ]


def _trig_feedback(kind, base, alpha, beta, factor):
    if alpha == 0:
        return []
    # alpha s^-1 K(F xi) with 8 K expanded by product-to-sum.
    c = base.scaled(Fraction(alpha, 8)).times_inv_s()
    fxi = factor.times_xi()
    out = []
    for w, da, db in PRODUCT_TO_SUM:
        t = _make(kind, c.scaled(w), alpha + da, beta + db, fxi)
        if t is not None:
            out.append(t)
    return out


def rewrite_I(term: SymbolicTerm):
    """Integrate an I-term by parts.

    Returns ``(constant, terms)`` where ``constant`` is the boundary
    contribution ``(coefficient, F)`` standing for coefficient * F(0).
    """
    if term.kind != "I":
        raise ValueError("rewrite_I needs an I-term")
    term = term.normalized()
    if term.is_null:
        raise IrreducibleTermError(f"I({term.factor}, 0, 0) has no divisor")
    base = term.coeff.divided_by(term.alpha, term.beta)
    constant = (base, term.factor)
    terms = []
    for n, g in term.factor.derivative():
        t = _make("J", base.scaled(n), term.alpha, term.beta, g)
        if t is not None:
            terms.append(t)
    terms += _trig_feedback("I", base, term.alpha, term.beta, term.factor)
    return constant, terms


def rewrite_J(term: SymbolicTerm):
    """Integrate a J-term by parts; the sine boundary term vanishes at both ends."""
    if term.kind != "J":
        raise ValueError("rewrite_J needs a J-term")
    term = term.normalized()
    if term.is_null:
        raise IrreducibleTermError(f"J({term.factor}, 0, 0) has no divisor")
    base = term.coeff.divided_by(term.alpha, term.beta)
    terms = []
    for n, g in term.factor.derivative():
        t = _make("I", base.scaled(-n), term.alpha, term.beta, g)
        if t is not None:
            terms.append(t)
    terms += _trig_feedback("J", base, term.alpha, term.beta, term.factor)
    return terms


def _merge_terms(terms: Iterable[SymbolicTerm]) -> list:
    acc = defaultdict(Fraction)
    for t in terms:
        acc[(t.kind, t.alpha, t.beta, t.factor, t.coeff.key)] += t.coeff.rational
    out = []
    for (kind, alpha, beta, factor, (m, divs)), r in acc.items():
        if r != 0:
            out.append(SymbolicTerm(kind, Coefficient(r, m, divs), alpha, beta, factor))
    out.sort(key=_term_sort_key)
    return out


def _merge_constants(constants) -> list:
    acc = defaultdict(Fraction)
    for coeff, factor in constants:
        acc[(factor, coeff.key)] += coeff.rational
    out = [
        (Coefficient(r, m, divs), factor)
        for (factor, (m, divs)), r in acc.items()
        if r != 0
    ]
    out.sort(key=lambda cf: (cf[1], cf[0].key))
    return out


def _term_sort_key(t):
    return (t.factor, t.kind, t.alpha, t.beta, t.coeff.key)


@dataclass(frozen=True)
class Expansion:
    """Accelerated form of I0: C(mu) terms plus a residual term list."""

    constant_terms: tuple
    residual: tuple
    excluded_mu: frozenset
    epsilon_order: float
    max_degree: int
    rewrite_count: int
    generations: int
    order_exponent: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def residual_factors(self) -> set:
        return {t.factor for t in self.residual}

    @property
    def divisors(self) -> set:
        out = set()
        for c, _ in self.constant_terms:
            out.update(c.divisors)
        for t in self.residual:
            out.update(t.coeff.divisors)
        return out

    @property
    def max_derivative(self) -> int:
        facs = [f for _, f in self.constant_terms] + [t.factor for t in self.residual]
        return max((f.max_derivative for f in facs), default=0)

    def check_mu(self, mu, guard=DEFAULT_GUARD):
        """Raise ExcludedValueError if mu is excluded or within ``guard`` of one."""
        if Fraction(mu) in self.excluded_mu:
            raise ExcludedValueError(mu, Fraction(mu), 0.0)
        s = math.sqrt(mu)
        for alpha, beta in sorted(self.divisors):
            d = abs(alpha * s + beta)
            if d < guard:
                raise ExcludedValueError(mu, Fraction(-beta, alpha) ** 2, d)

    def admissible(self, mu, guard=DEFAULT_GUARD) -> bool:
        try:
            self.check_mu(mu, guard)
        except ExcludedValueError:
            return False
        return True

    def guard_holes(self, guard=DEFAULT_GUARD) -> list:
        """mu-intervals around each excluded value where evaluation is refused."""
        holes = []
        for alpha, beta in sorted(self.divisors):
            if beta >= 0:
                continue
            lo = max((-beta - guard) / alpha, 0.0) ** 2
            hi = ((-beta + guard) / alpha) ** 2
            holes.append((lo, hi))
        holes.sort()
        merged = []
        for lo, hi in holes:
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
            else:
                merged.append((lo, hi))
        return merged

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        def coeff_doc(c):
            return {
                "rational": str(c.rational),
                "inv_s_power": c.inv_s_power,
                "divisors": [list(d) for d in c.divisors],
            }

        return {
            "format": "specconc.expansion/1",
            "constant_terms": [
                {"coeff": coeff_doc(c), "factor": [list(p) for p in f.powers]}
                for c, f in self.constant_terms
            ],
            "residual": [
                {
                    "kind": t.kind,
                    "coeff": coeff_doc(t.coeff),
                    "alpha": t.alpha,
                    "beta": t.beta,
                    "factor": [list(p) for p in t.factor.powers],
                }
                for t in self.residual
            ],
            "excluded_mu": [str(m) for m in sorted(self.excluded_mu)],
            "meta": {
                "epsilon_order": self.epsilon_order,
                "max_degree": self.max_degree,
                "rewrite_count": self.rewrite_count,
                "generations": self.generations,
                "order_exponent": self.order_exponent,
                **self.meta,
            },
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc) -> "Expansion":
        def coeff(d):
            return Coefficient(
                Fraction(d["rational"]),
                int(d["inv_s_power"]),
                tuple(tuple(x) for x in d["divisors"]),
            )

        def factor(f):
            return DerivativeProduct(tuple(tuple(p) for p in f))

        meta = dict(doc["meta"])
        known = {k: meta.pop(k) for k in
                 ("epsilon_order", "max_degree", "rewrite_count", "generations", "order_exponent")}
        return cls(
            constant_terms=tuple((coeff(c["coeff"]), factor(c["factor"])) for c in doc["constant_terms"]),
            residual=tuple(
                SymbolicTerm(t["kind"], coeff(t["coeff"]), t["alpha"], t["beta"], factor(t["factor"]))
                for t in doc["residual"]
            ),
            excluded_mu=frozenset(Fraction(m) for m in doc["excluded_mu"]),
            meta=meta,
            **known,
        )

    def pretty(self) -> str:
        lines = [
            f"expansion: epsilon_order={self.epsilon_order:g} max_degree={self.max_degree} "
            f"generations={self.generations} rewrites={self.rewrite_count}",
            f"constant terms: {len(self.constant_terms)}",
            f"residual terms: {len(self.residual)}",
            "residual factors: " + ", ".join(f.label() for f in sorted(self.residual_factors)),
            "excluded mu: " + (", ".join(str(m) for m in sorted(self.excluded_mu)) or "none"),
        ]
        return "\n".join(lines)

    def __str__(self):
        return self.pretty()


def _static_moment(coeff, factor, a):
    """Fold J(F, 0, 0) = int_0^inf F dx = F(0) / (order(F) - 1) into a constant.

    Exact for this potential family since F is a multiple of (1+x)^-order.
    """
    order = factor.order(Fraction(a))
    if order <= 1:
        return None
    return coeff.scaled(1 / (order - 1)), factor


def expand(
    spec: PotentialSpec,
    epsilon_order: float = DEFAULT_EPSILON_ORDER,
    max_degree: int = DEFAULT_MAX_DEGREE,
    *,
    max_generations: Optional[int] = None,
    order_exponent: Optional[float] = None,
    fold_static: bool = True,
) -> Expansion:
    """Rewrite the seed breadth-first until every term decays fast enough.

    A term is rewritten while its factor has ``order < epsilon_order`` and
    ``degree < max_degree``, and, if ``max_generations`` is given, while
    fewer than that many rewriting passes have been made.  The order is
    measured with ``order_exponent`` in place of ``a``; it defaults to
    ``max(a, 2)``, so that slower decays reuse the integrand structure of
    ``a = 2``.

    For c = 0 the expansion is empty: no terms and no excluded values.

    Non-oscillatory terms J(F, 0, 0) have no divisor.  With
    ``fold_static`` they are integrated in closed form into C(mu);
    otherwise they stay in the residual.
    """
    if not epsilon_order > 0:
        raise ValueError("epsilon_order must be positive")
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    if max_generations is not None and max_generations < 0:
        raise ValueError("max_generations must be >= 0")
    a_ord = float(max(spec.a, 2.0) if order_exponent is None else order_exponent)
    if spec.c == 0:
        # every term carries a factor of xi = 0
        return Expansion((), (), frozenset(), float(epsilon_order), int(max_degree), 0, 0, a_ord,
                         meta={"a": spec.a, "fold_static": fold_static,
                               "max_generations": max_generations, "trivial": True})

    constants = []
    residual = []
    current = _merge_terms(seed())
    rewrites = 0
    gen = 0
    while current:
        nxt = []
        can_rewrite = max_generations is None or gen < max_generations
        for t in current:
            if t.kind == "J" and t.is_null:
                folded = _static_moment(t.coeff, t.factor, spec.a) if fold_static else None
                if folded is not None:
                    constants.append(folded)
                else:
                    residual.append(t)
                continue
            reducible = (
                can_rewrite
                and t.factor.order(a_ord) < epsilon_order
                and t.factor.degree < max_degree
            )
            if not reducible:
                residual.append(t)
                continue
            rewrites += 1
            if t.kind == "I":
                const, new = rewrite_I(t)
                constants.append(const)
            else:
                new = rewrite_J(t)
            nxt.extend(new)
        current = _merge_terms(nxt)
        if nxt:
            gen += 1

    constant_terms = tuple(_merge_constants(constants))
    residual_terms = tuple(_merge_terms(residual))
    excluded = set()
    for c, _ in constant_terms:
        excluded |= c.resonances()
    for t in residual_terms:
        excluded |= t.coeff.resonances()
    return Expansion(
        constant_terms=constant_terms,
        residual=residual_terms,
        excluded_mu=frozenset(excluded),
        epsilon_order=float(epsilon_order),
        max_degree=int(max_degree),
        rewrite_count=rewrites,
        generations=gen,
        order_exponent=a_ord,
        meta={"a": spec.a, "fold_static": fold_static, "max_generations": max_generations},
    )


def evaluate_constant(exp: Expansion, spec: PotentialSpec, mu: float, guard: float = DEFAULT_GUARD) -> float:
    """C(mu) = sum coeff(s) F(0)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    exp.check_mu(mu, guard)
    s = math.sqrt(mu)
    return float(sum(c.value(s) * f.evaluate(spec, 0.0) for c, f in exp.constant_terms))


def evaluate_residual(exp: Expansion, spec: PotentialSpec, x, theta, mu: float,
                      guard: float = DEFAULT_GUARD):
    """Residual integrand at (x, theta); straightforward term-by-term sum."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    exp.check_mu(mu, guard)
    s = math.sqrt(mu)
    total = 0.0
    for t in exp.residual:
        total = total + t.integrand(spec, x, theta, s)
    return total


class ResidualEvaluator:
    """Vectorised residual integrand for a batch of mu values.

    Terms are grouped by (kind, alpha, beta) and by factor, so one call
    costs one trig evaluation per group and mu instead of one per term.
    """

    def __init__(self, exp: Expansion, spec: PotentialSpec, mus, guard: float = DEFAULT_GUARD):
        mus = np.atleast_1d(np.asarray(mus, dtype=float))
        for mu in mus:
            exp.check_mu(float(mu), guard)
        self.spec = spec
        s = np.sqrt(mus)
        factors = sorted({t.factor for t in exp.residual} | {f for _, f in exp.constant_terms})
        groups = sorted({(t.kind, t.alpha, t.beta) for t in exp.residual})
        f_index = {f: i for i, f in enumerate(factors)}
        g_index = {g: i for i, g in enumerate(groups)}
        self.factors = factors
        weights = np.zeros((len(groups), len(factors), len(mus)))
        for t in exp.residual:
            weights[g_index[(t.kind, t.alpha, t.beta)], f_index[t.factor]] += t.coeff.value(s)
        self.weights = weights
        self.alpha = np.array([g[1] for g in groups], dtype=float)[:, None]
        self.beta = np.array([g[2] for g in groups], dtype=float)[:, None]
        self.is_sin = np.array([g[0] == "I" for g in groups])[:, None]
        self.constant = np.zeros(len(mus))
        for c, f in exp.constant_terms:
            self.constant += c.value(s) * f.evaluate(spec, 0.0)
        # exponents/constants of each factor: F(x) = const * (1+x)^-order
        self._f_const = np.array([f.evaluate(spec, 0.0) for f in factors])
        self._f_order = np.array([f.order(spec.a) for f in factors])

    def factor_values(self, x):
        return self._f_const * (1.0 + x) ** (-self._f_order)

    def __call__(self, x, theta):
        if not len(self.alpha):
            return np.zeros_like(np.asarray(theta, dtype=float))
        amp = np.einsum("gfm,f->gm", self.weights, self.factor_values(x))
        phase = self.alpha * theta + self.beta * x
        trig = np.where(self.is_sin, np.sin(phase), np.cos(phase))
        return (amp * trig).sum(axis=0)
