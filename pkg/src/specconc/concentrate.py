"""Spectral concentration: maxima of rho' and the theta transition.

Interval r of the search is ((2r+1/2) pi, (2r+3/2) pi), where cos x < 0
and (for c > 0) the potential q = -c (1+x)^-a cos x is positive.  A
concentration point attributed to interval r with oscillation number N
holds theta(x, mu0) in ((N+1/2) pi, (N+1) pi) there; r = 0, 1, 2 are
named mu-, nu- and xi-points.

A transition at mu0 in interval r means that for mu' < mu0 < mu'' close
together the two Pruefer angles agree on entry to the interval and
differ by pi on exit.  Separations are measured after removing the free
rotation (s'' - s') x, which otherwise grows without bound along x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .integrate import SolverConfig, rho_prime_accelerated_batch, theta_at
from .potential import PotentialSpec
from .symbolic import DEFAULT_GUARD, Expansion

__all__ = [
    "ConcentrationPoint",
    "RhoMaximum",
    "ScanConfig",
    "ScanResult",
    "TraceRow",
    "TrackLostError",
    "TransitionHit",
    "detect_transition",
    "find_rho_maxima",
    "interval_bounds",
    "oscillation_number",
    "scan_concentration",
    "trace_point",
]

RHO_MAXIMUM = "rho-maximum"
THETA_TRANSITION = "theta-transition"
POINT_NAMES = {0: "mu", 1: "nu", 2: "xi"}

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class TrackLostError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScanConfig:
    """Search range and detection knobs.

    ``weight_exponent`` w selects the maximised quantity rho' * s^-w.  With
    w = 0 it is rho' itself; the default w = 1/2 is the weighting whose
    maxima reproduce the published concentration tables (see README).

    ``require_transition`` defaults to ``a < 2``: there the truncated rho'
    is not trusted and every point must show a theta transition.
    """

    mu_min: float = 0.05
    mu_max: float = 5.0
    mu_step: float = 0.01
    delta_mu: float = 1e-3
    delta_max: float = 0.064
    refine_tol: float = 5e-3
    r_max: int = 2
    entry_tol: float = 0.2
    exit_tol: float = 0.3
    phase_tol: float = 0.3
    weight_exponent: float = 0.5
    guard: float = DEFAULT_GUARD
    hole_radius: float = 0.02
    occupancy_min: float = 0.9
    occupancy_tie: float = 0.1
    require_transition: Optional[bool] = None

    def __post_init__(self):
        if not 0 < self.mu_min < self.mu_max:
            raise ValueError("need 0 < mu_min < mu_max")
        for name in ("mu_step", "delta_mu", "delta_max", "refine_tol", "entry_tol",
                     "exit_tol", "phase_tol", "guard"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta_max < self.delta_mu:
            raise ValueError("delta_max must be >= delta_mu")
        if self.r_max < 0:
            raise ValueError("r_max must be >= 0")
        if self.hole_radius < 0:
            raise ValueError("hole_radius must be >= 0")

    def grid(self) -> np.ndarray:
        n = int(math.floor((self.mu_max - self.mu_min) / self.mu_step + 1e-9))
        return self.mu_min + self.mu_step * np.arange(n + 1)

    def needs_transition(self, spec: PotentialSpec) -> bool:
        if self.require_transition is None:
            return spec.a < 2
        return self.require_transition


@dataclass(frozen=True)
class RhoMaximum:
    mu: float
    rho_prime: float
    objective: float


@dataclass(frozen=True)
class TransitionHit:
    r: int
    N: int
    mu: float
    delta: float
    entry: float
    exit: float
    phase_ok: bool


@dataclass
class ConcentrationPoint:
    mu0: float
    r: int
    N: int
    confirmed_by: frozenset
    coalesced_with: Optional["ConcentrationPoint"] = field(default=None, repr=False, compare=False)
    rho_prime: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def name(self) -> str:
        return f"{POINT_NAMES.get(self.r, f'r{self.r}')}(N={self.N})"

    def as_dict(self) -> dict:
        return {
            "mu0": self.mu0,
            "r": self.r,
            "N": self.N,
            "name": self.name,
            "confirmed_by": sorted(self.confirmed_by),
            "coalesced_with": None if self.coalesced_with is None
            else {"mu0": self.coalesced_with.mu0, "r": self.coalesced_with.r,
                  "N": self.coalesced_with.N},
            "rho_prime": self.rho_prime,
        }


@dataclass
class ScanResult:
    points: list
    rejected: list
    maxima: list
    transitions: list

    def by_interval(self, r: int) -> list:
        return [p for p in self.points if p.r == r]


def interval_bounds(r: int):
    """(x1, xc, x2) of interval r."""
    return (2 * r + 0.5) * math.pi, (2 * r + 1.0) * math.pi, (2 * r + 1.5) * math.pi


def oscillation_number(theta_centre: float) -> int:
    """N with theta at the interval centre in ((N+1/2) pi, (N+3/2) pi)."""
    return max(int(math.floor(theta_centre / math.pi - 0.5)), 0)


# rho' maxima -----------------------------------------------------------

def _hole_mask(exp: Expansion, mus, scan: ScanConfig) -> np.ndarray:
    """True where mu lies in the neighbourhood of an excluded value."""
    near = np.zeros(len(mus), dtype=bool)
    for lo, hi in exp.guard_holes(scan.guard):
        near |= (mus > lo - scan.hole_radius) & (mus < hi + scan.hole_radius)
    return near


def _objective(exp, spec, mus, scan, cfg):
    rho, _ = rho_prime_accelerated_batch(exp, spec, mus, cfg, scan.guard)
    return rho, rho * np.asarray(mus) ** (-0.5 * scan.weight_exponent)


def _golden_refine(exp, spec, brackets, scan, cfg):
    """Golden-section search, all brackets advanced together (one batch per step)."""
    lo = np.array([b[0] for b in brackets], dtype=float)
    hi = np.array([b[1] for b in brackets], dtype=float)
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    _, f1 = _objective(exp, spec, x1, scan, cfg)
    _, f2 = _objective(exp, spec, x2, scan, cfg)
    while np.max(hi - lo) > scan.refine_tol:
        left = f1 >= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        new_x = np.where(left, hi - _INV_PHI * (hi - lo), lo + _INV_PHI * (hi - lo))
        _, fn = _objective(exp, spec, new_x, scan, cfg)
        x2, f2, x1, f1 = (np.where(left, x1, new_x), np.where(left, f1, fn),
                          np.where(left, new_x, x2), np.where(left, fn, f2))
    return 0.5 * (lo + hi)


def find_rho_maxima(exp: Expansion, spec: PotentialSpec, scan: ScanConfig,
                    cfg: SolverConfig = SolverConfig()) -> list:
    """Interior local maxima of rho' s^-w on the scan grid, refined.

    Grid points near excluded values are never evaluated; a maximum needs
    both grid neighbours evaluated, so hole edges never count as maxima.
    """
    mus = scan.grid()
    ok = ~_hole_mask(exp, mus, scan)
    for i in np.flatnonzero(ok):
        ok[i] = exp.admissible(float(mus[i]), scan.guard)
    if ok.sum() < 3:
        return []
    idx = np.flatnonzero(ok)
    _, obj = _objective(exp, spec, mus[idx], scan, cfg)
    brackets = []
    for j in range(1, len(idx) - 1):
        if idx[j] - idx[j - 1] != 1 or idx[j + 1] - idx[j] != 1:
            continue
        if obj[j] > obj[j - 1] and obj[j] >= obj[j + 1]:
            brackets.append((mus[idx[j - 1]], mus[idx[j + 1]]))
    if not brackets:
        return []
    refined = _golden_refine(exp, spec, brackets, scan, cfg)
    rho, obj = _objective(exp, spec, refined, scan, cfg)
    return [RhoMaximum(float(m), float(r), float(o)) for m, r, o in zip(refined, rho, obj)]


# theta transition --------------------------------------------------------

def _interval_xs(r_max: int) -> np.ndarray:
    return np.array([b for r in range(r_max + 1) for b in interval_bounds(r)])


def _separations(th_lo, th_hi, s_lo, s_hi, xs):
    return th_hi - th_lo - (s_hi - s_lo) * xs


def _bisect_jump(spec, lo, hi, r, scan, cfg):
    """Shrink [lo, hi] onto the steepest part of the jump of theta(x2) - s x2."""
    x2 = interval_bounds(r)[2]
    sub = replace(cfg, x_max=x2)

    def h(mu):
        return theta_at(spec, [mu], [x2], sub)[0, 0] - math.sqrt(mu) * x2

    h_lo, h_hi = h(lo), h(hi)
    # the midpoint of the final bracket is within refine_tol / 4 of the jump
    while hi - lo > 0.5 * scan.refine_tol:
        m = 0.5 * (lo + hi)
        h_m = h(m)
        if h_m - h_lo >= h_hi - h_m:
            hi, h_hi = m, h_m
        else:
            lo, h_lo = m, h_m
    return 0.5 * (lo + hi)


def _phase_feature(spec, mu, r, N, scan, cfg, n=33):
    x1, _, x2 = interval_bounds(r)
    xs = np.linspace(x1, x2, n)
    th = theta_at(spec, [mu], xs, replace(cfg, x_max=x2))[:, 0]
    return bool(np.any(np.abs(th - (N + 1) * math.pi) < scan.phase_tol))


def detect_transition(spec: PotentialSpec, mu_candidate: float, scan: ScanConfig,
                      cfg: SolverConfig = SolverConfig()) -> list:
    """Intervals r <= r_max showing a theta transition near ``mu_candidate``.

    For delta = delta_mu, 2 delta_mu, ... up to delta_max the angles at
    mu -+ delta are compared at both ends of each interval.  Interval r
    passes at the first delta where the entry separation is within
    ``entry_tol`` of a multiple of pi (earlier intervals may already have
    jumped) and the exit separation exceeds it by pi to within ``exit_tol``.
    The jump is then located by bisection to ``refine_tol``.

    Returns the hits ordered by r; an empty list means no transition.
    """
    if not mu_candidate > 0:
        raise ValueError("mu must be positive")
    if spec.c == 0:
        return []
    deltas = []
    d = scan.delta_mu
    while d <= scan.delta_max * (1 + 1e-12) and d < mu_candidate:
        deltas.append(d)
        d *= 2
    if not deltas:
        return []
    deltas = np.array(deltas)
    mus = np.concatenate([mu_candidate - deltas[::-1], mu_candidate + deltas])
    xs = _interval_xs(scan.r_max)
    th = theta_at(spec, mus, xs, replace(cfg, x_max=float(xs[-1])))
    s = np.sqrt(mus)
    n = len(deltas)
    hits = []
    for r in range(scan.r_max + 1):
        i1, ic, i2 = 3 * r, 3 * r + 1, 3 * r + 2
        for k in range(n):
            lo, hi = n - 1 - k, n + k
            entry = _separations(th[i1, lo], th[i1, hi], s[lo], s[hi], xs[i1])
            exit_ = _separations(th[i2, lo], th[i2, hi], s[lo], s[hi], xs[i2])
            kk = round(entry / math.pi)
            if abs(entry - kk * math.pi) < scan.entry_tol and \
                    abs(exit_ - entry - math.pi) < scan.exit_tol:
                mu_ref = _bisect_jump(spec, float(mus[lo]), float(mus[hi]), r, scan, cfg)
                xc = xs[ic]
                th_c = theta_at(spec, [mu_ref], [xc], replace(cfg, x_max=float(xc)))[0, 0]
                N = oscillation_number(th_c)
                hits.append(TransitionHit(
                    r=r, N=N, mu=mu_ref, delta=float(deltas[k]),
                    entry=float(entry), exit=float(exit_),
                    phase_ok=_phase_feature(spec, mu_ref, r, N, scan, cfg),
                ))
                break
    return _discount_coincident(hits)


def _discount_coincident(hits, window=None):
    """Lower N by one per earlier-interval jump inside a hit's probe window.

    A jump in interval r' < r at the same mu lifts theta by pi all the way
    downstream; the count for interval r refers to the state before it.
    """
    out = []
    for h in hits:
        w = h.delta if window is None else window
        k = sum(1 for g in hits if g.r < h.r and abs(g.mu - h.mu) <= w)
        out.append(replace(h, N=max(h.N - k, 0)) if k else h)
    return out


# classification without a transition --------------------------------------

def _occupancy(spec, mu, scan, cfg, n=201):
    """|q|-weighted fraction of each interval where theta mod pi > pi/2."""
    out = []
    x_end = interval_bounds(scan.r_max)[2]
    xs = np.linspace(0.0, x_end, n * (scan.r_max + 1))
    th = theta_at(spec, [mu], xs, replace(cfg, x_max=x_end))[:, 0]
    w = np.abs(spec.q(xs))
    up = np.mod(th, math.pi) > 0.5 * math.pi
    thetas_c = []
    for r in range(scan.r_max + 1):
        x1, xc, x2 = interval_bounds(r)
        m = (xs > x1) & (xs < x2)
        out.append(float((up[m] * w[m]).sum() / w[m].sum()) if w[m].sum() > 0 else 0.0)
        thetas_c.append(theta_at(spec, [mu], [xc], replace(cfg, x_max=xc))[0, 0])
    return out, thetas_c


def _classify_by_occupancy(spec, mu, scan, cfg, skip=()):
    """Intervals for a rho' maximum that has no transition in ``skip``'s complement.

    The first interval (not already in ``skip``) whose occupancy is at
    least ``occupancy_min`` is taken.  Failing that, and only when
    ``skip`` is empty, the smallest r within ``occupancy_tie`` of the best.
    """
    occ, th_c = _occupancy(spec, mu, scan, cfg)
    for r, o in enumerate(occ):
        if r not in skip and o >= scan.occupancy_min:
            return [(r, oscillation_number(th_c[r]), occ)]
    if skip:
        return []
    best = max(occ)
    for r, o in enumerate(occ):
        if o >= best - scan.occupancy_tie:
            return [(r, oscillation_number(th_c[r]), occ)]
    return []


# pipeline ------------------------------------------------------------------

def _sweep_candidates(spec, mus, scan, cfg):
    """Grid midpoints where some interval's phase gain jumps by more than pi/2."""
    if len(mus) < 2:
        return []
    xs = _interval_xs(scan.r_max)
    th = theta_at(spec, mus, xs, replace(cfg, x_max=float(xs[-1])))
    s = np.sqrt(mus)
    cands = []
    for r in range(scan.r_max + 1):
        x1, x2 = xs[3 * r], xs[3 * r + 2]
        gain = th[3 * r + 2] - th[3 * r] - s * (x2 - x1)
        jumps = np.diff(gain)
        for j in np.flatnonzero(jumps > 0.5 * math.pi):
            cands.append(0.5 * (mus[j] + mus[j + 1]))
    return sorted(set(np.round(cands, 12)))


def _link_coalesced(points, tol):
    for i, p in enumerate(points):
        for q in points[i + 1:]:
            if p.r != q.r and abs(p.mu0 - q.mu0) <= tol:
                if p.coalesced_with is None:
                    p.coalesced_with = q
                if q.coalesced_with is None:
                    q.coalesced_with = p


def _merge_point(points, new, tol):
    for p in points:
        if p.r == new.r and abs(p.mu0 - new.mu0) <= tol:
            p.confirmed_by = p.confirmed_by | new.confirmed_by
            if p.rho_prime is None:
                p.rho_prime = new.rho_prime
            return
    points.append(new)


def scan_concentration(exp: Expansion, spec: PotentialSpec, scan: ScanConfig,
                       cfg: SolverConfig = SolverConfig()) -> ScanResult:
    """Maxima of rho', confirmed or classified, plus transition-only points.

    Transition detection is swept over the neighbourhoods of excluded
    values (where rho' is never evaluated) and, when transitions are
    required, over the whole grid.
    """
    strict = scan.needs_transition(spec)
    maxima = find_rho_maxima(exp, spec, scan, cfg)
    points, rejected, transitions = [], [], []
    merge_tol = max(scan.mu_step, 2 * scan.refine_tol)

    for m in maxima:
        hits = detect_transition(spec, m.mu, scan, cfg)
        transitions.extend(hits)
        for h in hits:
            _merge_point(points, ConcentrationPoint(
                h.mu, h.r, h.N, frozenset({RHO_MAXIMUM, THETA_TRANSITION}), rho_prime=m.rho_prime,
                extra={"rho_max_mu": m.mu, "delta": h.delta, "phase_ok": h.phase_ok}), merge_tol)
        if strict:
            if not hits:
                rejected.append(m)
            continue
        for r, N, occ in _classify_by_occupancy(spec, m.mu, scan, cfg, skip={h.r for h in hits}):
            k = sum(1 for h in hits if h.r < r and abs(h.mu - m.mu) <= merge_tol)
            _merge_point(points, ConcentrationPoint(
                m.mu, r, max(N - k, 0), frozenset({RHO_MAXIMUM}), rho_prime=m.rho_prime,
                extra={"occupancy": occ}), merge_tol)

    mus = scan.grid()
    sweep = mus if strict else mus[_hole_mask(exp, mus, scan)]
    if spec.c > 0:
        for cand in _sweep_candidates(spec, sweep, scan, cfg):
            hits = detect_transition(spec, float(cand), scan, cfg)
            transitions.extend(hits)
            for h in hits:
                if not scan.mu_min <= h.mu <= scan.mu_max:
                    continue
                _merge_point(points, ConcentrationPoint(
                    h.mu, h.r, h.N, frozenset({THETA_TRANSITION}),
                    extra={"delta": h.delta, "phase_ok": h.phase_ok}), merge_tol)

    points.sort(key=lambda p: (p.mu0, p.r))
    _link_coalesced(points, 2 * scan.refine_tol)
    return ScanResult(points=points, rejected=rejected, maxima=maxima, transitions=transitions)


# continuation in c -----------------------------------------------------------

@dataclass
class TraceRow:
    c: float
    mu0: Optional[float]
    r: int
    N: Optional[int]
    increment: bool = False
    coalesced: bool = False


def trace_point(spec: PotentialSpec, scan: ScanConfig, c_values, point_id, *,
                exp: Optional[Expansion] = None, cfg: SolverConfig = SolverConfig(),
                max_gap: float = 2.5, scanner=None) -> list:
    """Follow the (r, N) point through increasing c by nearest-mu continuation.

    ``spec`` supplies the decay exponent; its c is ignored.  The first c
    must contain a point (r, N); afterwards the nearest point with the
    same r is taken, and an increase of N (as after a coalescence) is
    flagged.  A continuation step longer than ``max_gap`` raises
    TrackLostError.  ``scanner(c) -> ScanResult`` overrides the default
    per-c scan (useful for parallel execution).
    """
    from .symbolic import expand

    c_values = [float(c) for c in c_values]
    if any(b < a for a, b in zip(c_values, c_values[1:])):
        raise ValueError("c_values must be sorted ascending")
    r, N = point_id
    if exp is None:
        exp = expand(spec)

    def default_scanner(c):
        return scan_concentration(exp, PotentialSpec(c, spec.a, spec.max_order), scan, cfg)

    scanner = scanner or default_scanner
    rows = []
    prev = None
    for c in c_values:
        res = scanner(c)
        cands = [p for p in res.points if p.r == r]
        if prev is None:
            cands = [p for p in cands if p.N == N]
            if not cands:
                raise TrackLostError(f"no point (r={r}, N={N}) at c={c}")
            pick = min(cands, key=lambda p: p.mu0)
        else:
            if not cands:
                raise TrackLostError(f"point lost at c={c}")
            pick = min(cands, key=lambda p: abs(p.mu0 - prev.mu0))
            if abs(pick.mu0 - prev.mu0) > max_gap:
                raise TrackLostError(
                    f"continuation gap {abs(pick.mu0 - prev.mu0):.3g} > {max_gap} at c={c}")
        rows.append(TraceRow(c, pick.mu0, r, pick.N,
                             increment=prev is not None and pick.N > prev.N,
                             coalesced=pick.coalesced_with is not None))
        prev = pick
    return rows
