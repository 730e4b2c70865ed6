import math

import numpy as np
import pytest

from specconc.concentrate import (
    RHO_MAXIMUM,
    THETA_TRANSITION,
    ConcentrationPoint,
    ScanConfig,
    ScanResult,
    TrackLostError,
    detect_transition,
    find_rho_maxima,
    interval_bounds,
    oscillation_number,
    scan_concentration,
    trace_point,
)
from specconc.integrate import theta_at
from specconc.potential import PotentialSpec
from specconc.symbolic import expand


def test_scan_config_validation():
    with pytest.raises(ValueError):
        ScanConfig(mu_min=1.0, mu_max=0.5)
    with pytest.raises(ValueError):
        ScanConfig(mu_step=0)
    with pytest.raises(ValueError):
        ScanConfig(delta_mu=0.1, delta_max=0.01)
    g = ScanConfig(mu_min=0.1, mu_max=0.2, mu_step=0.05).grid()
    assert np.allclose(g, [0.1, 0.15, 0.2])


def test_transition_policy_default_follows_decay():
    cfg = ScanConfig()
    assert cfg.needs_transition(PotentialSpec(1.0, 1.0))
    assert not cfg.needs_transition(PotentialSpec(1.0, 2.0))
    assert ScanConfig(require_transition=True).needs_transition(PotentialSpec(1.0, 3.0))


def test_intervals_and_counting():
    x1, xc, x2 = interval_bounds(1)
    assert (x1, xc, x2) == pytest.approx((2.5 * math.pi, 3 * math.pi, 3.5 * math.pi))
    assert oscillation_number(1.8 * math.pi) == 1
    assert oscillation_number(0.3 * math.pi) == 0


def test_free_problem_has_no_maxima():
    spec = PotentialSpec(0.0, 2.0)
    assert find_rho_maxima(expand(spec), spec, ScanConfig(mu_min=0.1, mu_max=3.0, mu_step=0.05)) == []
    assert detect_transition(spec, 1.0, ScanConfig()) == []


def test_single_maximum_c2():
    spec = PotentialSpec(2.0, 2.0)
    found = find_rho_maxima(expand(spec), spec, ScanConfig(mu_min=0.3, mu_max=0.8))
    assert len(found) == 1
    assert abs(found[0].mu - 0.45) <= 0.02


def test_unweighted_maximum_sits_elsewhere():
    # the plain rho' maximum for c = 2 is not at the reference 0.45
    spec = PotentialSpec(2.0, 2.0)
    found = find_rho_maxima(expand(spec), spec, ScanConfig(mu_min=0.3, mu_max=0.8, weight_exponent=0.0))
    assert len(found) == 1 and abs(found[0].mu - 0.555) < 0.01


def test_hole_edges_are_not_maxima():
    spec = PotentialSpec(1.5, 2.0)
    exp = expand(spec)
    found = find_rho_maxima(exp, spec, ScanConfig(mu_min=0.1, mu_max=0.5, weight_exponent=0.0))
    for m in found:
        assert all(abs(m.mu - float(e)) > 0.02 for e in exp.excluded_mu)


def test_sharp_transition_c4926():
    hits = detect_transition(PotentialSpec(49.26, 2.0), 0.25, ScanConfig())
    assert len(hits) == 1
    h = hits[0]
    assert (h.r, h.N) == (0, 1)
    assert abs(h.mu - 0.25) <= 0.005
    assert abs(h.entry) < 0.2 and abs(h.exit - h.entry - math.pi) < 0.3


def test_transitions_at_two_intervals():
    hits = detect_transition(PotentialSpec(64.6, 1.0), 4.02, ScanConfig())
    assert [(h.r, h.N) for h in hits] == [(0, 2), (1, 5)]


@pytest.mark.parametrize("c, a, mu", [(49.26, 2.0, 0.25), (122.1, 2.0, 0.51), (64.6, 1.0, 4.02)])
def test_transition_jump_reaches_x_max(c, a, mu):
    spec = PotentialSpec(c, a)
    scan = ScanConfig()
    h = detect_transition(spec, mu, scan)[0]
    d = scan.delta_mu
    pair = theta_at(spec, [h.mu - d, h.mu + d], [100.0])[0]
    assert abs(pair[1] - pair[0] - math.pi) < 0.3


def test_broad_maximum_has_no_transition():
    assert detect_transition(PotentialSpec(2.0, 2.0), 0.45, ScanConfig()) == []


def test_scan_finds_transition_point_in_hole():
    spec = PotentialSpec(49.26, 2.0)
    res = scan_concentration(expand(spec), spec, ScanConfig(mu_min=0.15, mu_max=0.4))
    pts = [p for p in res.points if THETA_TRANSITION in p.confirmed_by and p.r == 0]
    assert any(abs(p.mu0 - 0.25) <= 0.005 and p.N == 1 for p in pts)
    # rho' is never evaluated next to mu = 1/4
    assert all(abs(m.mu - 0.25) > 0.02 for m in res.maxima)


def test_scan_links_coalesced_points():
    spec = PotentialSpec(122.1, 2.0)
    res = scan_concentration(expand(spec), spec, ScanConfig(mu_min=0.4, mu_max=0.6))
    near = [p for p in res.points if abs(p.mu0 - 0.51) <= 0.02]
    assert {p.r for p in near} >= {0, 1}
    assert all(p.coalesced_with is not None for p in near)


def test_strict_policy_rejects_broad_maxima():
    spec = PotentialSpec(2.0, 2.0)
    res = scan_concentration(expand(spec), spec,
                             ScanConfig(mu_min=0.3, mu_max=0.7, require_transition=True))
    assert res.points == []
    assert len(res.rejected) == 1


def test_point_serialisation():
    p = ConcentrationPoint(0.25, 0, 1, frozenset({RHO_MAXIMUM}))
    q = ConcentrationPoint(0.25, 1, 3, frozenset({THETA_TRANSITION}), coalesced_with=p)
    d = q.as_dict()
    assert d["name"] == "nu(N=3)" and d["coalesced_with"]["r"] == 0


def _fake(points_by_c):
    def scanner(c):
        return ScanResult([ConcentrationPoint(m, r, n, frozenset({RHO_MAXIMUM}))
                           for m, r, n in points_by_c[c]], [], [], [])
    return scanner


def test_trace_follows_nearest_and_flags_increment():
    table = {1.0: [(5.0, 0, 2), (1.0, 1, 3)], 2.0: [(4.6, 0, 2), (0.9, 1, 3)],
             3.0: [(4.1, 0, 3)]}
    rows = trace_point(PotentialSpec(1.0, 2.0), ScanConfig(), [1.0, 2.0, 3.0], (0, 2),
                       scanner=_fake(table))
    assert [r.mu0 for r in rows] == [5.0, 4.6, 4.1]
    assert [r.increment for r in rows] == [False, False, True]


def test_trace_lost():
    table = {1.0: [(5.0, 0, 2)], 2.0: [(0.5, 0, 2)]}
    with pytest.raises(TrackLostError):
        trace_point(PotentialSpec(1.0, 2.0), ScanConfig(), [1.0, 2.0], (0, 2),
                    scanner=_fake(table), max_gap=1.0)
    with pytest.raises(ValueError):
        trace_point(PotentialSpec(1.0, 2.0), ScanConfig(), [2.0, 1.0], (0, 2), scanner=_fake(table))


def test_integrable_maxima_agree_with_direct_curve():
    from specconc.integrate import SolverConfig, rho_prime_direct_batch

    spec = PotentialSpec(5.0, 3.0)
    scan = ScanConfig(mu_min=0.3, mu_max=0.55, mu_step=0.01)
    acc = find_rho_maxima(expand(spec), spec, scan)
    assert len(acc) == 1
    mus = np.arange(0.30, 0.55, 0.001)
    rho, _ = rho_prime_direct_batch(spec, mus, 1e3, cfg=SolverConfig(max_step=0.5))
    obj = rho * mus ** (-0.25)
    assert abs(mus[np.argmax(obj)] - acc[0].mu) <= scan.refine_tol
