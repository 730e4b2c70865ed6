"""Command line front end.

    specconc expand --a 2 --c 1
    specconc rho    --a 2 --c 2 --mu-min 0.1 --mu-max 2 --format csv
    specconc scan   --a 2 --c 50 --mu-min 0.05 --mu-max 6
    specconc theta  --a 2 --c 49.26 --mu 0.245,0.25,0.255 --x-max 15 --format svg --out theta.svg
    specconc trace  --a 2 --c-values 30,40,50 --point 0,2
    specconc verify

Every option may also come from ``--config file.json`` (keys are the long
option names with dashes or underscores); flags given on the command line
win.  Exit status: 0 success, 1 usage, 2 excluded value, 3 failed check.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import emit
from .concentrate import ScanConfig, TrackLostError, scan_concentration, trace_point
from .integrate import SolverConfig, rho_prime_accelerated_batch, rho_prime_direct_batch, theta_at
from .potential import PotentialSpec
from .symbolic import DEFAULT_EPSILON_ORDER, DEFAULT_GUARD, DEFAULT_MAX_DEGREE, ExcludedValueError, expand

EXIT_OK, EXIT_USAGE, EXIT_EXCLUDED, EXIT_VERIFY = 0, 1, 2, 3
COMMANDS = ("expand", "rho", "scan", "theta", "trace", "verify")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# option name -> (type, default, help)
_OPTIONS = {
    "a": (float, 2.0, "decay exponent a > 0"),
    "c": (float, 1.0, "coupling c >= 0"),
    "mu_min": (float, 0.05, "lower end of the mu grid"),
    "mu_max": (float, 5.0, "upper end of the mu grid"),
    "mu_step": (float, 0.01, "mu grid spacing"),
    "mu": (str, None, "comma separated mu values (rho, theta)"),
    "x_max": (float, 100.0, "integration range X"),
    "max_step": (float, 0.1, "largest solver step"),
    "rel_tol": (float, 1e-9, "solver relative tolerance"),
    "abs_tol": (float, 1e-11, "solver absolute tolerance"),
    "epsilon_order": (float, DEFAULT_EPSILON_ORDER, "target decay order of the residual"),
    "max_degree": (int, DEFAULT_MAX_DEGREE, "largest factor degree that is still rewritten"),
    "depth": (int, None, "limit on rewriting generations (expand)"),
    "guard": (float, DEFAULT_GUARD, "resonance guard on |alpha s + beta|"),
    "method": (str, "accelerated", "accelerated | direct | both (rho)"),
    "bc_angle": (float, None, "boundary angle alpha in (0, pi); direct method only"),
    "refine_tol": (float, 5e-3, "refinement tolerance for mu0"),
    "delta_mu": (float, 1e-3, "initial transition probe half-width"),
    "delta_max": (float, 0.064, "largest transition probe half-width"),
    "r_max": (int, 2, "highest interval index searched"),
    "weight_exponent": (float, 0.5, "maxima are sought for rho' * s^-w"),
    "require_transition": (str, "auto", "auto | yes | no"),
    "dx": (float, 0.05, "x spacing of theta traces"),
    "c_values": (str, None, "comma separated c values (trace)"),
    "point": (str, None, "r,N of the traced point (trace)"),
    "max_gap": (float, 2.5, "largest continuation step in mu (trace)"),
    "checks": (str, None, "comma separated subset of checks (verify)"),
    "format": (str, None, "csv | json | svg | text"),
    "out": (str, None, "output path (default stdout)"),
    "workers": (int, 1, "worker processes for grid and per-c work"),
}


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def spec(self) -> PotentialSpec:
        return PotentialSpec(self.c, self.a)

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(x_max=self.x_max, rel_tol=self.rel_tol, abs_tol=self.abs_tol,
                            max_step=self.max_step)

    @property
    def scan(self) -> ScanConfig:
        req = {"auto": None, "yes": True, "no": False}.get(str(self.require_transition).lower())
        return ScanConfig(mu_min=self.mu_min, mu_max=self.mu_max, mu_step=self.mu_step,
                          delta_mu=self.delta_mu, delta_max=self.delta_max,
                          refine_tol=self.refine_tol, r_max=self.r_max,
                          weight_exponent=self.weight_exponent, guard=self.guard,
                          require_transition=req)

    def as_dict(self) -> dict:
        return {"command": self.command, **{k: v for k, v in sorted(self.options.items())
                                            if k not in ("out", "workers")}}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specconc", description="Spectral concentration for q = -c (1+x)^-a cos x.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with option values")
        for key, (typ, _default, hlp) in _OPTIONS.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=hlp)
    return p


def resolve(argv=None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    opts = {k: d for k, (_t, d, _h) in _OPTIONS.items()}
    if ns.config:
        try:
            with open(ns.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        for k, v in doc.items():
            key = k.replace("-", "_")
            if key == "command":
                continue
            if key not in _OPTIONS:
                raise UsageError(f"unknown config key {k!r}")
            opts[key] = v
    for k in _OPTIONS:
        v = getattr(ns, k)
        if v is not None:
            opts[k] = v
    return RunConfig(ns.command, opts)


def _floats(text, what):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad {what}: {text!r}") from exc


def _write(cfg: RunConfig, text: str):
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fmt_of(cfg, default, allowed):
    f = cfg.format or default
    if f not in allowed:
        raise UsageError(f"format {f!r} not available here (choose from {', '.join(allowed)})")
    if f == "svg" and not cfg.out:
        raise UsageError("svg output needs --out")
    return f


# commands ------------------------------------------------------------------

def cmd_expand(cfg: RunConfig) -> int:
    fmt = _fmt_of(cfg, "json", ("json", "text"))
    exp = expand(cfg.spec, cfg.epsilon_order, cfg.max_degree, max_generations=cfg.depth)
    report = {
        "residual_terms": len(exp.residual),
        "constant_terms": len(exp.constant_terms),
        "rewrite_count": exp.rewrite_count,
        "residual_factors": [f.label() for f in sorted(exp.residual_factors)],
        "excluded_mu": [str(m) for m in sorted(exp.excluded_mu)],
    }
    if fmt == "text":
        _write(cfg, exp.pretty() + "\n")
    else:
        doc = {"schema": f"specconc.expansion-report/{emit.SCHEMA_VERSION}",
               "config": cfg.as_dict(), "report": report, "expansion": exp.to_dict()}
        _write(cfg, json.dumps(doc, indent=2) + "\n")
        print(exp.pretty(), file=sys.stderr)
    return EXIT_OK


def _rho_chunk(args):
    method, spec, exp, mus, solver, guard, bc = args
    if method == "accelerated":
        return rho_prime_accelerated_batch(exp, spec, mus, solver, guard)
    return rho_prime_direct_batch(spec, mus, solver.x_max, bc, solver)


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_rho(cfg: RunConfig) -> int:
    fmt = _fmt_of(cfg, "csv", ("csv", "json", "svg"))
    spec = cfg.spec
    methods = {"accelerated": ["accelerated"], "direct": ["direct"],
               "both": ["accelerated", "direct"]}.get(cfg.method)
    if methods is None:
        raise UsageError(f"unknown method {cfg.method!r}")
    if cfg.bc_angle is not None and methods != ["direct"]:
        raise UsageError("--bc-angle needs --method direct")
    explicit = cfg.mu is not None
    if explicit:
        mus = np.array(_floats(cfg.mu, "mu list"))
    else:
        mus = ScanConfig(mu_min=cfg.mu_min, mu_max=cfg.mu_max, mu_step=cfg.mu_step).grid()
    if np.any(mus <= 0):
        raise UsageError("mu must be positive")
    exp = expand(spec, cfg.epsilon_order, cfg.max_degree)
    ok = np.array([exp.admissible(float(m), cfg.guard) for m in mus])
    if "accelerated" in methods and explicit and not ok.all():
        exp.check_mu(float(mus[~ok][0]), cfg.guard)  # raises
    rows = []
    series = []
    for method in methods:
        use = ok if method == "accelerated" else np.ones(len(mus), dtype=bool)
        vals = np.full(len(mus), np.nan)
        i0s = np.full(len(mus), np.nan)
        if use.any():
            chunks = np.array_split(mus[use], max(1, min(cfg.workers, use.sum())))
            parts = _map(_rho_chunk, [(method, spec, exp, ch, cfg.solver, cfg.guard, cfg.bc_angle)
                                      for ch in chunks if len(ch)], cfg.workers)
            vals[use] = np.concatenate([p[0] for p in parts])
            i0s[use] = np.concatenate([p[1] for p in parts])
        for m, v, i0, u in zip(mus, vals, i0s, use):
            rows.append({"mu": m, "s": math.sqrt(m), "rho_prime": v if u else None,
                         "i0": i0 if u else None, "method": method,
                         "status": "ok" if u else "excluded"})
        series.append((method, mus[use], vals[use]))
    if not any(r["status"] == "ok" for r in rows):
        print("warning: every grid point lies inside an excluded-value guard; no output rows",
              file=sys.stderr)
        rows = []
    conf = cfg.as_dict()
    if fmt == "csv":
        _write(cfg, emit.to_csv("specconc.rho", ["mu", "s", "rho_prime", "i0", "method", "status"],
                                rows, conf))
    elif fmt == "json":
        _write(cfg, emit.to_json("specconc.rho", rows, conf,
                                 excluded_mu=[str(m) for m in sorted(exp.excluded_mu)]))
    else:
        emit.write_svg(cfg.out, series, conf, xlabel="mu", ylabel="rho'(mu)",
                       title=f"rho' for a={cfg.a:g}, c={cfg.c:g}")
    return EXIT_OK


def _point_rows(res):
    rows = []
    for p in res.points:
        rows.append({"mu0": p.mu0, "r": p.r, "N": p.N, "name": p.name,
                     "confirmed_by": sorted(p.confirmed_by),
                     "coalesced_with": None if p.coalesced_with is None
                     else f"{p.coalesced_with.name}@{p.coalesced_with.mu0:.6g}",
                     "rho_prime": p.rho_prime, "status": "accepted"})
    for m in res.rejected:
        rows.append({"mu0": m.mu, "r": None, "N": None, "name": None, "confirmed_by": ["rho-maximum"],
                     "coalesced_with": None, "rho_prime": m.rho_prime, "status": "rejected-spurious"})
    return rows


_POINT_COLUMNS = ["mu0", "r", "N", "name", "confirmed_by", "coalesced_with", "rho_prime", "status"]


def cmd_scan(cfg: RunConfig) -> int:
    fmt = _fmt_of(cfg, "csv", ("csv", "json"))
    spec = cfg.spec
    exp = expand(spec, cfg.epsilon_order, cfg.max_degree)
    res = scan_concentration(exp, spec, cfg.scan, cfg.solver)
    rows = _point_rows(res)
    conf = cfg.as_dict()
    if fmt == "csv":
        _write(cfg, emit.to_csv("specconc.points", _POINT_COLUMNS, rows, conf))
    else:
        _write(cfg, emit.to_json("specconc.points", rows, conf))
    return EXIT_OK


def cmd_theta(cfg: RunConfig) -> int:
    fmt = _fmt_of(cfg, "csv", ("csv", "json", "svg"))
    if cfg.mu is None:
        raise UsageError("theta needs --mu")
    mus = np.array(_floats(cfg.mu, "mu list"))
    if np.any(mus <= 0):
        raise UsageError("mu must be positive")
    n = int(round(cfg.x_max / cfg.dx))
    xs = np.linspace(0.0, cfg.x_max, n + 1)
    th = theta_at(cfg.spec, mus, xs, cfg.solver)
    red = np.mod(th, np.pi)
    conf = cfg.as_dict()
    if fmt == "svg":
        series = [(f"mu={m:.6g}", xs, red[:, j]) for j, m in enumerate(mus)]
        emit.write_svg(cfg.out, series, conf, xlabel="x", ylabel="theta mod pi",
                       title=f"theta (mod pi), a={cfg.a:g}, c={cfg.c:g}", wrap_period=np.pi,
                       hlines=(np.pi / 2,))
        return EXIT_OK
    rows = [{"mu": m, "x": x, "theta": th[i, j], "theta_mod_pi": red[i, j]}
            for j, m in enumerate(mus) for i, x in enumerate(xs)]
    if fmt == "csv":
        _write(cfg, emit.to_csv("specconc.theta", ["mu", "x", "theta", "theta_mod_pi"], rows, conf))
    else:
        _write(cfg, emit.to_json("specconc.theta", rows, conf))
    return EXIT_OK


def _scan_one(args):
    a, c, eps, deg, scan, solver = args
    spec = PotentialSpec(c, a)
    return scan_concentration(expand(spec, eps, deg), spec, scan, solver)


def cmd_trace(cfg: RunConfig) -> int:
    fmt = _fmt_of(cfg, "csv", ("csv", "json"))
    if cfg.c_values is None or cfg.point is None:
        raise UsageError("trace needs --c-values and --point r,N")
    cs = _floats(cfg.c_values, "c list")
    try:
        r, N = (int(t) for t in cfg.point.split(","))
    except ValueError as exc:
        raise UsageError(f"bad --point {cfg.point!r}") from exc
    jobs = [(cfg.a, c, cfg.epsilon_order, cfg.max_degree, cfg.scan, cfg.solver) for c in cs]
    results = dict(zip(cs, _map(_scan_one, jobs, cfg.workers)))
    try:
        rows = trace_point(cfg.spec, cfg.scan, cs, (r, N), max_gap=cfg.max_gap,
                           scanner=lambda c: results[c])
    except TrackLostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    out = [asdict(row) for row in rows]
    conf = cfg.as_dict()
    cols = ["c", "mu0", "r", "N", "increment", "coalesced"]
    if fmt == "csv":
        _write(cfg, emit.to_csv("specconc.trace", cols, out, conf))
    else:
        _write(cfg, emit.to_json("specconc.trace", out, conf))
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from .verify import CHECKS, run_checks

    names = None
    if cfg.checks:
        names = [n.strip() for n in cfg.checks.split(",") if n.strip()]
        unknown = [n for n in names if n not in CHECKS]
        if unknown:
            raise UsageError(f"unknown checks: {', '.join(unknown)}")
    results = run_checks(names)
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'}  {res.name:<10} {res.detail}  ({res.seconds:.2f}s)")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


HANDLERS = {
    "expand": cmd_expand,
    "rho": cmd_rho,
    "scan": cmd_scan,
    "theta": cmd_theta,
    "trace": cmd_trace,
    "verify": cmd_verify,
}


def main(argv: Optional[list] = None) -> int:
    try:
        cfg = resolve(argv)
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"specconc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExcludedValueError as exc:
        print(f"specconc: excluded value: {exc}", file=sys.stderr)
        return EXIT_EXCLUDED
    except ValueError as exc:
        print(f"specconc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
