"""Command line interface: solvers, norm oracles, energies, liftings and verification suites.

Exit codes: 0 success, 1 failed assertion, 2 configuration error,
3 solver nonconvergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .currents import PointBoundary, PolyCurrent
from .lpalgebra import NonconvergenceError, as_exponent, comass_bounds, mass_p_certified, nuclear_p_certified

log = logging.getLogger("vecplateau")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class SuiteConfig:
    suite: str
    seed: int = 42
    trials: int | None = None
    k: list = field(default_factory=list)
    plist: list = field(default_factory=list)
    grid_n: int | None = None
    stencil: int = 16
    out: str = "results"
    threads: int = 1
    tol: float | None = None

    def validate(self):
        from .suites import SUITES

        if self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite!r}; choose from {', '.join(sorted(SUITES))}")
        if self.stencil not in (4, 8, 16):
            raise ConfigError("stencil must be 4, 8 or 16")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be positive")
        if any(int(k) < 1 for k in self.k):
            raise ConfigError("k must be positive")
        try:
            self.plist = [str(as_exponent(p)) for p in self.plist]
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        self.k = [int(k) for k in self.k]
        return self


def load_config(path) -> dict:
    """Read a JSON or TOML configuration file into a dict."""
    text = Path(path).read_text()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    if rows:
        keys = []
        for r in rows:
            keys += [k for k in r if k not in keys]
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return buf.getvalue()


def run_suite(cfg: SuiteConfig):
    """Run a suite, write its CSV, summary JSON and figures; return (exit status, summary dict)."""
    from .suites import SUITES

    cfg.validate()
    t0 = time.perf_counter()
    result = SUITES[cfg.suite](cfg)
    elapsed = time.perf_counter() - t0
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.suite}.csv").write_text(_csv_text(result.rows))
    for name, text in sorted(result.artifacts.items()):
        (out / name).write_text(text)
    summary = {
        "suite": cfg.suite,
        "config": asdict(cfg),
        "passed": result.passed,
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in result.checks],
        "derived": result.derived,
    }
    (out / f"{cfg.suite}_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_jsonable) + "\n")
    for c in result.checks:
        log.info("%s %s %s", "PASS" if c.passed else "FAIL", c.name, c.detail)
    log.info("suite %s finished in %.1f s", cfg.suite, elapsed)
    return (EXIT_OK if result.passed else EXIT_FAIL), summary


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x)}")


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------


def _read_json_arg(value):
    """Inline JSON, a path to a JSON file, or the name of a built-in instance."""
    from .instances import NAMED

    if value in NAMED:
        return NAMED[value]().to_dict()
    p = Path(value)
    text = p.read_text() if p.exists() else value
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {value!r} as JSON or file") from exc


def _boundary(value) -> PointBoundary:
    try:
        return PointBoundary.from_dict(_read_json_arg(value))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid instance: {exc}") from exc


def _current(value) -> PolyCurrent:
    try:
        return PolyCurrent.from_dict(_read_json_arg(value))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid current: {exc}") from exc


def _emit(obj, args, name=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    print(text)
    if args.out and name:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n")


def cmd_solve(args):
    from .plateau_integral import solve_integral
    from .plateau_normal import solve_normal
    from .render import render_solution

    S = _boundary(args.instance)
    if args.coeff == "normal":
        sol = solve_normal(S, args.p, n=args.grid, stencil=args.stencil, tol=args.tol or 1e-4,
                           method=args.method, strict=not args.lenient)
        _emit(sol.summary(), args, "solution.json")
        svg = render_solution(None, S, args.p, flow=sol) if args.svg else None
    else:
        sol = solve_integral(S, args.p, max_terminals=args.max_terminals)
        _emit(sol.summary(), args, "solution.json")
        svg = render_solution(sol.current, S, args.p) if args.svg else None
    if svg is not None:
        Path(args.svg).write_text(svg)
    return EXIT_OK


def cmd_norms(args):
    data = _read_json_arg(args.matrix)
    A = np.array(data, dtype=complex if args.kind == "nuclear" else float)
    p = args.p
    if args.kind == "mass":
        c = mass_p_certified(A, p, tol=args.tol or 1e-9)
    elif args.kind == "nuclear":
        c = nuclear_p_certified(A, p, tol=args.tol or 1e-9)
    else:
        b = comass_bounds(np.asarray(A, float), p)
        _emit({"kind": "comass", "p": str(as_exponent(p)), "value": 0.5 * (b.lower + b.upper),
               "lower": b.lower, "upper": b.upper, "direction": b.direction}, args, "norms.json")
        return EXIT_OK
    _emit({"kind": args.kind, "p": str(as_exponent(p)), "value": c.value, "lower": c.lower, "upper": c.upper,
           "gap": c.gap, "method": c.method, "dual": c.dual,
           "primal": [{"z": z, "v": v} for z, v in c.terms]}, args, "norms.json")
    return EXIT_OK


def cmd_energy(args):
    from .torusmaps import TorusMapSpec, harmonic_energy, neighbourhood_quadrature, nuclear_energy

    T = _current(args.current)
    if args.instance:
        S = _boundary(args.instance)
        if not T.boundary().equals(S):
            raise ConfigError("the current's boundary does not match the instance")
    try:
        spec = TorusMapSpec(T, args.eps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    q = neighbourhood_quadrature(spec, rtol=args.tol or 1e-6)
    H = harmonic_energy(spec, args.p, q)
    E = nuclear_energy(spec, args.p, q)
    _emit({"p": str(as_exponent(args.p)), "epsilon": args.eps, "H_p": H.value, "E_p": E.value,
           "tail_bound": 0.0, "quad_error": max(H.quad_error, E.quad_error), "nodes": len(q.weights)},
          args, "energy.json")
    return EXIT_OK


def cmd_lift(args):
    from .torusmaps import LiftingSpec, TorusMapSpec, harmonic_energy, jump_cost, verify_theoremB

    T = _current(args.current)
    C = _current(args.cuts)
    try:
        spec = TorusMapSpec(T, args.eps)
        lift = LiftingSpec(C, spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    H = harmonic_energy(spec, args.p)
    rep = verify_theoremB(spec, lift, args.p, H=H)
    J = jump_cost(lift, args.p)
    _emit({"jump_cost": J, "H_p": H.value, "factor": 1 + J / H.value, "theoremB": rep.to_dict()}, args, "lift.json")
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_verify(args):
    cfg = SuiteConfig(suite=args.suite)
    if args.config:
        try:
            data = load_config(args.config)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        for key, val in data.items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, val)
        cfg.suite = args.suite or cfg.suite
    for key in ("seed", "trials", "grid_n", "stencil", "threads", "tol"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if args.k:
        cfg.k = args.k
    if args.p:
        cfg.plist = args.p
    if args.out:
        cfg.out = args.out
    status, summary = run_suite(cfg)
    for c in summary["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  {c['detail']}")
    return status


def cmd_render(args):
    from .render import render_solution

    data = _read_json_arg(args.solution)
    cur = PolyCurrent.from_dict(data["current"] if "current" in data else data)
    S = _boundary(args.instance) if args.instance else cur.boundary()
    svg = render_solution(cur, S, args.p, style=args.style)
    target = Path(args.svg or "solution.svg")
    target.write_text(svg)
    print(str(target))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vecplateau", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--tol", type=float, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a Plateau problem")
    s.add_argument("--coeff", choices=["normal", "integral"], required=True)
    s.add_argument("--p", default="2")
    s.add_argument("--instance", required=True, help="JSON, JSON file, or one of pentagon/triangle/dipole")
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--stencil", type=int, choices=[4, 8, 16], default=16)
    s.add_argument("--method", default="auto", choices=["auto", "exact", "admm", "pdhg", "lp"])
    s.add_argument("--max-terminals", type=int, default=8)
    s.add_argument("--lenient", action="store_true", help="report the gap instead of failing on it")
    s.add_argument("--svg", default=None)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("norms", help="mass, comass or nuclear norm with certificates")
    s.add_argument("--matrix", required=True, help="k x d matrix as JSON (complex entries as [re, im] not supported)")
    s.add_argument("--p", default="2")
    s.add_argument("--kind", choices=["mass", "comass", "nuclear"], default="mass")
    s.set_defaults(func=cmd_norms)

    s = sub.add_parser("energy", help="H_p and E_p of the map generated by a current")
    s.add_argument("--instance", default=None)
    s.add_argument("--current", required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--p", default="2")
    s.set_defaults(func=cmd_energy)

    s = sub.add_parser("lift", help="jump cost and bound check for a cut system")
    s.add_argument("--current", required=True, help="generating current of the map")
    s.add_argument("--cuts", required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--p", default="2")
    s.set_defaults(func=cmd_lift)

    s = sub.add_parser("verify", help="run a verification suite")
    s.add_argument("--suite", required=True)
    s.add_argument("--config", default=None, help="JSON or TOML file with SuiteConfig fields")
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--k", type=int, nargs="*", default=None)
    s.add_argument("--p", nargs="*", default=None)
    s.add_argument("--grid-n", dest="grid_n", type=int, default=None)
    s.add_argument("--stencil", type=int, default=None)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("render", help="SVG of a stored solution")
    s.add_argument("--solution", required=True)
    s.add_argument("--instance", default=None)
    s.add_argument("--p", default="inf")
    s.add_argument("--style", choices=["layers", "norm"], default="layers")
    s.add_argument("--svg", default=None)
    s.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.seed is not None:
        np.random.seed(args.seed)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonconvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
