"""Command line entry point ``thermistor-sim``.

Exit codes: 0 success, 2 configuration error, 3 solver nonconvergence,
4 invariant violation (``run --strict``) or a failed check
(``check-h1``, ``verify``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_VIOLATION = 0, 2, 3, 4

logger = logging.getLogger("thermistor")


def _emit(obj):
    from .config_io import _jsonable
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def _load(path, check_h1=True):
    from .config_io import ConfigError, load_config
    try:
        return load_config(path, check_h1=check_h1)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return None
    except OSError as exc:
        print(f"config error: cannot read {path}: {exc}", file=sys.stderr)
        return None


def cmd_run(args) -> int:
    from .coupler import SimulationError, run_simulation
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_CONFIG
    if args.no_figures:
        cfg = replace(cfg, figures=False)
    try:
        res = run_simulation(cfg, out_dir=args.out)
    except SimulationError as exc:
        print(f"nonconvergence: {exc}", file=sys.stderr)
        print(f"partial outputs written to {args.out}", file=sys.stderr)
        return EXIT_NONCONV
    s = res.summary()
    s.pop("slabs", None)
    _emit(s)
    if res.violations:
        for kind, worst in s["violations"].items():
            logger.warning("invariant %s violated (worst %g)", kind, worst)
        if args.strict:
            return EXIT_VIOLATION
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .config_io import write_sweep
    from .coupler import homotopy_sweep
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_CONFIG
    try:
        entries = homotopy_sweep(cfg, args.eps, workers=args.workers)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_sweep(entries, args.out, figures=not args.no_figures)
    _emit([{"eps": e.eps, "status": e.status, "u_sup": e.u_sup, "phi_sup": e.phi_sup,
            "picard_iters_max": e.picard_iters_max} for e in entries])
    return EXIT_OK


def cmd_check_h1(args) -> int:
    from .conductivity import verify_h1
    cfg = _load(args.config, check_h1=False)
    if cfg is None:
        return EXIT_CONFIG
    rep = verify_h1(cfg.sigma, args.smax, n_samples=args.samples)
    _emit(rep.to_dict())
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def cmd_slab(args) -> int:
    from .coupler import slab_criterion
    try:
        crit = slab_criterion(args.eps_coef, args.b, args.c, grad_phi0=args.grad_phi0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(crit.__dict__)
    return EXIT_OK


def cmd_lemma(args) -> int:
    from . import estimates as est
    if args.lemma == "gronwall":
        t = np.linspace(0.0, args.T, args.n)
        bound = est.gronwall_bound(args.h0, args.c, np.full_like(t, args.g), t)
        _emit({"t": t[-1], "bound": bound[-1]})
    elif args.lemma == "ynb":
        r = est.ynb_check(args.c, args.b, args.alpha, y0=args.y0, n_max=args.n_max, rel=args.rel)
        _emit({"threshold": r.threshold, "y0": r.y0, "converged": r.converged,
               "y_last": r.sequence[-1], "steps": len(r.sequence) - 1})
    elif args.lemma == "small":
        r = est.small_lemma_check(args.b0, args.lam, args.alpha, k_max=args.k_max)
        _emit({"hypothesis_ok": r.hypothesis_ok, "bound": r.bound,
               "sequence_max": r.sequence_max, "bound_holds": r.bound_holds,
               "diverged": r.diverged})
    else:
        from .expr import ExprError, Expression
        from .grid import Field, GridSpec
        grid = GridSpec(1, args.nx) if args.dim == 1 else GridSpec(2, args.nx, 1.0, args.nx, 1.0)
        try:
            fn = Expression(args.expr)
        except ExprError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        f = Field.from_function(grid, lambda x, y: fn(x, y, 0.0))
        r = est.interpolation_check(f, args.ell, args.q, args.r, args.eps)
        _emit(r.__dict__)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .oracle import SUITES
    out = SUITES[args.suite]()
    _emit(out)
    return EXIT_OK if out["ok"] else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermistor-sim",
                                 description="Coupled Joule-heating (thermistor) simulator")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--strict", action="store_true", help="exit 4 on any invariant violation")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="homotopy family u = eps*B(u)")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", type=_float_list, default=[0.25, 0.5, 1.0])
    p.add_argument("--out", default="out_sweep")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check-h1", help="sample the conductivity growth bounds")
    p.add_argument("--config", required=True)
    p.add_argument("--smax", type=float, default=20.0)
    p.add_argument("--samples", type=int, default=2001)
    p.set_defaults(func=cmd_check_h1)

    p = sub.add_parser("slab", help="small-time slab criterion")
    p.add_argument("--eps-coef", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--grad-phi0", type=float, default=None)
    p.set_defaults(func=cmd_slab)

    p = sub.add_parser("lemma", help="numerical checks of the auxiliary inequalities")
    lem = p.add_subparsers(dest="lemma", required=True)
    q = lem.add_parser("gronwall")
    q.add_argument("--h0", type=float, required=True)
    q.add_argument("--c", type=float, required=True)
    q.add_argument("--g", type=float, default=0.0, help="constant forcing g(t)")
    q.add_argument("--T", type=float, default=1.0)
    q.add_argument("--n", type=int, default=1001)
    q = lem.add_parser("ynb")
    q.add_argument("--c", type=float, required=True)
    q.add_argument("--b", type=float, required=True)
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--y0", type=float, default=None)
    q.add_argument("--rel", type=float, default=1.0, help="start at rel*threshold when --y0 is absent")
    q.add_argument("--n-max", type=int, default=200)
    q = lem.add_parser("small")
    q.add_argument("--b0", type=float, required=True)
    q.add_argument("--lam", type=float, required=True)
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--k-max", type=int, default=200)
    q = lem.add_parser("interp")
    q.add_argument("--expr", required=True, help="function of x (and y in 2D)")
    q.add_argument("--dim", type=int, choices=(1, 2), default=1)
    q.add_argument("--nx", type=int, default=101)
    q.add_argument("--ell", type=float, required=True)
    q.add_argument("--q", type=float, required=True)
    q.add_argument("--r", type=float, required=True)
    q.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=cmd_lemma)

    p = sub.add_parser("verify", help="compare production solvers with the oracles")
    p.add_argument("--suite", choices=("elliptic", "parabolic", "mms"), required=True)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
