"""``conekit`` command line: gen, check, verify, report.

Exit codes:
    0  In / suite passed / report consistent
    1  Out / suite failed / report inconsistent
    2  bad arguments, unreadable input or unknown suite
    3  Unknown

All randomness flows from ``--seed`` (default :data:`DEFAULT_SEED`).
``CONEKIT_TOL`` overrides the absolute tolerance; ``--abs-eps`` wins over it.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .cones import Cone, membership, parse_cone
from .maps import QuantumMap, StateFunctional
from .matcore import Tolerance, VerdictState
from .states import GEN_KINDS, gen_random, is_ppt_state, is_separable, theorem10_check, theorem11_check
from .verify import SUITES, run_suite

DEFAULT_SEED = 20240917

EXIT_IN, EXIT_OUT, EXIT_USAGE, EXIT_UNKNOWN = 0, 1, 2, 3
_EXIT_FOR = {VerdictState.IN: EXIT_IN, VerdictState.OUT: EXIT_OUT, VerdictState.UNKNOWN: EXIT_UNKNOWN}


class UsageError(Exception):
    pass


def _tolerance(args) -> Tolerance:
    tol = Tolerance.from_env()
    if getattr(args, "abs_eps", None) is not None:
        tol = Tolerance(abs_eps=args.abs_eps, rel_eps=tol.rel_eps)
    return tol


def _emit(obj: dict, out_path: str | None = None):
    text = json.dumps(obj, indent=2)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    try:
        if "choi" in obj:
            return QuantumMap.from_dict(obj)
        if "density" in obj:
            return StateFunctional.from_dict(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid object in {path}: {exc}") from exc
    raise UsageError(f"{path} holds neither a map (\"choi\") nor a functional (\"density\")")


def _as_state(obj) -> StateFunctional:
    if not isinstance(obj, StateFunctional):
        raise UsageError("this criterion needs a state file")
    return obj


def cmd_gen(args) -> int:
    try:
        obj = gen_random(args.kind, n=args.n, seed=args.seed, p=args.p)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(obj.to_dict(), args.out)
    return 0


def cmd_check(args) -> int:
    tol = _tolerance(args)
    obj = _load(args.object)
    extra = {}
    if args.cone is not None:
        try:
            cone = parse_cone(args.cone)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if isinstance(obj, StateFunctional):
            raise UsageError("--cone needs a map file")
        verdict = membership(obj, cone, tol=tol, restarts=args.restarts, seed=args.seed)
        extra["cone"] = cone.value
    elif args.ppt:
        verdict = _state_check(is_ppt_state, _as_state(obj), tol)
        extra["criterion"] = "ppt"
    else:
        verdict, dec = _state_check(is_separable, _as_state(obj), tol=tol, seed=args.seed,
                                    search_budget=args.search_budget)
        extra["criterion"] = "separable"
        if dec is not None:
            extra["decomposition"] = dec.to_dict()
    out = verdict.to_dict()
    out.update(extra)
    out.update(seed=args.seed, version=__version__)
    _emit(out, args.out)
    return _EXIT_FOR[verdict.state]


def _state_check(fn, *args, **kwargs):
    # the state criteria reject non-states with ValueError; that is bad input
    try:
        return fn(*args, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_verify(args) -> int:
    suites = list(SUITES) if args.all else args.suites
    if not suites:
        raise UsageError("name at least one suite or pass --all")
    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s): {', '.join(unknown)}; known: {', '.join(SUITES)}")
    if args.n not in (2, 3, 4):
        raise UsageError("--n must be 2, 3 or 4")
    reports = [run_suite(s, n=args.n, trials=args.trials, seed=args.seed, workers=args.workers) for s in suites]
    passed = all(r.passed for r in reports)
    _emit({"version": __version__, "seed": args.seed, "n": args.n, "passed": passed,
           "suites": [r.to_dict() for r in reports]}, args.out)
    return 0 if passed else 1


def cmd_report(args) -> int:
    tol = _tolerance(args)
    rho = _as_state(_load(args.object))
    if args.theorem == "10":
        if args.cone is None:
            raise UsageError("--theorem 10 needs --cone")
        try:
            cone = parse_cone(args.cone)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        report = theorem10_check(rho, cone, tol=tol, trials=args.trials, seed=args.seed)
    else:
        report = theorem11_check(rho, tol=tol, trials=args.trials, seed=args.seed)
    out = report.to_dict()
    out.update(seed=args.seed, version=__version__)
    _emit(out, args.out)
    return 0 if report.consistent else 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="conekit", description="Positive maps, mapping cones and their verification suites.")
    p.add_argument("--version", action="version", version=f"conekit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help="write JSON here instead of standard output"):
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"RNG seed (default {DEFAULT_SEED})")
        sp.add_argument("--out", default=None, help=out_help)

    g = sub.add_parser("gen", help="generate a seeded random map or state")
    g.add_argument("kind", choices=sorted({k.replace("_", "-") for k in GEN_KINDS} | set(GEN_KINDS)))
    g.add_argument("--n", type=int, default=2)
    g.add_argument("--p", type=float, default=None, help="Werner mixing weight")
    common(g)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("check", help="membership or separability verdict for a JSON object")
    c.add_argument("object")
    crit = c.add_mutually_exclusive_group(required=True)
    crit.add_argument("--cone", help="one of " + ", ".join(x.value for x in Cone))
    crit.add_argument("--ppt", action="store_true")
    crit.add_argument("--separable", action="store_true")
    c.add_argument("--restarts", type=int, default=None, help="product-vector restarts for pos/dec")
    c.add_argument("--search-budget", type=int, default=300, help="column-generation rounds for --separable")
    c.add_argument("--abs-eps", type=float, default=None)
    common(c)
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("suites", nargs="*")
    v.add_argument("--all", action="store_true")
    v.add_argument("--n", type=int, default=2)
    v.add_argument("--trials", type=int, default=None)
    v.add_argument("--workers", type=int, default=1)
    common(v)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="equivalence report for a state")
    r.add_argument("object")
    r.add_argument("--theorem", choices=["10", "11"], default="11")
    r.add_argument("--cone", default=None)
    r.add_argument("--trials", type=int, default=200)
    r.add_argument("--abs-eps", type=float, default=None)
    common(r)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"conekit: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
