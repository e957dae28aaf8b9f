"""Command-line entry point: ``nczeta <command> [options]``.

Exit status: 0 when every certificate passes, 1 on a verification failure,
2 on usage errors (bad flags, missing or unreadable input and golden files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .coeffring import ParseError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _fault(spec: str | None):
    if not spec:
        return None
    from .pipeline import FaultSpec
    stage, _, idx = spec.partition(":")
    try:
        return FaultSpec(stage, int(idx or 0))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_build_symbol(args) -> int:
    from .serialize import pretty, symbol_to_text
    from .symbolcalc import laplacian_symbol, left_multiplication_route
    sym = laplacian_symbol()
    _write(symbol_to_text(sym), args.out)
    ok = left_multiplication_route() == sym
    if args.pretty:
        for order in sym.orders():
            print(f"a{order} = {pretty(sym[order])}", file=sys.stderr)
    print(f"product-rule route {'agrees' if ok else 'DISAGREES'}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_parametrix(args) -> int:
    from .pipeline import cached_parametrix
    from .serialize import symbol_to_text
    from .symbolcalc import composition_residual, parametrix
    if args.order < 0:
        raise UsageError("--order must be >= 0")
    sym = cached_parametrix(args.order, not args.no_cache) if args.order == 2 \
        else parametrix(args.order)
    _write(symbol_to_text(sym), args.out)
    residual = composition_residual(args.order, b=sym)
    status = "verified" if not residual else f"FAILS at orders {sorted(residual)}"
    print(f"composition through order {args.order}: {status}", file=sys.stderr)
    return EXIT_OK if not residual else EXIT_FAIL


def _load_b2(text: str):
    from .serialize import parse_ncpoly, parse_symbol
    if "[order" in text:
        sym = parse_symbol(text)
        if -4 not in sym.components:
            raise UsageError("input symbol has no order -4 component")
        return sym[-4]
    return parse_ncpoly(text)


def cmd_reduce(args) -> int:
    from .pipeline import render_text, run_pipeline
    b2 = _load_b2(_read(args.input))
    res = run_pipeline(golden=args.golden, b2=b2)
    if res.expr is not None:
        _write(res.artifacts["modular"], args.out)
    sys.stderr.write(render_text(res.report()))
    return EXIT_OK if res.passed else EXIT_FAIL


def _modular_certificate(res) -> dict:
    stages = {s["stage"]: s for s in res.stages}
    regroup = stages.get("regroup_f", {})
    return {
        "f_match": bool(regroup.get("f_match")),
        "slot_ratios": {k: v["pass"] for k, v in regroup.get("slots", {}).items()},
        "h_match": bool(stages.get("h_identity", {}).get("pass")),
        "K_odd": bool(stages.get("K_odd", {}).get("K_odd")),
        "conclusion": (res.conclusion or {}).get("conclusion"),
    }


def cmd_verify(args) -> int:
    from .pipeline import oracle_bundle, render_text, run_pipeline
    stop = {"parametrix": "parametrix", "reduce": "reduce"}.get(args.stage)
    res = run_pipeline(golden=args.golden, fault=_fault(args.inject_fault),
                       use_cache=not args.no_cache, stop_after=stop)
    report = res.report()
    ok = res.passed
    if args.oracle_trials and res.f is not None:
        from .oracle import run_battery
        battery = run_battery(oracle_bundle(res), trials=args.oracle_trials, seed=args.seed)
        report["oracle"] = {k: battery[k] for k in ("trials", "seed", "dims", "summary", "pass")}
        ok = ok and battery["pass"]
        report["pass"] = ok
    if args.stage == "modular":
        text = json.dumps(_modular_certificate(res), indent=1, sort_keys=True, ensure_ascii=False) + "\n"
    elif args.format == "json":
        text = json.dumps(report, indent=1, sort_keys=True, default=str) + "\n"
    else:
        text = render_text(report)
    _write(text, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle(args) -> int:
    from .pipeline import oracle_bundle, run_pipeline
    from .oracle import run_battery
    res = run_pipeline(use_cache=not args.no_cache)
    if res.f is None:
        print("pipeline did not reach the modular stage", file=sys.stderr)
        return EXIT_FAIL
    dims = (args.dim,) if args.dim else (3, 4, 5)
    rep = run_battery(oracle_bundle(res), trials=args.trials, seed=args.seed, dims=dims,
                      tol=args.tol)
    text = json.dumps(rep, indent=1, sort_keys=True, ) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    for name, row in sorted(rep["summary"].items()):
        print(f"{name}: worst {row['worst']:.2e}, failures {row['failures']}/{row['runs']}")
    print("oracle battery", "PASS" if rep["pass"] else "FAIL")
    return EXIT_OK if rep["pass"] else EXIT_FAIL


def cmd_eval_spectral(args) -> int:
    from .modular import LEMMA_F, SpectralFn, eval_spectral, expected_h
    import math
    if args.fn == "f":
        fn = LEMMA_F
    else:
        fn = SpectralFn({(0, int(args.fn[1])): 1})
    h = expected_h() if args.fn == "f" else None
    for u in args.u:
        if u <= 0:
            raise UsageError("u must be positive")
        line = f"{u!r}\t{eval_spectral(fn, u):.15g}"
        if h is not None and u != 1:
            line += f"\th(log u)={float(h.evaluate(math.log(u))):.15g}"
        print(line)
    return EXIT_OK


def cmd_report(args) -> int:
    from .pipeline import render_text, run_pipeline
    if args.input:
        try:
            report = json.loads(_read(args.input))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.input}: not a JSON report ({exc})") from None
    else:
        report = run_pipeline(golden=args.golden).report()
    _write(render_text(report), args.out)
    return EXIT_OK if report.get("pass") else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nczeta", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build-symbol", help="write the symbol of k Laplacian k")
    s.add_argument("--out", help="output path (default stdout)")
    s.add_argument("--pretty", action="store_true", help="also print human-readable components")
    s.set_defaults(handler=cmd_build_symbol)

    s = sub.add_parser("parametrix", help="compute b0..bN and verify the composition")
    s.add_argument("--order", type=int, default=2, help="highest b_n (default 2)")
    s.add_argument("--out", help="output path (default stdout)")
    s.add_argument("--no-cache", action="store_true", help="recompute instead of using the cache")
    s.set_defaults(handler=cmd_parametrix)

    s = sub.add_parser("reduce", help="integrate a b2 term list down to modular form")
    s.add_argument("--in", dest="input", required=True, help="b2 term list or parametrix output")
    s.add_argument("--out", help="ModularExpr JSON path (default stdout)")
    s.add_argument("--golden", help="directory of golden term lists")
    s.set_defaults(handler=cmd_reduce)

    s = sub.add_parser("verify", help="run the pipeline and print certificates")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--all", action="store_true", help="every stage (default)")
    g.add_argument("--stage", choices=("parametrix", "reduce", "modular"),
                   help="stop after this stage; 'modular' prints the modular certificate")
    s.add_argument("--golden", help="directory of golden term lists")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.add_argument("--out", help="write the report here (default stdout)")
    s.add_argument("--oracle-trials", type=int, default=0,
                   help="also run this many matrix-model trials (default 0)")
    s.add_argument("--seed", type=int, default=0, help="first oracle seed (default 0)")
    s.add_argument("--inject-fault", metavar="STAGE[:INDEX]",
                   help="perturb one coefficient at a stage (negative control)")
    s.add_argument("--no-cache", action="store_true")
    s.set_defaults(handler=cmd_verify)

    s = sub.add_parser("oracle", help="numerical matrix-model battery")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--dim", type=int, default=None, help="fixed dimension (default cycles 3,4,5)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--out", help="JSON report path")
    s.add_argument("--no-cache", action="store_true")
    s.set_defaults(handler=cmd_oracle)

    s = sub.add_parser("eval-spectral", help="evaluate L1, L2, L3 or f at points u > 0")
    s.add_argument("--fn", choices=("L1", "L2", "L3", "f"), default="f")
    s.add_argument("u", type=float, nargs="+")
    s.set_defaults(handler=cmd_eval_spectral)

    s = sub.add_parser("report", help="render a JSON report as text (or run and render)")
    s.add_argument("--in", dest="input", help="JSON report from 'verify --format json'")
    s.add_argument("--golden", help="directory of golden term lists")
    s.add_argument("--out")
    s.set_defaults(handler=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from .pipeline import GoldenMissing
    try:
        return args.handler(args)
    except (UsageError, GoldenMissing) as exc:
        print(f"nczeta: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"nczeta: parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
