"""Command-line front end.

Exit status: 0 on success, 2 when an input fails validation (messages on
stderr), 1 on an internal or LP failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Optional, Sequence

from .cps import HypothesisError, find_arbitrage, find_cps, superreplicate
from .formats import (
    FormatError,
    cps_to_dict,
    dumps,
    leaf_map,
    load_claim,
    load_family,
    load_market,
    load_sequence,
    strategy_to_dict,
)
from .halmos_savage import FamilyError, hs1_find_q0, hs2_find_q0, verify_hs1, verify_hs2
from .market import InvalidMarketError, TreeError, liquidation_value, validate_market
from .sde import ExampleSixParams
from .sequence import LambdaRule, McConfig, inf_profile, section6_report, separability_scan, sup_profile

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2
VALIDATION_ERRORS = (InvalidMarketError, TreeError, FamilyError, FormatError, HypothesisError,
                     ValueError, FileNotFoundError)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _market(args):
    market = load_market(args.market, validate=False)
    if args.lam is not None:
        market = market.with_lambda(args.lam)
    problems = validate_market(market)
    if problems:
        raise InvalidMarketError(problems)
    return market


def cmd_cps(args) -> dict:
    market = _market(args)
    cps = find_cps(market)
    out = {"lambda": market.lam, "exists": cps is not None}
    if cps is not None:
        out.update(cps_to_dict(cps))
        out["containment_violation"] = cps.containment_violation(market)
    return out


def cmd_arb(args) -> dict:
    market = _market(args)
    strat = find_arbitrage(market)
    out = {"lambda": market.lam, "arbitrage": strat is not None}
    if strat is not None:
        out["strategy"] = strategy_to_dict(strat)
        v = liquidation_value(strat, market)
        out["terminal_value"] = leaf_map(market.tree, v[market.tree.leaves])
    return out


def cmd_superrep(args) -> dict:
    market = _market(args)
    claim = load_claim(args.claim, market)
    res = superreplicate(market, claim)
    out = {
        "lambda": market.lam,
        "dual_value": res.dual_value,
        "primal_value": res.primal_value,
        "gap": res.gap,
    }
    if res.cps is not None:
        out["pricing_cps"] = cps_to_dict(res.cps)
    if res.strategy is not None:
        out["hedge"] = strategy_to_dict(res.strategy)
    return out


def _hs(args, find, verify) -> dict:
    family = load_family(args.family)
    cert = find(family, args.epsilon, args.delta)
    check = verify(family, args.epsilon, args.delta)
    return {
        "epsilon": args.epsilon,
        "delta": args.delta,
        "hypothesis_holds": check.holds,
        "hypothesis_counterexample": check.counterexample,
        "weights": cert.weights,
        "q0": cert.q0,
        "value": cert.value,
        "threshold": cert.threshold,
        "witness": cert.witness,
        "passed": cert.passed,
    }


def cmd_hs1(args) -> dict:
    return _hs(args, hs1_find_q0, verify_hs1)


def cmd_hs2(args) -> dict:
    return _hs(args, hs2_find_q0, verify_hs2)


def cmd_lemma_l(args) -> str:
    seq = load_sequence(args.sequence)
    profile = (sup_profile if args.direction == "sup" else inf_profile)(seq, args.epsilon)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "epsilon", "delta_n"])
    for n, eps, d in profile.rows():
        w.writerow([n, format(eps, ".9g"), format(d, ".9g")])
    if args.summary:
        summary = {
            "direction": args.direction,
            "labels": seq.labels,
            "delta_star": {format(e, ".9g"): d for e, d in zip(profile.epsilons, profile.delta_star)},
            "witnesses": profile.witnesses,
        }
        if args.eta is not None:
            summary["separating_sets"] = [
                {"leaves": s.leaves, "p_mass": s.p_mass, "q_max": s.q_max} for s in separability_scan(seq, args.eta)
            ]
        Path(args.summary).write_text(dumps(summary), encoding="utf-8")
    return buf.getvalue()


def cmd_example6(args) -> str:
    rule = LambdaRule.parse(args.rule)
    params = [ExampleSixParams(T, args.eps, args.gamma) for T in args.T]
    mc = None if args.no_mc else McConfig(args.n_paths, args.seed)
    report = section6_report(params, rule, mc, grid_points=args.grid_points)
    if args.summary:
        Path(args.summary).write_text(dumps({"rule": str(rule), **report.verdicts()}), encoding="utf-8")
    return report.to_csv()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asymparb", description="Consistent price systems and asymptotic arbitrage diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def market_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--market", required=True, help="market JSON file")
        p.add_argument("--lambda", dest="lam", type=float, help="override the file's cost level")
        p.add_argument("--out", help="write JSON here instead of stdout")
        return p

    market_cmd("cps", "find an equivalent consistent price system").set_defaults(func=cmd_cps)
    market_cmd("arb", "search for an arbitrage strategy").set_defaults(func=cmd_arb)
    p = market_cmd("superrep", "superhedging price by primal and dual LP")
    p.add_argument("--claim", required=True, help="claim JSON (leaf id -> payoff)")
    p.set_defaults(func=cmd_superrep)

    for name, func in (("hs1", cmd_hs1), ("hs2", cmd_hs2)):
        p = sub.add_parser(name, help=f"mixture certificate ({name})")
        p.add_argument("--family", required=True, help='JSON {"p": [...], "generators": [[...], ...]}')
        p.add_argument("--epsilon", type=float, required=True)
        p.add_argument("--delta", type=float, required=True)
        p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("lemma-l", help="event-mass profiles over a market sequence")
    p.add_argument("--sequence", required=True, help="JSON array of {market, lambda}")
    p.add_argument("--epsilon", type=_floats, required=True, help="comma-separated levels")
    p.add_argument("--direction", choices=("sup", "inf"), default="sup")
    p.add_argument("--eta", type=float, help="also scan for separating events at this level")
    p.add_argument("--summary", help="write delta* summary JSON here")
    p.add_argument("--out", help="profile CSV (stdout by default)")
    p.set_defaults(func=cmd_lemma_l)

    p = sub.add_parser("example6", help="drifted lognormal sequence report")
    p.add_argument("--T", type=_floats, required=True, help="comma-separated horizons")
    p.add_argument("--eps", type=float, required=True, help="exponent in alpha = exp(-T^(2+eps))")
    p.add_argument("--gamma", type=float, default=0.4)
    p.add_argument("--rule", default="zero", help="zero | threshold_multiple:k | fixed:lambda | schedule:l1,l2,...")
    p.add_argument("--n-paths", dest="n_paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=10_000)
    p.add_argument("--no-mc", action="store_true", help="closed forms only")
    p.add_argument("--summary", help="write verdict JSON here")
    p.add_argument("--out", help="CSV (stdout by default)")
    p.set_defaults(func=cmd_example6)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except InvalidMarketError as exc:
        for v in exc.violations:
            print(f"invalid input: {v}", file=sys.stderr)
        return EXIT_INVALID
    except VALIDATION_ERRORS as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # LP failures and bugs alike
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    _emit(result if isinstance(result, str) else dumps(result), args.out)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
