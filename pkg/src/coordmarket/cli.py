"""Command-line front end.

Exit codes: 0 on success, 1 on a domain error (infeasible or unbounded
market, unfundable sinks, failed theorem checks), 2 on usage or dataset
errors. Diagnostics go to stderr; data goes to stdout or ``--out``.
"""
from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from . import casestudy
from .bids import AmbiguousShares, NoPath, build_covering_scenario, compute_activating_bids
from .clearing import ClearingError, ClearingSolution, Tolerances, clear, clear_forced, solution_csv
from .graph import build_graph, components, find_technology_cycles, to_dot
from .model import ModelError, SupplyChainModel, apply_scenario, load_model

BUILTIN = "msw"


class UsageError(Exception):
    pass


def _load(path: str | None) -> SupplyChainModel:
    if path is None or path == BUILTIN:
        return casestudy.load_msw()
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such dataset: {path}")
    return load_model(p)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _tolerances(args) -> Tolerances:
    if args.tol is None:
        return Tolerances()
    return replace(Tolerances(), flow=args.tol, price=args.tol)


def _solve(model: SupplyChainModel, args) -> ClearingSolution:
    sc = None
    if args.scenario:
        try:
            sc = model.scenario(args.scenario)
        except KeyError as exc:
            raise UsageError(str(exc)) from None
        model = apply_scenario(model, sc)
    eps = args.epsilon if args.epsilon is not None else (sc.epsilon if sc else 0.0)
    tol = _tolerances(args)
    if args.forced or model.has_forced_bounds:
        if not model.has_forced_bounds:
            raise UsageError("--forced given but the model carries no forced lower bounds")
        return clear_forced(model, epsilon=eps, tol=tol)
    return clear(model, epsilon=eps, tol=tol)


def _node(model: SupplyChainModel, args) -> str | None:
    return args.node or ("N1" if "N1" in model.node_ids else None)


def cmd_clear(args) -> int:
    model = _load(args.dataset)
    sol = _solve(model, args)
    _emit(solution_csv(sol, _node(model, args)), args.out)
    if sol.diagnostics is not None:
        d = sol.diagnostics
        for sid, v in d.negative_profits.items():
            print(f"negative profit {sid}: {v:.2f}", file=sys.stderr)
        print(f"revenue adequacy residual {d.revenue_adequacy_residual:.3g}", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    model = _load(args.dataset)
    sol = _solve(model, args)
    _emit("\n".join(sol.report.lines()) + "\n", args.out)
    return 0 if sol.report.passed else 1


def cmd_graph(args) -> int:
    model = _load(args.dataset)
    graph = build_graph(model)
    if args.dot:
        _emit(to_dot(graph), args.out)
        return 0
    lines = [f"vertices {len(graph.vertices)}", f"edges {len(graph.edges)}"]
    for comp in components(graph):
        lines.append(f"component {comp.index}: " + " ".join(sorted(comp.vertices, key=graph.order.get)))
    for cyc in find_technology_cycles(graph):
        lines.append(f"cycle {'-'.join(cyc.vertices)} gamma={cyc.gamma:.6g} {cyc.classification}")
    lines += [f"note: {entry}" for entry in graph.log]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_bids(args) -> int:
    model = _load(args.dataset)
    if args.scenario:
        model = apply_scenario(model, args.scenario)
    act = model.meta.get("activation")
    if args.cover and not act:
        raise UsageError("--cover needs a dataset with an activation block in its meta")
    if act:
        _, report = build_covering_scenario(
            model, None, args.cover, chain_consumers=act["chain_consumers"], payer=act["payer"],
            hub=act["hub"], payer_cap=float(act["payer_cap"]))
    else:
        report = compute_activating_bids(model)
    _emit(report.to_csv(), args.out)
    if report.unfundable:
        print("unfundable: " + ", ".join(report.unfundable), file=sys.stderr)
        return 1
    return 0


def cmd_casestudy(args) -> int:
    model = _load(args.dataset)
    cases = [args.case] if args.case else sorted(casestudy.CASES)
    results = {n: casestudy.run_case(n, model) for n in cases}
    _emit(casestudy.case_table_csv(results), args.out)
    return 0


def cmd_calibrate(args) -> int:
    cal = casestudy.calibrate_transport_costs()
    if args.out:
        casestudy.write_dataset(args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(json.dumps(cal.record(), indent=1) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coordmarket", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, dataset_required=True):
        if dataset_required:
            p.add_argument("dataset", help=f"dataset JSON file, or '{BUILTIN}' for the bundled case study")
        else:
            p.add_argument("dataset", nargs="?", default=None)
        p.add_argument("--out", help="write output here instead of stdout")
        return p

    for verb, fn in (("clear", cmd_clear), ("verify", cmd_verify)):
        p = common(sub.add_parser(verb))
        p.add_argument("--scenario")
        p.add_argument("--forced", action="store_true", help="clear with forced lower bounds")
        p.add_argument("--epsilon", type=float, help="tie-breaking premium for revenue sources")
        p.add_argument("--tol", type=float, help="flow and price tolerance for the checks")
        p.add_argument("--node", help="node whose prices are reported")
        p.set_defaults(fn=fn)

    p = common(sub.add_parser("graph"))
    p.add_argument("--dot", action="store_true", help="emit Graphviz DOT")
    p.set_defaults(fn=cmd_graph)

    p = common(sub.add_parser("bids"))
    p.add_argument("--scenario")
    p.add_argument("--cover", help="product whose consumer covers the shared hub")
    p.set_defaults(fn=cmd_bids)

    p = common(sub.add_parser("casestudy"), dataset_required=False)
    p.add_argument("--case", type=int, choices=range(1, 10))
    p.add_argument("--all", action="store_true", help="all nine cases (the default)")
    p.set_defaults(fn=cmd_casestudy)

    p = sub.add_parser("calibrate")
    p.add_argument("--out", help="write the calibrated dataset here")
    p.set_defaults(fn=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (UsageError, ModelError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyError as exc:
        print(f"error: unknown id {exc}", file=sys.stderr)
        return 2
    except (ClearingError, NoPath, AmbiguousShares, casestudy.CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
