"""Market clearing: solve, price, settle and check the equilibrium properties.

Stakeholder prices are always read off the nodal balance prices, never off
the stakeholder-level duals, so every check below exercises the price
identities independently of how the solver split its multipliers.
"""
from __future__ import annotations

import csv
import io
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

from .formulation import (build_condensed_lp, build_full_lp, c_var, d_var, f_var, g_var, s_var,
                          xi_var)
from .lp import (INFEASIBLE, UNBOUNDED, LinearProgram, LpSolution, RevisedSimplex, Solver)
from .model import Scenario, SupplyChainModel, apply_scenario


class ClearingError(RuntimeError):
    pass


class InfeasibleMarket(ClearingError):
    def __init__(self, rows: Sequence[Any], bounds: Sequence[str], forced: Sequence[str]):
        self.rows = tuple(rows)
        self.bounds = tuple(bounds)
        self.forced = tuple(forced)
        super().__init__(
            "clearing program is infeasible; binding rows: "
            + ", ".join(map(str, self.rows))
            + (f"; binding bounds: {', '.join(self.bounds)}" if self.bounds else "")
            + (f"; forced stakeholders: {', '.join(self.forced)}" if self.forced else "")
        )


class UnboundedMarket(ClearingError):
    def __init__(self, ray: Mapping[str, float], stakeholders: Sequence[str]):
        self.ray = dict(ray)
        self.stakeholders = tuple(stakeholders)
        super().__init__(
            "welfare is unbounded along a direction involving "
            + ", ".join(self.stakeholders)
            + " (a profitable cycle or an uncapped profitable bid)"
        )


@dataclass(frozen=True)
class Tolerances:
    flow: float = 1e-6
    money: float = 1e-4
    cleared: float = 1e-7
    price: float = 1e-6
    relative: float = 1e-9


@dataclass(frozen=True)
class Allocations:
    supply: Mapping[str, float]
    demand: Mapping[str, float]
    flow: Mapping[str, float]
    conversion: Mapping[str, float]
    consumption: Mapping[tuple[str, str], float]
    generation: Mapping[tuple[str, str], float]
    nodal_supply: Mapping[tuple[str, str], float]
    nodal_demand: Mapping[tuple[str, str], float]

    def of(self, sid: str) -> float:
        for group in (self.supply, self.demand, self.flow, self.conversion):
            if sid in group:
                return group[sid]
        raise KeyError(sid)


@dataclass(frozen=True)
class PriceSet:
    nodal: Mapping[tuple[str, str], float]
    supplier: Mapping[str, float]
    consumer: Mapping[str, float]
    transport: Mapping[str, float]
    technology: Mapping[str, float]

    def of(self, sid: str) -> float:
        for group in (self.supplier, self.consumer, self.transport, self.technology):
            if sid in group:
                return group[sid]
        raise KeyError(sid)


@dataclass(frozen=True)
class ProfitSet:
    supplier: Mapping[str, float]
    consumer: Mapping[str, float]
    transport: Mapping[str, float]
    technology: Mapping[str, float]

    def of(self, sid: str) -> float:
        for group in (self.supplier, self.consumer, self.transport, self.technology):
            if sid in group:
                return group[sid]
        raise KeyError(sid)

    @property
    def all(self) -> dict[str, float]:
        return {**self.supplier, **self.consumer, **self.transport, **self.technology}

    @property
    def totals(self) -> dict[str, float]:
        return {
            "supplier": sum(self.supplier.values()),
            "consumer": sum(self.consumer.values()),
            "transport": sum(self.transport.values()),
            "technology": sum(self.technology.values()),
        }

    @property
    def total(self) -> float:
        return sum(self.totals.values())


@dataclass(frozen=True)
class TheoremCheck:
    name: str
    passed: bool
    residual: float
    witnesses: tuple[str, ...] = ()
    note: str = ""


@dataclass(frozen=True)
class TheoremReport:
    checks: tuple[TheoremCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> TheoremCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            extra = f" witnesses={','.join(c.witnesses)}" if c.witnesses else ""
            note = f" ({c.note})" if c.note else ""
            out.append(f"{c.name}: {status} residual={c.residual:.3g}{extra}{note}")
        return out


@dataclass(frozen=True)
class ForcedDiagnostics:
    negative_profits: Mapping[str, float]
    bound_violations: Mapping[str, tuple[float, float]]
    revenue_adequacy_residual: float
    payment_volume: float

    @property
    def revenue_adequate(self) -> bool:
        return self.revenue_adequacy_residual <= 1e-6 * (1.0 + self.payment_volume)


@dataclass(frozen=True)
class ClearingSolution:
    model: SupplyChainModel
    allocations: Allocations
    prices: PriceSet
    profits: ProfitSet
    welfare: float
    cleared: Mapping[str, frozenset[str]]
    report: TheoremReport
    lp: LinearProgram
    lp_solution: LpSolution
    epsilon: float = 0.0
    forced: bool = False
    diagnostics: ForcedDiagnostics | None = None
    status: str = "optimal"

    @property
    def is_dry(self) -> bool:
        return not any(self.cleared.values())

    def price(self, node: str, product: str) -> float:
        return self.prices.nodal[(node, product)]


# clearing


def _perturbed_bids(model: SupplyChainModel, epsilon: float) -> dict[str, float]:
    bids: dict[str, float] = {}
    for j in model.consumers:
        if j.id in model.consumers_pos:
            bids[j.id] = j.bid + epsilon
    for i in model.suppliers:
        if i.id in model.suppliers_neg:
            bids[i.id] = i.bid - epsilon
    return bids


def _solve(model: SupplyChainModel, solver: Solver | None, epsilon: float,
           formulation: str) -> tuple[LinearProgram, LpSolution]:
    build = {"full": build_full_lp, "condensed": build_condensed_lp}[formulation]
    lp = build(model)
    if solver is None:
        # the premium must stay visible after yields shrink it, so the
        # reduced-cost tolerance sits well below epsilon in absolute terms
        top = max([1.0] + [abs(v.cost) for v in lp.variables])
        solver = RevisedSimplex(cost_tol=min(1e-9, 1e-2 * epsilon / top) if epsilon else 1e-9)
    if epsilon == 0.0:
        return lp, solver.solve(lp)
    if not hasattr(solver, "reprice"):
        raise ValueError("a positive epsilon needs a solver that exposes its basis")
    perturbed = build(model, _perturbed_bids(model, epsilon))
    first = solver.solve(perturbed)
    if not first.optimal:
        return lp, first
    return lp, solver.reprice(lp, first.basis)  # type: ignore[attr-defined]


def _raise_for_status(model: SupplyChainModel, lp: LinearProgram, sol: LpSolution) -> None:
    if sol.status == INFEASIBLE:
        forced = [sid for sid, s in model.stakeholders.items() if s.lower > 0]
        raise InfeasibleMarket(sol.infeasible_rows, sol.binding_bounds, forced)
    if sol.status == UNBOUNDED:
        owners = []
        for name in sol.ray:
            owner = lp.variables[lp.index[name]].owner
            if owner is not None and owner not in owners:
                owners.append(owner)
        raise UnboundedMarket(sol.ray, owners)


def _settle(model: SupplyChainModel, lp: LinearProgram, sol: LpSolution, formulation: str,
            tol: Tolerances) -> tuple[Allocations, PriceSet, ProfitSet, float, dict]:
    x = sol.x
    condensed = formulation == "condensed"
    supply = {i.id: x[s_var(i.id)] for i in model.suppliers}
    demand = {j.id: x[d_var(j.id)] for j in model.consumers}
    flow = {l.id: x[f_var(l.id)] for l in model.transports}
    conversion: dict[str, float] = {}
    consumption: dict[tuple[str, str], float] = {}
    generation: dict[tuple[str, str], float] = {}
    for t in model.technologies:
        if condensed:
            level = x[xi_var(t.id)]
            for p, g in t.inputs:
                consumption[(t.id, p)] = g * level
            for p, g in t.outputs:
                generation[(t.id, p)] = g * level
        else:
            level = x[c_var(t.id, t.reference)]
            for p, _ in t.inputs:
                consumption[(t.id, p)] = x[c_var(t.id, p)]
            for p, _ in t.outputs:
                generation[(t.id, p)] = x[g_var(t.id, p)]
        conversion[t.id] = level
    nodal_supply = {k: sum(supply[i] for i in ids) for k, ids in model.suppliers_at.items()}
    nodal_demand = {k: sum(demand[j] for j in ids) for k, ids in model.consumers_at.items()}
    alloc = Allocations(supply, demand, flow, conversion, consumption, generation,
                        nodal_supply, nodal_demand)

    nodal = {(n, p): sol.duals[("bal", n, p)] for n, p in model.active_pairs}
    prices = PriceSet(
        nodal=nodal,
        supplier={i.id: nodal[(i.node, i.product)] for i in model.suppliers},
        consumer={j.id: nodal[(j.node, j.product)] for j in model.consumers},
        transport={l.id: nodal[(l.sink, l.product)] - nodal[(l.source, l.product)]
                   for l in model.transports},
        technology={
            t.id: sum(g * nodal[(t.node, p)] for p, g in t.outputs)
            - sum(g * nodal[(t.node, p)] for p, g in t.inputs)
            for t in model.technologies
        },
    )
    profits = ProfitSet(
        supplier={i.id: (prices.supplier[i.id] - i.bid) * supply[i.id] for i in model.suppliers},
        consumer={j.id: (j.bid - prices.consumer[j.id]) * demand[j.id] for j in model.consumers},
        transport={l.id: (prices.transport[l.id] - l.bid) * flow[l.id] for l in model.transports},
        technology={t.id: (prices.technology[t.id] - t.bid) * conversion[t.id]
                    for t in model.technologies},
    )
    welfare = (
        sum(j.bid * demand[j.id] for j in model.consumers)
        - sum(i.bid * supply[i.id] for i in model.suppliers)
        - sum(l.bid * flow[l.id] for l in model.transports)
        - sum(t.bid * conversion[t.id] for t in model.technologies)
    )
    cut = tol.cleared
    cleared = {
        "supplier": frozenset(k for k, v in supply.items() if v > cut),
        "consumer": frozenset(k for k, v in demand.items() if v > cut),
        "transport": frozenset(k for k, v in flow.items() if v > cut),
        "technology": frozenset(k for k, v in conversion.items() if v > cut),
    }
    return alloc, prices, profits, welfare, cleared


def clear(model: SupplyChainModel, *, solver: Solver | None = None, epsilon: float = 0.0,
          formulation: str = "full", tol: Tolerances = Tolerances()) -> ClearingSolution:
    """Clear a market without forced participation.

    ``epsilon`` adds a per-unit premium to every revenue source (consumers
    with nonnegative bids, suppliers with negative bids) while choosing the
    optimal basis; prices, profits and welfare are then evaluated at the
    original bids on that basis. This selects the cleared outcome when it
    ties with the dry one.
    """
    if model.has_forced_bounds:
        raise ValueError("model carries forced lower bounds; use clear_forced")
    return _clear(model, solver, epsilon, formulation, tol, forced=False)


def clear_forced(model: SupplyChainModel, scenario: Scenario | str | None = None, *,
                 solver: Solver | None = None, epsilon: float = 0.0, formulation: str = "full",
                 tol: Tolerances = Tolerances()) -> ClearingSolution:
    """Clear with minimum allocations imposed, and report what breaks."""
    if scenario is not None:
        sc = model.scenario(scenario) if isinstance(scenario, str) else scenario
        if not sc.forced_lower_bounds:
            raise ValueError(f"scenario {sc.name!r} carries no forced lower bounds")
        model = apply_scenario(model, sc)
    elif not model.has_forced_bounds:
        raise ValueError("no forced lower bounds to impose")
    return _clear(model, solver, epsilon, formulation, tol, forced=True)


def _clear(model, solver, epsilon, formulation, tol, forced) -> ClearingSolution:
    lp, sol = _solve(model, solver, epsilon, formulation)
    _raise_for_status(model, lp, sol)
    alloc, prices, profits, welfare, cleared = _settle(model, lp, sol, formulation, tol)
    partial = ClearingSolution(model, alloc, prices, profits, welfare, cleared,
                               TheoremReport(()), lp, sol, epsilon, forced)
    report = verify_theorems(partial, tol=tol)
    diagnostics = _forced_diagnostics(partial, tol) if forced else None
    return ClearingSolution(model, alloc, prices, profits, welfare, cleared, report, lp, sol,
                            epsilon, forced, diagnostics)


# theorem checks


def _bid_margin(model: SupplyChainModel, sid: str, price: float) -> float:
    """Per-unit profit at ``price``: positive means the stakeholder gains."""
    s = model.get(sid)
    return (s.bid - price) if model.kind(sid) == "consumer" else (price - s.bid)


def payment_volume(solution: ClearingSolution) -> float:
    a, p = solution.allocations, solution.prices
    return (
        sum(abs(p.consumer[j] * a.demand[j]) for j in a.demand)
        + sum(abs(p.supplier[i] * a.supply[i]) for i in a.supply)
        + sum(abs(p.transport[l] * a.flow[l]) for l in a.flow)
        + sum(abs(p.technology[t] * a.conversion[t]) for t in a.conversion)
    )


def revenue_adequacy(solution: ClearingSolution) -> dict[str, float]:
    """Payments in and out of the operator, with the split by revenue source."""
    m, a, p = solution.model, solution.allocations, solution.prices
    consumer_pay = sum(p.consumer[j] * a.demand[j] for j in a.demand)
    supplier_pay = sum(p.supplier[i] * a.supply[i] for i in a.supply)
    transport_pay = sum(p.transport[l] * a.flow[l] for l in a.flow)
    tech_pay = sum(p.technology[t] * a.conversion[t] for t in a.conversion)
    sources = (sum(p.consumer[j] * a.demand[j] for j in m.consumers_pos)
               - sum(p.supplier[i] * a.supply[i] for i in m.suppliers_neg))
    sinks = (sum(p.supplier[i] * a.supply[i] for i in m.suppliers_pos)
             - sum(p.consumer[j] * a.demand[j] for j in m.consumers_neg)
             + transport_pay + tech_pay)
    return {
        "consumer_payments": consumer_pay,
        "supplier_payments": supplier_pay,
        "transport_payments": transport_pay,
        "technology_payments": tech_pay,
        "residual": consumer_pay - supplier_pay - transport_pay - tech_pay,
        "sources": sources,
        "sinks": sinks,
        "split_residual": sources - sinks,
    }


def _bounds_of(s) -> tuple[float, float]:
    return s.lower, s.capacity


def verify_theorems(solution: ClearingSolution, model: SupplyChainModel | None = None,
                    tol: Tolerances = Tolerances()) -> TheoremReport:
    """Check nonnegative profits, equilibrium conditions, revenue adequacy,
    price bounds and acyclic cleared transport, each from prices alone."""
    model = model or solution.model
    a, prices, profits = solution.allocations, solution.prices, solution.profits
    volume = payment_volume(solution)
    money_tol = tol.money + tol.relative * volume
    ids = list(model.stakeholders)

    # T1 nonnegative profits
    neg = {k: v for k, v in profits.all.items() if v < -money_tol}
    worst = max([0.0] + [-v for v in profits.all.values()])
    t1 = TheoremCheck("T1", not neg, worst, tuple(sorted(neg, key=neg.get)))

    # T2 equilibrium as complementary slackness of each stakeholder's bounds
    bad2: dict[str, float] = {}
    for sid in ids:
        s = model.get(sid)
        x = a.of(sid)
        lo, up = _bounds_of(s)
        margin = _bid_margin(model, sid, prices.of(sid))
        ptol = tol.price * (1.0 + abs(s.bid) + abs(prices.of(sid)))
        ftol = tol.flow * (1.0 + abs(x))
        at_lo = x <= lo + ftol
        at_up = math.isfinite(up) and x >= up - ftol
        if at_lo and at_up:
            continue
        if at_up:
            viol = max(0.0, -margin - ptol)
        elif at_lo:
            viol = max(0.0, margin - ptol)
        else:
            viol = max(0.0, abs(margin) - ptol)
        if viol > 0:
            bad2[sid] = viol
    t2 = TheoremCheck("T2", not bad2, max([0.0] + list(bad2.values())),
                      tuple(sorted(bad2, key=bad2.get, reverse=True)))

    # T3 revenue adequacy
    ra = revenue_adequacy(solution)
    res3 = max(abs(ra["residual"]), abs(ra["split_residual"]))
    ok3 = res3 <= 1e-6 * (1.0 + volume)
    t3 = TheoremCheck("T3", ok3, res3, () if ok3 else ("operator",),
                      note=f"sources={ra['sources']:.6g} sinks={ra['sinks']:.6g}")

    # T4 price bounds for cleared stakeholders
    bad4: dict[str, float] = {}
    for sid in ids:
        if a.of(sid) <= tol.cleared:
            continue
        s = model.get(sid)
        margin = _bid_margin(model, sid, prices.of(sid))
        ptol = tol.price * (1.0 + abs(s.bid) + abs(prices.of(sid)))
        if margin < -ptol:
            bad4[sid] = -margin
    t4 = TheoremCheck("T4", not bad4, max([0.0] + list(bad4.values())),
                      tuple(sorted(bad4, key=bad4.get, reverse=True)))

    # T5 no cleared transport cycle
    if all(l.bid > 0 for l in model.transports):
        cyc = _transport_cycle(model, a, tol)
        t5 = TheoremCheck("T5", not cyc, float(len(cyc)), tuple(cyc))
    else:
        t5 = TheoremCheck("T5", True, 0.0, note="vacuous: some transport bid is not positive")
    checks = [t1, t2, t3, t4, t5]

    if not solution.forced:
        gap = abs(solution.welfare - profits.total)
        wtol = money_tol + 1e-9 * abs(solution.welfare)
        checks.append(TheoremCheck("welfare", gap <= wtol, gap, () if gap <= wtol else ("welfare",)))
    return TheoremReport(tuple(checks))


def _transport_cycle(model: SupplyChainModel, a: Allocations, tol: Tolerances) -> list[str]:
    """Transport ids on one cleared cycle of some product, or []."""
    for p in model.product_ids:
        adj: dict[str, list[tuple[str, str]]] = {}
        for l in model.transports:
            if l.product == p and a.flow[l.id] > tol.cleared:
                adj.setdefault(l.source, []).append((l.sink, l.id))
        color: dict[str, int] = {}
        stack_edges: list[str] = []

        def dfs(u: str) -> list[str] | None:
            color[u] = 1
            for v, lid in adj.get(u, []):
                stack_edges.append(lid)
                if color.get(v) == 1:
                    return list(stack_edges)
                if color.get(v, 0) == 0:
                    found = dfs(v)
                    if found:
                        return found
                stack_edges.pop()
            color[u] = 2
            return None

        for start in sorted(adj):
            if color.get(start, 0) == 0:
                found = dfs(start)
                if found:
                    return found
    return []


def _forced_diagnostics(solution: ClearingSolution, tol: Tolerances) -> ForcedDiagnostics:
    model = solution.model
    volume = payment_volume(solution)
    money_tol = tol.money + tol.relative * volume
    negative = {k: v for k, v in solution.profits.all.items() if v < -money_tol}
    violations = {}
    for sid, s in model.stakeholders.items():
        if solution.allocations.of(sid) <= tol.cleared:
            continue
        price = solution.prices.of(sid)
        ptol = tol.price * (1.0 + abs(s.bid) + abs(price))
        if _bid_margin(model, sid, price) < -ptol:
            violations[sid] = (price, s.bid)
    ra = revenue_adequacy(solution)
    return ForcedDiagnostics(negative, violations, abs(ra["residual"]), volume)


# diversion


def diversion_rate(solution: ClearingSolution, *, landfill_tag: str = "landfill",
                   waste_tag: str = "waste") -> float:
    """Percentage of supplied waste mass that avoids landfill consumers."""
    model = solution.model
    landfills = model.tagged(landfill_tag)
    if not landfills:
        raise ValueError(f"no consumer tagged {landfill_tag!r}")
    sources = model.tagged(waste_tag)
    if not sources:
        raise ValueError(f"no supplier tagged {waste_tag!r}")
    supplied = sum(solution.allocations.supply[i] for i in sources)
    if supplied <= 0:
        return 0.0
    landfilled = sum(solution.allocations.demand[j] for j in landfills)
    return 100.0 * (1.0 - landfilled / supplied)


# reporting


def fmt_money(x: float) -> str:
    x = 0.0 if abs(x) < 0.005 else x
    return f"{x:.2f}"


def fmt_quantity(x: float) -> str:
    x = 0.0 if abs(x) < 0.5 else x
    return f"{x:.0f}"


def fmt_welfare(x: float) -> str:
    return f"{x:.2e}"


def solution_rows(solution: ClearingSolution, price_node: str | None = None) -> list[tuple[str, str, str]]:
    """(section, label, formatted value) rows in a fixed order."""
    m = solution.model
    rows: list[tuple[str, str, str]] = [("Objective", "welfare", fmt_welfare(solution.welfare))]
    for j in m.consumers:
        rows.append(("Bids", j.id, fmt_money(j.bid)))
    for sid, v in solution.profits.all.items():
        rows.append(("Profits", sid, fmt_money(v)))
    for j in m.consumers:
        rows.append(("Demand allocations", j.id, fmt_quantity(solution.allocations.demand[j.id])))
    if m.tagged("landfill") and m.tagged("waste"):
        rows.append(("Recycled %", "diversion", f"{diversion_rate(solution):.1f}"))
    node = price_node or (m.node_ids[0] if m.node_ids else None)
    for (n, p), v in solution.prices.nodal.items():
        if n == node:
            rows.append((f"Clearing prices at {n}", p, fmt_money(v)))
    return rows


def rows_to_csv(rows: Sequence[Sequence[Any]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def solution_csv(solution: ClearingSolution, price_node: str | None = None) -> str:
    return rows_to_csv(solution_rows(solution, price_node), ("section", "item", "value"))
