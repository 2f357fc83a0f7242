"""Market-activating (break-even) bids.

Revenue sources are consumers with nonnegative bids and suppliers with
negative bids. Every other stakeholder is a revenue sink that must be paid
its bid. A sink's bid is converted into the source's product basis along a
path of the stakeholder graph and split between sources by shares that sum
to one per funded item.
"""
from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .clearing import rows_to_csv
from .graph import (DEFAULT_PATH_CAP, PathYield, StakeholderGraph, build_graph, components,
                    enumerate_paths)
from .model import Scenario, SupplyChainModel


class NoPath(ValueError):
    pass


class AmbiguousShares(ValueError):
    pass


@dataclass(frozen=True)
class ActivatorSet:
    activators: frozenset[str]
    reached: frozenset[str]


def activator_set(model: SupplyChainModel) -> ActivatorSet:
    act = model.consumers_pos | model.suppliers_neg
    reached = (model.consumers_neg | model.suppliers_pos
               | {l.id for l in model.transports} | {t.id for t in model.technologies})
    return ActivatorSet(frozenset(act), frozenset(reached))


def required_rate(model: SupplyChainModel, v: str) -> float:
    """Payment per unit that ``v`` needs in order to take part."""
    s = model.get(v)
    return -s.bid if model.kind(v) == "consumer" else s.bid


@dataclass(frozen=True)
class ShareTerm:
    """``activator`` funds ``beta`` of ``target``'s requirement for ``item``.

    ``item`` defaults to the target id. Separate items let one target be
    funded independently for separate streams (for example the grid
    supplying several recyclers). ``via`` and ``avoid`` pin the route.
    """

    activator: str
    target: str
    beta: float
    via: tuple[str, ...] = ()
    avoid: tuple[str, ...] = ()
    item: str | None = None

    @property
    def key(self) -> str:
        return self.item or self.target


@dataclass(frozen=True)
class RevenueShares:
    terms: tuple[ShareTerm, ...]
    unfundable: tuple[str, ...] = ()

    def validate(self, tol: float = 1e-9) -> None:
        totals: dict[str, float] = defaultdict(float)
        for term in self.terms:
            if not -tol <= term.beta <= 1.0 + tol:
                raise ValueError(f"share of {term.activator} in {term.key} outside [0, 1]")
            totals[term.key] += term.beta
        for key, total in totals.items():
            if abs(total - 1.0) > tol:
                raise ValueError(f"shares for {key} sum to {total:.12g}, not 1")

    def beta(self, u: str, v: str) -> float:
        return sum(t.beta for t in self.terms if t.activator == u and t.target == v)

    @classmethod
    def from_mapping(cls, shares: Mapping[str, Mapping[str, float]]) -> RevenueShares:
        terms = tuple(ShareTerm(u, v, float(b)) for u, row in shares.items() for v, b in row.items())
        return cls(terms)

    def __add__(self, other: RevenueShares) -> RevenueShares:
        return RevenueShares(self.terms + other.terms, self.unfundable + other.unfundable)


def best_path(graph: StakeholderGraph, u: str, v: str, *, via: Iterable[str] = (),
              avoid: Iterable[str] = (), cap: int = DEFAULT_PATH_CAP) -> PathYield:
    """The path with the largest basis factor (smallest cumulative yield).

    Paying along any other path would leave ``v`` short on the route that
    needs the most of ``u``'s product. Ties go to the first path found.
    """
    paths = enumerate_paths(graph, u, v, via=via, avoid=avoid, cap=cap)
    if not paths:
        raise NoPath(f"no admissible path between {u} and {v}")
    best = paths[0]
    for p in paths[1:]:
        if p.basis_factor > best.basis_factor * (1.0 + 1e-12):
            best = p
    return best


def compute_partial_bid(graph: StakeholderGraph, u: str, v: str, beta: float,
                        alpha_v: float | None = None, *, via: Iterable[str] = (),
                        avoid: Iterable[str] = (), cap: int = DEFAULT_PATH_CAP) -> float:
    """Share of ``u``'s activating bid that pays ``v``, per unit of ``u``'s product."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    sets = activator_set(graph.model)
    if u not in sets.activators:
        raise ValueError(f"{u} is not a revenue source")
    if v not in sets.reached:
        raise ValueError(f"{v} is not a revenue sink")
    if alpha_v is None:
        alpha_v = required_rate(graph.model, v)
    path = best_path(graph, u, v, via=via, avoid=avoid, cap=cap)
    return beta * path.basis_factor * alpha_v


@dataclass(frozen=True)
class PartialBid:
    activator: str
    target: str
    item: str
    beta: float
    rate: float
    path: PathYield
    partial: float


@dataclass(frozen=True)
class ActivatingBidReport:
    model: SupplyChainModel = field(repr=False)
    partials: tuple[PartialBid, ...]
    unfundable: tuple[str, ...] = ()

    @property
    def totals(self) -> dict[str, float]:
        out: dict[str, float] = defaultdict(float)
        for p in self.partials:
            out[p.activator] += p.partial
        return dict(out)

    def bid(self, u: str) -> float:
        """Signed bid to submit: consumers bid the total, suppliers its negative."""
        total = self.totals.get(u, 0.0)
        return total if self.model.kind(u) == "consumer" else -total

    def bids(self) -> dict[str, float]:
        return {u: self.bid(u) for u in self.totals}

    def funding(self, item: str) -> float:
        return sum(p.beta for p in self.partials if p.item == item)

    def rows(self) -> list[tuple[str, ...]]:
        out = []
        for p in self.partials:
            out.append((p.activator, p.target, p.item, str(p.path), f"{p.path.basis_factor:.6g}",
                        f"{p.beta:.6g}", f"{p.rate:.4f}", f"{p.partial:.4f}"))
        for u, total in self.totals.items():
            out.append((u, "TOTAL", "", "", "", "", "", f"{total:.4f}"))
        for v in self.unfundable:
            out.append(("", v, "UNFUNDABLE", "", "", "", "", ""))
        return out

    def to_csv(self) -> str:
        return rows_to_csv(self.rows(), ("activator", "target", "item", "path", "basis_factor",
                                         "beta", "rate", "partial_bid"))


def compute_activating_bids(model: SupplyChainModel, graph: StakeholderGraph | None = None,
                            shares: RevenueShares | None = None, *, pilot=None,
                            rates: Mapping[str, float] | None = None) -> ActivatingBidReport:
    """Partial and total activating bids for the given (or default) shares.

    ``rates`` overrides the required rate of selected sinks.
    """
    graph = graph or build_graph(model)
    if shares is None:
        shares = default_shares(model, graph, pilot)
    shares.validate()
    sets = activator_set(model)
    rates = rates or {}
    partials = []
    for term in shares.terms:
        if term.activator not in sets.activators:
            raise ValueError(f"{term.activator} is not a revenue source")
        if term.target not in sets.reached:
            raise ValueError(f"{term.target} is not a revenue sink")
        rate = rates.get(term.target, required_rate(model, term.target))
        path = best_path(graph, term.activator, term.target, via=term.via, avoid=term.avoid)
        partials.append(PartialBid(term.activator, term.target, term.key, term.beta, rate, path,
                                   term.beta * path.basis_factor * rate))
    return ActivatingBidReport(model, tuple(partials), shares.unfundable)


def _activator_volume(pilot, u: str) -> float:
    a = pilot.allocations
    return a.demand[u] if u in a.demand else a.supply[u]


def default_shares(model: SupplyChainModel, graph: StakeholderGraph | None = None,
                   pilot=None) -> RevenueShares:
    """Shares by the default policy.

    A sink reachable from a single source is funded by it entirely. With
    several sources, shares follow their allocations in a pilot clearing; if
    that pilot clears none of them the split is ambiguous and must be given
    explicitly. Sinks no source can reach are reported as unfundable.
    """
    graph = graph or build_graph(model)
    sets = activator_set(model)
    terms: list[ShareTerm] = []
    unfundable: list[str] = []
    order = graph.order
    reach: dict[str, list[str]] = {}
    for comp in components(graph):
        acts = sorted(comp.vertices & sets.activators, key=order.get)
        for v in sorted(comp.vertices & sets.reached, key=order.get):
            lst = reach.setdefault(v, [])
            for u in acts:
                if u not in lst and enumerate_paths(graph, u, v):
                    lst.append(u)
    for v in sorted(reach, key=order.get):
        cands = reach[v]
        if not cands:
            unfundable.append(v)
        elif len(cands) == 1:
            terms.append(ShareTerm(cands[0], v, 1.0))
        else:
            if pilot is None:
                from .clearing import clear
                pilot = clear(model)
            weights = [_activator_volume(pilot, u) for u in cands]
            total = sum(weights)
            if total <= 0:
                raise AmbiguousShares(
                    f"{v} is reachable from {', '.join(cands)} and the pilot clears none of them; "
                    "give explicit shares")
            for u, w in zip(cands, weights):
                if w > 0:
                    terms.append(ShareTerm(u, v, w / total))
    return RevenueShares(tuple(terms), tuple(unfundable))


# covering constructions


def chain_shares(model: SupplyChainModel, graph: StakeholderGraph, consumer: str, *,
                 hub: str) -> list[ShareTerm]:
    """Terms by which ``consumer`` alone funds every sink it reaches without the hub."""
    sets = activator_set(model)
    terms = []
    for v in graph.vertices:
        if v not in sets.reached or v == hub:
            continue
        if enumerate_paths(graph, consumer, v, avoid=(hub,)):
            terms.append(ShareTerm(consumer, v, 1.0, avoid=(hub,), item=f"{v}@{consumer}"))
    return terms


def payer_shares(model: SupplyChainModel, graph: StakeholderGraph, payer: str, *, hub: str,
                 payer_cap: float) -> tuple[list[ShareTerm], float]:
    """Terms for a revenue source that pays the route to the hub up to ``payer_cap``.

    Returns the terms and the payer's share of the hub.
    """
    path = best_path(graph, payer, hub)
    terms = [ShareTerm(payer, v, 1.0, via=path.vertices[1:k + 1])
             for k, v in enumerate(path.vertices[1:-1], start=1)]
    spent = sum(required_rate(model, t.target)
                * best_path(graph, payer, t.target, via=t.via).basis_factor for t in terms)
    hub_cost = path.basis_factor * required_rate(model, hub)
    beta = (payer_cap - spent) / hub_cost
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"payer cap {payer_cap} implies a hub share of {beta:.6g}")
    terms.append(ShareTerm(payer, hub, beta))
    return terms, beta


def disposal_routes(model: SupplyChainModel, graph: StakeholderGraph, hub: str) -> list[PathYield]:
    """Cheapest downstream route to a negative-bid consumer for every hub output
    that no positive-bid consumer can absorb."""
    tech = graph.technology(hub)
    sets = activator_set(model)
    routes = []
    for p in tech.output_products:
        starts = [e.head for e in graph.out_edges[hub] if e.product == p]
        seen = set(starts)
        frontier = list(starts)
        while frontier:
            x = frontier.pop()
            for e in graph.out_edges[x]:
                if e.head not in seen:
                    seen.add(e.head)
                    frontier.append(e.head)
        if seen & model.consumers_pos:
            continue
        best = None
        best_cost = math.inf
        for j in sorted(seen & model.consumers_neg, key=graph.order.get):
            for path in enumerate_paths(graph, hub, j):
                if path.products[0] != p or any(d < 0 for d in path.directions):
                    continue
                cost = sum(
                    required_rate(model, v) * (path.basis_factor if v == j else 1.0)
                    for v in path.vertices[1:] if v in sets.reached
                )
                if cost < best_cost:
                    best, best_cost = path, cost
        if best is not None:
            routes.append(best)
    return routes


def covering_shares(model: SupplyChainModel, graph: StakeholderGraph, covering: str | None, *,
                    chain_consumers: Sequence[str], payer: str, hub: str,
                    payer_cap: float) -> RevenueShares:
    """Shares where each chain consumer pays its own chain, the payer pays the
    route to the hub up to its cap and ``covering`` pays the rest of the hub
    together with the hub's disposal streams. ``covering=None`` leaves the
    hub underfunded (partial bids only)."""
    terms: list[ShareTerm] = []
    for j in chain_consumers:
        terms += chain_shares(model, graph, j, hub=hub)
    if covering is None:
        return RevenueShares(tuple(terms))
    pay_terms, beta = payer_shares(model, graph, payer, hub=hub, payer_cap=payer_cap)
    terms += pay_terms
    terms.append(ShareTerm(covering, hub, 1.0 - beta))
    for route in disposal_routes(model, graph, hub):
        for k, v in enumerate(route.vertices[1:], start=1):
            terms.append(ShareTerm(covering, v, 1.0, via=route.vertices[:k + 1],
                                   item=f"{v}@{hub}"))
    return RevenueShares(tuple(terms))


def build_covering_scenario(model: SupplyChainModel, graph: StakeholderGraph | None,
                            covering_product: str | None, *, chain_consumers: Mapping[str, str],
                            payer: str, hub: str, payer_cap: float, epsilon: float = 0.0,
                            name: str | None = None) -> tuple[Scenario, ActivatingBidReport]:
    """Scenario whose chain consumers bid their activating bids.

    ``chain_consumers`` maps each recycled product to its consumer. The
    consumer of ``covering_product`` additionally covers the part of the hub
    the payer does not; with ``covering_product=None`` only partial bids are
    produced.
    """
    graph = graph or build_graph(model)
    if covering_product is not None and covering_product not in chain_consumers:
        raise KeyError(f"unknown covering product {covering_product!r}")
    covering = chain_consumers[covering_product] if covering_product else None
    shares = covering_shares(model, graph, covering, chain_consumers=list(chain_consumers.values()),
                             payer=payer, hub=hub, payer_cap=payer_cap)
    report = compute_activating_bids(model, graph, shares)
    bids = {u: report.bid(u) for u in chain_consumers.values()}
    scenario = Scenario(name or (f"cover-{covering_product}" if covering_product else "partial"),
                        bid_overrides=bids, epsilon=epsilon)
    return scenario, report

