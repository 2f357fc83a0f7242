"""Product-based stakeholder graph.

Vertices are stakeholders; a directed edge ``u -> v`` labelled ``p`` means
``u`` can hand product ``p`` to ``v``. Suppliers and consumers form the
boundary, transport and technology providers the interior.
"""
from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property

from .formulation import build_full_lp, c_var
from .lp import RevisedSimplex
from .model import Consumer, Supplier, SupplyChainModel, Technology, TransportProvider, kind_of

DEFAULT_PATH_CAP = 10_000


class PathLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Vertex:
    id: str
    kind: str
    bid: float
    product: str | None
    node: str | None


@dataclass(frozen=True)
class Edge:
    tail: str
    head: str
    product: str
    rule: int
    flagged: bool = False


@dataclass(frozen=True)
class StakeholderGraph:
    model: SupplyChainModel = field(repr=False)
    vertices: dict[str, Vertex]
    edges: tuple[Edge, ...]
    log: tuple[str, ...] = ()

    @cached_property
    def order(self) -> dict[str, int]:
        return {v: k for k, v in enumerate(self.vertices)}

    @cached_property
    def out_edges(self) -> dict[str, tuple[Edge, ...]]:
        out: dict[str, list[Edge]] = defaultdict(list)
        for e in self.edges:
            out[e.tail].append(e)
        return {v: tuple(out.get(v, ())) for v in self.vertices}

    @cached_property
    def in_edges(self) -> dict[str, tuple[Edge, ...]]:
        inc: dict[str, list[Edge]] = defaultdict(list)
        for e in self.edges:
            inc[e.head].append(e)
        return {v: tuple(inc.get(v, ())) for v in self.vertices}

    @cached_property
    def boundary(self) -> frozenset[str]:
        return frozenset(v for v, x in self.vertices.items() if x.kind in ("supplier", "consumer"))

    def degree(self, v: str) -> int:
        return len(self.out_edges[v]) + len(self.in_edges[v])

    def neighbours(self, v: str) -> set[str]:
        return {e.head for e in self.out_edges[v]} | {e.tail for e in self.in_edges[v]}

    def technology(self, v: str) -> Technology:
        t = self.model.get(v)
        assert isinstance(t, Technology)
        return t


def build_graph(model: SupplyChainModel) -> StakeholderGraph:
    vertices: dict[str, Vertex] = {}
    for s in model.suppliers + model.consumers:
        vertices[s.id] = Vertex(s.id, kind_of(s), s.bid, s.product, s.node)
    for l in model.transports:
        vertices[l.id] = Vertex(l.id, "transport", l.bid, l.product, None)
    for t in model.technologies:
        vertices[t.id] = Vertex(t.id, "technology", t.bid, None, t.node)

    edges: list[Edge] = []
    log: list[str] = []
    S: Sequence[Supplier] = model.suppliers
    D: Sequence[Consumer] = model.consumers
    L: Sequence[TransportProvider] = model.transports
    T: Sequence[Technology] = model.technologies

    for i in S:
        for j in D:
            if i.product == j.product and i.node == j.node:
                edges.append(Edge(i.id, j.id, i.product, 1))
        for l in L:
            if i.product == l.product and l.source == i.node:
                edges.append(Edge(i.id, l.id, i.product, 2))
        for t in T:
            if i.product in t.input_products and i.node == t.node:
                edges.append(Edge(i.id, t.id, i.product, 4))
    for l in L:
        for j in D:
            if l.product == j.product and l.sink == j.node:
                edges.append(Edge(l.id, j.id, l.product, 3))
    for t in T:
        for j in D:
            if j.product in t.output_products and j.node == t.node:
                edges.append(Edge(t.id, j.id, j.product, 5))
    for l in L:
        for t in T:
            if l.product in t.input_products and l.sink == t.node:
                edges.append(Edge(l.id, t.id, l.product, 6))
            if l.product in t.output_products and l.source == t.node:
                edges.append(Edge(t.id, l.id, l.product, 6))
    for l in L:
        for l2 in L:
            if l.id != l2.id and l.product == l2.product and l.sink == l2.source:
                edges.append(Edge(l.id, l2.id, l.product, 9, flagged=True))
                log.append(f"chained transport {l.id} -> {l2.id} for {l.product}")
    for t in T:
        for t2 in T:
            if t.id == t2.id or t.node != t2.node:
                continue
            for p in t.output_products:
                if p in t2.input_products:
                    edges.append(Edge(t.id, t2.id, p, 10))
    for i in S:
        for j in D:
            if i.product == j.product and i.node == j.node:
                served = any(e.head == j.id for e in edges if e.rule != 1)
                if served:
                    log.append(f"{i.id} -> {j.id} coexists with other routes into {j.id}")
    return StakeholderGraph(model, vertices, tuple(edges), tuple(log))


# components


@dataclass(frozen=True)
class GraphComponent:
    index: int
    vertices: frozenset[str]
    boundary: frozenset[str]
    edges: tuple[Edge, ...]

    @property
    def interior(self) -> frozenset[str]:
        return self.vertices - self.boundary


def components(graph: StakeholderGraph) -> list[GraphComponent]:
    """Split the graph at every supplier and consumer.

    Interior vertices fall into exactly one component; boundary vertices are
    copied into every component they touch. A direct supplier-consumer edge
    forms a component of its own and an isolated vertex is a singleton.
    """
    interior = [v for v in graph.vertices if v not in graph.boundary]
    parent = {v: v for v in interior}

    def find(v: str) -> str:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for e in graph.edges:
        if e.tail in parent and e.head in parent:
            a, b = find(e.tail), find(e.head)
            if a != b:
                if graph.order[a] < graph.order[b]:
                    parent[b] = a
                else:
                    parent[a] = b
    groups: dict[str, set[str]] = defaultdict(set)
    for v in interior:
        groups[find(v)].add(v)
    pieces: list[tuple[set[str], list[Edge]]] = []
    for root, members in groups.items():
        verts = set(members)
        es = []
        for e in graph.edges:
            if e.tail in members or e.head in members:
                verts.update((e.tail, e.head))
                es.append(e)
        pieces.append((verts, es))
    for e in graph.edges:
        if e.tail in graph.boundary and e.head in graph.boundary:
            pieces.append(({e.tail, e.head}, [e]))
    touched = set().union(*(p[0] for p in pieces)) if pieces else set()
    for v in graph.vertices:
        if v not in touched:
            pieces.append(({v}, []))
    pieces.sort(key=lambda p: min(graph.order[v] for v in p[0]))
    return [
        GraphComponent(k, frozenset(vs), frozenset(vs & graph.boundary), tuple(es))
        for k, (vs, es) in enumerate(pieces)
    ]


# paths


@dataclass(frozen=True)
class PathYield:
    """A route ``u -> v``; ``directions[k]`` is +1 when step ``k`` follows product flow."""

    vertices: tuple[str, ...]
    products: tuple[str, ...]
    directions: tuple[int, ...]
    basis_factor: float

    @property
    def path_yield(self) -> float:
        """Units of ``u``'s basis delivered per unit of ``v``'s basis (the inverse factor)."""
        return 1.0 / self.basis_factor

    def reversed(self, graph: StakeholderGraph) -> PathYield:
        verts = self.vertices[::-1]
        prods = self.products[::-1]
        dirs = tuple(-d for d in self.directions[::-1])
        return PathYield(verts, prods, dirs, path_basis_factor(graph, verts, prods))

    def __str__(self) -> str:
        parts = [self.vertices[0]]
        for k, p in enumerate(self.products):
            arrow = "->" if self.directions[k] > 0 else "<-"
            parts.append(f" {arrow}[{p}] {self.vertices[k + 1]}")
        return "".join(parts)


def path_basis_factor(graph: StakeholderGraph, vertices: Sequence[str], products: Sequence[str]) -> float:
    """Units of ``v``'s bid basis per unit of ``u``'s bid basis along the path.

    Each technology contributes the ratio of the yield on its ``v`` side to the
    yield on its ``u`` side; an endpoint technology uses its reference input
    for the missing side. Transport vertices contribute 1.
    """
    factor = 1.0
    last = len(vertices) - 1
    for k, v in enumerate(vertices):
        if graph.vertices[v].kind != "technology":
            continue
        t = graph.technology(v)
        entry = products[k - 1] if k > 0 else t.reference
        exit_ = products[k] if k < last else t.reference
        factor *= t.yield_of(exit_) / t.yield_of(entry)
    return factor


def enumerate_paths(graph: StakeholderGraph, u: str, v: str, *, via: Iterable[str] = (),
                    avoid: Iterable[str] = (), cap: int = DEFAULT_PATH_CAP) -> list[PathYield]:
    """All simple paths from ``u`` to ``v`` that remuneration can follow.

    Edges may be walked against the flow. A path may change direction at most
    once, and only at a technology (moving from a product to a co-product or
    co-input). Intermediate vertices must be interior. ``via`` vertices must
    all appear; ``avoid`` vertices must not.
    """
    if u not in graph.vertices or v not in graph.vertices:
        raise KeyError(f"unknown vertex {u if u not in graph.vertices else v!r}")
    via = set(via)
    avoid = set(avoid)
    found: list[PathYield] = []
    verts = [u]
    prods: list[str] = []
    dirs: list[int] = []
    on_path = {u}

    def moves(x: str):
        for e in graph.out_edges[x]:
            yield e.head, e.product, 1
        for e in graph.in_edges[x]:
            yield e.tail, e.product, -1

    def dfs(x: str, turned: bool) -> None:
        for y, p, d in moves(x):
            if y in on_path or y in avoid:
                continue
            if y != v and y in graph.boundary:
                continue
            turn = bool(dirs) and d != dirs[-1]
            if turn and (turned or graph.vertices[x].kind != "technology"):
                continue
            verts.append(y)
            prods.append(p)
            dirs.append(d)
            if y == v:
                if via <= set(verts):
                    if len(found) >= cap:
                        raise PathLimitExceeded(f"more than {cap} paths between {u} and {v}")
                    found.append(PathYield(tuple(verts), tuple(prods), tuple(dirs),
                                           path_basis_factor(graph, verts, prods)))
            else:
                on_path.add(y)
                dfs(y, turned or turn)
                on_path.discard(y)
            verts.pop()
            prods.pop()
            dirs.pop()

    if u != v:
        dfs(u, False)
    return found


# technology cycles


INFEASIBLE_ONLY_ZERO = "infeasible-only-zero"
NONPHYSICAL_DEGENERATE = "nonphysical-degenerate"
LOSSY_FEASIBLE = "lossy-feasible"


@dataclass(frozen=True)
class CycleReport:
    vertices: tuple[str, ...]
    products: tuple[str, ...]
    gamma: float
    classification: str

    @property
    def technologies(self) -> tuple[str, ...]:
        return self.vertices


def classify_cycle_yield(gamma: float, rel_tol: float = 1e-9) -> str:
    if math.isclose(gamma, 1.0, rel_tol=rel_tol, abs_tol=0.0):
        return NONPHYSICAL_DEGENERATE
    return INFEASIBLE_ONLY_ZERO if gamma > 1.0 else LOSSY_FEASIBLE


def find_technology_cycles(graph: StakeholderGraph, *, cap: int = DEFAULT_PATH_CAP,
                           rel_tol: float = 1e-9) -> list[CycleReport]:
    """Elementary directed cycles that pass through at least one technology.

    ``vertices[k]`` hands ``products[k]`` to ``vertices[k + 1]`` (cyclically).
    The cycle yield multiplies, for each technology, the yield of the product
    it passes on over the yield of the product it receives.
    """
    reports: list[CycleReport] = []
    order = graph.order
    for start in graph.vertices:
        s_idx = order[start]
        verts = [start]
        prods: list[str] = []
        on_path = {start}

        def dfs(x: str) -> None:
            for e in graph.out_edges[x]:
                y = e.head
                if y == start:
                    cyc_v = tuple(verts)
                    cyc_p = tuple(prods + [e.product])
                    if any(graph.vertices[w].kind == "technology" for w in cyc_v):
                        if len(reports) >= cap:
                            raise PathLimitExceeded(f"more than {cap} technology cycles")
                        gamma = _cycle_gamma(graph, cyc_v, cyc_p)
                        reports.append(CycleReport(cyc_v, cyc_p, gamma,
                                                   classify_cycle_yield(gamma, rel_tol)))
                    continue
                if y in on_path or order[y] < s_idx:
                    continue
                verts.append(y)
                prods.append(e.product)
                on_path.add(y)
                dfs(y)
                on_path.discard(y)
                verts.pop()
                prods.pop()

        dfs(start)
    return reports


def _cycle_gamma(graph: StakeholderGraph, verts: Sequence[str], prods: Sequence[str]) -> float:
    gamma = 1.0
    n = len(verts)
    for k, v in enumerate(verts):
        if graph.vertices[v].kind != "technology":
            continue
        t = graph.technology(v)
        received = prods[k - 1] if k > 0 else prods[n - 1]
        gamma *= t.yield_of(prods[k]) / t.yield_of(received)
    return gamma


@dataclass(frozen=True)
class CycleWitness:
    feasible: bool
    activity: dict[str, float]
    external_input: float


def cycle_witness(model: SupplyChainModel, cycle: CycleReport, level: float = 1.0) -> CycleWitness:
    """Try to run a cycle with every supplier shut off.

    The first technology on the cycle is forced to process ``level`` units of
    its reference input and the feasibility of the resulting program is
    reported. Feasibility with no external supply is the non-physical
    outcome that a unit cycle yield permits.
    """
    techs = [v for v in cycle.vertices if model.kind(v) == "technology"]
    first = techs[0]
    patched = replace(
        model,
        suppliers=tuple(replace(s, capacity=0.0, lower=0.0) for s in model.suppliers),
        technologies=tuple(replace(t, lower=level) if t.id == first else t
                           for t in model.technologies),
        scenarios=(),
    )
    lp = build_full_lp(patched)
    lp = lp.with_costs({v.name: 0.0 for v in lp.variables})
    sol = RevisedSimplex().solve(lp)
    if not sol.optimal:
        return CycleWitness(False, {}, 0.0)
    activity = {t.id: sol.x[c_var(t.id, t.reference)] for t in patched.technologies if t.id in techs}
    external = sum(sol.x[f"s[{s.id}]"] for s in patched.suppliers)
    return CycleWitness(True, activity, external)


# DOT export


_SHAPES = {"supplier": "invhouse", "consumer": "house", "transport": "ellipse",
           "technology": "box"}


def to_dot(graph: StakeholderGraph, name: str = "stakeholders") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for v, x in graph.vertices.items():
        label = v if x.kind == "technology" else f"{v}\\n{x.product}"
        lines.append(f'  "{v}" [shape={_SHAPES[x.kind]}, label="{label}"];')
    for e in graph.edges:
        style = ", style=dashed" if e.flagged else ""
        lines.append(f'  "{e.tail}" -> "{e.head}" [label="{e.product}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
