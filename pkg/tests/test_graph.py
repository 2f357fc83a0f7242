from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import cycle_market, make, multipath_market, pair_market, party, tech, two_component_market
from coordmarket.casestudy import load_msw
from coordmarket.graph import (INFEASIBLE_ONLY_ZERO, LOSSY_FEASIBLE, NONPHYSICAL_DEGENERATE,
                               PathLimitExceeded, build_graph, classify_cycle_yield, components,
                               cycle_witness, enumerate_paths, find_technology_cycles, to_dot)
from random_markets import random_market


def union_find_components(graph):
    """Independent partition: interior vertices joined through shared edges,
    boundary vertices copied into every group they touch."""
    parent = {v: v for v in graph.vertices}

    def root(v):
        while parent[v] != v:
            v = parent[v]
        return v

    for e in graph.edges:
        if e.tail not in graph.boundary and e.head not in graph.boundary:
            parent[root(e.tail)] = root(e.head)
    groups = {}
    for v in graph.vertices:
        if v not in graph.boundary:
            groups.setdefault(root(v), set()).add(v)
    for e in graph.edges:
        a, b = e.tail, e.head
        if a in graph.boundary and b in graph.boundary:
            groups[("bb", a, b)] = {a, b}
        elif a in graph.boundary:
            groups[root(b)].add(a)
        elif b in graph.boundary:
            groups[root(a)].add(b)
    seen = set().union(*groups.values()) if groups else set()
    for v in graph.vertices:
        if v not in seen:
            groups[("iso", v)] = {v}
    return sorted(map(frozenset, groups.values()), key=sorted)


def test_pair_market_has_one_edge():
    g = build_graph(pair_market())
    assert [(e.tail, e.head, e.product) for e in g.edges] == [("S1", "D1", "A")]
    assert len(components(g)) == 1


def test_two_components_split_at_shared_supplier():
    g = build_graph(two_component_market())
    assert g.degree("S2") == 2
    comps = components(g)
    assert len(comps) == 2
    assert all("S2" in c.vertices for c in comps)
    assert sorted(sorted(c.vertices) for c in comps) == [
        ["D1", "L1", "S1", "S2", "T1", "T2"], ["D2", "S2", "T3"]]


def test_chain_is_one_component():
    m = make(["A", "B"], ["N1", "N2"], [party("S", "N1", "A", 1.0)], [party("D", "N2", "B", 5.0)],
             [{"id": "L", "source": "N1", "sink": "N2", "product": "A", "bid": 1.0}],
             [tech("T", "N2", [("A", 1.0)], [("B", 1.0)])])
    assert len(components(build_graph(m))) == 1


def test_msw_components_match_union_find():
    g = build_graph(load_msw())
    assert sorted((c.vertices for c in components(g)), key=sorted) == union_find_components(g)
    assert len(components(g)) == 3


def test_msw_structure():
    g = build_graph(load_msw())
    edges = {(e.tail, e.head) for e in g.edges}
    assert ("S1", "L0") in edges and ("L0", "T0") in edges
    for k in range(1, 6):
        assert ("T0", f"L0{k}") in edges and (f"L0{k}", f"T{k}") in edges
        assert (f"T{k}", f"L{k}") in edges and (f"L{k}", f"D{k}") in edges
    assert g.boundary <= {s.id for s in g.model.suppliers} | {c.id for c in g.model.consumers}
    assert find_technology_cycles(g) == []


def test_msw_d1_path_is_unique():
    g = build_graph(load_msw())
    paths = enumerate_paths(g, "S1", "D1")
    assert len(paths) == 1
    assert paths[0].vertices == ("S1", "L0", "T0", "L01", "T1", "L1", "D1")


def test_multipath_yields():
    g = build_graph(multipath_market(0.5))
    paths = enumerate_paths(g, "D1", "S1")
    assert sorted(p.path_yield for p in paths) == [0.5, 1.0]
    assert sorted(p.basis_factor for p in paths) == [1.0, 2.0]
    assert {p.products[1] for p in paths} == {"B", "D"}


def test_adjacent_path_has_unit_factor():
    g = build_graph(pair_market())
    (p,) = enumerate_paths(g, "S1", "D1")
    assert p.basis_factor == 1.0


def test_disconnected_pair_has_no_paths():
    g = build_graph(two_component_market())
    assert enumerate_paths(g, "S1", "D2") == []


def test_path_cap():
    g = build_graph(multipath_market())
    with pytest.raises(PathLimitExceeded):
        enumerate_paths(g, "S1", "D1", cap=1)


@pytest.mark.parametrize("gamma, label", [(1.5, INFEASIBLE_ONLY_ZERO), (1.0, NONPHYSICAL_DEGENERATE),
                                          (0.5, LOSSY_FEASIBLE)])
def test_cycle_trichotomy(gamma, label):
    (cyc,) = find_technology_cycles(build_graph(cycle_market(gamma)))
    assert cyc.gamma == pytest.approx(gamma)
    assert cyc.classification == label
    assert classify_cycle_yield(gamma) == label


def test_unit_cycle_runs_without_external_input():
    m = cycle_market(1.0)
    (cyc,) = find_technology_cycles(build_graph(m))
    w = cycle_witness(m, cyc)
    assert w.feasible
    assert w.external_input == 0.0
    assert all(v > 0 for v in w.activity.values())
    for gamma in (0.5, 1.5):
        m = cycle_market(gamma)
        (cyc,) = find_technology_cycles(build_graph(m))
        assert not cycle_witness(m, cyc).feasible


def test_dot_export():
    text = to_dot(build_graph(load_msw()))
    assert text.startswith("digraph")
    assert '"S1" [shape=invhouse' in text and '"T0" [shape=box' in text
    assert text == to_dot(build_graph(load_msw()))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_graph_invariants(seed):
    m = random_market(np.random.default_rng(seed))
    g = build_graph(m)
    boundary = {s.id for s in m.suppliers} | {c.id for c in m.consumers}
    assert g.boundary <= boundary
    comps = components(g)
    assert sorted((c.vertices for c in comps), key=sorted) == union_find_components(g)
    for v in g.vertices:
        n = sum(v in c.vertices for c in comps)
        assert n >= 1
        if v not in g.boundary:
            assert n == 1
    for u in list(g.vertices)[:3]:
        for v in list(g.vertices)[-3:]:
            if u == v:
                continue
            for p in enumerate_paths(g, u, v, cap=2000):
                assert p.basis_factor * p.reversed(g).basis_factor == pytest.approx(1.0, abs=1e-12)
