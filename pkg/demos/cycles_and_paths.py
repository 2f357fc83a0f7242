"""How the stakeholder graph sees loops and alternative routes."""
from __future__ import annotations

from coordmarket import build_graph, enumerate_paths, find_technology_cycles, load_model
from coordmarket.graph import cycle_witness


def loop(gamma):
    tech = lambda tid, a, outs: {"id": tid, "node": "N", "bid": 1.0, "capacity": 10,
                                 "inputs": [{"product": a, "gamma": 1.0}],
                                 "outputs": [{"product": p, "gamma": g} for p, g in outs]}
    return load_model({
        "products": [{"id": p} for p in ("q", "p0", "p1", "p2")], "nodes": [{"id": "N"}],
        "suppliers": [{"id": "S", "node": "N", "product": "q", "bid": 1.0, "capacity": 10}],
        "consumers": [{"id": "D", "node": "N", "product": "p0", "bid": 9.0, "capacity": 10}],
        "transports": [],
        "technologies": [tech("t1", "q", [("p0", 0.5), ("p1", gamma)]), tech("t2", "p1", [("p2", 1.0)]),
                         tech("t3", "p2", [("q", 1.0)])],
        "scenarios": [],
    })


def main():
    for gamma in (1.5, 1.0, 0.5):
        m = loop(gamma)
        (cyc,) = find_technology_cycles(build_graph(m))
        w = cycle_witness(m, cyc)
        print(f"loop yield {cyc.gamma:.2f}: {cyc.classification:24s} runs on its own: {w.feasible}")

    g = build_graph(load_model({
        "products": [{"id": p} for p in ("A", "B", "D", "X")], "nodes": [{"id": "N"}],
        "suppliers": [{"id": "S", "node": "N", "product": "A", "bid": 2.0, "capacity": 10}],
        "consumers": [{"id": "C", "node": "N", "product": "X", "bid": 9.0, "capacity": 10}],
        "transports": [],
        "technologies": [
            {"id": "split", "node": "N", "bid": 1.0, "inputs": [{"product": "A", "gamma": 1.0}],
             "outputs": [{"product": "B", "gamma": 1.0}, {"product": "D", "gamma": 0.5}]},
            {"id": "fromB", "node": "N", "bid": 1.0, "inputs": [{"product": "B", "gamma": 1.0}],
             "outputs": [{"product": "X", "gamma": 1.0}]},
            {"id": "fromD", "node": "N", "bid": 1.0, "inputs": [{"product": "D", "gamma": 1.0}],
             "outputs": [{"product": "X", "gamma": 1.0}]}],
        "scenarios": [],
    }))
    print("\nroutes from the consumer back to the supplier:")
    for p in enumerate_paths(g, "C", "S"):
        print(f"    {' '.join(p.vertices):28s} yield {p.path_yield:.2f}  basis factor {p.basis_factor:.2f}")


if __name__ == "__main__":
    main()
