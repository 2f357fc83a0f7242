"""Walk a three-step chain from a dry market to a break-even one.

A farm sells manure, a truck hauls it, a digester turns it into biogas and
digestate, and a landfill charges to take the digestate. Nobody bids enough
for biogas, so the market stays dry until the activating bid is posted.
"""
from __future__ import annotations

from coordmarket import clear, compute_activating_bids, load_model
from coordmarket.model import with_bids

MODEL = {
    "products": [{"id": "manure"}, {"id": "biogas"}, {"id": "digestate"}],
    "nodes": [{"id": "farm"}, {"id": "plant"}],
    "suppliers": [{"id": "Farm", "node": "farm", "product": "manure", "bid": 2.0, "capacity": 100}],
    "consumers": [
        {"id": "Gas", "node": "plant", "product": "biogas", "bid": 5.0, "capacity": 1000},
        {"id": "Tip", "node": "plant", "product": "digestate", "bid": -8.0, "capacity": 1000},
    ],
    "transports": [{"id": "Truck", "source": "farm", "sink": "plant", "product": "manure",
                    "bid": 1.5, "capacity": 100}],
    "technologies": [{"id": "Digester", "node": "plant", "bid": 4.0, "capacity": 100,
                      "inputs": [{"product": "manure", "gamma": 1.0}],
                      "outputs": [{"product": "biogas", "gamma": 0.6},
                                  {"product": "digestate", "gamma": 0.3}]}],
    "scenarios": [],
}


def show(title, sol):
    a = sol.allocations
    print(f"{title}: welfare {sol.welfare:.2f}, manure {a.supply['Farm']:.1f} t, "
          f"biogas {a.demand['Gas']:.1f} t")
    for sid, v in sol.profits.all.items():
        print(f"    {sid:9s} profit {round(v, 6) + 0.0:8.2f}")


def main():
    model = load_model(MODEL)
    show("posted bids", clear(model))

    report = compute_activating_bids(model)
    print("\npartial bids behind the gas buyer's break-even price:")
    for p in report.partials:
        print(f"    {p.target:9s} basis factor {p.path.basis_factor:.4f}  partial {p.partial:.4f}")
    bid = report.bid("Gas")
    print(f"activating bid for biogas: {bid:.4f}\n")

    # a tiny premium selects the cleared outcome among equal-welfare ones
    show("at the activating bid", clear(with_bids(model, {"Gas": bid}), epsilon=1e-6))
    print()
    show("one unit above it", clear(with_bids(model, {"Gas": bid + 1.0})))


if __name__ == "__main__":
    main()
