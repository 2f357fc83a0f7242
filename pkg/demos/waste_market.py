"""The municipal solid waste case study, case by case.

Prints each case's welfare, landfill diversion and the stakeholders left with
a loss, then the price paid by the consumer covering the separation plant.
"""
from __future__ import annotations

from coordmarket.casestudy import CASES, COVERING, load_msw, run_case


def main():
    model = load_msw()
    print(f"{'case':<6}{'welfare':>12}{'diversion':>11}  losses")
    for n in sorted(CASES):
        r = run_case(n, model)
        losers = [sid for sid, v in r.solution.profits.all.items() if v < -1e-3]
        print(f"{r.definition.name:<6}{r.welfare:>12.4g}{r.diversion:>10.1f}%  {', '.join(losers) or '-'}")

    print("\ncovering consumers clear at their own bid:")
    for n, d in sorted(CASES.items()):
        if d.covering is None:
            continue
        r = run_case(n, model)
        j = model.get(COVERING[d.covering])
        bid = r.solution.model.get(j.id).bid
        print(f"    case{n} {j.id} bid {bid:9.2f}  price {r.solution.price(j.node, j.product):9.2f}")

    forced = run_case(3, model).solution.diagnostics
    print(f"\ncase3 revenue adequacy residual {forced.revenue_adequacy_residual:.2g} "
          f"on payments of {forced.payment_volume:.3g}")


if __name__ == "__main__":
    main()
