"""Clearing programs built from a :class:`SupplyChainModel`.

Row labels:

* ``("bal", n, p)``  balance of product ``p`` at node ``n``; its dual is the
  nodal price because the row is written consumption-side positive;
* ``("sup", n, p)`` / ``("dem", n, p)``  aggregation of stakeholder supply and
  demand into nodal totals (full form only);
* ``("con", t, n, p, q)``  conversion of input ``q`` into output ``p`` by ``t``;
* ``("link", t, n, q, ref)``  input ratio rows, only for technologies without
  outputs, where no conversion row would otherwise tie the inputs together.
"""
from __future__ import annotations

from collections.abc import Hashable, Mapping

from .lp import INF, LinearProgram, LpBuilder, LpSolution
from .model import SupplyChainModel


def s_var(i: str) -> str:
    return f"s[{i}]"


def d_var(j: str) -> str:
    return f"d[{j}]"


def f_var(l: str) -> str:
    return f"f[{l}]"


def c_var(t: str, p: str) -> str:
    return f"c[{t},{p}]"


def g_var(t: str, p: str) -> str:
    return f"g[{t},{p}]"


def xi_var(t: str) -> str:
    return f"xi[{t}]"


def technology_var(t: str, reference: str, condensed: bool) -> str:
    return xi_var(t) if condensed else c_var(t, reference)


def _bounds(s) -> dict[str, float]:
    return {"lower": s.lower, "upper": s.capacity}


def build_full_lp(model: SupplyChainModel, bids: Mapping[str, float] | None = None) -> LinearProgram:
    """Welfare-maximising clearing program with explicit input and output flows.

    ``bids`` optionally replaces stakeholder bids in the objective without
    touching the model (used for tie-breaking perturbations).
    """
    bid = _bid_lookup(model, bids)
    b = LpBuilder("clearing", "max")
    for i in model.suppliers:
        b.var(s_var(i.id), cost=-bid(i.id), owner=i.id, **_bounds(i))
    for j in model.consumers:
        b.var(d_var(j.id), cost=bid(j.id), owner=j.id, **_bounds(j))
    for l in model.transports:
        b.var(f_var(l.id), cost=-bid(l.id), owner=l.id, **_bounds(l))
    for t in model.technologies:
        for p, _ in t.inputs:
            if p == t.reference:
                b.var(c_var(t.id, p), cost=-bid(t.id), owner=t.id, **_bounds(t))
            else:
                b.var(c_var(t.id, p), owner=t.id)
        for p, _ in t.outputs:
            b.var(g_var(t.id, p), owner=t.id)
    for key in model.suppliers_at:
        b.var(f"sN[{key[0]},{key[1]}]")
    for key in model.consumers_at:
        b.var(f"dN[{key[0]},{key[1]}]")

    for n, p in model.active_pairs:
        b.row(("bal", n, p))
    for (n, p), ids in model.suppliers_at.items():
        b.row(("sup", n, p))
        b.add(("sup", n, p), f"sN[{n},{p}]", 1.0)
        for i in ids:
            b.add(("sup", n, p), s_var(i), -1.0)
        b.add(("bal", n, p), f"sN[{n},{p}]", -1.0)
    for (n, p), ids in model.consumers_at.items():
        b.row(("dem", n, p))
        for j in ids:
            b.add(("dem", n, p), d_var(j), 1.0)
        b.add(("dem", n, p), f"dN[{n},{p}]", -1.0)
        b.add(("bal", n, p), f"dN[{n},{p}]", 1.0)
    for l in model.transports:
        b.add(("bal", l.source, l.product), f_var(l.id), 1.0)
        b.add(("bal", l.sink, l.product), f_var(l.id), -1.0)
    for t in model.technologies:
        for q, _ in t.inputs:
            b.add(("bal", t.node, q), c_var(t.id, q), 1.0)
        for p, _ in t.outputs:
            b.add(("bal", t.node, p), g_var(t.id, p), -1.0)
        for p, gp in t.outputs:
            for q, gq in t.inputs:
                label = ("con", t.id, t.node, p, q)
                b.row(label)
                b.add(label, g_var(t.id, p), gq)
                b.add(label, c_var(t.id, q), -gp)
        if not t.outputs:
            for q, gq in t.inputs:
                if q == t.reference:
                    continue
                label = ("link", t.id, t.node, q, t.reference)
                b.row(label)
                b.add(label, c_var(t.id, q), 1.0)
                b.add(label, c_var(t.id, t.reference), -gq)
    return b.build()


def build_condensed_lp(model: SupplyChainModel, bids: Mapping[str, float] | None = None) -> LinearProgram:
    """One activity level per technology; yields sit directly in the balance rows."""
    bid = _bid_lookup(model, bids)
    b = LpBuilder("condensed", "max")
    for i in model.suppliers:
        b.var(s_var(i.id), cost=-bid(i.id), owner=i.id, **_bounds(i))
    for j in model.consumers:
        b.var(d_var(j.id), cost=bid(j.id), owner=j.id, **_bounds(j))
    for l in model.transports:
        b.var(f_var(l.id), cost=-bid(l.id), owner=l.id, **_bounds(l))
    for t in model.technologies:
        b.var(xi_var(t.id), cost=-bid(t.id), owner=t.id, **_bounds(t))
    for n, p in model.active_pairs:
        b.row(("bal", n, p))
    for i in model.suppliers:
        b.add(("bal", i.node, i.product), s_var(i.id), -1.0)
    for j in model.consumers:
        b.add(("bal", j.node, j.product), d_var(j.id), 1.0)
    for l in model.transports:
        b.add(("bal", l.source, l.product), f_var(l.id), 1.0)
        b.add(("bal", l.sink, l.product), f_var(l.id), -1.0)
    for t in model.technologies:
        for q, g in t.inputs:
            b.add(("bal", t.node, q), xi_var(t.id), g)
        for p, g in t.outputs:
            b.add(("bal", t.node, p), xi_var(t.id), -g)
    return b.build()


def _bid_lookup(model: SupplyChainModel, bids: Mapping[str, float] | None):
    bids = bids or {}

    def bid(sid: str) -> float:
        return float(bids.get(sid, model.stakeholders[sid].bid))

    return bid


# explicit dual


def y_plus(label: Hashable) -> str:
    return f"y+{label!r}"


def y_minus(label: Hashable) -> str:
    return f"y-{label!r}"


def build_explicit_dual(primal: LinearProgram) -> LinearProgram:
    """Dual of ``max c'x, Ax = b, lb <= x <= ub`` as a minimisation.

    Variables are the split row prices ``y = y+ - y-``, one ``lam_up`` per
    finite upper bound and one ``lam_lo`` per variable. Constraint rows are
    labelled ``("dual", variable name)`` and read
    ``A_j' y + lam_up_j - lam_lo_j = c_j``.
    """
    if primal.sense != "max":
        raise ValueError("build_explicit_dual expects a maximisation")
    b = LpBuilder(f"{primal.name}-dual", "min")
    for r in primal.rows:
        b.var(y_plus(r.label), cost=r.rhs)
        b.var(y_minus(r.label), cost=-r.rhs)
    for v in primal.variables:
        if v.upper < INF:
            b.var(f"lam_up[{v.name}]", cost=v.upper)
        b.var(f"lam_lo[{v.name}]", cost=-v.lower)
    for v in primal.variables:
        b.row(("dual", v.name), rhs=v.cost)
    for r in primal.rows:
        for j, a in r.coeffs:
            name = primal.variables[j].name
            b.add(("dual", name), y_plus(r.label), a)
            b.add(("dual", name), y_minus(r.label), -a)
    for v in primal.variables:
        if v.upper < INF:
            b.add(("dual", v.name), f"lam_up[{v.name}]", 1.0)
        b.add(("dual", v.name), f"lam_lo[{v.name}]", -1.0)
    return b.build()


def dual_row_prices(primal: LinearProgram, dual_solution: LpSolution) -> dict[Hashable, float]:
    """Recover ``y`` per primal row from a solved explicit dual."""
    return {
        r.label: dual_solution.x[y_plus(r.label)] - dual_solution.x[y_minus(r.label)]
        for r in primal.rows
    }
