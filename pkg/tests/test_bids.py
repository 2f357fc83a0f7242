from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from builders import link, make, multipath_market, pair_market, party, tech, two_component_market
from coordmarket.bids import (AmbiguousShares, NoPath, RevenueShares, ShareTerm, activator_set,
                              build_covering_scenario, compute_activating_bids, compute_partial_bid,
                              default_shares)
from coordmarket.casestudy import CITY_CAP, COVERING, HUB, PAYER, CASE_BIDS, load_msw
from coordmarket.clearing import clear
from coordmarket.graph import build_graph
from coordmarket.model import with_bids


def msw_covering(product):
    m = load_msw()
    return build_covering_scenario(m, build_graph(m), product, chain_consumers=COVERING,
                                   payer=PAYER, hub=HUB, payer_cap=CITY_CAP)


def test_partial_bid_through_technology():
    g = build_graph(two_component_market())
    assert compute_partial_bid(g, "D1", "T2", 1.0) == pytest.approx(20.0)
    assert compute_partial_bid(g, "D1", "T2", 0.25) == pytest.approx(5.0)


def test_unit_yields_pass_bid_through():
    m = make(["A"], ["N1", "N2"], [party("S", "N1", "A", 4.0)], [party("D", "N2", "A", 9.0)],
             [link("L", "N1", "N2", "A", 1.5)])
    g = build_graph(m)
    assert compute_partial_bid(g, "D", "L", 1.0) == 1.5
    assert compute_partial_bid(g, "D", "S", 1.0) == 4.0


def test_multipath_uses_largest_factor():
    g = build_graph(multipath_market(0.5))
    assert compute_partial_bid(g, "D1", "S1", 1.0) == pytest.approx(2 * 2.0)


def test_pair_market_activating_bid():
    m = pair_market(supply_bid=5.0, demand_bid=0.0)
    report = compute_activating_bids(m)
    assert report.bid("D1") == pytest.approx(5.0)
    assert report.funding("S1") == 1.0


def test_sets():
    m = load_msw()
    sets = activator_set(m)
    assert sets.activators == {"S1", "D1", "D2", "D3", "D4", "D5", "DE"}
    assert "T0" in sets.reached and "D06" in sets.reached and "S2" in sets.reached


def test_msw_partial_bids_match_case4():
    _, report = msw_covering(None)
    for j, target in zip(("D1", "D2", "D3", "D4", "D5"), CASE_BIDS[4]):
        assert report.bid(j) == pytest.approx(target, abs=0.01)


@pytest.mark.parametrize("product, consumer, target", [
    ("P1", "D1", 1165.62), ("P2", "D2", 4302.52), ("P3", "D3", 3792.10), ("P4", "D4", 2890.20),
    ("P5", "D5", 889.35)])
def test_msw_covering_bids(product, consumer, target):
    sc, report = msw_covering(product)
    assert sc.bid_overrides[consumer] == pytest.approx(target, abs=0.01)
    assert report.totals["S1"] == pytest.approx(CITY_CAP)


def test_unknown_covering_product():
    with pytest.raises(KeyError):
        msw_covering("P9")


def test_unfundable_sinks_are_reported():
    # a supplier and a technology with nobody to pay them
    m = make(["A", "B"], ["N1"], [party("S", "N1", "A", 1.0)], [party("D", "N1", "B", -2.0)],
             technologies=[tech("T", "N1", [("A", 1.0)], [("B", 1.0)])])
    shares = default_shares(m)
    assert set(shares.unfundable) == {"S", "T", "D"}
    assert compute_activating_bids(m).unfundable == shares.unfundable


def test_competing_activators_need_explicit_shares():
    m = make(["A"], ["N1"], [party("S", "N1", "A", 5.0, 10)],
             [party("D1", "N1", "A", 1.0, 10), party("D2", "N1", "A", 1.0, 10)])
    with pytest.raises(AmbiguousShares):
        default_shares(m)
    shares = RevenueShares((ShareTerm("D1", "S", 0.5), ShareTerm("D2", "S", 0.5)))
    report = compute_activating_bids(m, shares=shares)
    assert report.bids() == {"D1": 2.5, "D2": 2.5}


def test_share_validation():
    with pytest.raises(ValueError, match="sum"):
        RevenueShares((ShareTerm("D", "S", 0.4),)).validate()
    with pytest.raises(ValueError, match="outside"):
        RevenueShares((ShareTerm("D", "S", 1.2), ShareTerm("E", "S", -0.2))).validate()


def test_no_path_raises():
    m = two_component_market()
    shares = RevenueShares((ShareTerm("D1", "T3", 1.0),))
    with pytest.raises(NoPath):
        compute_activating_bids(m, shares=shares)


def disposal_chain(s_bid, l_bid, t_bid, dump_bid, y_main, y_side):
    """S -> L -> T -> D with a by-product sent to a paid disposal consumer."""
    return make(
        ["A", "B", "W"], ["N1", "N2"],
        [party("S", "N1", "A", s_bid, 10)],
        [party("D", "N2", "B", 0.0, 100), party("X", "N2", "W", dump_bid, 100)],
        [link("L", "N1", "N2", "A", l_bid)],
        [tech("T", "N2", [("A", 1.0)], [("B", y_main), ("W", y_side)], bid=t_bid)])


def test_zero_profit_closure_on_a_chain():
    m = disposal_chain(3.0, 1.0, 2.0, -4.0, 0.8, 0.2)
    report = compute_activating_bids(m)
    # per unit of B: (3 + 1 + 2) / 0.8 plus 0.2 / 0.8 units of W at 4 each
    assert report.bid("D") == pytest.approx((3 + 1 + 2) / 0.8 + 4 * 0.2 / 0.8)
    sol = clear(with_bids(m, report.bids()), epsilon=1e-6)
    assert sol.allocations.supply["S"] == pytest.approx(10.0)
    assert max(abs(v) for v in sol.profits.all.values()) <= 1e-6
    assert sol.price("N2", "B") == pytest.approx(report.bid("D"))


money = st.floats(0.1, 50).map(lambda x: round(x, 2))


@settings(max_examples=50, deadline=None)
@given(money, money, money, money, st.floats(0.2, 1.0), st.floats(0.05, 0.8))
def test_zero_profit_closure_property(s, l, t, dump, y_main, y_side):
    m = disposal_chain(s, l, t, -dump, y_main, y_side)
    report = compute_activating_bids(m)
    sol = clear(with_bids(m, report.bids()), epsilon=1e-6)
    assert not sol.is_dry
    scale = 1 + max(abs(x) for x in report.bids().values())
    assert max(abs(v) for v in sol.profits.all.values()) <= 1e-6 * scale * 100
    # sources cover sinks exactly
    a = sol.allocations
    paid = report.bid("D") * a.demand["D"]
    owed = s * a.supply["S"] + l * a.flow["L"] + t * a.conversion["T"] + dump * a.demand["X"]
    assert paid == pytest.approx(owed, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1))
def test_share_split_keeps_funding(beta):
    g = build_graph(make(["A"], ["N1"], [party("S", "N1", "A", 6.0, 10)],
                         [party("D1", "N1", "A", 1.0, 10), party("D2", "N1", "A", 1.0, 10)]))
    shares = RevenueShares((ShareTerm("D1", "S", beta), ShareTerm("D2", "S", 1 - beta)))
    report = compute_activating_bids(g.model, g, shares)
    assert report.funding("S") == pytest.approx(1.0)
    assert sum(p.partial / p.path.basis_factor for p in report.partials) == pytest.approx(6.0)
