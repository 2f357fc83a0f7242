from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import link, make, pair_market, party, tech
from coordmarket.clearing import (InfeasibleMarket, UnboundedMarket, clear, clear_forced,
                                  diversion_rate, fmt_money, fmt_quantity, fmt_welfare,
                                  payment_volume, revenue_adequacy, solution_csv)
from coordmarket.model import Scenario, apply_scenario, with_bids
from random_markets import random_market

THEOREMS = ("T1", "T2", "T3", "T4", "T5")


def test_empty_market():
    sol = clear(make(["A"], ["N1"]))
    assert sol.welfare == 0.0
    assert sol.is_dry
    assert sol.report.passed


def test_pair_market_prices_within_bids():
    sol = clear(pair_market(1.0, 2.0, 10.0))
    assert sol.allocations.demand["D1"] == pytest.approx(10.0)
    assert 1.0 <= sol.price("N1", "A") <= 2.0
    assert sol.welfare == pytest.approx(10.0)
    assert sum(sol.profits.all.values()) == pytest.approx(sol.welfare)


def test_dry_market_passes_vacuously():
    sol = clear(pair_market(3.0, 2.0))
    assert sol.is_dry
    assert all(sol.report[t].passed for t in THEOREMS)


def test_transport_and_technology_prices():
    m = make(["A", "B"], ["N1", "N2"], [party("S", "N1", "A", 1.0, 5)],
             [party("D", "N2", "B", 20.0, 100)], [link("L", "N1", "N2", "A", 2.0)],
             [tech("T", "N2", [("A", 1.0)], [("B", 0.5)], bid=3.0)])
    sol = clear(m)
    assert sol.allocations.flow["L"] == pytest.approx(5.0)
    assert sol.allocations.generation[("T", "B")] == pytest.approx(2.5)
    assert sol.prices.transport["L"] == pytest.approx(sol.price("N2", "A") - sol.price("N1", "A"))
    assert sol.prices.technology["T"] == pytest.approx(0.5 * sol.price("N2", "B") - sol.price("N2", "A"))
    assert sol.welfare == pytest.approx(20 * 2.5 - 5 * (1 + 2 + 3))
    assert sol.report.passed


def test_forced_pair_market_loses_money():
    # consumer forced to take 4 units at a bid below the supplier's cost
    m = with_bids(pair_market(5.0, 2.0, 10.0), {})
    m = apply_scenario(m, Scenario("f", forced_lower_bounds={"D1": 4.0}))
    sol = clear_forced(m)
    assert sol.allocations.demand["D1"] == pytest.approx(4.0)
    assert sol.profits.of("D1") < 0
    assert sol.welfare == pytest.approx(4 * (2.0 - 5.0))
    assert sol.diagnostics.revenue_adequacy_residual <= 1e-6
    assert sol.diagnostics.revenue_adequate
    assert "D1" in sol.diagnostics.negative_profits


def test_forcing_zero_changes_nothing():
    m = pair_market(1.0, 2.0)
    forced = clear_forced(m, Scenario("z", forced_lower_bounds={"D1": 0.0}))
    free = clear(m)
    assert forced.welfare == free.welfare
    assert forced.allocations == free.allocations


def test_clear_refuses_forced_models():
    m = apply_scenario(pair_market(), Scenario("f", forced_lower_bounds={"D1": 1.0}))
    with pytest.raises(ValueError, match="clear_forced"):
        clear(m)


def test_infeasible_forcing_names_constraints():
    m = make(["A"], ["N1"], [party("S", "N1", "A", 1.0, 3)], [party("D", "N1", "A", 2.0, 10)])
    m = apply_scenario(m, Scenario("f", forced_lower_bounds={"D": 5.0}))
    with pytest.raises(InfeasibleMarket) as err:
        clear_forced(m)
    assert ("bal", "N1", "A") in err.value.rows
    assert set(err.value.bounds) == {"s[S]", "d[D]"}
    assert err.value.forced == ("D",)


def test_unbounded_market_names_stakeholders():
    m = make(["A"], ["N1"], [party("S", "N1", "A", 1.0)], [party("D", "N1", "A", 2.0)])
    with pytest.raises(UnboundedMarket) as err:
        clear(m)
    assert set(err.value.stakeholders) == {"S", "D"}


def test_epsilon_selects_cleared_tie():
    # bids tie exactly: zero-profit clearing and the dry outcome have equal welfare
    m = make(["A"], ["N1"], [party("S", "N1", "A", 2.0, 5)], [party("D", "N1", "A", 2.0, 5)])
    assert clear(m, epsilon=1e-6).allocations.demand["D"] == pytest.approx(5.0)
    tied = clear(m, epsilon=1e-6)
    assert tied.welfare == pytest.approx(0.0)
    assert max(abs(v) for v in tied.profits.all.values()) <= 1e-9


def test_condensed_and_full_settle_identically():
    m = random_market(np.random.default_rng(11))
    a, b = clear(m), clear(m, formulation="condensed")
    assert a.welfare == pytest.approx(b.welfare, abs=1e-6)


def test_diversion_requires_tags():
    sol = clear(pair_market())
    with pytest.raises(ValueError, match="landfill"):
        diversion_rate(sol)


def test_formatting_is_fixed():
    assert fmt_money(1165.624) == "1165.62"
    assert fmt_money(-0.001) == "0.00"
    assert fmt_quantity(72846.6) == "72847"
    assert fmt_welfare(18554130.9) == "1.86e+07"
    sol = clear(pair_market())
    assert solution_csv(sol) == solution_csv(clear(pair_market()))


def check_unforced(sol):
    assert sol.report.passed, sol.report.lines()
    ra = revenue_adequacy(sol)
    assert abs(ra["residual"]) <= 1e-6 * (1 + payment_volume(sol))
    assert sum(sol.profits.all.values()) == pytest.approx(sol.welfare, abs=1e-6 * (1 + abs(sol.welfare)))


def test_theorems_on_hundred_random_markets():
    rng = np.random.default_rng(424242)
    start = time.perf_counter()
    for _ in range(100):
        check_unforced(clear(random_market(rng)))
    assert time.perf_counter() - start < 30


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_theorems_property(seed):
    check_unforced(clear(random_market(np.random.default_rng(seed))))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 2.0, 10.0]))
def test_welfare_scales_with_bids(seed, k):
    m = random_market(np.random.default_rng(seed))
    scaled = with_bids(m, {sid: k * s.bid for sid, s in m.stakeholders.items()})
    a, b = clear(m), clear(scaled)
    assert b.welfare == pytest.approx(k * a.welfare, abs=1e-6 * (1 + abs(k * a.welfare)))
    check_unforced(b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_revenue_adequacy_under_forcing(seed):
    rng = np.random.default_rng(seed)
    m = random_market(rng)
    j = m.consumers[0]
    level = float(np.round(rng.uniform(0, j.capacity), 2))
    try:
        sol = clear_forced(m, Scenario("f", forced_lower_bounds={j.id: level}))
    except InfeasibleMarket:
        return
    assert sol.report["T3"].passed
    assert sol.diagnostics.revenue_adequate
