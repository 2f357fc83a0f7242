from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lp_oracles import enumerate_vertices, random_lp
from coordmarket.lp import (INF, INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, LpBuilder,
                            RevisedSimplex, ScipySolver, complementary_slackness_residual,
                            primal_residual, stationarity_residual, to_mps)


def test_two_variable_market():
    b = LpBuilder("pair", "max")
    b.var("s", upper=10, cost=-1)
    b.var("d", upper=10, cost=2)
    b.row("bal")
    b.add("bal", "d", 1)
    b.add("bal", "s", -1)
    sol = RevisedSimplex().solve(b.build())
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(10.0)
    assert 1.0 - 1e-9 <= sol.duals["bal"] <= 2.0 + 1e-9
    assert complementary_slackness_residual(b.build(), sol) <= 1e-9


def test_infeasible_bounds_are_reported():
    b = LpBuilder("inf", "max")
    b.var("s", upper=3)
    b.var("d", lower=5, upper=6, cost=1)
    b.row("bal")
    b.add("bal", "d", 1)
    b.add("bal", "s", -1)
    sol = RevisedSimplex().solve(b.build())
    assert sol.status == INFEASIBLE
    assert sol.infeasible_rows == ("bal",)
    assert set(sol.binding_bounds) <= {"s", "d"}
    assert sol.binding_bounds


def test_unbounded_reports_ray():
    b = LpBuilder("unb", "max")
    b.var("s", cost=-1)
    b.var("d", cost=2)
    b.row("bal")
    b.add("bal", "d", 1)
    b.add("bal", "s", -1)
    sol = RevisedSimplex().solve(b.build())
    assert sol.status == UNBOUNDED
    assert sol.ray["d"] > 0 and sol.ray["s"] > 0


def test_degenerate_ties_give_unique_objective():
    b = LpBuilder("tie", "max")
    for name in "abc":
        b.var(name, upper=1, cost=1)
    b.row("cap", rhs=1)
    for name in "abc":
        b.add("cap", name, 1)
    lp = b.build()
    sol = RevisedSimplex().solve(lp)
    assert sol.objective == pytest.approx(1.0)
    assert enumerate_vertices(lp) == pytest.approx(1.0)
    assert RevisedSimplex().solve(lp).x == sol.x


def test_oracle_equivalence_on_random_programs():
    rng = np.random.default_rng(20240611)
    solver = RevisedSimplex()
    checked = 0
    for _ in range(200):
        lp = random_lp(rng)
        ref = enumerate_vertices(lp)
        sol = solver.solve(lp)
        if ref is None:
            assert sol.status == INFEASIBLE
            continue
        assert sol.status == OPTIMAL
        assert abs(sol.objective - ref) <= 1e-8 * (1 + abs(ref))
        assert sol.gap <= 1e-6 * (1 + abs(sol.objective))
        assert primal_residual(lp, sol) <= 1e-8
        assert stationarity_residual(lp, sol) <= 1e-8
        assert complementary_slackness_residual(lp, sol) <= 1e-6
        checked += 1
    assert checked > 100


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_strong_duality_property(seed):
    lp = random_lp(np.random.default_rng(seed))
    sol = RevisedSimplex().solve(lp)
    if sol.optimal:
        assert sol.gap <= 1e-6 * (1 + abs(sol.objective))


def test_reprice_on_optimal_basis_is_stable():
    rng = np.random.default_rng(7)
    solver = RevisedSimplex()
    for _ in range(30):
        lp = random_lp(rng)
        sol = solver.solve(lp)
        if not sol.optimal:
            continue
        again = solver.reprice(lp, sol.basis)
        assert again.objective == pytest.approx(sol.objective, abs=1e-9)


def test_highs_agrees_when_available():
    pytest.importorskip("scipy")
    rng = np.random.default_rng(3)
    for _ in range(40):
        lp = random_lp(rng)
        ours, theirs = RevisedSimplex().solve(lp), ScipySolver().solve(lp)
        assert ours.status == theirs.status
        if ours.optimal:
            assert ours.objective == pytest.approx(theirs.objective, abs=1e-7)


def test_mps_export_lists_every_column():
    b = LpBuilder("m", "max")
    b.var("x", upper=4, cost=1)
    b.var("y", lower=1, cost=-2)
    b.row("r", rhs=3)
    b.add("r", "x", 1)
    b.add("r", "y", 1)
    text = to_mps(b.build())
    assert text.startswith("NAME")
    assert "* C0000001 = x" in text and "* C0000002 = y" in text
    assert "UP BND       C0000001             4" in text
    assert text.rstrip().endswith("ENDATA")


def test_rejects_malformed_programs():
    with pytest.raises(ValueError):
        LinearProgram((), (), sense="maximise")
    b = LpBuilder()
    b.var("x")
    with pytest.raises(ValueError):
        b.var("x")
    b2 = LpBuilder()
    b2.var("z", lower=2, upper=1)
    with pytest.raises(ValueError, match="exceeds"):
        b2.build()
    b3 = LpBuilder()
    b3.var("w", lower=-INF)
    with pytest.raises(ValueError, match="finite"):
        b3.build()
