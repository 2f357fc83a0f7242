"""Linear programs in equality-plus-bounds form and a reference simplex solver.

A :class:`LinearProgram` is ``opt c'x  s.t.  A x = b,  lb <= x <= ub`` with
``opt`` either ``"max"`` or ``"min"``. Rows carry hashable labels so callers can
read duals back by meaning rather than position.

The reference solver is a dense revised simplex on the bounded-variable form.
It uses Bland's rule throughout, which makes every solve deterministic, and it
recomputes the basic solution from scratch at each pivot instead of updating a
factorisation. Both choices favour reproducibility over speed.
"""
from __future__ import annotations

import math
from collections.abc import Hashable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import Protocol

import numpy as np

INF = math.inf

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = 0.0
    upper: float = INF
    cost: float = 0.0
    owner: Hashable | None = None


@dataclass(frozen=True)
class Row:
    label: Hashable
    coeffs: tuple[tuple[int, float], ...]
    rhs: float = 0.0


@dataclass(frozen=True)
class LinearProgram:
    variables: tuple[Variable, ...]
    rows: tuple[Row, ...]
    sense: str = "max"
    name: str = "lp"

    def __post_init__(self) -> None:
        if self.sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', not {self.sense!r}")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        labels = [r.label for r in self.rows]
        if len(set(labels)) != len(labels):
            raise ValueError("row labels must be unique")
        n = len(self.variables)
        for v in self.variables:
            if not math.isfinite(v.lower):
                raise ValueError(f"{v.name}: lower bound must be finite")
            if v.lower > v.upper:
                raise ValueError(f"{v.name}: lower bound {v.lower} exceeds upper {v.upper}")
        for r in self.rows:
            for j, _ in r.coeffs:
                if not 0 <= j < n:
                    raise ValueError(f"row {r.label!r} references variable {j}")

    @cached_property
    def index(self) -> dict[str, int]:
        return {v.name: j for j, v in enumerate(self.variables)}

    @cached_property
    def row_index(self) -> dict[Hashable, int]:
        return {r.label: i for i, r in enumerate(self.rows)}

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def m(self) -> int:
        return len(self.rows)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Dense ``(A, b, c, lb, ub)``."""
        A = np.zeros((self.m, self.n))
        for i, r in enumerate(self.rows):
            for j, a in r.coeffs:
                A[i, j] += a
        b = np.array([r.rhs for r in self.rows], dtype=float)
        c = np.array([v.cost for v in self.variables], dtype=float)
        lb = np.array([v.lower for v in self.variables], dtype=float)
        ub = np.array([v.upper for v in self.variables], dtype=float)
        return A, b, c, lb, ub

    def with_costs(self, costs: Mapping[str, float]) -> LinearProgram:
        """Same structure, new objective coefficients for the named variables."""
        vs = tuple(
            Variable(v.name, v.lower, v.upper, float(costs[v.name]), v.owner) if v.name in costs else v
            for v in self.variables
        )
        return LinearProgram(vs, self.rows, self.sense, self.name)

    def objective_value(self, x: Mapping[str, float]) -> float:
        return float(sum(v.cost * x[v.name] for v in self.variables))


class LpBuilder:
    """Incremental construction helper."""

    def __init__(self, name: str = "lp", sense: str = "max"):
        self.name = name
        self.sense = sense
        self._vars: list[Variable] = []
        self._index: dict[str, int] = {}
        self._rows: dict[Hashable, dict[int, float]] = {}
        self._rhs: dict[Hashable, float] = {}

    def var(self, name: str, *, lower: float = 0.0, upper: float = INF, cost: float = 0.0,
            owner: Hashable | None = None) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        self._index[name] = len(self._vars)
        self._vars.append(Variable(name, float(lower), float(upper), float(cost), owner))
        return self._index[name]

    def row(self, label: Hashable, rhs: float = 0.0) -> None:
        if label in self._rows:
            raise ValueError(f"duplicate row {label!r}")
        self._rows[label] = {}
        self._rhs[label] = float(rhs)

    def add(self, label: Hashable, var: str | int, coef: float) -> None:
        j = self._index[var] if isinstance(var, str) else var
        entries = self._rows[label]
        entries[j] = entries.get(j, 0.0) + float(coef)

    def has_row(self, label: Hashable) -> bool:
        return label in self._rows

    def build(self) -> LinearProgram:
        rows = tuple(
            Row(label, tuple((j, a) for j, a in sorted(entries.items()) if a != 0.0), self._rhs[label])
            for label, entries in self._rows.items()
        )
        return LinearProgram(tuple(self._vars), rows, self.sense, self.name)


@dataclass(frozen=True)
class Basis:
    """Simplex basis over the original variables plus one artificial per row.

    Indices ``>= n`` denote artificial columns.
    """

    basic: tuple[int, ...]
    at_upper: frozenset[int]
    n: int
    m: int


@dataclass(frozen=True)
class LpSolution:
    status: str
    objective: float = math.nan
    x: Mapping[str, float] = field(default_factory=dict)
    duals: Mapping[Hashable, float] = field(default_factory=dict)
    upper_duals: Mapping[str, float] = field(default_factory=dict)
    lower_duals: Mapping[str, float] = field(default_factory=dict)
    dual_objective: float = math.nan
    basis: Basis | None = None
    ray: Mapping[str, float] = field(default_factory=dict)
    infeasible_rows: tuple[Hashable, ...] = ()
    binding_bounds: tuple[str, ...] = ()
    iterations: int = 0
    dual_infeasibility: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def gap(self) -> float:
        return abs(self.objective - self.dual_objective)

    def value(self, name: str) -> float:
        return self.x[name]


class Solver(Protocol):
    def solve(self, lp: LinearProgram) -> LpSolution: ...


class RevisedSimplex:
    """Dense bounded-variable revised simplex with Bland's rule.

    ``cost_tol`` and ``feas_tol`` are relative to the largest cost and the
    largest right-hand side or finite bound respectively.
    """

    def __init__(self, cost_tol: float = 1e-9, feas_tol: float = 1e-9, pivot_tol: float = 1e-9,
                 max_iter: int | None = None):
        self.cost_tol = cost_tol
        self.feas_tol = feas_tol
        self.pivot_tol = pivot_tol
        self.max_iter = max_iter

    # public API

    def solve(self, lp: LinearProgram) -> LpSolution:
        A, b, c, lb, ub = lp.arrays()
        if lp.sense == "min":
            c = -c
        m, n = A.shape
        scale_b = max([1.0] + [abs(v) for v in b] + [abs(v) for v in lb]
                      + [abs(v) for v in ub if math.isfinite(v)])
        feas = self.feas_tol * scale_b

        # phase I: start every variable at its lower bound, artificials absorb the residual
        x0 = lb.copy()
        r = b - A @ x0
        sign = np.where(r >= 0, 1.0, -1.0)
        Aext = np.hstack([A, np.diag(sign)]) if m else np.zeros((0, n))
        lbx = np.concatenate([lb, np.zeros(m)])
        ubx = np.concatenate([ub, np.full(m, INF)])
        c1 = np.concatenate([np.zeros(n), -np.ones(m)])
        state = _State(basic=list(range(n, n + m)), at_upper=set())
        it1, res = self._iterate(Aext, b, c1, lbx, ubx, state)
        if res != OPTIMAL:  # cannot happen: phase I is bounded
            raise RuntimeError("phase I did not terminate at an optimum")
        xB, xfull = _primal(Aext, b, lbx, ubx, state)
        infeas = float(np.sum(xfull[n:]))
        if infeas > feas:
            y = _duals(Aext, c1, state)
            d = c1 - Aext.T @ y
            rows = tuple(lp.rows[i].label for i in range(m) if abs(y[i]) > 1e-9)
            bounds = tuple(
                lp.variables[j].name for j in range(n)
                if j not in state.basic and abs(d[j]) > 1e-9
            )
            return LpSolution(INFEASIBLE, infeasible_rows=rows, binding_bounds=bounds,
                              iterations=it1)

        # phase II: artificials pinned at zero, redundant rows keep theirs in the basis
        ubx[n:] = 0.0
        state.at_upper -= set(range(n, n + m))
        c2 = np.concatenate([c, np.zeros(m)])
        it2, res = self._iterate(Aext, b, c2, lbx, ubx, state)
        if res == UNBOUNDED:
            ray = {lp.variables[j].name: v for j, v in state.ray.items() if j < n and v != 0.0}
            return LpSolution(UNBOUNDED, ray=ray, iterations=it1 + it2)
        return self._package(lp, Aext, b, c2, lbx, ubx, state, it1 + it2)

    def reprice(self, lp: LinearProgram, basis: Basis) -> LpSolution:
        """Evaluate ``lp`` at a given basis (usually from a perturbed twin)."""
        A, b, c, lb, ub = lp.arrays()
        if lp.sense == "min":
            c = -c
        m, n = A.shape
        if (basis.n, basis.m) != (n, m):
            raise ValueError("basis does not match the program's shape")
        x0 = lb.copy()
        r = b - A @ x0
        sign = np.where(r >= 0, 1.0, -1.0)
        Aext = np.hstack([A, np.diag(sign)]) if m else np.zeros((0, n))
        lbx = np.concatenate([lb, np.zeros(m)])
        ubx = np.concatenate([ub, np.zeros(m)])
        c2 = np.concatenate([c, np.zeros(m)])
        state = _State(basic=list(basis.basic), at_upper=set(basis.at_upper))
        return self._package(lp, Aext, b, c2, lbx, ubx, state, 0)

    # internals

    def _iterate(self, A, b, c, lb, ub, state: _State) -> tuple[int, str]:
        m, N = A.shape
        limit = self.max_iter or 50 * (m + N) + 1000
        ctol = self.cost_tol * max(1.0, float(np.max(np.abs(c))) if N else 1.0)
        ptol = self.pivot_tol
        for it in range(limit):
            xB, x = _primal(A, b, lb, ub, state)
            y = _duals(A, c, state)
            d = c - A.T @ y if m else c.copy()
            basic = set(state.basic)
            enter = -1
            for j in range(N):
                if j in basic or ub[j] - lb[j] <= 0.0:
                    continue
                if j in state.at_upper:
                    if d[j] < -ctol:
                        enter = j
                        break
                elif d[j] > ctol:
                    enter = j
                    break
            if enter < 0:
                return it, OPTIMAL
            direction = -1.0 if enter in state.at_upper else 1.0
            w = _solve(A, state, A[:, enter]) if m else np.zeros(0)
            delta = -direction * w  # change of x_B per unit step
            best = INF
            span = ub[enter] - lb[enter]
            candidates: list[tuple[float, int, int, bool]] = []
            if math.isfinite(span):
                candidates.append((span, enter, -1, False))
            for pos, k in enumerate(state.basic):
                if delta[pos] < -ptol:
                    candidates.append((max(0.0, (xB[pos] - lb[k]) / -delta[pos]), k, pos, False))
                elif delta[pos] > ptol and math.isfinite(ub[k]):
                    candidates.append((max(0.0, (ub[k] - xB[pos]) / delta[pos]), k, pos, True))
            if not candidates:
                state.ray = {enter: direction}
                for pos, k in enumerate(state.basic):
                    state.ray[k] = float(delta[pos])
                return it, UNBOUNDED
            best = min(cand[0] for cand in candidates)
            tie = 1e-12 * max(1.0, best)
            _, k, pos, to_upper = min(
                (cand for cand in candidates if cand[0] <= best + tie), key=lambda cand: cand[1]
            )
            if pos < 0:  # bound flip of the entering variable
                if enter in state.at_upper:
                    state.at_upper.discard(enter)
                else:
                    state.at_upper.add(enter)
                continue
            state.at_upper.discard(enter)
            state.basic[pos] = enter
            if to_upper:
                state.at_upper.add(k)
        raise RuntimeError(f"simplex exceeded {limit} iterations")

    def _package(self, lp, A, b, c, lb, ub, state, iterations) -> LpSolution:
        m, N = A.shape
        n = lp.n
        _, x = _primal(A, b, lb, ub, state)
        y = _duals(A, c, state)
        d = c - A.T @ y if m else c.copy()
        basic = set(state.basic)
        upper_duals: dict[str, float] = {}
        lower_duals: dict[str, float] = {}
        worst = 0.0
        for j in range(n):
            name = lp.variables[j].name
            if j in basic:
                upper_duals[name] = 0.0
                lower_duals[name] = 0.0
                continue
            fixed = ub[j] - lb[j] <= 0.0
            if j in state.at_upper:
                upper_duals[name] = float(max(d[j], 0.0))
                lower_duals[name] = 0.0
                if not fixed:
                    worst = max(worst, -d[j])
            else:
                upper_duals[name] = float(max(d[j], 0.0)) if fixed else 0.0
                lower_duals[name] = float(max(-d[j], 0.0))
                if not fixed:
                    worst = max(worst, d[j])
        sgn = -1.0 if lp.sense == "min" else 1.0
        xs = {lp.variables[j].name: float(x[j]) for j in range(n)}
        obj = float(sgn * (c[:n] @ x[:n]))
        lbv = lb[:n]
        ubv = ub[:n]
        ud = np.array([upper_duals[v.name] for v in lp.variables])
        ld = np.array([lower_duals[v.name] for v in lp.variables])
        finite_ub = np.where(np.isfinite(ubv), ubv, 0.0)
        dual_obj = float(b @ y + finite_ub @ ud - lbv @ ld) if n else float(b @ y)
        return LpSolution(
            OPTIMAL,
            objective=obj,
            x=xs,
            duals={lp.rows[i].label: float(sgn * y[i]) for i in range(m)},
            upper_duals=upper_duals,
            lower_duals=lower_duals,
            dual_objective=sgn * dual_obj,
            basis=Basis(tuple(state.basic), frozenset(state.at_upper), n, m),
            iterations=iterations,
            dual_infeasibility=float(worst),
        )


@dataclass
class _State:
    basic: list[int]
    at_upper: set[int]
    ray: dict[int, float] = field(default_factory=dict)


def _solve(A: np.ndarray, state: _State, rhs: np.ndarray) -> np.ndarray:
    B = A[:, state.basic]
    return np.linalg.solve(B, rhs)


def _duals(A: np.ndarray, c: np.ndarray, state: _State) -> np.ndarray:
    m = A.shape[0]
    if m == 0:
        return np.zeros(0)
    B = A[:, state.basic]
    return np.linalg.solve(B.T, c[state.basic])


def _primal(A, b, lb, ub, state: _State) -> tuple[np.ndarray, np.ndarray]:
    x = lb.copy()
    for j in state.at_upper:
        x[j] = ub[j]
    basic = state.basic
    x[basic] = 0.0
    if A.shape[0] == 0:
        return np.zeros(0), x
    xB = _solve(A, state, b - A @ x)
    x[basic] = xB
    return xB, x


class ScipySolver:
    """Optional HiGHS backend through :func:`scipy.optimize.linprog`.

    Bases are not exposed, so :meth:`RevisedSimplex.reprice` has no analogue here.
    """

    def solve(self, lp: LinearProgram) -> LpSolution:
        from scipy.optimize import linprog

        A, b, c, lb, ub = lp.arrays()
        sgn = 1.0 if lp.sense == "min" else -1.0
        bounds = [(lo, None if math.isinf(hi) else hi) for lo, hi in zip(lb, ub)]
        res = linprog(sgn * c, A_eq=A if lp.m else None, b_eq=b if lp.m else None,
                      bounds=bounds, method="highs")
        if res.status == 2:
            return LpSolution(INFEASIBLE)
        if res.status == 3:
            return LpSolution(UNBOUNDED)
        if res.status != 0:
            raise RuntimeError(f"HiGHS failed: {res.message}")
        x = {v.name: float(res.x[j]) for j, v in enumerate(lp.variables)}
        # HiGHS reports marginals of the minimisation it was handed
        y = np.asarray(res.eqlin.marginals) if lp.m else np.zeros(0)
        up = -np.asarray(res.upper.marginals)
        lo = np.asarray(res.lower.marginals)
        if lp.sense == "max":
            y = -y
        finite_ub = np.where(np.isfinite(ub), ub, 0.0)
        if lp.sense == "max":
            dual_obj = float(b @ y + finite_ub @ up - lb @ lo)
        else:
            dual_obj = float(b @ y + lb @ lo - finite_ub @ up)
        return LpSolution(
            OPTIMAL,
            objective=float(c @ res.x),
            x=x,
            duals={r.label: float(y[i]) for i, r in enumerate(lp.rows)},
            upper_duals={v.name: float(max(up[j], 0.0)) for j, v in enumerate(lp.variables)},
            lower_duals={v.name: float(max(lo[j], 0.0)) for j, v in enumerate(lp.variables)},
            dual_objective=dual_obj,
        )


def default_solver() -> RevisedSimplex:
    return RevisedSimplex()


def solve(lp: LinearProgram, solver: Solver | None = None) -> LpSolution:
    return (solver or default_solver()).solve(lp)


# certificates


def complementary_slackness_residual(lp: LinearProgram, sol: LpSolution) -> float:
    worst = 0.0
    for v in lp.variables:
        x = sol.x[v.name]
        if math.isfinite(v.upper):
            worst = max(worst, abs(sol.upper_duals.get(v.name, 0.0) * (v.upper - x)))
        else:
            worst = max(worst, abs(sol.upper_duals.get(v.name, 0.0)))
        worst = max(worst, abs(sol.lower_duals.get(v.name, 0.0) * (x - v.lower)))
    return worst


def stationarity_residual(lp: LinearProgram, sol: LpSolution) -> float:
    """Largest ``|c - A'y - lam_up + lam_lo|`` (max) or ``|c - A'y - lam_lo + lam_up|`` (min)."""
    A, _, c, _, _ = lp.arrays()
    y = np.array([sol.duals[r.label] for r in lp.rows]) if lp.m else np.zeros(0)
    up = np.array([sol.upper_duals[v.name] for v in lp.variables])
    lo = np.array([sol.lower_duals[v.name] for v in lp.variables])
    red = c - (A.T @ y if lp.m else 0.0)
    res = red - up + lo if lp.sense == "max" else red - lo + up
    return float(np.max(np.abs(res))) if lp.n else 0.0


def primal_residual(lp: LinearProgram, sol: LpSolution) -> float:
    A, b, _, lb, ub = lp.arrays()
    x = np.array([sol.x[v.name] for v in lp.variables])
    worst = float(np.max(np.abs(A @ x - b))) if lp.m else 0.0
    if lp.n:
        worst = max(worst, float(np.max(lb - x)), float(np.max(np.where(np.isfinite(ub), x - ub, 0.0))))
    return max(worst, 0.0)


# MPS export


def _mps_num(x: float) -> str:
    for digits in range(12, 0, -1):
        s = f"{x:.{digits}g}"
        if len(s) <= 12:
            return s
    return f"{x:.1e}"


def to_mps(lp: LinearProgram) -> str:
    """Fixed-layout MPS text with short generated names.

    Comment lines (``*``) map the generated names back to the original labels.
    """
    cols = [f"C{j + 1:07d}" for j in range(lp.n)]
    rows = [f"R{i + 1:07d}" for i in range(lp.m)]
    out: list[str] = [f"NAME          {lp.name[:8].upper() or 'LP'}"]
    for j, v in enumerate(lp.variables):
        out.append(f"* {cols[j]} = {v.name}")
    for i, r in enumerate(lp.rows):
        out.append(f"* {rows[i]} = {r.label!r}")
    out.append("OBJSENSE")
    out.append("    MAX" if lp.sense == "max" else "    MIN")
    out.append("ROWS")
    out.append(" N  OBJ")
    for name in rows:
        out.append(f" E  {name}")
    out.append("COLUMNS")
    entries: list[list[tuple[str, float]]] = [[] for _ in range(lp.n)]
    for j, v in enumerate(lp.variables):
        if v.cost != 0.0:
            entries[j].append(("OBJ", v.cost))
    for i, r in enumerate(lp.rows):
        for j, a in r.coeffs:
            entries[j].append((rows[i], a))
    for j in range(lp.n):
        for rname, a in entries[j]:
            out.append(f"    {cols[j]:<8}  {rname:<8}  {_mps_num(a):>12}")
    out.append("RHS")
    for i, r in enumerate(lp.rows):
        if r.rhs != 0.0:
            out.append(f"    {'RHS':<8}  {rows[i]:<8}  {_mps_num(r.rhs):>12}")
    out.append("BOUNDS")
    for j, v in enumerate(lp.variables):
        if v.lower == v.upper:
            out.append(f" FX {'BND':<8}  {cols[j]:<8}  {_mps_num(v.lower):>12}")
            continue
        if v.lower != 0.0:
            out.append(f" LO {'BND':<8}  {cols[j]:<8}  {_mps_num(v.lower):>12}")
        if math.isfinite(v.upper):
            out.append(f" UP {'BND':<8}  {cols[j]:<8}  {_mps_num(v.upper):>12}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"
