"""Aggregate result ranges from a cell decomposition.

Every missing-data instance allowed by a PC set corresponds to an integer
allocation ``X`` of rows to cells, subject to one cardinality window per PC.
SUM and COUNT ranges are integer programs over ``X``; AVG is a ratio
program solved by Dinkelbach iteration on integer programs; MIN and MAX
reduce to feasibility questions about which cells can be nonempty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

from .decomposition import Cell, DecompositionResult, decompose
from .optim import LinearProgram, MilpProgram, Status, solve_milp
from .pcs import PCSet, check_closure
from .predicates import (
    Predicate,
    conjoin,
    escape,
    intersect_box,
    mask,
    neg_box,
    to_box,
)
from .query import QuerySpec
from .schema import Relation, Schema, SchemaError


class BoundStatus(str, Enum):
    EXACT = "EXACT"
    EARLY_STOP_LOOSE = "EARLY_STOP_LOOSE"
    NOT_CLOSED = "NOT_CLOSED"
    INFEASIBLE_CONSTRAINTS = "INFEASIBLE_CONSTRAINTS"
    NO_ROWS = "NO_ROWS"


class InfeasibleConstraints(Exception):
    """The PC cardinality windows admit no allocation."""


class NotDisjoint(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    pc_id: str
    kl: int
    ku: int
    definite: tuple[int, ...]
    possible: tuple[int, ...] = ()


@dataclass
class BoundProblem:
    cells: list[Cell]
    upper: np.ndarray  # per-cell supremum of the aggregated value
    lower: np.ndarray  # per-cell infimum
    windows: list[Window]
    forced_zero: np.ndarray
    in_query: np.ndarray
    early_stopped: bool = False

    @property
    def keys(self) -> list[str]:
        return [_cell_key(c) for c in self.cells]


@dataclass
class ResultRange:
    lower: float | None
    upper: float | None
    status: BoundStatus
    witness_upper: dict[str, int] = field(default_factory=dict)
    witness_lower: dict[str, int] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    counterexample: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.status in (BoundStatus.EXACT, BoundStatus.EARLY_STOP_LOOSE)

    def contains(self, value: float, tol: float = 0.0) -> bool:
        if self.lower is None or self.upper is None:
            return False
        slack = tol * max(1.0, abs(value))
        return self.lower - slack <= value <= self.upper + slack

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "lower": self.lower,
            "upper": self.upper,
            "status": self.status.value,
            "witness": {"upper": self.witness_upper, "lower": self.witness_lower},
            "diagnostics": self.diagnostics,
        }
        if self.counterexample is not None:
            out["counterexample"] = list(self.counterexample)
        return out


def _cell_key(cell: Cell) -> str:
    return cell.label if cell.in_query else cell.label + "/out"


# ---------------------------------------------------------------------------
# problem construction


def build_problem(decomposition: DecompositionResult, pcset: PCSet, agg_attr: str | None) -> BoundProblem:
    """Objective coefficients and windows for ``agg_attr`` (None means COUNT)."""
    schema = pcset.schema
    if agg_attr is not None and not schema[agg_attr].is_numeric:
        raise SchemaError(f"aggregate attribute {agg_attr!r} must be numeric")
    cells = decomposition.cells
    m = len(cells)
    upper = np.zeros(m)
    lower = np.zeros(m)
    forced = np.zeros(m, dtype=bool)
    in_q = np.array([c.in_query for c in cells], dtype=bool)
    for i, c in enumerate(cells):
        if c.forced_zero:
            forced[i] = True
            continue
        if not c.in_query:
            continue
        if agg_attr is None:
            upper[i] = lower[i] = 1.0
        else:
            lo, hi = c.value_range(schema, agg_attr)
            lower[i], upper[i] = lo, hi
    definite: dict[str, list[int]] = {pc.id: [] for pc in pcset}
    possible: dict[str, list[int]] = {pc.id: [] for pc in pcset}
    for i, c in enumerate(cells):
        for cid in c.covering:
            definite[cid].append(i)
        for cid in c.possible:
            possible[cid].append(i)
    windows = [
        Window(pc.id, pc.kappa.kl, pc.kappa.ku, tuple(definite[pc.id]), tuple(possible[pc.id]))
        for pc in pcset
    ]
    return BoundProblem(cells, upper, lower, windows, forced, in_q, decomposition.stats.early_stopped)


@dataclass
class _Model:
    active: list[int]
    A: np.ndarray
    relations: list[str]
    rhs: np.ndarray
    hi: np.ndarray


def _model(problem: BoundProblem) -> _Model:
    m = len(problem.cells)
    active = [i for i in range(m) if not problem.forced_zero[i]]
    col = {i: k for k, i in enumerate(active)}
    rows: list[np.ndarray] = []
    rel: list[str] = []
    rhs: list[float] = []
    hi = np.full(len(active), math.inf)
    capped = np.zeros(len(active), dtype=bool)
    loose_cap = np.zeros(len(active))
    for w in problem.windows:
        every = [col[i] for i in w.definite + w.possible if i in col]
        sure = [col[i] for i in w.definite if i in col]
        if w.kl > 0:
            if not every:
                raise InfeasibleConstraints(f"{w.pc_id} needs at least {w.kl} rows but no cell can hold one")
            r = np.zeros(len(active))
            r[every] = 1.0
            rows.append(r)
            rel.append(">=")
            rhs.append(w.kl)
        if sure:
            r = np.zeros(len(active))
            r[sure] = 1.0
            rows.append(r)
            rel.append("<=")
            rhs.append(w.ku)
            for k in sure:
                hi[k] = min(hi[k], w.ku)
                capped[k] = True
        for i in w.possible:
            if i in col:
                loose_cap[col[i]] += w.ku
    # a row in a coarse cell lies in at least one of its undetermined PCs
    hi = np.where(capped, hi, loose_cap)
    A = np.array(rows) if rows else np.zeros((0, len(active)))
    return _Model(active, A, rel, np.array(rhs, dtype=float), hi)


def _solve(problem: BoundProblem, model: _Model, coef: np.ndarray, sense: str, *,
           zero: Sequence[int] = (), at_least_one: int | None = None, min_rows: bool = False,
           extra_const: float = 0.0) -> tuple[float, np.ndarray, int] | None:
    """Optimise ``coef . X`` (cell-indexed); None when infeasible.

    ``zero`` pins cells to 0, ``at_least_one`` forces one cell to hold a row
    and ``min_rows`` requires at least one in-query row.
    """
    n = len(model.active)
    if n == 0:
        if any(w.kl > 0 for w in problem.windows) or at_least_one is not None or min_rows:
            return None
        return extra_const, np.zeros(len(problem.cells)), 0
    c = coef[model.active].astype(float)
    lo = np.zeros(n)
    hi = model.hi.copy()
    pos = {i: k for k, i in enumerate(model.active)}
    for i in zero:
        if i in pos:
            hi[pos[i]] = 0.0
    if at_least_one is not None:
        if at_least_one not in pos:
            return None
        lo[pos[at_least_one]] = 1.0
    A, rel, rhs = model.A, list(model.relations), model.rhs
    if min_rows:
        r = np.array([1.0 if problem.in_query[i] else 0.0 for i in model.active])
        if not r.any():
            return None
        A = np.vstack([A, r]) if A.size else r.reshape(1, -1)
        rel = rel + [">="]
        rhs = np.append(rhs, 1.0)
    lp = LinearProgram(c, sense, A, rel, rhs, lo, hi)
    out = solve_milp(MilpProgram(lp, np.ones(n, dtype=bool)))
    if out.status is Status.INFEASIBLE:
        return None
    if out.status is Status.UNBOUNDED:  # pragma: no cover - windows bound every variable
        raise RuntimeError("allocation program is unbounded")
    x = np.zeros(len(problem.cells))
    x[model.active] = np.round(out.x)
    return float(coef @ x) + extra_const, x, out.nodes


def _alloc(problem: BoundProblem, x: np.ndarray) -> dict[str, int]:
    return {key: int(v) for key, v, fz in zip(problem.keys, x, problem.forced_zero) if not fz}


def check_feasible(problem: BoundProblem) -> np.ndarray:
    """An allocation satisfying every window; raises InfeasibleConstraints."""
    model = _model(problem)
    res = _solve(problem, model, np.zeros(len(problem.cells)), "max")
    if res is None:
        raise InfeasibleConstraints("the cardinality windows are mutually unsatisfiable")
    return res[1]


def _objective(problem: BoundProblem, values: np.ndarray) -> np.ndarray:
    return np.where(problem.in_query & ~problem.forced_zero, values, 0.0)


def max_sum(problem: BoundProblem) -> tuple[float, dict[str, int]]:
    model = _model(problem)
    res = _solve(problem, model, _objective(problem, problem.upper), "max")
    if res is None:
        raise InfeasibleConstraints("the cardinality windows are mutually unsatisfiable")
    return res[0], _alloc(problem, res[1])


def min_sum(problem: BoundProblem) -> tuple[float, dict[str, int]]:
    model = _model(problem)
    vals = _objective(problem, problem.lower)
    if all(w.kl == 0 for w in problem.windows) and np.all(vals >= 0):
        return 0.0, {key: 0 for key, fz in zip(problem.keys, problem.forced_zero) if not fz}
    res = _solve(problem, model, vals, "min")
    if res is None:
        raise InfeasibleConstraints("the cardinality windows are mutually unsatisfiable")
    return res[0], _alloc(problem, res[1])


def _status(problem: BoundProblem) -> BoundStatus:
    return BoundStatus.EARLY_STOP_LOOSE if problem.early_stopped else BoundStatus.EXACT


def bound_sum(problem: BoundProblem, existing_sum: float = 0.0) -> ResultRange:
    try:
        hi, wu = max_sum(problem)
        lo, wl = min_sum(problem)
    except InfeasibleConstraints as e:
        return ResultRange(None, None, BoundStatus.INFEASIBLE_CONSTRAINTS, diagnostics={"reason": str(e)})
    return ResultRange(lo + existing_sum, hi + existing_sum, _status(problem), wu, wl)


def bound_count(problem: BoundProblem, existing_count: int = 0) -> ResultRange:
    """COUNT range; ``problem`` must have unit objective (``agg_attr=None``)."""
    ones = np.where(problem.in_query, 1.0, 0.0)
    unit = BoundProblem(problem.cells, ones, ones, problem.windows, problem.forced_zero,
                        problem.in_query, problem.early_stopped)
    return bound_sum(unit, float(existing_count))


# ---------------------------------------------------------------------------
# AVG


def _max_ratio(problem: BoundProblem, values: np.ndarray, s0: float, n0: int,
               method: str = "dinkelbach", tol: float | None = None
               ) -> tuple[float, np.ndarray] | None:
    """Maximise (s0 + sum v_i X_i) / (n0 + sum X_i) over in-query cells.

    Returns None when no feasible allocation has a matching row.
    """
    model = _model(problem)
    live = problem.in_query & ~problem.forced_zero
    vals = np.where(live, values, 0.0)
    cnt = live.astype(float)
    need_row = n0 == 0

    def ratio(x: np.ndarray) -> float:
        return (s0 + float(vals @ x)) / (n0 + float(cnt @ x))

    def probe(r: float):
        return _solve(problem, model, vals - r * cnt, "max", min_rows=need_row, extra_const=s0 - r * n0)

    start = _solve(problem, model, cnt, "max", min_rows=need_row)
    if start is None or (need_row and float(cnt @ start[1]) == 0):
        return None
    x = start[1]
    r = ratio(x)
    if method == "bisection":
        span = [float(np.min(vals[live], initial=math.inf)), float(np.max(vals[live], initial=-math.inf))]
        if n0:
            span = [min(span[0], s0 / n0), max(span[1], s0 / n0)]
        lo_r, hi_r = min(r, span[0]), max(r, span[1])
        width = hi_r - lo_r
        eps = (tol if tol is not None else 1e-6) * max(width, 1e-12)
        for _ in range(64):
            if hi_r - lo_r <= eps:
                break
            mid = 0.5 * (lo_r + hi_r)
            res = probe(mid)
            if res is not None and res[0] >= 0:
                lo_r = mid
                if ratio(res[1]) >= r:
                    x, r = res[1], ratio(res[1])
            else:
                hi_r = mid
    # Dinkelbach: each step strictly improves r until the linearised optimum is 0
    for _ in range(200):
        res = probe(r)
        if res is None:  # pragma: no cover - x itself is feasible
            break
        val, xn, _ = res
        scale = max(1.0, abs(s0) + float(np.abs(vals) @ xn) + abs(r) * (n0 + float(cnt @ xn)))
        if val <= 1e-12 * scale:
            break
        rn = ratio(xn)
        if rn <= r:
            break
        x, r = xn, rn
    return r, x


def bound_avg(problem: BoundProblem, existing_sum: float = 0.0, existing_count: int = 0,
              method: str = "dinkelbach", tol: float | None = None) -> ResultRange:
    try:
        check_feasible(problem)
    except InfeasibleConstraints as e:
        return ResultRange(None, None, BoundStatus.INFEASIBLE_CONSTRAINTS, diagnostics={"reason": str(e)})
    up = _max_ratio(problem, problem.upper, existing_sum, existing_count, method, tol)
    if up is None:
        return ResultRange(None, None, BoundStatus.NO_ROWS,
                           diagnostics={"reason": "no feasible instance has a matching row"})
    down = _max_ratio(problem, -problem.lower, -existing_sum, existing_count, method, tol)
    assert down is not None
    return ResultRange(-down[0], up[0], _status(problem), _alloc(problem, up[1]), _alloc(problem, down[1]))


# ---------------------------------------------------------------------------
# MIN / MAX


def _max_range(problem: BoundProblem, lows: np.ndarray, highs: np.ndarray, existing: float | None
               ) -> tuple[float, float, dict, dict, bool] | None:
    """(lower, upper, witness_lower, witness_upper, may_be_empty) of MAX; None if no row is possible."""
    model = _model(problem)
    zeros = np.zeros(len(problem.cells))
    live = [i for i in range(len(problem.cells)) if problem.in_query[i] and not problem.forced_zero[i]]

    # upper: the largest cell value that some feasible instance actually uses
    upper, wu = existing, None
    for i in sorted(live, key=lambda i: (-highs[i], i)):
        if upper is not None and highs[i] <= upper:
            break
        res = _solve(problem, model, zeros, "max", at_least_one=i)
        if res is not None:
            upper, wu = float(highs[i]), res[1]
            break
    if upper is None:
        return None
    if wu is None:
        wu = check_feasible(problem)

    empty_ok = _solve(problem, model, zeros, "max", zero=live)
    may_be_empty = empty_ok is not None

    # lower: smallest threshold t such that rows only in cells with low value <= t suffice
    if existing is not None and empty_ok is not None:
        lower, wl = existing, empty_ok[1]
    else:
        cands = sorted({float(lows[i]) for i in live} | ({existing} if existing is not None else set()))
        lower, wl = None, None
        lo_k, hi_k = 0, len(cands) - 1
        while lo_k <= hi_k:
            mid = (lo_k + hi_k) // 2
            t = cands[mid]
            if existing is not None and t < existing:
                lo_k = mid + 1
                continue
            blocked = [i for i in live if lows[i] > t]
            res = _solve(problem, model, zeros, "max", zero=blocked, min_rows=existing is None)
            if res is not None:
                lower, wl = t, res[1]
                hi_k = mid - 1
            else:
                lo_k = mid + 1
        if lower is None:  # pragma: no cover - the upper search found a usable cell
            return None
    return lower, upper, _alloc(problem, wl), _alloc(problem, wu), may_be_empty


def bound_min_max(problem: BoundProblem, kind: str, existing: float | None = None) -> ResultRange:
    kind = kind.upper()
    try:
        check_feasible(problem)
    except InfeasibleConstraints as e:
        return ResultRange(None, None, BoundStatus.INFEASIBLE_CONSTRAINTS, diagnostics={"reason": str(e)})
    if kind == "MAX":
        res = _max_range(problem, problem.lower, problem.upper, existing)
        if res is None:
            return ResultRange(None, None, BoundStatus.NO_ROWS,
                               diagnostics={"reason": "no feasible instance has a matching row"})
        lo, hi, wl, wu, empty = res
    elif kind == "MIN":
        res = _max_range(problem, -problem.upper, -problem.lower, None if existing is None else -existing)
        if res is None:
            return ResultRange(None, None, BoundStatus.NO_ROWS,
                               diagnostics={"reason": "no feasible instance has a matching row"})
        nlo, nhi, nwl, nwu, empty = res
        lo, hi, wl, wu = -nhi, -nlo, nwu, nwl
    else:
        raise ValueError(f"bound_min_max handles MIN or MAX, not {kind}")
    return ResultRange(lo, hi, _status(problem), wu, wl, diagnostics={"may_be_empty": empty})


# ---------------------------------------------------------------------------
# disjoint fast path


def greedy_disjoint(pcset: PCSet, query: Predicate | None, agg: str, target: str | None = None,
                    check: bool = True) -> ResultRange:
    """SUM or COUNT range for pairwise-disjoint PCs, one PC at a time.

    Each PC independently contributes a count range (all rows inside the
    query, or anywhere from none to ``ku`` when rows may sit outside it) and
    a value range; the totals add up because disjoint PCs share no rows.
    """
    agg = agg.upper()
    if agg not in ("SUM", "COUNT"):
        raise ValueError("the disjoint fast path handles SUM and COUNT")
    if check and not pcset.pairwise_disjoint:
        raise NotDisjoint("PC predicates are not pairwise disjoint")
    schema = pcset.schema
    ai = None if agg == "COUNT" else schema.position(target)
    q = None if query is None or query.is_true else query
    qneg = [neg_box(q, schema)] if q is not None and not q.empty else []
    lo_total = hi_total = 0.0
    wu: dict[str, int] = {}
    wl: dict[str, int] = {}
    for pc in pcset:
        box = to_box(pc.psi, schema)
        if box is not None and pc.nu.ranges:
            box = intersect_box(box, pc.nu.as_predicate(), schema)
        if box is None:
            if pc.kappa.kl > 0:
                return ResultRange(None, None, BoundStatus.INFEASIBLE_CONSTRAINTS,
                                   diagnostics={"reason": f"{pc.id} needs rows but admits none"})
            continue
        if q is None:
            inside, outside_ok = box, False
        elif q.empty:
            inside, outside_ok = None, True
        else:
            inside = intersect_box(box, q, schema)
            outside_ok = escape(box, qneg) is not None
        if inside is None:
            continue
        a = 0 if outside_ok else pc.kappa.kl
        b = pc.kappa.ku
        if ai is None:
            l = h = 1.0
        else:
            l, h = inside[ai].lo, inside[ai].hi
        hi_c = b if h >= 0 else a
        lo_c = a if l >= 0 else b
        hi_total += hi_c * h
        lo_total += lo_c * l
        if hi_c:
            wu[pc.id] = hi_c
        if lo_c:
            wl[pc.id] = lo_c
    return ResultRange(lo_total, hi_total, BoundStatus.EXACT, wu, wl, {"path": "greedy"})


# ---------------------------------------------------------------------------
# full pipeline


def _existing_stats(existing: Relation | None, pred: Predicate, target: str) -> tuple[int, float, float | None, float | None]:
    if existing is None or len(existing) == 0 or pred.empty:
        return 0, 0.0, None, None
    m = mask(pred, existing.columns, len(existing))
    n = int(m.sum())
    if target == "*" or n == 0:
        return n, float(n), None, None
    v = existing.columns[target][m]
    return n, float(v.sum()), float(v.min()), float(v.max())


def _degenerate(spec: QuerySpec, n0: int, s0: float, mn: float | None, mx: float | None) -> ResultRange:
    agg = spec.aggregate
    diag = {"path": "existing-only"}
    if agg == "COUNT":
        return ResultRange(float(n0), float(n0), BoundStatus.EXACT, diagnostics=diag)
    if agg == "SUM":
        return ResultRange(s0, s0, BoundStatus.EXACT, diagnostics=diag)
    if n0 == 0:
        return ResultRange(None, None, BoundStatus.NO_ROWS, diagnostics=diag)
    v = {"AVG": s0 / n0, "MIN": mn, "MAX": mx}[agg]
    return ResultRange(v, v, BoundStatus.EXACT, diagnostics=diag)


def bound_query(spec: QuerySpec, pcset: PCSet, existing: Relation | None = None, *,
                early_stop_depth: int | None = None, parallelism: int = 1, order: str = "input",
                greedy: bool = True, avg_method: str = "dinkelbach"):
    """Result range of ``spec`` over every instance allowed by ``pcset``.

    Returns a :class:`ResultRange`, or a dict keyed by group value when the
    query has a GROUP BY.
    """
    schema = pcset.schema
    if spec.group_by is not None:
        dom = schema[spec.group_by]
        if dom.is_numeric:
            raise SchemaError(f"GROUP BY attribute {spec.group_by!r} must be categorical")
        out = {}
        for v in dom.values:
            sub = QuerySpec(spec.aggregate, spec.target, spec.relations,
                            conjoin(spec.predicate, Predicate({spec.group_by: frozenset([v])})), None)
            out[v] = bound_query(sub, pcset, existing, early_stop_depth=early_stop_depth,
                                 parallelism=parallelism, order=order, greedy=greedy, avg_method=avg_method)
        return out

    agg = spec.aggregate
    target = spec.target
    if agg != "COUNT" and target == "*":
        raise SchemaError(f"{agg} needs a target attribute")
    if target != "*" and not schema[target].is_numeric:
        raise SchemaError(f"aggregate attribute {target!r} must be numeric")
    pred = spec.predicate
    n0, s0, mn, mx = _existing_stats(existing, pred, target)
    if pred.empty:
        return _degenerate(spec, n0, s0, mn, mx)

    region = None if pred.is_true else pred
    if pcset.domain_closure is not None:
        witness = check_closure(pcset, region)
        if witness is not None:
            return ResultRange(None, None, BoundStatus.NOT_CLOSED, counterexample=witness,
                               diagnostics={"reason": "query region holds tuples covered by no PC"})

    if greedy and agg in ("SUM", "COUNT") and early_stop_depth is None and pcset.pairwise_disjoint:
        res = greedy_disjoint(pcset, region, agg, None if target == "*" else target, check=False)
        if res.ok:
            add = float(n0) if agg == "COUNT" else s0
            res.lower += add
            res.upper += add
        return res

    dec = decompose(pcset, region, early_stop_depth=early_stop_depth, parallelism=parallelism, order=order)
    problem = build_problem(dec, pcset, None if target == "*" else target)
    if agg == "SUM":
        res = bound_sum(problem, s0)
    elif agg == "COUNT":
        res = bound_count(problem, n0)
    elif agg == "AVG":
        res = bound_avg(problem, s0, n0, avg_method)
    else:
        res = bound_min_max(problem, agg, mx if agg == "MAX" else mn)
    res.diagnostics.update({"path": "milp", "cells": len(dec.cells), "decomposition": dec.stats.to_json()})
    return res
