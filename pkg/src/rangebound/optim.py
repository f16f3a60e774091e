"""Dense two-phase simplex (Bland's rule) and depth-first branch-and-bound.

Problem sizes in this package are a few hundred variables at most, so the
solver favours determinism and simplicity over speed: no presolve, no warm
starts, a fresh tableau per branch-and-bound node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
INT_TOL = 1e-6
MAX_PIVOTS = 200_000
MAX_NODES = 500_000


class Status(str, Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    UNBOUNDED = "UNBOUNDED"


@dataclass
class LinearProgram:
    """``sense c.x`` subject to ``A x (<=|>=|=) rhs`` and ``lo <= x <= hi``."""

    objective: np.ndarray
    sense: str = "max"
    A: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    relations: list[str] = field(default_factory=list)
    rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = self.objective.size
        A = np.asarray(self.A, dtype=float)
        self.A = A.reshape(-1, n) if A.size else np.zeros((0, n))
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.relations = list(self.relations)
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).copy()
        self.hi = np.full(n, math.inf) if self.hi is None else np.asarray(self.hi, dtype=float).copy()
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        if self.A.shape[0] != len(self.relations) or self.A.shape[0] != self.rhs.size:
            raise ValueError("constraint rows, relations and rhs disagree in length")
        if any(r not in ("<=", ">=", "=") for r in self.relations):
            raise ValueError("relations must be '<=', '>=' or '='")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.objective))
                and np.all(np.isfinite(self.rhs))):
            raise ValueError("coefficients must be finite")

    @property
    def n(self) -> int:
        return self.objective.size

    def value(self, x: np.ndarray) -> float:
        return float(self.objective @ x)

    def with_bounds(self, lo: np.ndarray, hi: np.ndarray) -> LinearProgram:
        return LinearProgram(self.objective, self.sense, self.A, self.relations, self.rhs, lo, hi)

    def is_feasible(self, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lo - tol) or np.any(x > self.hi + tol):
            return False
        lhs = self.A @ x
        for v, rel, b in zip(lhs, self.relations, self.rhs):
            slack = tol * max(1.0, abs(b))
            if rel == "<=" and v > b + slack:
                return False
            if rel == ">=" and v < b - slack:
                return False
            if rel == "=" and abs(v - b) > slack:
                return False
        return True


@dataclass
class MilpProgram:
    lp: LinearProgram
    integer: np.ndarray

    def __post_init__(self) -> None:
        self.integer = np.asarray(self.integer, dtype=bool).reshape(-1)
        if self.integer.size != self.lp.n:
            raise ValueError("integrality mask length must match the variable count")


@dataclass
class SolveOutcome:
    status: Status
    objective: float = math.nan
    x: np.ndarray | None = None
    nodes: int = 0
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _pivot(T: np.ndarray, r: int, s: int) -> None:
    T[r] /= T[r, s]
    col = T[:, s].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run_simplex(T: np.ndarray, basis: list[int], allowed: int) -> tuple[str, int]:
    """Maximise in place.  The last row holds reduced costs and ``-z``."""
    m = T.shape[0] - 1
    pivots = 0
    while True:
        cand = np.nonzero(T[m, :allowed] > PIVOT_TOL)[0]
        if cand.size == 0:
            return "optimal", pivots
        s = int(cand[0])
        col = T[:m, s]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded", pivots
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, r, s)
        basis[r] = s
        pivots += 1
        if pivots > MAX_PIVOTS:  # pragma: no cover
            raise RuntimeError("simplex pivot limit exceeded")


def _price_out(T: np.ndarray, basis: list[int], costs: np.ndarray) -> None:
    m = T.shape[0] - 1
    T[m, :] = 0.0
    T[m, : costs.size] = costs
    for i in range(m):
        cb = T[m, basis[i]]
        if cb != 0.0:
            T[m] -= cb * T[i]


def solve_lp(lp: LinearProgram) -> SolveOutcome:
    n = lp.n
    sign = 1.0 if lp.sense == "max" else -1.0
    c = sign * lp.objective

    # each variable becomes nonnegative columns: x = lo + y, x = hi - y, or y+ - y-
    cols: list[tuple[int, float]] = []
    shift = np.zeros(n)
    caps: list[tuple[int, float]] = []
    for j in range(n):
        lo, hi = lp.lo[j], lp.hi[j]
        if lo > hi + FEAS_TOL:
            return SolveOutcome(Status.INFEASIBLE)
        if math.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if math.isfinite(hi):
                caps.append((len(cols) - 1, max(hi - lo, 0.0)))
        elif math.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    m0 = lp.A.shape[0]
    m = m0 + len(caps)
    M = np.zeros((m, ny))
    b = np.zeros(m)
    rel = list(lp.relations) + ["<="] * len(caps)
    if m0:
        for k, (j, s) in enumerate(cols):
            M[:m0, k] = s * lp.A[:, j]
        b[:m0] = lp.rhs - lp.A @ shift
    for t, (k, ub) in enumerate(caps):
        M[m0 + t, k] = 1.0
        b[m0 + t] = ub
    cy = np.array([s * c[j] for j, s in cols])

    flip = {"<=": ">=", ">=": "<=", "=": "="}
    for i in range(m):
        if b[i] < 0:
            M[i] *= -1
            b[i] *= -1
            rel[i] = flip[rel[i]]
    n_slack = sum(r != "=" for r in rel)
    n_art = sum(r != "<=" for r in rel)
    width = ny + n_slack
    N = width + n_art
    T = np.zeros((m + 1, N + 1))
    T[:m, :ny] = M
    T[:m, -1] = b
    basis = [0] * m
    si, ai = ny, width
    for i, r in enumerate(rel):
        if r != "=":
            T[i, si] = 1.0 if r == "<=" else -1.0
            if r == "<=":
                basis[i] = si
            si += 1
        if r != "<=":
            T[i, ai] = 1.0
            basis[i] = ai
            ai += 1

    pivots = 0
    if n_art:
        phase1 = np.zeros(N)
        phase1[width:] = -1.0
        _price_out(T, basis, phase1)
        _, p = _run_simplex(T, basis, N)
        pivots += p
        if T[m, -1] > FEAS_TOL * max(1.0, float(b.max(initial=0.0))):
            return SolveOutcome(Status.INFEASIBLE, pivots=pivots)
        keep = []
        for i in range(m):
            if basis[i] >= width:
                nz = np.nonzero(np.abs(T[i, :width]) > PIVOT_TOL)[0]
                if nz.size == 0:
                    continue  # redundant row
                _pivot(T, i, int(nz[0]))
                basis[i] = int(nz[0])
                pivots += 1
            keep.append(i)
        T2 = np.zeros((len(keep) + 1, width + 1))
        T2[:-1, :width] = T[keep, :width]
        T2[:-1, -1] = T[keep, -1]
        T = T2
        basis = [basis[i] for i in keep]
    _price_out(T, basis, cy)
    status, p = _run_simplex(T, basis, width)
    pivots += p
    if status == "unbounded":
        return SolveOutcome(Status.UNBOUNDED, pivots=pivots)
    y = np.zeros(ny)
    for i, bi in enumerate(basis):
        if bi < ny:
            y[bi] = T[i, -1]
    x = shift.copy()
    for k, (j, s) in enumerate(cols):
        x[j] += s * y[k]
    return SolveOutcome(Status.OPTIMAL, lp.value(x), x, pivots=pivots)


def solve_milp(mp: MilpProgram, node_limit: int = MAX_NODES) -> SolveOutcome:
    """Depth-first branch-and-bound, branching on the most fractional variable."""
    lp = mp.lp
    sign = 1.0 if lp.sense == "max" else -1.0
    ints = np.nonzero(mp.integer)[0]
    lo0 = lp.lo.copy()
    hi0 = lp.hi.copy()
    lo0[ints] = np.ceil(lo0[ints] - INT_TOL)
    hi0[ints] = np.floor(hi0[ints] + INT_TOL)
    stack = [(lo0, hi0)]
    best = -math.inf
    incumbent: np.ndarray | None = None
    nodes = 0
    pivots = 0
    while stack:
        lo, hi = stack.pop()
        nodes += 1
        if nodes > node_limit:
            raise RuntimeError(f"branch-and-bound exceeded {node_limit} nodes")
        out = solve_lp(lp.with_bounds(lo, hi))
        pivots += out.pivots
        if out.status is Status.INFEASIBLE:
            continue
        if out.status is Status.UNBOUNDED:
            return SolveOutcome(Status.UNBOUNDED, nodes=nodes, pivots=pivots)
        val = sign * out.objective
        if incumbent is not None and val <= best + 1e-9 * max(1.0, abs(best)):
            continue
        x = out.x
        frac = np.abs(x[ints] - np.round(x[ints]))
        if ints.size == 0 or frac.max() <= INT_TOL:
            xr = x.copy()
            xr[ints] = np.round(xr[ints])
            v = sign * lp.value(xr)
            if incumbent is None or v > best:
                best, incumbent = v, xr
            continue
        j = int(ints[int(np.argmax(frac))])
        down_hi = hi.copy()
        down_hi[j] = math.floor(x[j])
        up_lo = lo.copy()
        up_lo[j] = math.ceil(x[j])
        stack.append((lo, down_hi))
        stack.append((up_lo, hi))
    if incumbent is None:
        return SolveOutcome(Status.INFEASIBLE, nodes=nodes, pivots=pivots)
    return SolveOutcome(Status.OPTIMAL, lp.value(incumbent), incumbent, nodes=nodes, pivots=pivots)


def solve(lp: LinearProgram, integer: np.ndarray | None = None) -> SolveOutcome:
    if integer is None or not np.any(integer):
        return solve_lp(lp)
    return solve_milp(MilpProgram(lp, integer))
