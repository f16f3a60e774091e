"""Brute-force reference implementations used by the test-suite.

None of these call the package's decomposition, satisfiability or optimisation
code.  They work on representative points of the elementary grid regions and
enumerate row counts directly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


def in_atom(atom, v) -> bool:
    """Membership written out from the interval fields, independent of Interval.__contains__."""
    if isinstance(atom, (set, frozenset)):
        return v in atom
    if v < atom.lo or v > atom.hi:
        return False
    if v == atom.lo and atom.lo_open:
        return False
    if v == atom.hi and atom.hi_open:
        return False
    return True


def in_pred(pred, point: dict) -> bool:
    if pred.empty:
        return False
    return all(in_atom(a, point[k]) for k, a in pred.atoms.items())


def axis_points(lo: float, hi: float, cuts) -> list[float]:
    """Every cut inside [lo, hi] plus the midpoint of each gap: one point per elementary piece."""
    pts = sorted({lo, hi} | {c for c in cuts if lo <= c <= hi})
    out = list(pts)
    out += [(a + b) / 2 for a, b in zip(pts, pts[1:])]
    return sorted(out)


def grid_representatives(schema, preds, attrs) -> list[dict]:
    axes = []
    for a in attrs:
        dom = schema[a]
        if dom.is_numeric:
            cuts = set()
            for p in preds:
                if a in p.atoms:
                    cuts |= {p.atoms[a].lo, p.atoms[a].hi}
            axes.append(axis_points(dom.lo, dom.hi, cuts))
        else:
            axes.append(sorted(dom.values))
    return [dict(zip(attrs, combo)) for combo in itertools.product(*axes)]


@dataclass
class PointClass:
    covering: frozenset
    in_query: bool
    vlo: float
    vhi: float
    cap: int


@dataclass
class Oracle:
    status: str  # "ok" | "NOT_CLOSED" | "INFEASIBLE"
    ranges: dict


def _classes(pcset, query_pred, agg_attr, attrs):
    schema = pcset.schema
    preds = [pc.psi for pc in pcset] + [query_pred]
    pts = grid_representatives(schema, preds, attrs)
    classes: dict[tuple, PointClass] = {}
    uncovered_in_query = False
    for p in pts:
        cov = frozenset(i for i, pc in enumerate(pcset) if in_pred(pc.psi, p))
        inq = in_pred(query_pred, p)
        if not cov:
            uncovered_in_query |= inq
            continue
        key = (cov, inq)
        if key in classes:
            continue
        if agg_attr is None:
            vlo = vhi = 0.0
        else:
            dom = schema[agg_attr]
            vlo, vhi = dom.lo, dom.hi
            for i in cov:
                r = pcset[i].nu.ranges.get(agg_attr)
                if r is not None:
                    vlo, vhi = max(vlo, r[0]), min(vhi, r[1])
        ok = vlo <= vhi
        cap = min(pcset[i].kappa.ku for i in cov) if ok else 0
        classes[key] = PointClass(cov, inq, vlo, vhi, cap)
    return list(classes.values()), uncovered_in_query


def count_vectors(pcset, classes):
    """All feasible per-class row counts."""
    n = len(pcset)
    kl = [pc.kappa.kl for pc in pcset]
    ku = [pc.kappa.ku for pc in pcset]
    order = sorted(range(len(classes)), key=lambda c: -len(classes[c].covering))
    # for the kl prune: how much capacity each PC still has in later classes
    reach = [[0] * n for _ in range(len(order) + 1)]
    for pos in range(len(order) - 1, -1, -1):
        c = classes[order[pos]]
        reach[pos] = list(reach[pos + 1])
        for i in c.covering:
            reach[pos][i] += c.cap
    used = [0] * n
    counts = [0] * len(classes)

    def rec(pos):
        if any(used[i] + reach[pos][i] < kl[i] for i in range(n)):
            return
        if pos == len(order):
            yield tuple(counts)
            return
        c = classes[order[pos]]
        room = min([c.cap] + [ku[i] - used[i] for i in c.covering])
        for k in range(room + 1):
            counts[order[pos]] = k
            for i in c.covering:
                used[i] += k
            yield from rec(pos + 1)
            for i in c.covering:
                used[i] -= k
        counts[order[pos]] = 0

    yield from rec(0)


def brute_force_ranges(pcset, query_pred, agg_attr: str, attrs) -> Oracle:
    """Exact SUM/COUNT/AVG/MIN/MAX ranges by enumerating every feasible allocation.

    Value ranges may constrain only ``agg_attr``, which must not appear in any predicate.
    """
    classes, uncovered = _classes(pcset, query_pred, agg_attr, attrs)
    if uncovered:
        return Oracle("NOT_CLOSED", {})
    inq = [k for k, c in enumerate(classes) if c.in_query]
    lo = np.array([classes[k].vlo for k in inq])
    hi = np.array([classes[k].vhi for k in inq])
    best = {"SUM": [math.inf, -math.inf], "COUNT": [math.inf, -math.inf], "AVG": [math.inf, -math.inf],
            "MIN": [math.inf, -math.inf], "MAX": [math.inf, -math.inf]}
    feasible = False
    seen = set()
    for vec in count_vectors(pcset, classes):
        feasible = True
        sub = tuple(vec[k] for k in inq)
        if sub in seen:
            continue
        seen.add(sub)
        n = np.array(sub, dtype=float)
        total = n.sum()
        _upd(best["COUNT"], total, total)
        _upd(best["SUM"], float(n @ lo), float(n @ hi))
        if total > 0:
            used = n > 0
            _upd(best["AVG"], float(n @ lo) / total, float(n @ hi) / total)
            _upd(best["MAX"], float(lo[used].max()), float(hi[used].max()))
            _upd(best["MIN"], float(lo[used].min()), float(hi[used].min()))
    if not feasible:
        return Oracle("INFEASIBLE", {})
    ranges = {k: (None if math.isinf(v[0]) else tuple(v)) for k, v in best.items()}
    return Oracle("ok", ranges)


def _upd(slot, lo, hi):
    slot[0] = min(slot[0], lo)
    slot[1] = max(slot[1], hi)


# ---------------------------------------------------------------------------
# optimisation oracles


def lp_by_vertices(c, A_ub, b_ub, bounds, sense="max"):
    """Optimum of a tiny LP by enumerating basic solutions (intersections of n tight constraints)."""
    n = len(c)
    rows = [np.asarray(r, float) for r in A_ub]
    rhs = list(b_ub)
    for j, (l, h) in enumerate(bounds):
        e = np.zeros(n)
        e[j] = 1.0
        rows.append(-e)
        rhs.append(-l)
        if h is not None and math.isfinite(h):
            rows.append(e)
            rhs.append(h)
    A = np.array(rows)
    b = np.array(rhs)
    best = None
    for idx in itertools.combinations(range(len(rows)), n):
        M = A[list(idx)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(idx)])
        if np.all(A @ x <= b + 1e-9):
            val = float(np.dot(c, x))
            if best is None or (val > best if sense == "max" else val < best):
                best = val
    return best


def ilp_by_enumeration(c, A_ub, b_ub, bounds, sense="max"):
    """Optimum of a tiny integer program over a bounded box."""
    ranges = [range(int(math.ceil(l)), int(math.floor(h)) + 1) for l, h in bounds]
    A = np.asarray(A_ub, float)
    b = np.asarray(b_ub, float)
    best = None
    for x in itertools.product(*ranges):
        xv = np.array(x, float)
        if A.size and np.any(A @ xv > b + 1e-9):
            continue
        val = float(np.dot(c, xv))
        if best is None or (val > best if sense == "max" else val < best):
            best = val
    return best


def max_independent_set(n: int, edges) -> int:
    best = 0
    for mask in range(1 << n):
        if any((mask >> u) & 1 and (mask >> v) & 1 for u, v in edges):
            continue
        best = max(best, bin(mask).count("1"))
    return best


# ---------------------------------------------------------------------------
# sampling reference


def reference_interval(strata, query_mask_fn, value_fn, kind: str, confidence: float):
    """Re-derivation of the scaled estimator and its half-widths written against plain lists.

    ``strata`` is a list of (population size, list of sampled rows).
    """
    from statistics import NormalDist

    est = var = spread = 0.0
    for N, rows in strata:
        n = len(rows)
        if n == 0:
            continue
        ys = [value_fn(r) if query_mask_fn(r) else 0.0 for r in rows]
        mean = sum(ys) / n
        est += N * mean
        fpc2 = (N - n) / (N - 1) if N > 1 else 0.0
        s2 = sum((y - mean) ** 2 for y in ys) / (n - 1) if n > 1 else 0.0
        var += N * N * s2 / n * fpc2
        spread += N * N * (max(ys) - min(ys)) ** 2 / n * fpc2
    if kind == "parametric":
        z = NormalDist().inv_cdf(0.5 + confidence / 2)
        half = z * math.sqrt(var)
    else:
        half = math.sqrt(math.log(2 / (1 - confidence)) * spread / 2)
    return est - half, est + half
