"""Disjoint cell decomposition of a predicate-constraint set.

Cells are sign patterns over the PC predicates: a cell lies inside every
predicate marked IN and outside every predicate marked OUT.  The search is a
depth-first walk over prefixes of the pattern; an unsatisfiable prefix prunes
its whole subtree.  Each satisfiable node carries a witness point, and a
child whose region still contains that point is admitted without a solver
call.  The other classic shortcut also applies: if ``X`` is satisfiable and
``X and psi`` is not, then ``X and not psi`` is.

When a query predicate is given the search is clipped to it.  Cells outside
the query are still produced when they are covered by a PC with a positive
lower frequency bound, because such cells can absorb rows that would
otherwise be forced inside the query.

With an early-stop depth ``K`` the walk halts at depth ``K``: each surviving
prefix becomes one coarse cell whose membership in the remaining PCs is left
undetermined (the ``possible`` set).  Coarse cells still partition the clip
region, and the solver relaxes the undetermined memberships, so bounds stay
sound.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

from .pcs import PCSet
from .predicates import (
    Box,
    Interval,
    NegBox,
    Predicate,
    SignedConjunction,
    box_extreme,
    box_meets,
    box_point,
    domain_box,
    escape,
    evaluate,
    intersect_box,
    is_satisfiable,
    neg_box,
)
from .schema import Schema

IN, OUT, UNDECIDED = True, False, None
MAX_RECORDED_PREFIXES = 4096


@dataclass(frozen=True)
class Cell:
    signature: tuple  # per PC in input order: True (IN), False (OUT) or None (undetermined)
    covering: tuple[str, ...]
    region: SignedConjunction
    value_lower: dict[str, float]
    value_upper: dict[str, float]
    in_query: bool = True
    possible: tuple[str, ...] = ()
    forced_zero: bool = False
    row_box: Box | None = field(default=None, compare=False, repr=False)
    row_negs: tuple = field(default=(), compare=False, repr=False)

    @property
    def label(self) -> str:
        return signature_label(self.signature)

    def value_range(self, schema: Schema, attr: str) -> tuple[float, float] | None:
        """Exact infimum and supremum of ``attr`` over rows this cell can hold."""
        if self.forced_zero or self.row_box is None:
            return None
        i = schema.position(attr)
        if not any(j == i for neg in self.row_negs for j, _ in neg):
            return self.value_lower[attr], self.value_upper[attr]
        hi = box_extreme(self.row_box, self.row_negs, i, upper=True)
        lo = box_extreme(self.row_box, self.row_negs, i, upper=False)
        if hi is None or lo is None:  # pragma: no cover - guarded by forced_zero
            return None
        return lo, hi

    def to_json(self) -> dict:
        return {
            "signature": self.label,
            "covering": list(self.covering),
            "possible": list(self.possible),
            "in_query": self.in_query,
            "forced_zero": self.forced_zero,
            "value_lower": dict(self.value_lower),
            "value_upper": dict(self.value_upper),
        }


@dataclass
class DecompositionStats:
    sat_calls: int = 0
    pruned_subtrees: int = 0
    rewriting_hits: int = 0
    witness_hits: int = 0
    early_stopped: bool = False
    depth_limit: int | None = None
    pruned_prefixes: list[str] = field(default_factory=list)

    def merge(self, other: DecompositionStats) -> None:
        self.sat_calls += other.sat_calls
        self.pruned_subtrees += other.pruned_subtrees
        self.rewriting_hits += other.rewriting_hits
        self.witness_hits += other.witness_hits
        self.pruned_prefixes.extend(other.pruned_prefixes)

    def to_json(self) -> dict:
        return {
            "sat_calls": self.sat_calls,
            "pruned_subtrees": self.pruned_subtrees,
            "rewriting_hits": self.rewriting_hits,
            "witness_hits": self.witness_hits,
            "early_stopped": self.early_stopped,
            "depth_limit": self.depth_limit,
            "pruned_prefixes": sorted(self.pruned_prefixes),
        }


@dataclass
class DecompositionResult:
    cells: list[Cell]
    stats: DecompositionStats
    query: Predicate | None = None

    @property
    def signatures(self) -> set[str]:
        return {c.label for c in self.cells}

    def in_query_cells(self) -> list[Cell]:
        return [c for c in self.cells if c.in_query]

    def to_json(self) -> dict:
        return {"cells": [c.to_json() for c in self.cells], "stats": self.stats.to_json()}


def signature_label(sig: Sequence) -> str:
    return "".join("?" if s is None else ("1" if s else "0") for s in sig)


def _sort_key(cell: Cell) -> tuple:
    return (not cell.in_query, tuple(2 if s is None else (0 if s else 1) for s in cell.signature))


@dataclass
class _Node:
    depth: int
    box: Box
    negs: tuple[NegBox, ...]
    sig: tuple  # in visiting order
    witness: tuple | None


class _Search:
    def __init__(self, pcset: PCSet, order: list[int], depth_limit: int | None,
                 clip: Predicate | None, in_query: bool, outside_query: Predicate | None = None) -> None:
        self.pcset = pcset
        self.schema = pcset.schema
        self.order = order
        self.n = len(order)
        self.limit = self.n if depth_limit is None else min(depth_limit, self.n)
        self.clip = clip
        self.in_query = in_query
        self.outside_query = outside_query
        self.outside_neg = None if outside_query is None or outside_query.empty else neg_box(outside_query, self.schema)
        self.psis = [pcset[j].psi for j in order]
        self.neg_boxes = [None if p.empty else neg_box(p, self.schema) for p in self.psis]
        # for out-of-query cells only PCs with kl > 0 matter
        self.needs_lower = [pcset[j].kappa.kl > 0 for j in order]
        self.suffix_lower = [False] * (self.n + 1)
        for d in range(self.n - 1, -1, -1):
            self.suffix_lower[d] = self.suffix_lower[d + 1] or self.needs_lower[d]

    def root(self, stats: DecompositionStats) -> _Node | None:
        box = domain_box(self.schema)
        if self.clip is not None:
            box = intersect_box(box, self.clip, self.schema)
        negs = (self.outside_neg,) if self.outside_neg is not None else ()
        if box is None:
            return None
        stats.sat_calls += 1
        piece = escape(box, negs)
        if piece is None:
            return None
        return _Node(0, box, negs, (), box_point(piece))

    def _relevant(self, node_sig: tuple, depth: int) -> bool:
        if self.in_query:
            return True
        return any(s and self.needs_lower[k] for k, s in enumerate(node_sig)) or self.suffix_lower[depth]

    def _prefix_label(self, sig: tuple) -> str:
        full: list = ["-"] * len(self.pcset)
        for k, s in enumerate(sig):
            full[self.order[k]] = "1" if s else "0"
        return "".join(full)

    def _prune(self, sig: tuple, stats: DecompositionStats) -> None:
        stats.pruned_subtrees += 1
        if len(stats.pruned_prefixes) < MAX_RECORDED_PREFIXES:
            stats.pruned_prefixes.append(self._prefix_label(sig))

    def children(self, node: _Node, stats: DecompositionStats) -> list[_Node]:
        d = node.depth
        psi = self.psis[d]
        nb = self.neg_boxes[d]
        in_box = None if nb is None else intersect_box(node.box, psi, self.schema)
        w = node.witness
        out: list[_Node] = []

        in_sat, in_w = False, None
        if in_box is not None:
            if w is not None and evaluate(psi, w, self.schema):
                in_sat, in_w = True, w
                stats.witness_hits += 1
            else:
                stats.sat_calls += 1
                piece = escape(in_box, node.negs)
                if piece is not None:
                    in_sat, in_w = True, box_point(piece)
        in_sig = node.sig + (IN,)
        if in_sat:
            in_negs = tuple(n for n in node.negs if box_meets(in_box, n))
            if self._relevant(in_sig, d + 1):
                out.append(_Node(d + 1, in_box, in_negs, in_sig, in_w))
        else:
            self._prune(in_sig, stats)

        out_sig = node.sig + (OUT,)
        last = d + 1 == self.n
        if last and not any(out_sig):
            return out  # covered by no PC: dropped without a check
        if not self._relevant(out_sig, d + 1):
            return out
        if in_box is None:
            # psi misses the region entirely, so the OUT child is the same region
            stats.rewriting_hits += 1
            out.append(_Node(d + 1, node.box, node.negs, out_sig, w))
            return out
        out_negs = node.negs + (nb,)
        if w is not None and not evaluate(psi, w, self.schema):
            stats.witness_hits += 1
            out.append(_Node(d + 1, node.box, out_negs, out_sig, w))
        elif not in_sat:
            stats.rewriting_hits += 1
            out.append(_Node(d + 1, node.box, out_negs, out_sig, None))
        else:
            stats.sat_calls += 1
            piece = escape(node.box, out_negs)
            if piece is not None:
                out.append(_Node(d + 1, node.box, out_negs, out_sig, box_point(piece)))
            else:
                self._prune(out_sig, stats)
        return out

    def leaf(self, node: _Node) -> Cell | None:
        sig_in_order: list = [UNDECIDED] * len(self.pcset)
        for k, s in enumerate(node.sig):
            sig_in_order[self.order[k]] = s
        possible = []
        for k in range(node.depth, self.n):
            nb = self.neg_boxes[k]
            if nb is not None and box_meets(node.box, nb):
                possible.append(self.order[k])
        covering = [self.order[k] for k, s in enumerate(node.sig) if s]
        if not covering and not possible:
            return None
        if not self.in_query and not any(self.pcset[j].kappa.kl > 0 for j in covering + possible):
            return None
        positives = tuple(self.pcset[j].psi for j in sorted(covering))
        negatives = tuple(self.pcset[self.order[k]].psi for k, s in enumerate(node.sig) if not s)
        region = SignedConjunction(
            positives,
            negatives + ((self.outside_query,) if not self.in_query else ()),
            self.clip if self.in_query else None,
        )
        return _make_cell(self.pcset, tuple(sig_in_order), sorted(covering), sorted(possible),
                          node.box, node.negs, region, self.in_query)

    def explore(self, start: _Node, stats: DecompositionStats) -> list[Cell]:
        cells: list[Cell] = []
        stack = [start]
        while stack:
            node = stack.pop()
            if node.depth >= self.limit:
                cell = self.leaf(node)
                if cell is not None:
                    cells.append(cell)
                continue
            stack.extend(reversed(self.children(node, stats)))
        return cells


def _make_cell(pcset: PCSet, sig: tuple, covering: list[int], possible: list[int], box: Box,
               negs: tuple[NegBox, ...], region: SignedConjunction, in_query: bool) -> Cell:
    schema = pcset.schema
    row_box: Box | None = box
    for j in covering:
        nu = pcset[j].nu
        if nu.ranges:
            row_box = intersect_box(row_box, nu.as_predicate(), schema)
    live = tuple(n for n in negs if row_box is not None and box_meets(row_box, n))
    forced_zero = row_box is None or escape(row_box, live) is None
    lower: dict[str, float] = {}
    upper: dict[str, float] = {}
    src = box if forced_zero else row_box
    for i, dom in enumerate(schema.attributes):
        if not dom.is_numeric:
            continue
        if forced_zero:
            # empty row region: report the reconciled value ranges (may be inverted)
            l, h = src[i].lo, src[i].hi
            for j in covering:
                cl, ch = pcset[j].nu.ranges.get(dom.name, (dom.lo, dom.hi))
                l, h = max(l, cl), min(h, ch)
            lower[dom.name], upper[dom.name] = l, h
        else:
            lower[dom.name], upper[dom.name] = src[i].lo, src[i].hi
    return Cell(
        signature=sig,
        covering=tuple(pcset[j].id for j in covering),
        region=region,
        value_lower=lower,
        value_upper=upper,
        in_query=in_query,
        possible=tuple(pcset[j].id for j in possible),
        forced_zero=forced_zero,
        row_box=None if forced_zero else row_box,
        row_negs=live,
    )


def selectivity_order(pcset: PCSet) -> list[int]:
    """PCs sorted by increasing predicate volume fraction (most selective first)."""

    def volume(j: int) -> float:
        psi = pcset[j].psi
        if psi.empty:
            return 0.0
        frac = 1.0
        for name, atom in psi.atoms.items():
            dom = pcset.schema[name]
            if isinstance(atom, Interval):
                width = dom.hi - dom.lo
                lo, hi = max(atom.lo, dom.lo), min(atom.hi, dom.hi)
                frac *= max(hi - lo, 0.0) / width if width > 0 else 1.0
            else:
                frac *= len(atom & dom.value_set) / len(dom.values)
        return frac

    return sorted(range(len(pcset)), key=lambda j: (volume(j), j))


def _run(search: _Search, stats: DecompositionStats, parallelism: int) -> list[Cell]:
    root = search.root(stats)
    if root is None:
        return []
    if parallelism <= 1 or search.limit == 0:
        return search.explore(root, stats)
    # expand breadth-first until there is enough work to share
    frontier = [root]
    leaves: list[Cell] = []
    while frontier and len(frontier) < 4 * parallelism:
        nxt: list[_Node] = []
        for node in frontier:
            if node.depth >= search.limit:
                cell = search.leaf(node)
                if cell is not None:
                    leaves.append(cell)
            else:
                nxt.extend(search.children(node, stats))
        if not nxt:
            frontier = []
            break
        frontier = nxt
    parts = [DecompositionStats() for _ in frontier]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        results = list(pool.map(search.explore, frontier, parts))
    for p in parts:
        stats.merge(p)
    for r in results:
        leaves.extend(r)
    return leaves


def decompose(pcset: PCSet, query: Predicate | None = None, early_stop_depth: int | None = None,
              parallelism: int = 1, order: str = "input", include_outside: bool | None = None
              ) -> DecompositionResult:
    """Decompose ``pcset`` into disjoint cells, clipped to ``query`` when given.

    ``include_outside`` controls the out-of-query cells described in the
    module docstring; by default they are built whenever a query is given and
    some PC has a positive lower frequency bound.
    """
    if early_stop_depth is not None and early_stop_depth < 0:
        raise ValueError("early_stop_depth must be nonnegative")
    visit = list(range(len(pcset))) if order == "input" else selectivity_order(pcset)
    if order not in ("input", "selectivity"):
        raise ValueError(f"unknown order {order!r}")
    stats = DecompositionStats(depth_limit=early_stop_depth)
    stats.early_stopped = early_stop_depth is not None and early_stop_depth < len(pcset)
    schema = pcset.schema
    clip = None if query is None or query.is_true else query

    cells: list[Cell] = []
    if clip is None or not clip.empty:
        s = _Search(pcset, visit, early_stop_depth, clip, True, None)
        cells.extend(_run(s, stats, parallelism))
    if include_outside is None:
        include_outside = clip is not None and any(c.kappa.kl > 0 for c in pcset)
    if include_outside and clip is not None:
        s = _Search(pcset, visit, early_stop_depth, None, False, clip)
        cells.extend(_run(s, stats, parallelism))
    cells.sort(key=_sort_key)
    return DecompositionResult(cells, stats, clip)


def naive_decompose(pcset: PCSet, query: Predicate | None = None) -> list[tuple]:
    """Signatures of every satisfiable, covered sign pattern, by enumeration.

    Exponential in the number of PCs; a test oracle for :func:`decompose`.
    """
    schema = pcset.schema
    found = []
    for sig in product((True, False), repeat=len(pcset)):
        if not any(sig):
            continue
        sc = SignedConjunction(
            tuple(c.psi for c, s in zip(pcset, sig) if s),
            tuple(c.psi for c, s in zip(pcset, sig) if not s),
            query,
        )
        if is_satisfiable(sc, schema):
            found.append(sig)
    return found


def reconcile(covering: Iterable[str], pcset: PCSet, attr: str,
              clip: Predicate | None = None) -> tuple[float, float]:
    """Most restrictive value range on ``attr`` among the covering PCs.

    The result may be inverted (lower > upper) when the ranges conflict.
    """
    dom = pcset.schema[attr]
    lo, hi = dom.lo, dom.hi
    for cid in covering:
        l, h = pcset.by_id[cid].nu.ranges.get(attr, (dom.lo, dom.hi))
        lo, hi = max(lo, l), min(hi, h)
    if clip is not None and attr in clip.atoms:
        atom = clip.atoms[attr]
        lo, hi = max(lo, atom.lo), min(hi, atom.hi)
    return lo, hi
