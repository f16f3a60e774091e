import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from build_data import grid20, sales_overlap
from generators import random_instance
from oracles import grid_representatives, in_pred
from rangebound.decomposition import decompose, naive_decompose, reconcile, selectivity_order
from rangebound.pcs import PCSet, PredicateConstraint
from rangebound.predicates import Interval, Predicate
from rangebound.schema import AttributeDomain, Schema

LINE = Schema.of(AttributeDomain.numeric("x", 0.0, 10.0), AttributeDomain.numeric("v", 0.0, 50.0))


def iv_pc(id, lo, hi, nu=None, kl=0, ku=3):
    return PredicateConstraint.make(id, Predicate({"x": Interval.closed(lo, hi)}), nu, kl, ku)


def point_signatures(pcs, attrs, query=None):
    """Sign patterns realised by grid representatives: an independent cell oracle."""
    preds = [c.psi for c in pcs] + ([query] if query is not None else [])
    out = set()
    for p in grid_representatives(pcs.schema, preds, attrs):
        if query is not None and not in_pred(query, p):
            continue
        sig = "".join("1" if in_pred(c.psi, p) else "0" for c in pcs)
        if "1" in sig:
            out.add(sig)
    return out


def test_three_intervals():
    pcs = PCSet(LINE, (iv_pc("a", 0, 4), iv_pc("b", 2, 6), iv_pc("c", 5, 9)))
    dec = decompose(pcs)
    assert dec.signatures == {"100", "110", "010", "011", "001"}
    assert dec.signatures == {"".join("1" if s else "0" for s in sig) for sig in naive_decompose(pcs)}


def test_overlap_example_cells_and_prune():
    dec = decompose(sales_overlap())
    assert [c.label for c in dec.cells] == ["11", "01"]
    # the pattern "in t1, not in t2" is pruned as unsatisfiable
    assert dec.stats.pruned_prefixes == ["10"]
    c11 = dec.cells[0]
    assert (c11.value_lower["price"], c11.value_upper["price"]) == (0.99, 129.99)


def test_cell_value_bounds_take_most_restrictive():
    pcs = PCSet(LINE, (iv_pc("a", 0, 6, {"v": (0, 30)}), iv_pc("b", 3, 10, {"v": (10, 50)})))
    cells = {c.label: c for c in decompose(pcs).cells}
    assert (cells["11"].value_lower["v"], cells["11"].value_upper["v"]) == (10, 30)
    assert reconcile(["a", "b"], pcs, "v") == (10, 30)


def test_contradictory_value_ranges_force_zero():
    pcs = PCSet(LINE, (iv_pc("a", 0, 6, {"v": (0, 5)}), iv_pc("b", 3, 10, {"v": (10, 50)})))
    cells = {c.label: c for c in decompose(pcs).cells}
    assert cells["11"].forced_zero and not cells["10"].forced_zero


def test_query_clipping_and_outside_cells():
    pcs = PCSet(LINE, (iv_pc("a", 0, 6, kl=1), iv_pc("b", 3, 10)))
    q = Predicate({"x": Interval.closed(7, 10)})
    inside = decompose(pcs, q, include_outside=False)
    assert inside.signatures == {"01"}
    full = decompose(pcs, q)
    outside = {c.label for c in full.cells if not c.in_query}
    # only outside cells under a PC with a positive lower count matter
    assert outside == {"10", "11"}


def test_value_range_of_a_clipped_cell_is_exact():
    # the cell "in b, not in a" on x is (6, 10]; its x supremum is 10 and infimum 6 (not attained)
    pcs = PCSet(LINE, (iv_pc("a", 0, 6), iv_pc("b", 3, 10)))
    cell = next(c for c in decompose(pcs).cells if c.label == "01")
    assert cell.value_range(LINE, "x") == (6.0, 10.0)


def test_early_stop_marks_undetermined():
    pcs = grid20()
    dec = decompose(pcs, early_stop_depth=3)
    assert dec.stats.early_stopped
    assert all(len(c.signature) == len(pcs) for c in dec.cells)
    assert any(c.possible for c in dec.cells)
    exact = decompose(pcs)
    assert len(dec.cells) <= len(exact.cells)


def test_parallel_and_selectivity_order_give_same_cells():
    pcs = grid20()
    base = decompose(pcs)
    assert decompose(pcs, parallelism=4).signatures == base.signatures
    assert decompose(pcs, order="selectivity").signatures == base.signatures
    assert sorted(selectivity_order(pcs)) == list(range(len(pcs)))


def test_grid20_cells_match_naive_at_twelve():
    full = grid20()
    pcs = PCSet(full.schema, full.constraints[:12])
    naive = {"".join("1" if s else "0" for s in sig) for sig in naive_decompose(pcs)}
    assert decompose(pcs).signatures == naive == point_signatures(pcs, ["x", "y"])


def test_negative_depth_rejected():
    with pytest.raises(ValueError):
        decompose(grid20(), early_stop_depth=-1)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_cells_match_point_oracle(seed):
    pcs, q, attrs = random_instance(seed)
    assert decompose(pcs).signatures == point_signatures(pcs, attrs)
    clipped = decompose(pcs, q, include_outside=False)
    assert clipped.signatures == point_signatures(pcs, attrs, q)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_cells_are_disjoint_and_cover_the_covered_points(seed):
    pcs, _, attrs = random_instance(seed)
    cells = decompose(pcs).cells
    for p in grid_representatives(pcs.schema, [c.psi for c in pcs], attrs):
        sig = tuple(in_pred(c.psi, p) for c in pcs)
        hits = [c for c in cells if c.signature == sig]
        assert len(hits) == (1 if any(sig) else 0)
