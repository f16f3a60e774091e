import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from build_data import NOV11, NOV13, grid20, sales_disjoint, sales_overlap
from generators import AGGREGATES, query_for, random_instance
from oracles import brute_force_ranges, max_independent_set
from rangebound.bounds import (
    BoundStatus, InfeasibleConstraints, NotDisjoint, bound_avg, bound_query, build_problem, check_feasible,
    greedy_disjoint,
)
from rangebound.decomposition import decompose
from rangebound.pcs import PCSet, PredicateConstraint
from rangebound.predicates import EMPTY, Interval, Predicate
from rangebound.query import QuerySpec, parse_query
from rangebound.schema import AttributeDomain, Relation, Schema

SALES_Q = ("SELECT SUM(price) FROM sales WHERE utc >= TIMESTAMP '2019-11-11 00:00' "
           "AND utc <= TIMESTAMP '2019-11-13 00:00'")


def sales_query(agg="SUM"):
    target = "*" if agg == "COUNT" else "price"
    return QuerySpec(agg, target, ("sales",), Predicate({"utc": Interval.closed(NOV11, NOV13)}))


def test_disjoint_example():
    r = bound_query(parse_query(SALES_Q), sales_disjoint())
    assert (round(r.lower, 2), round(r.upper, 2)) == (99.00, 27998.00)
    assert r.status is BoundStatus.EXACT


def test_disjoint_example_milp_path_agrees():
    r = bound_query(parse_query(SALES_Q), sales_disjoint(), greedy=False)
    assert (round(r.lower, 2), round(r.upper, 2)) == (99.00, 27998.00)


def test_overlap_example_with_witnesses():
    r = bound_query(parse_query(SALES_Q), sales_overlap())
    assert (round(r.lower, 2), round(r.upper, 2)) == (74.25, 17748.75)
    assert r.witness_upper == {"11": 50, "01": 75}
    assert r.witness_lower == {"11": 50, "01": 25}


def test_overlap_example_other_aggregates():
    pcs = sales_overlap()
    cnt = bound_query(sales_query("COUNT"), pcs)
    assert (cnt.lower, cnt.upper) == (75, 125)
    avg = bound_query(sales_query("AVG"), pcs)
    # t1 forces at least 50 rows priced at most 129.99; the best mix adds 75 rows at 149.99
    assert avg.upper == pytest.approx((50 * 129.99 + 75 * 149.99) / 125, abs=1e-9)
    assert round(avg.upper, 2) == 141.99
    mx = bound_query(sales_query("MAX"), pcs)
    assert (mx.lower, mx.upper) == (0.99, 149.99)
    mn = bound_query(sales_query("MIN"), pcs)
    assert (mn.lower, mn.upper) == (0.99, 129.99)


def test_avg_upper_is_attained_by_its_witness():
    pcs = sales_overlap()
    r = bound_query(sales_query("AVG"), pcs)
    w = r.witness_upper
    value = (w.get("11", 0) * 129.99 + w.get("01", 0) * 149.99) / (w.get("11", 0) + w.get("01", 0))
    assert value == pytest.approx(r.upper)


def test_existing_rows_are_added_exactly():
    pcs = sales_overlap()
    present = Relation(pcs.schema, ((NOV11 + 10, "Chicago", 5.0), (NOV11 + 20, "Trenton", 7.0)))
    base = bound_query(sales_query("SUM"), pcs)
    r = bound_query(sales_query("SUM"), pcs, present)
    assert (r.lower, r.upper) == pytest.approx((base.lower + 12.0, base.upper + 12.0))
    mx = bound_query(sales_query("MAX"), pcs, present)
    assert mx.lower == pytest.approx(7.0)


def test_empty_predicate_gives_degenerate_range():
    pcs = sales_overlap()
    r = bound_query(QuerySpec("SUM", "price", ("sales",), EMPTY), pcs)
    assert (r.lower, r.upper) == (0.0, 0.0)
    assert bound_query(QuerySpec("MAX", "price", ("sales",), EMPTY), pcs).status is BoundStatus.NO_ROWS


def test_not_closed_returns_counterexample():
    pcs = sales_overlap()
    q = QuerySpec("SUM", "price", ("sales",), Predicate({"utc": Interval.closed(NOV11, NOV13 + 3600)}))
    wide = PCSet(Schema.of(AttributeDomain.numeric("utc", NOV11, NOV13 + 7200), *pcs.schema.attributes[1:]),
                 pcs.constraints)
    r = bound_query(q, wide)
    assert r.status is BoundStatus.NOT_CLOSED
    assert r.counterexample[0] >= NOV13


def test_infeasible_windows():
    s = Schema.of(AttributeDomain.numeric("x", 0, 1), AttributeDomain.numeric("v", 0, 1))
    pcs = PCSet(s, (PredicateConstraint.make("all", None, None, 0, 1),
                    PredicateConstraint.make("half", Predicate({"x": Interval.closed(0, 0.5)}), None, 2, 3)))
    r = bound_query(QuerySpec("COUNT", "*", ("t",)), pcs)
    assert r.status is BoundStatus.INFEASIBLE_CONSTRAINTS
    with pytest.raises(InfeasibleConstraints):
        check_feasible(build_problem(decompose(pcs), pcs, None))


def test_group_by_expands_categorical_domain():
    pcs = sales_overlap()
    spec = parse_query("SELECT COUNT(*) FROM sales GROUP BY branch", pcs.schema)
    out = bound_query(spec, pcs)
    assert set(out) == {"New York", "Chicago", "Trenton"}
    assert all(r.lower == 0 and r.upper == 125 for r in out.values())


def test_greedy_rejects_overlap():
    with pytest.raises(NotDisjoint):
        greedy_disjoint(sales_overlap(), None, "SUM", "price")


def test_avg_methods_agree_on_grid20():
    pcs = grid20()
    q = parse_query("SELECT AVG(v) FROM g WHERE y >= 3", pcs.schema)
    problem = build_problem(decompose(pcs, q.predicate), pcs, "v")
    a = bound_avg(problem, method="dinkelbach")
    b = bound_avg(problem, method="bisection")
    assert a.upper == pytest.approx(b.upper, abs=1e-6) and a.lower == pytest.approx(b.lower, abs=1e-6)


def test_negative_values_in_sum():
    s = Schema.of(AttributeDomain.numeric("x", 0, 2), AttributeDomain.numeric("v", -10, 10))
    pcs = PCSet(s, (PredicateConstraint.make("a", Predicate({"x": Interval.closed(0, 1)}), {"v": (-3, 2)}, 1, 4),
                    PredicateConstraint.make("b", Predicate({"x": Interval(1, 2, True, False)}), {"v": (-5, -1)}, 0, 2)))
    r = bound_query(QuerySpec("SUM", "v", ("t",)), pcs)
    assert (r.lower, r.upper) == (-12 - 10, 8)


# ---------------------------------------------------------------------------
# oracle checks


def _compare(pcs, q, attrs, agg, **kw):
    oracle = brute_force_ranges(pcs, q, "v", attrs)
    r = bound_query(query_for(agg, q), pcs, **kw)
    if oracle.status == "NOT_CLOSED":
        return r.status is BoundStatus.NOT_CLOSED, (r.status, oracle.status)
    if oracle.status == "INFEASIBLE":
        return r.status is BoundStatus.INFEASIBLE_CONSTRAINTS, (r.status, oracle.status)
    expect = oracle.ranges[agg]
    if expect is None:
        return r.status is BoundStatus.NO_ROWS, (r.status, "NO_ROWS")
    tol = 1e-6 * max(1.0, expect[1] - expect[0]) if agg == "AVG" else 1e-9
    ok = r.ok and abs(r.lower - expect[0]) <= tol and abs(r.upper - expect[1]) <= tol
    return ok, ((r.lower, r.upper), expect)


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 1_000_000), st.sampled_from(AGGREGATES))
def test_bounds_match_brute_force(seed, agg):
    pcs, q, attrs = random_instance(seed)
    ok, detail = _compare(pcs, q, attrs, agg)
    assert ok, detail


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1_000_000), st.sampled_from(AGGREGATES), st.integers(0, 3))
def test_early_stop_contains_exact(seed, agg, depth):
    pcs, q, attrs = random_instance(seed)
    exact = bound_query(query_for(agg, q), pcs)
    loose = bound_query(query_for(agg, q), pcs, early_stop_depth=depth)
    if exact.ok:
        if loose.ok:
            assert loose.lower <= exact.lower + 1e-7 and loose.upper >= exact.upper - 1e-7
        else:
            assert loose.status is not BoundStatus.NOT_CLOSED


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1_000_000), st.sampled_from(["SUM", "COUNT"]))
def test_witnesses_are_feasible_allocations(seed, agg):
    pcs, q, _ = random_instance(seed)
    r = bound_query(query_for(agg, q), pcs, greedy=False)
    if not r.ok:
        return
    dec = decompose(pcs, q if not q.is_true else None)
    by_key = {c.label + ("" if c.in_query else "/out"): c for c in dec.cells}
    for w in (r.witness_upper, r.witness_lower):
        for pc in pcs:
            total = sum(n for k, n in w.items() if pc.id in by_key[k].covering)
            # outside cells absent from the witness can still be filled, so only ku is checkable here
            assert total <= pc.kappa.ku


def independent_set_pcs(n, edges):
    names = [f"n{k}" for k in range(n)]
    s = Schema.of(AttributeDomain.categorical("vertex", names), AttributeDomain.numeric("w", 0.0, 1.0))
    pcs = [PredicateConstraint.make(f"v{k}", Predicate({"vertex": frozenset([names[k]])}), {"w": (0, 1)}, 0, 1)
           for k in range(n)]
    pcs += [PredicateConstraint.make(f"e{u}_{v}", Predicate({"vertex": frozenset([names[u], names[v]])}),
                                     {"w": (0, 1)}, 0, 1) for u, v in edges]
    return PCSet(s, tuple(pcs))


def random_graph(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 11))
    p = rng.uniform(0.1, 0.7)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return n, edges


@pytest.mark.parametrize("seed", range(10))
def test_max_sum_equals_independent_set(seed):
    n, edges = random_graph(seed)
    r = bound_query(QuerySpec("SUM", "w", ("g",)), independent_set_pcs(n, edges))
    assert r.upper == max_independent_set(n, edges)
