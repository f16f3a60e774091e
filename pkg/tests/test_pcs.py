import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import random_instance
from oracles import grid_representatives, in_pred
from rangebound.pcs import (
    FrequencyConstraint, PCSet, PredicateConstraint, check_closure, direct_product, is_closed, satisfies,
    satisfies_fast, satisfies_set,
)
from rangebound.predicates import Interval, Predicate
from rangebound.schema import AttributeDomain, Relation, Schema, SchemaError

S = Schema.of(AttributeDomain.numeric("x", 0.0, 10.0), AttributeDomain.numeric("v", 0.0, 100.0))


def pc(id, lo, hi, nu=(0.0, 100.0), kl=0, ku=5, lo_open=False, hi_open=False):
    return PredicateConstraint.make(id, Predicate({"x": Interval(lo, hi, lo_open, hi_open)}), {"v": nu}, kl, ku)


def test_frequency_window_validation():
    with pytest.raises(ValueError):
        FrequencyConstraint(3, 2)
    with pytest.raises(ValueError):
        FrequencyConstraint(-1, 2)
    assert FrequencyConstraint(1, 2).admits(2)


def test_pcset_rejects_duplicates_and_unknown_attributes():
    with pytest.raises(ValueError):
        PCSet(S, (pc("a", 0, 1), pc("a", 1, 2)))
    bad = PredicateConstraint.make("b", Predicate({"z": Interval.closed(0, 1)}), None, 0, 1)
    with pytest.raises(SchemaError):
        PCSet(S, (bad,))


def test_satisfies_checks_values_and_counts():
    c = pc("a", 0, 5, nu=(10, 20), kl=1, ku=2)
    ok = Relation(S, ((1.0, 15.0), (7.0, 99.0)))
    assert satisfies(ok, c) and satisfies_fast(ok, c)
    assert not satisfies(Relation(S, ((1.0, 25.0),)), c)
    assert not satisfies(Relation(S, ((1.0, 15.0),) * 3), c)
    assert not satisfies(Relation(S, ()), c)


def test_closure_witness():
    pcs = PCSet(S, (pc("a", 0, 5, hi_open=True), pc("b", 6, 10)))
    w = check_closure(pcs)
    assert w is not None and 5 <= w[0] < 6
    assert is_closed(pcs, Predicate({"x": Interval.closed(6, 8)}))
    assert is_closed(PCSet(S, (pc("a", 0, 5, hi_open=True), pc("b", 5, 10))))


def test_pairwise_disjoint_half_open():
    assert PCSet(S, (pc("a", 0, 5, hi_open=True), pc("b", 5, 10))).pairwise_disjoint
    assert not PCSet(S, (pc("a", 0, 5), pc("b", 5, 10))).pairwise_disjoint


def test_direct_product():
    a = PredicateConstraint.make("a", Predicate({"x": Interval.closed(0, 1)}), {"x": (0, 1)}, 1, 2)
    b = PredicateConstraint.make("b", Predicate({"y": Interval.closed(0, 1)}), {"y": (0, 1)}, 3, 4)
    prod, _ = direct_product(a, b)
    assert (prod.kappa.kl, prod.kappa.ku) == (3, 8)
    assert set(prod.psi.atoms) == {"x", "y"}
    with pytest.raises(SchemaError):
        direct_product(a, a)


def test_pcset_json_round_trip(tmp_path):
    pcs = PCSet(S, (pc("a", 0, 5, kl=1), pc("b", 4, 10, lo_open=True)))
    path = tmp_path / "p.json"
    path.write_text(__import__("json").dumps(pcs.to_json()))
    assert PCSet.load(path) == pcs


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_closure_matches_point_check(seed):
    pcs, _, attrs = random_instance(seed)
    pts = grid_representatives(pcs.schema, [c.psi for c in pcs], attrs)
    uncovered = any(not any(in_pred(c.psi, p) for c in pcs) for p in pts)
    assert (check_closure(pcs) is not None) == uncovered


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 100)), max_size=12))
def test_satisfies_set_slow_and_fast_agree(rows):
    rel = Relation(S, tuple(rows))
    pcs = PCSet(S, (pc("a", 0, 5, nu=(0, 50), ku=6), pc("b", 3, 10, kl=1, ku=8)))
    assert all(satisfies(rel, c) == satisfies_fast(rel, c) for c in pcs)
    assert satisfies_set(rel, pcs) == all(satisfies(rel, c) for c in pcs)
