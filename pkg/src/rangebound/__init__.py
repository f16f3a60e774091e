"""Deterministic result ranges for aggregate queries over partially missing data.

Missing rows are described by predicate-constraints: a predicate selecting a
region of the domain, value ranges that rows in the region respect, and a
window on how many such rows exist.  :func:`bound_query` returns the tightest
range an aggregate can take over every instance consistent with a set of them.
"""

from .bounds import BoundStatus, ResultRange, bound_query
from .decomposition import Cell, decompose
from .joins import JoinGraph, join_bound
from .pcs import FrequencyConstraint, PCSet, PredicateConstraint, check_closure
from .predicates import Interval, Predicate, ValueConstraint
from .query import ParseError, QuerySpec, parse_query
from .schema import AttributeDomain, Relation, Schema

__version__ = "0.1.0"

__all__ = [
    "AttributeDomain", "BoundStatus", "Cell", "FrequencyConstraint", "Interval", "JoinGraph", "PCSet",
    "ParseError", "Predicate", "PredicateConstraint", "QuerySpec", "Relation", "ResultRange", "Schema",
    "ValueConstraint", "bound_query", "check_closure", "decompose", "join_bound", "parse_query",
]
