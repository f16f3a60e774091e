import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ilp_by_enumeration, lp_by_vertices
from rangebound.optim import LinearProgram, MilpProgram, Status, solve, solve_lp, solve_milp


def test_textbook_lp():
    # max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6)
    lp = LinearProgram([3, 5], "max", [[1, 0], [0, 2], [3, 2]], ["<="] * 3, [4, 12, 18])
    out = solve_lp(lp)
    assert out.status is Status.OPTIMAL
    assert out.objective == pytest.approx(36.0)
    np.testing.assert_allclose(out.x, [2, 6], atol=1e-9)


def test_infeasible_and_unbounded():
    lp = LinearProgram([1], "max", [[1], [1]], ["<=", ">="], [1, 2])
    assert solve_lp(lp).status is Status.INFEASIBLE
    assert solve_lp(LinearProgram([1, 1], "max", [[1, -1]], ["<="], [1])).status is Status.UNBOUNDED


def test_equality_and_ge_rows():
    lp = LinearProgram([1, 2], "min", [[1, 1], [1, 0]], ["=", ">="], [5, 1])
    out = solve_lp(lp)
    assert out.objective == pytest.approx(5.0)
    np.testing.assert_allclose(out.x, [5, 0], atol=1e-9)


def test_negative_lower_bounds_and_free_variables():
    lp = LinearProgram([1, -1], "min", [[1, 1]], [">="], [-3], lo=[-5, -np.inf], hi=[2, 4])
    out = solve_lp(lp)
    # x as small as possible and y as large as possible: x = -5 needs y >= 2; y = 4 -> -9
    assert out.objective == pytest.approx(-9.0)


def test_degenerate_cycling_example_terminates():
    # Beale's example cycles under the largest-coefficient rule
    c = [0.75, -150, 0.02, -6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    out = solve_lp(LinearProgram(c, "max", A, ["<="] * 3, [0, 0, 1]))
    assert out.status is Status.OPTIMAL
    assert out.objective == pytest.approx(0.05)


def test_milp_knapsack():
    # max 5a + 4b + 3c st 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8, binaries
    lp = LinearProgram([5, 4, 3], "max", [[2, 3, 1], [4, 1, 2], [3, 4, 2]], ["<="] * 3, [5, 11, 8],
                       lo=[0, 0, 0], hi=[1, 1, 1])
    out = solve(lp, integer=[True] * 3)
    assert out.objective == pytest.approx(9.0)  # a = b = 1
    assert np.all(np.abs(out.x - np.round(out.x)) < 1e-9)


def test_milp_infeasible():
    lp = LinearProgram([1], "max", [[2], [2]], [">=", "<="], [1, 1.5], lo=[0], hi=[5])
    assert solve_milp(MilpProgram(lp, np.array([True]))).status is Status.INFEASIBLE


small = st.integers(-4, 6)


@st.composite
def small_programs(draw):
    n = draw(st.integers(1, 3))
    m = draw(st.integers(0, 3))
    c = [draw(small) for _ in range(n)]
    A = [[draw(small) for _ in range(n)] for _ in range(m)]
    b = [draw(st.integers(0, 12)) for _ in range(m)]
    bounds = [(0, draw(st.integers(0, 5))) for _ in range(n)]
    return c, A, b, bounds


@settings(max_examples=150, deadline=None)
@given(small_programs(), st.sampled_from(["max", "min"]))
def test_lp_matches_vertex_enumeration(prog, sense):
    c, A, b, bounds = prog
    lp = LinearProgram(c, sense, A if A else np.zeros((0, len(c))), ["<="] * len(A), b,
                       lo=[l for l, _ in bounds], hi=[h for _, h in bounds])
    out = solve_lp(lp)
    ref = lp_by_vertices(c, A, b, bounds, sense)
    if ref is None:
        assert out.status is Status.INFEASIBLE
    else:
        assert out.status is Status.OPTIMAL
        assert out.objective == pytest.approx(ref, abs=1e-7)


@settings(max_examples=150, deadline=None)
@given(small_programs(), st.sampled_from(["max", "min"]))
def test_milp_matches_enumeration(prog, sense):
    c, A, b, bounds = prog
    lp = LinearProgram(c, sense, A if A else np.zeros((0, len(c))), ["<="] * len(A), b,
                       lo=[l for l, _ in bounds], hi=[h for _, h in bounds])
    out = solve(lp, integer=[True] * len(c))
    ref = ilp_by_enumeration(c, A, b, bounds, sense)
    if ref is None:
        assert out.status is Status.INFEASIBLE
    else:
        assert out.objective == pytest.approx(ref, abs=1e-7)
        assert lp.is_feasible(out.x)
