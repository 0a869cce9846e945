import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from asymparb.lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, Simplex


def _scipy(lp: LinearProgram):
    A = lp.matrix()
    b = np.asarray(lp.rhs)
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    for row, s, r in zip(A, lp.senses, b):
        if s == "<=":
            ub_rows.append(row), ub_rhs.append(r)
        elif s == ">=":
            ub_rows.append(-row), ub_rhs.append(-r)
        else:
            eq_rows.append(row), eq_rhs.append(r)
    c = -lp.c if lp.maximize else lp.c
    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi) for lo, hi in zip(lp.lower, lp.upper)]
    res = linprog(c, A_ub=np.array(ub_rows) if ub_rows else None, b_ub=ub_rhs or None,
                  A_eq=np.array(eq_rows) if eq_rows else None, b_eq=eq_rhs or None,
                  bounds=bounds, method="highs")
    return res


def test_textbook_maximum():
    lp = LinearProgram(2)
    lp.add_constraints([[1, 1], [1, 3]], "<=", [4, 6])
    lp.set_objective([3, 2], maximize=True)
    res = lp.solve()
    assert res.status == OPTIMAL
    assert res.value == pytest.approx(12.0)
    np.testing.assert_allclose(res.x, [4.0, 0.0], atol=1e-12)


def test_infeasible_and_unbounded():
    lp = LinearProgram(1)
    lp.add_constraints([[1.0]], ">=", 2.0)
    lp.add_constraints([[1.0]], "<=", 1.0)
    assert lp.solve().status == INFEASIBLE

    lp = LinearProgram(2)
    lp.add_constraints([[1.0, -1.0]], "<=", 1.0)
    lp.set_objective([1.0, 0.0], maximize=True)
    assert lp.solve().status == UNBOUNDED


def test_free_and_boxed_variables():
    lp = LinearProgram(3)
    lp.set_bounds(0, lower=-np.inf)
    lp.set_bounds(1, lower=-2.0, upper=3.0)
    lp.set_bounds(2, lower=-np.inf, upper=5.0)
    lp.add_constraints([[1, 1, 1]], "==", 1.0)
    lp.add_constraints([[1, 0, 0]], ">=", -4.0)
    lp.set_objective([1, 2, -1])
    res = lp.solve()
    # x2 at its cap, x1 at its floor, x0 absorbs the rest
    np.testing.assert_allclose(res.x, [-2.0, -2.0, 5.0], atol=1e-10)
    assert res.value == pytest.approx(-11.0)


def test_redundant_equalities_are_dropped():
    lp = LinearProgram(2)
    lp.add_constraints([[1, 1], [2, 2], [1, -1]], "==", [2, 4, 0])
    lp.set_objective([1, 1])
    res = lp.solve()
    np.testing.assert_allclose(res.x, [1, 1], atol=1e-12)


def test_phase_one_reused_across_objectives():
    lp = LinearProgram(2)
    lp.add_constraints([[1, 1]], "==", 1.0)
    sx = Simplex(lp)
    assert sx.optimize([1, 0], maximize=True).value == pytest.approx(1.0)
    assert sx.optimize([1, 0], maximize=False).value == pytest.approx(0.0)
    assert sx.optimize([1, 2], maximize=True).value == pytest.approx(2.0)


def test_degenerate_cycling_instance():
    # Beale's example cycles under the largest-coefficient rule
    lp = LinearProgram(4)
    lp.add_constraints([[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]], "<=", [0, 0, 1])
    lp.set_objective([-0.75, 20, -0.5, 6])
    res = lp.solve()
    assert res.value == pytest.approx(-1.25)


def test_solution_is_reproducible():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(8, 6))
    b = np.abs(rng.normal(size=8)) + 0.1
    c = rng.normal(size=6)
    out = []
    for _ in range(2):
        lp = LinearProgram(6)
        lp.add_constraints(A, "<=", b)
        for j in range(6):
            lp.set_bounds(j, upper=3.0)
        lp.set_objective(c)
        out.append(lp.solve().x)
    assert np.array_equal(out[0], out[1])


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 7))
def test_matches_scipy_on_random_programs(seed, n, m):
    rng = np.random.default_rng(seed)
    lp = LinearProgram(n)
    senses = rng.choice(["<=", ">=", "=="], size=m, p=[0.5, 0.3, 0.2])
    for s in senses:
        lp.add_constraints(rng.integers(-3, 4, size=n), s, float(rng.integers(-3, 4)))
    for j in range(n):
        kind = rng.integers(4)
        if kind == 1:
            lp.set_bounds(j, lower=-np.inf)
        elif kind == 2:
            lp.set_bounds(j, lower=-1.0, upper=2.0)
    lp.set_objective(rng.integers(-3, 4, size=n).astype(float), maximize=bool(rng.integers(2)))
    ours = lp.solve()
    ref = _scipy(lp)
    expected = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}[ref.status]
    assert ours.status == expected
    if expected == OPTIMAL:
        sign = -1 if lp.maximize else 1
        assert ours.value == pytest.approx(sign * ref.fun, abs=1e-7)
        assert lp.max_violation(ours.x) <= 1e-8
