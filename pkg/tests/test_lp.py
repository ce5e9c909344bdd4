import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lp_cases import infeasible_lp, random_lp, unbounded_lp
from meshpush.errors import SingularActiveSet, TooLarge
from meshpush.fit import central_differences, random_feasible_lp, relative_error
from meshpush.lp import (
    PRICING_RULES,
    LinearProgram,
    LpSolution,
    LpStatus,
    enumerate_vertices_bruteforce,
    lp_backward,
    solve_lp,
)

pricings = pytest.mark.parametrize("pricing", PRICING_RULES)


def _two_var_lp():
    # min x + y, x >= 1, y >= 1, y - x >= 0.6
    return LinearProgram(2, [1, 1], [1, 1], (([0, 1], [-1.0, 1.0], 0.6),))


def _assert_solution_invariants(lp, sol):
    lb_res, row_res = lp.residuals(sol.d)
    assert np.all(lb_res >= -1e-9)
    assert np.all(row_res >= -1e-9)
    assert len(sol.active_set) == lp.n
    mat, rhs = lp.active_system(sol.active_set)
    np.testing.assert_allclose(mat @ sol.d, rhs, atol=1e-7)
    for ident in sol.active_set:
        a, b = lp.constraint_row(ident)
        assert abs(a @ sol.d - b) <= lp.activity_tol(ident)


# --- hand examples ---

@pricings
def test_bound_only(pricing):
    sol = solve_lp(LinearProgram(1, [1.0], [2.0]), pricing=pricing)
    assert sol.optimal
    assert sol.d.tolist() == [2.0]
    assert sol.active_set == (("bound", 0),)


@pricings
def test_two_variable_example(pricing):
    sol = solve_lp(_two_var_lp(), pricing=pricing)
    np.testing.assert_allclose(sol.d, [1.0, 1.6], atol=1e-12)
    assert sol.objective_value == pytest.approx(2.6, abs=1e-12)
    assert set(sol.active_set) == {("bound", 0), ("ineq", 0)}


@pricings
def test_contradictory_is_infeasible(pricing):
    lp = LinearProgram(1, [1.0], [0.0], (([0], [-1.0], 1.0),))
    assert solve_lp(lp, pricing=pricing).status is LpStatus.INFEASIBLE
    assert enumerate_vertices_bruteforce(lp).status is LpStatus.INFEASIBLE


@pricings
def test_unbounded(pricing):
    lp = LinearProgram(1, [-1.0], [0.0])
    assert solve_lp(lp, pricing=pricing).status is LpStatus.UNBOUNDED
    assert enumerate_vertices_bruteforce(lp).status is LpStatus.UNBOUNDED


def test_bruteforce_hand_examples():
    assert enumerate_vertices_bruteforce(LinearProgram(1, [1.0], [2.0])).objective_value == 2.0
    assert enumerate_vertices_bruteforce(_two_var_lp()).objective_value == pytest.approx(2.6, abs=1e-12)


def test_bruteforce_too_large():
    with pytest.raises(TooLarge):
        enumerate_vertices_bruteforce(LinearProgram(9, np.ones(9), np.zeros(9)))
    rows = tuple(([0], [1.0], 0.0) for _ in range(10))
    with pytest.raises(TooLarge):
        enumerate_vertices_bruteforce(LinearProgram(7, np.ones(7), np.zeros(7), rows))


def test_iteration_limit():
    lp = random_feasible_lp(np.random.default_rng(0), n=6, m=10)
    assert solve_lp(lp).iterations > 1
    assert solve_lp(lp, max_iterations=1).status is LpStatus.ITERATION_LIMIT


def test_rejects_bad_rows():
    with pytest.raises(ValueError):
        LinearProgram(2, [1, 1], [0, 0], (([0, 2], [1.0, 1.0], 0.0),))
    with pytest.raises(ValueError):
        LinearProgram(2, [1, 1], [0, 0], (([1, 1], [1.0, 1.0], 0.0),))
    with pytest.raises(ValueError):
        LinearProgram(2, [1, 1], [0, np.inf])
    with pytest.raises(ValueError):
        solve_lp(_two_var_lp(), pricing="steepest")


def test_from_padded_matches_from_rows():
    idx = np.array([[0, 1], [1, 2]])
    val = np.array([[-1.0, 1.0], [2.0, -0.5]])
    rhs = np.array([0.3, -1.0])
    a = LinearProgram.from_padded(np.ones(3), np.zeros(3), idx, val, rhs)
    b = LinearProgram(3, np.ones(3), np.zeros(3), tuple(zip(idx, val, rhs)))
    assert np.array_equal(a.matrix, b.matrix)
    assert np.array_equal(a.rhs, b.rhs)
    with pytest.raises(ValueError):
        LinearProgram.from_padded(np.ones(3), np.zeros(3), [[0, 0]], [[1.0, 1.0]], [0.0])


# --- oracle equivalence ---

@pricings
def test_random_lps_match_bruteforce(pricing):
    rng = np.random.default_rng(7)
    for _ in range(200):
        lp = random_lp(rng)
        sol = solve_lp(lp, pricing=pricing)
        ref = enumerate_vertices_bruteforce(lp)
        assert sol.status is ref.status is LpStatus.OPTIMAL
        assert sol.objective_value == pytest.approx(ref.objective_value, abs=1e-8)
        _assert_solution_invariants(lp, sol)


@pricings
def test_constructed_statuses_match_bruteforce(pricing):
    rng = np.random.default_rng(8)
    for make, expected in [(infeasible_lp, LpStatus.INFEASIBLE), (unbounded_lp, LpStatus.UNBOUNDED)]:
        for _ in range(10):
            lp = make(rng)
            assert solve_lp(lp, pricing=pricing).status is expected
            assert enumerate_vertices_bruteforce(lp).status is expected


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_general_sign_lps_match_bruteforce(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    m = int(rng.integers(0, 6))
    lp = LinearProgram.from_dense(rng.integers(-2, 4, size=n).astype(float),
                                  rng.integers(-2, 3, size=n).astype(float),
                                  rng.integers(-3, 4, size=(m, n)).astype(float),
                                  rng.integers(-4, 5, size=m).astype(float))
    ref = enumerate_vertices_bruteforce(lp)
    for pricing in PRICING_RULES:
        sol = solve_lp(lp, pricing=pricing)
        assert sol.status is ref.status
        if ref.optimal:
            assert sol.objective_value == pytest.approx(ref.objective_value, abs=1e-8)
            _assert_solution_invariants(lp, sol)


def test_solver_is_deterministic():
    lp = random_feasible_lp(np.random.default_rng(1), n=6, m=10)
    a, b = solve_lp(lp), solve_lp(lp)
    assert np.array_equal(a.d, b.d)
    assert a.active_set == b.active_set


def test_large_sparse_pushing_like_lp():
    # chains d[i+1] - d[i] >= 0.1 over 300 variables; optimum is a ramp from the one raised bound
    n = 300
    lb = np.zeros(n)
    lb[0] = 1.0
    rows = tuple(([i, i + 1], [-1.0, 1.0], 0.1) for i in range(n - 1))
    for pricing in PRICING_RULES:
        sol = solve_lp(LinearProgram(n, np.ones(n), lb, rows), pricing=pricing)
        np.testing.assert_allclose(sol.d, 1.0 + 0.1 * np.arange(n), atol=1e-9)


# --- backward ---

def test_backward_bound_only_is_identity():
    lp = LinearProgram(3, np.ones(3), [0.5, -1.0, 2.0])
    sol = solve_lp(lp)
    g = np.array([0.3, -2.0, 1.5])
    grad = lp_backward(lp, sol, g)
    np.testing.assert_array_equal(grad.lower_bounds, g)
    assert grad.condition_number == 1.0


def test_backward_two_variable_example():
    lp = _two_var_lp()
    sol = solve_lp(lp)
    grad = lp_backward(lp, sol, [0.0, 1.0])
    # y = x_lb + 0.6: dy/dlb_x = 1, dy/drhs = 1, dy/dlb_y = 0
    np.testing.assert_allclose(grad.lower_bounds, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(grad.rhs, [1.0], atol=1e-12)
    np.testing.assert_allclose(grad.coeffs[0], [-1.0, -1.6], atol=1e-12)


def test_backward_inactive_rows_have_zero_gradient():
    rng = np.random.default_rng(3)
    for _ in range(30):
        lp = random_feasible_lp(rng)
        sol = solve_lp(lp)
        grad = lp_backward(lp, sol, rng.normal(size=lp.n))
        active_rows = {k for kind, k in sol.active_set if kind == "ineq"}
        active_bounds = {k for kind, k in sol.active_set if kind == "bound"}
        for i in range(lp.n_ineqs):
            if i not in active_rows:
                assert grad.rhs[i] == 0.0 and not grad.coeffs[i].any()
        for j in range(lp.n):
            if j not in active_bounds:
                assert grad.lower_bounds[j] == 0.0


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    worst, compared = 0.0, 0
    for _ in range(30):
        lp = random_feasible_lp(rng)
        sol = solve_lp(lp)
        w = rng.normal(size=lp.n)
        grad = lp_backward(lp, sol, w)
        m = lp.n_ineqs

        def f(x):
            p = LinearProgram(lp.n, lp.objective, lp.lower_bounds,
                              tuple((r.indices, r.coeffs, x[i]) for i, r in enumerate(lp.ineqs)))
            s = solve_lp(p)
            return float(w @ s.d), s.active_set

        fd = central_differences(f, lp.rhs, range(m), 1e-6)
        ok = np.isfinite(fd)
        compared += ok.sum()
        worst = max(worst, relative_error(grad.rhs[ok], fd[ok]))
    assert compared > 0
    assert worst <= 1e-4


def test_backward_rejects_non_optimal_and_singular():
    lp = _two_var_lp()
    with pytest.raises(ValueError):
        lp_backward(lp, LpSolution(None, LpStatus.INFEASIBLE), [1.0, 1.0])
    bad = LpSolution(np.array([1.0, 1.6]), LpStatus.OPTIMAL, (("ineq", 0), ("ineq", 0)), 2.6)
    with pytest.raises(SingularActiveSet):
        lp_backward(lp, bad, [1.0, 1.0])
