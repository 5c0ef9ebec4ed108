from __future__ import print_function, division
import numpy as np
import gen_random_milp as tools
from dnalloc import milp

#############################################
#   Solve random LPs with each LP engine    #
#############################################


def import_error(msg):
    print()
    print("## IMPORT ERROR:" + msg)
    print()


try:
    import pytest
except ImportError:
    import_error("Please install pytest to run tests.")
    raise

engines = ["highs", "simplex"]

np.random.seed(1)

m, n = 30, 20
params = {"lp_tolerance": 1e-8}


@pytest.mark.parametrize("engine", engines)
def test_solve_feasible(engine):
    inst, p_star = tools.gen_feasible(m, n, density=0.3)
    sol = milp.solve_lp(inst, engine=engine, **params)
    assert sol.status == milp.OPTIMAL
    x = sol.x
    np.testing.assert_almost_equal(inst.c @ x, p_star, decimal=5)
    np.testing.assert_array_less(inst.violation(x), 1e-6)
    # dual feasibility and strong duality
    np.testing.assert_array_less(-1e-7, sol.ineq_duals)
    np.testing.assert_array_less(-1e-7, sol.lower_duals)
    np.testing.assert_almost_equal(sol.dual_objective(inst), p_star, decimal=5)
    np.testing.assert_almost_equal(sol.ineq_duals @ (inst.A @ x - inst.h), 0.0, decimal=5)


@pytest.mark.parametrize("engine", engines)
def test_solve_infeasible(engine):
    inst, y = tools.gen_infeasible(m, n)
    np.testing.assert_array_less(inst.A.T @ y, 1e-9)
    np.testing.assert_array_less(0.0, inst.h @ y)
    sol = milp.solve_lp(inst, engine=engine, **params)
    assert sol.status == milp.INFEASIBLE
    assert sol.x is None


@pytest.mark.parametrize("engine", engines)
def test_solve_unbounded(engine):
    inst, d = tools.gen_unbounded(m, n)
    np.testing.assert_array_less(-1e-9, inst.A @ d)
    np.testing.assert_array_less(inst.c @ d, -0.1)
    sol = milp.solve_lp(inst, engine=engine, **params)
    assert sol.status == milp.UNBOUNDED


@pytest.mark.parametrize("engine", engines)
def test_engines_agree_with_bounds(engine):
    inst, _ = tools.gen_feasible(m, n, density=0.3)
    boxed = inst.with_bounds(np.full(n, -1.0), np.full(n, 2.0))
    ref = milp.solve_lp(boxed, engine="highs", **params)
    sol = milp.solve_lp(boxed, engine=engine, **params)
    if ref.status != milp.OPTIMAL:
        assert sol.status == ref.status
        return
    np.testing.assert_almost_equal(sol.objective, ref.objective, decimal=5)
    np.testing.assert_array_less(-1e-7, sol.lower_duals)
    np.testing.assert_array_less(sol.upper_duals, 1e-7)
    np.testing.assert_almost_equal(sol.dual_objective(boxed), sol.objective, decimal=5)
