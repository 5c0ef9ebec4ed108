from __future__ import print_function


def import_error(msg):
    print()
    print("## IMPORT ERROR:" + msg)
    print()


try:
    import pytest
except ImportError:
    import_error("Please install pytest to run tests.")
    raise

try:
    from dnalloc import milp
except ImportError:
    import_error("You must install the dnalloc module before running tests.")
    raise

try:
    import numpy as np
    from numpy.testing import assert_almost_equal
except ImportError:
    import_error("Please install numpy.")
    raise

try:
    import scipy.sparse as sp
except ImportError:
    import_error("Please install scipy.")
    raise

# max x  s.t.  0 <= x <= 1
box = milp.MilpInstance(c=np.array([-1.0]), A=sp.csr_matrix([[-1.0]]), h=np.array([-1.0]))

# max x1 + x2  s.t.  2 x1 + 2 x2 <= 3,  x binary
pair = milp.MilpInstance(
    c=np.array([-1.0, -1.0]),
    A=sp.csr_matrix([[-2.0, -2.0]]),
    h=np.array([-3.0]),
    ub=np.ones(2),
    integrality=[True, True],
)

# min x2 - x1  s.t.  x1 + x2 = 1.5,  x1 in {0, 1},  x2 >= 0
mixed = milp.MilpInstance(
    c=np.array([-1.0, 1.0]),
    A_eq=sp.csr_matrix([[1.0, 1.0]]),
    b_eq=np.array([1.5]),
    ub=np.array([1.0, np.inf]),
    integrality=[True, False],
)

# 0.2 <= x <= 0.8,  x integer
gap = milp.MilpInstance(
    c=np.array([1.0]),
    A=sp.csr_matrix([[1.0], [-1.0]]),
    h=np.array([0.2, -0.8]),
    integrality=[True],
)

settings = [
    {"backend": "bnb", "engine": "highs"},
    {"backend": "bnb", "engine": "simplex"},
    {"backend": "highs"},
]


@pytest.mark.parametrize("engine", ["highs", "simplex"])
def test_lp(engine):
    sol = milp.solve_lp(box, engine=engine)
    assert sol.status == milp.OPTIMAL
    assert_almost_equal(sol.x[0], 1.0)
    assert_almost_equal(sol.objective, -1.0)
    assert_almost_equal(sol.ineq_duals[0], 1.0)

    sol = milp.solve_lp(pair, engine=engine)
    assert_almost_equal(sol.objective, -1.5)


@pytest.mark.parametrize(
    "instance,expected",
    [(box, -1.0), (pair, -1.0), (mixed, -0.5)],
)
@pytest.mark.parametrize("stgs", settings)
def test_problems(instance, expected, stgs):
    sol = milp.solve_milp(instance, **stgs)
    assert sol.status == milp.OPTIMAL
    assert_almost_equal(sol.objective, expected)
    assert instance.is_feasible(sol.x)
    assert sol.best_bound <= sol.objective + 1e-9


@pytest.mark.parametrize("stgs", settings)
def test_integer_infeasible(stgs):
    assert milp.solve_lp(gap).status == milp.OPTIMAL
    sol = milp.solve_milp(gap, **stgs)
    assert sol.status == milp.INFEASIBLE
    assert not sol.has_incumbent


@pytest.mark.parametrize("engine", ["highs", "simplex"])
def test_unbounded(engine):
    free = milp.MilpInstance(c=np.array([-1.0, 0.0]), integrality=[False, True], ub=[np.inf, 1.0])
    assert milp.solve_lp(free, engine=engine).status == milp.UNBOUNDED
    sol = milp.solve_milp(free, backend="bnb", engine=engine)
    assert sol.status == milp.UNBOUNDED


def test_offset_in_objective():
    shifted = milp.MilpInstance(c=pair.c, A=pair.A, h=pair.h, ub=pair.ub,
                                integrality=pair.integrality, offset=10.0)
    assert_almost_equal(milp.solve_milp(shifted).objective, 9.0)
    assert_almost_equal(milp.solve_lp(shifted).objective, 8.5)
    assert_almost_equal(milp.solve_lp(shifted).dual_objective(shifted), 8.5)


def test_failures():
    with pytest.raises(ValueError):
        milp.solve_lp(box, engine="cplex")

    with pytest.raises(ValueError):
        milp.solve_milp(box, backend="gurobi")

    with pytest.raises(ValueError):
        milp.solve_milp(box, max_iters=10)

    with pytest.raises(ValueError):
        milp.solve_milp(box, backend="bnb", mip_gap=-1.0)

    with pytest.raises(ValueError):
        milp.MilpInstance(c=np.ones(2), lb=np.zeros(3))

    with pytest.raises(ValueError):
        milp.MilpInstance(c=np.ones(2), A=np.ones((1, 3)), h=np.ones(1))

    with pytest.raises(ValueError):
        milp.MilpInstance(c=np.ones(2), keys=("x", "x"))


def test_csc_input_warns():
    with pytest.warns(UserWarning):
        inst = milp.MilpInstance(c=box.c, A=sp.csc_matrix([[-1.0]]), h=box.h)
    assert inst.A.format == "csr"


def test_node_limit():
    sol = milp.solve_milp(pair, backend="bnb", max_nodes=1)
    assert sol.status == milp.LIMIT
    assert sol.best_bound <= -1.0 + 1e-9
