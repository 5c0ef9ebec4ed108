from __future__ import print_function

import json


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
    import dnalloc
    from dnalloc import lbd
    from dnalloc.metrics import (
        PERFORMANCE_FILE,
        SUMMARY_FILE,
        PeriodCostRow,
        SummaryRow,
        emit_report,
        load_cost,
        load_value,
        period_cost_frame,
        system_performance,
        write_period_costs,
        write_result,
    )
    from dnalloc.stage2 import DispatchState, RestorationPlan, SolveConfig
except ImportError:
    import_error("You must install the dnalloc module before running tests.")
    raise

try:
    import numpy as np
    from numpy.testing import assert_allclose, assert_almost_equal
except ImportError:
    import_error("Please install numpy.")
    raise

try:
    import pandas as pd
except ImportError:
    import_error("Please install pandas.")
    raise

problem = dnalloc.load_fixture()
dn = problem.network


def _plan(sheds):
    """Plan over periods 0..len(sheds)-1; ``sheds[k]`` lists shed nodes, the rest fully served."""
    states = []
    for shed_nodes in sheds:
        shed = np.zeros(dn.n_nodes)
        shed[list(shed_nodes)] = 1.0
        zeros = np.zeros(dn.n_nodes)
        states.append(DispatchState(
            pg=np.zeros((dn.n_sites, dn.n_ders)),
            qg=np.zeros((dn.n_sites, dn.n_ders)),
            gamma=1.0 - shed,
            shed=shed,
            pt=zeros,
            qt=zeros,
            p_flow=np.zeros(dn.n_edges),
            q_flow=np.zeros(dn.n_edges),
            nu=np.ones(dn.n_nodes),
        ))
    n = len(sheds)
    return RestorationPlan(tuple(range(n)), tuple(frozenset() for _ in range(n)),
                           np.zeros((n, dn.n_edges)), tuple(states))


@pytest.mark.parametrize(
    "node,shed,gamma,expected",
    [
        (2, 0, 1.0, 0.0),
        (2, 0, 1.0 / 3.0, 300.0),
        (2, 1, 0.0, 1000.0),
        (3, 0, 0.5, 150.0),
        (4, 1, 0.0, 650.0),
        (1, 1, 0.0, 0.0),
    ],
)
def test_load_cost(node, shed, gamma, expected):
    params = dn.nodes[node]
    assert_almost_equal(load_cost(params, shed, gamma), expected)
    assert_almost_equal(load_value(params, shed, gamma), params.cost_shed - expected)


def test_period_costs_of_plan():
    plan = _plan([[2, 3, 4], [2], []])
    assert_allclose(plan.period_costs(dn), [2550.0, 1000.0, 0.0])
    assert_almost_equal(plan.total_cost(dn), 3550.0)


def test_system_performance():
    plans = [_plan([[2, 3, 4], [2], []]), _plan([[2, 3, 4], [2, 3, 4], []])]
    series = system_performance(plans, dn, labels=["a", "b"])
    assert list(series.periods) == [0, 1, 2]
    expected_k1 = 0.5 * 100.0 * (1 - 1000.0 / 2550.0)
    assert_allclose(series.performance, [0.0, expected_k1, 100.0])
    assert series.is_monotone()
    assert_allclose(series.period_costs["b"], [2550.0, 2550.0, 0.0])
    assert_almost_equal(series.expected_objective, 0.5 * 3550.0 + 0.5 * 5100.0)

    weighted = system_performance(plans, dn, weights=[1.0, 0.0])
    assert_almost_equal(weighted.performance[1], 100.0 * (1 - 1000.0 / 2550.0))

    worse = system_performance([_plan([[2], [2, 3], []])], dn)
    assert not worse.is_monotone()


def test_empty_performance():
    series = system_performance([], dn)
    assert series.periods.size == 0
    assert series.performance.size == 0


def test_performance_under_a2():
    a2 = problem.named_allocation("A2")
    ev = lbd.evaluate_allocation(dn, a2, problem.scenarios,
                                 SolveConfig(droop_enabled=False, milp_backend="highs"))
    series = system_performance(ev.plans, dn, ev.weights)
    r = 100.0 * (1 - 950.0 / 2550.0)
    assert_allclose(series.performance, [r, r, r, r, 100.0], rtol=1e-6)


def _read(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest: ")
    return json.loads(lines[0][len("# manifest: "):]), lines[1:]


def test_emit_report(tmp_path):
    plans = [_plan([[2, 3, 4], [2], []])]
    series = {"LBD": system_performance(plans, dn)}
    summary = [SummaryRow("LBD", 200.0, 2850.0), SummaryRow("SA", 0.0, 3400.5)]
    manifest = {"seed": 3, "command": "solve"}
    perf, summ = emit_report(series, summary, tmp_path / "out", manifest)
    assert perf.name == PERFORMANCE_FILE
    assert summ.name == SUMMARY_FILE

    meta, lines = _read(perf)
    assert meta == manifest
    assert lines[0] == "method,period,performance"
    assert lines[1] == "LBD,0,0.0"
    assert len(lines) == 4

    meta, lines = _read(summ)
    assert lines[0].split() == ["method", "J_I", "E_J_II", "total"]
    assert lines[1].split() == ["LBD", "200.0", "2850.0", "3050.0"]
    assert lines[2].split() == ["SA", "0.0", "3400.5", "3400.5"]

    first = perf.read_bytes()
    emit_report(series, summary, tmp_path / "out", manifest)
    assert perf.read_bytes() == first


def test_empty_summary(tmp_path):
    _, summ = emit_report({}, [], tmp_path)
    _, lines = _read(summ)
    assert lines == ["method  J_I  E_J_II  total"]


def test_period_cost_frame():
    rows = [PeriodCostRow("A1", "S1", [1000, 450, 450, 450, 0])]
    frame = period_cost_frame(rows, 5)
    assert list(frame.columns) == ["allocation", "scenario", "k0", "k1", "k2", "k3", "k4", "total"]
    assert frame.loc[0, "total"] == 2350.0

    rows.append(PeriodCostRow("A1", "S1", [1000, 450, 450, 450, 0], "greedy"))
    frame = period_cost_frame(rows, 5)
    assert "method" in frame.columns
    assert pd.isna(frame.loc[0, "method"])


def test_write_period_costs(tmp_path):
    rows = [PeriodCostRow("A3", "S2", [1550.0, 950.0, 450.0, 450.0, 0.0])]
    path = write_period_costs(rows, 5, tmp_path, {"allocation": "A3"})
    _, lines = _read(path)
    assert lines == ["allocation,scenario,k0,k1,k2,k3,k4,total",
                     "A3,S2,1550.0,950.0,450.0,450.0,0.0,3400.0"]


def test_write_result(tmp_path):
    payload = {"objective": 3050.0, "allocation": "0:1,1:4"}
    path = write_result(payload, tmp_path, {"seed": 3})
    doc = json.loads(path.read_text())
    assert doc == {"objective": 3050.0, "allocation": "0:1,1:4", "manifest": {"seed": 3}}

    bare = json.loads(write_result(payload, tmp_path / "bare").read_text())
    assert bare["manifest"] == {}

    with pytest.raises(ValueError):
        write_result({"manifest": 1}, tmp_path)


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="cannot create"):
        write_result({}, blocker / "sub")
