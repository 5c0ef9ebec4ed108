from __future__ import print_function, division
import json
from dataclasses import replace

import numpy as np
import gen_random_network as tools
import dnalloc
from dnalloc import lbd
from dnalloc.metrics import system_performance
from dnalloc.network import (
    Allocation,
    DerParams,
    DistributionNetwork,
    EdgeParams,
    InputError,
    NodeParams,
    Scenario,
    enumerate_allocations,
)
from dnalloc.stage2 import SolveConfig

#############################################
#   L-shaped search, cuts and baselines     #
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

problem = dnalloc.load_fixture()
dn = problem.network
scenarios = problem.scenarios
named = [problem.named_allocation(n) for n in ("A1", "A2", "A3")]
A1, A2, A3 = named
cfg = SolveConfig(droop_enabled=False)
fast = SolveConfig(droop_enabled=False, milp_backend="highs")

EXPECTED = {"A1": 3050.0, "A2": 3800.0, "A3": 3233.0 + 1.0 / 3.0}


@pytest.fixture(scope="module")
def restricted():
    return lbd.run_lbd(dn, scenarios, 2, cfg, allocations=named)


def test_restricted_search(restricted):
    assert restricted.allocation == A1
    np.testing.assert_allclose(restricted.objective, 3050.0, rtol=1e-6)
    assert restricted.iterations == 3
    # cheapest site cost first
    assert [r.allocation for r in restricted.records] == [A2.label, A3.label, A1.label]
    np.testing.assert_allclose([r.site_cost for r in restricted.records], [0, 100, 200])
    np.testing.assert_allclose([r.objective for r in restricted.records],
                               [EXPECTED["A2"], EXPECTED["A3"], EXPECTED["A1"]], rtol=1e-6)
    np.testing.assert_allclose([r.incumbent for r in restricted.records],
                               [EXPECTED["A2"], EXPECTED["A3"], EXPECTED["A1"]], rtol=1e-6)
    for r in restricted.records:
        assert all(g >= v - 1e-6 for g, v in zip(r.greedy_bounds, r.stage2))


def test_restricted_stage2_values(restricted):
    best = restricted.best_evaluation
    np.testing.assert_allclose(best.stage2_values, [2350, 2400, 3800], rtol=1e-6)
    a3 = restricted.evaluations[1]
    assert a3.allocation == A3
    np.testing.assert_allclose(a3.stage2_values, [2300, 3400, 3700], rtol=1e-6)


def test_cuts_exclude_only_their_anchor(restricted):
    for cut, ev in zip(restricted.cuts, restricted.evaluations):
        assert not cut.is_satisfied(ev.allocation.vector())
        for other in enumerate_allocations(dn, 2):
            if other != ev.allocation:
                assert cut.is_satisfied(other.vector())


def test_cut_at_a1():
    ev = lbd.evaluate_allocation(dn, A1, scenarios, fast, with_duals=True)
    np.testing.assert_allclose(ev.loss, 200.0 + 2350.0 + 2400.0 + 3800.0, rtol=1e-6)
    cut = lbd.build_benders_cut(A1.vector(), [o.fixed for o in ev.outcomes],
                                dn.site_cost_vector(), ev.loss, 1e-3)
    np.testing.assert_allclose(cut.value(A1.vector()), 8750.0, rtol=1e-9)
    np.testing.assert_allclose(cut.rhs, 8750.0 - 1e-3)
    assert cut.relaxation == 0.0
    assert not cut.is_satisfied(A1.vector())
    assert abs(cut.duality_residual) <= 1e-4 * 8750.0
    guarded = cut.safeguarded()
    assert guarded.relaxation > 0
    assert not guarded.is_satisfied(A1.vector())
    assert guarded.is_satisfied(A3.vector())

    with pytest.raises(ValueError):
        lbd.build_benders_cut(A1.vector(), [o.fixed for o in ev.outcomes],
                              dn.site_cost_vector(), ev.loss, 0.0)


def test_fixed_subproblem_recomposes():
    only = replace(scenarios[0], probability=1.0)
    ev = lbd.evaluate_allocation(dn, A1, [only], fast)
    plan = ev.outcomes[0].plan
    sp = lbd.solve_subproblem_fixed(dn, A1, only, plan, fast)
    np.testing.assert_allclose(sp.value, 2350.0, rtol=1e-6)
    np.testing.assert_allclose(sp.solution.dual_objective(sp.instance) + sp.discrete_cost,
                               2350.0, rtol=1e-6)
    assert sp.instance.integrality.sum() == 0


def test_evaluate_rejects_bad_weights():
    with pytest.raises(InputError):
        lbd.evaluate_allocation(dn, A1, [], fast)
    half = [Scenario(s.failed_edges, 0.5, s.name) for s in scenarios]
    with pytest.raises(InputError):
        lbd.evaluate_allocation(dn, A1, half, fast)


def test_workers_agree():
    one = lbd.evaluate_allocation(dn, A3, scenarios, fast)
    many = lbd.evaluate_allocation(dn, A3, scenarios, replace(fast, workers=3))
    np.testing.assert_allclose(one.stage2_values, many.stage2_values, rtol=1e-9)
    assert [o.scenario.name for o in many.outcomes] == ["S1", "S2", "S3"]


def _exclude(a):
    return lbd.BendersCut(np.zeros(dn.n_alloc), 1.0, 0.0, a.vector()).safeguarded()


def test_master_without_cuts():
    first = lbd.solve_master(dn, 2, [])
    assert first == Allocation.empty(dn)
    assert lbd.solve_master(dn, 2, [], named) == A2


def test_master_next_cheapest():
    nxt = lbd.solve_master(dn, 2, [_exclude(Allocation.empty(dn))])
    assert nxt.site_cost(dn) == 0.0
    assert nxt.n_assigned == 1
    assert set(nxt.placement.values()) <= {2, 3}


def test_master_exhausted():
    cuts = [_exclude(a) for a in enumerate_allocations(dn, 2)]
    assert len(cuts) == 25
    assert lbd.solve_master(dn, 2, cuts) is None
    assert lbd.solve_master(dn, 2, cuts, named) is None


def test_master_errors():
    with pytest.raises(InputError):
        lbd.solve_master(dn, 3, [])
    with pytest.raises(InputError):
        lbd.run_lbd(dn, scenarios, 2, fast, allocations=[])


def test_printed_cuts_have_no_relaxation():
    res = lbd.run_lbd(dn, scenarios, 2, replace(fast, cut_mode="printed"), allocations=named)
    assert res.iterations >= 1
    assert all(c.relaxation == 0.0 for c in res.cuts)


def test_baselines_on_restriction():
    se = lbd.baseline_se(dn, scenarios, 2, fast, named)
    assert se.method == "SE"
    assert se.allocation == A1
    np.testing.assert_allclose(se.objective, 3050.0, rtol=1e-6)

    bora = lbd.baseline_bora(dn, scenarios, 2, fast, n_samples=10, seed=0, allocations=named)
    assert bora.allocation == A1
    assert len(bora.evaluations) == 3

    one = lbd.baseline_bora(dn, scenarios, 2, fast, n_samples=1, seed=4, allocations=named)
    assert len(one.evaluations) == 1
    assert one.objective >= se.objective - 1e-6

    with pytest.raises(InputError):
        lbd.baseline_bora(dn, scenarios, 2, fast, n_samples=0)


def test_spread_allocation():
    assert lbd.spread_allocation(dn, 2).placement == {0: 2, 1: 3}
    # one site has no pairs to spread, so the lowest node wins
    assert lbd.spread_allocation(dn, 1).placement == {0: 1}
    assert lbd.spread_allocation(dn, 0) == Allocation.empty(dn)
    sa = lbd.baseline_sa(dn, scenarios, 2, fast)
    assert sa.method == "SA"
    assert sa.allocation.placement == {0: 2, 1: 3}
    assert sa.best_evaluation.allocation == sa.allocation


def test_spread_ignores_substation():
    # path 0-1-2-3-4: the farthest pair of sites is {1, 4}, whatever the
    # distance to the substation
    path = DistributionNetwork(
        tuple(NodeParams() for _ in range(5)),
        tuple(EdgeParams(i, i + 1, 0.1, 0.1) for i in range(4)),
        candidate_sites=(1, 2, 3, 4),
        ders=(DerParams(0.3, 0.5), DerParams(0.6, 0.5)),
    )
    assert lbd.spread_allocation(path, 2).placement == {1: 1, 0: 4}
    assert lbd.spread_allocation(path, 1).placement == {1: 1}


def test_performance_is_monotone(restricted):
    for ev in restricted.evaluations:
        series = system_performance(ev.plans, dn, ev.weights)
        assert series.is_monotone()
        np.testing.assert_allclose(series.performance[-1], 100.0)


def test_write_trace(tmp_path, restricted):
    path = lbd.write_trace(tmp_path / "trace.jsonl", restricted.records, {"seed": 0})
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + restricted.iterations
    assert json.loads(lines[0]) == {"manifest": {"seed": 0}}
    last = json.loads(lines[-1])
    assert last["iteration"] == 3
    assert last["placement"] == {"0": 1, "1": 4}
    assert len(last["stage2"]) == 3
    assert len(last["node_counts"]) == 3


def _corpus(seed):
    rng = np.random.default_rng(1000 + seed)
    net = tools.gen_network(4 + seed % 3, 2, 3, rng)
    return net, tools.gen_scenarios(net, 2 + seed % 3, rng)


def _check_lbd_equals_se(seed, budget):
    net, scen = _corpus(seed)
    config = SolveConfig(milp_backend="highs")
    res = lbd.run_lbd(net, scen, budget, config)
    se = lbd.baseline_se(net, scen, budget, config)
    np.testing.assert_allclose(res.objective, se.objective, rtol=1e-6, atol=1e-6)
    assert res.iterations == len(enumerate_allocations(net, budget))
    for ev in res.evaluations:
        # a repair can raise one period's cost, so only the greedy path is
        # ordered before reconnection
        assert all(not p.invariant_violations() for p in ev.plans)
        greedy = [o.greedy.plan for o in ev.outcomes]
        perf = system_performance(greedy, net, ev.weights).performance
        assert np.all(np.diff(perf[:-1]) >= -1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_lbd_equals_enumeration(seed):
    _check_lbd_equals_se(seed, budget=1)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_lbd_equals_enumeration_full_budget(seed):
    _check_lbd_equals_se(seed, budget=2)


@pytest.mark.slow
def test_fixture_full_search():
    res = lbd.run_lbd(dn, scenarios, 2, fast)
    assert res.iterations == 25
    assert res.objective <= 3050.0 + 1e-6
    se = lbd.baseline_se(dn, scenarios, 2, fast)
    np.testing.assert_allclose(res.objective, se.objective, rtol=1e-6)
