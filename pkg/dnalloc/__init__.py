#!/usr/bin/env python
"""DER allocation and post-storm restoration planning for radial feeders."""
from dnalloc.greedy import GreedyResult, greedy_stage2
from dnalloc.lbd import (
    AllocationEvaluation,
    BaselineResult,
    BendersCut,
    LbdResult,
    baseline_bora,
    baseline_sa,
    baseline_se,
    build_benders_cut,
    evaluate_allocation,
    run_lbd,
    solve_master,
    solve_subproblem_fixed,
)
from dnalloc.metrics import (
    PerformanceSeries,
    emit_report,
    load_cost,
    load_value,
    system_performance,
)
from dnalloc.milp import (
    FEASIBLE,
    INFEASIBLE,
    LIMIT,
    NUMERICAL,
    OPTIMAL,
    UNBOUNDED,
    BranchAndBound,
    LinearRow,
    LpSolution,
    MilpInstance,
    MilpSolution,
    NonIntegralError,
    SolverError,
    add_cut,
    solve_lp,
    solve_milp,
)
from dnalloc.network import (
    Allocation,
    DerParams,
    DistributionNetwork,
    EdgeParams,
    InputError,
    NodeParams,
    ProblemData,
    Scenario,
    enumerate_allocations,
    load_fixture,
    load_problem,
    sample_scenarios,
    validate_network,
)
from dnalloc.stage2 import (
    RestorationPlan,
    SolveConfig,
    VarKey,
    build_period_mip,
    build_stage2,
    check_plan,
    extract_plan,
    write_lp,
)

__version__ = "0.1.0"
