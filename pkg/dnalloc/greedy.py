"""Period-wise greedy repair schedule: an upper bound on the Stage II cost."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from dnalloc.milp import LIMIT, MilpInstance, SolverError, solve_milp
from dnalloc.network import Allocation, DistributionNetwork, Scenario, failed_edge_count_horizon
from dnalloc.stage2 import (
    RestorationPlan,
    SolveConfig,
    VarKey,
    build_period_mip,
    extract_plan,
)

logger = logging.getLogger(__name__)


@dataclass
class GreedyResult:
    plan: RestorationPlan
    period_values: np.ndarray
    values: Dict[VarKey, float] = field(default_factory=dict, repr=False)
    node_count: int = 0

    @property
    def total(self) -> float:
        return float(np.sum(self.period_values))

    def incumbent_for(self, instance: MilpInstance) -> np.ndarray:
        """The greedy plan as a point of a multi-period instance, by variable key."""
        try:
            return np.array([self.values[k] for k in instance.keys], dtype=float)
        except KeyError as exc:
            raise ValueError("greedy plan has no value for %r" % (exc.args[0],)) from None


def greedy_stage2(dn: DistributionNetwork, a: Allocation, s: Scenario,
                  cfg: SolveConfig) -> GreedyResult:
    """Solve the period MIPs for k = 0..K, carrying the operational state forward.

    Each period minimizes its own load cost with the previous period's
    kappa fixed; the plans concatenate into a feasible multi-period plan.
    """
    K = failed_edge_count_horizon(dn)
    settings = cfg.milp_settings()
    prev = None
    plans, period_values = [], []
    values: Dict[VarKey, float] = {}
    nodes = 0
    for k in range(K + 1):
        inst = build_period_mip(dn, a, s, prev, k, cfg)
        try:
            sol = solve_milp(inst, **settings)
            if not sol.has_incumbent:
                raise SolverError("period MIP is %s" % sol.status)
            if sol.status == LIMIT:
                logger.warning("period %d of %s stopped at the node limit", k, inst.label)
            plan = extract_plan(inst, sol, tol=cfg.lp_tolerance)
        except SolverError as exc:
            raise exc.with_context(a.label, s.name, k) from exc
        nodes += sol.node_count
        values.update(zip(inst.keys, sol.x))
        plans.append(plan)
        period_values.append(sol.objective)
        prev = plan.operational_state[-1]
        logger.debug("greedy %s|%s period %d: %.10g (%d nodes)",
                     a.label, s.name, k, sol.objective, sol.node_count)
    return GreedyResult(RestorationPlan.concat(plans), np.array(period_values), values, nodes)
