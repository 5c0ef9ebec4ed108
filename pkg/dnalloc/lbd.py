"""Sample average approximation with L-shaped Benders cuts over allocations.

The master minimizes the site cost of an allocation subject to one cut per visited
allocation; each visit solves the Stage II MILP of every sampled scenario
(greedy bound first), then the fixed-discrete LP whose duals shape the cut.
The loop ends when the master has no feasible allocation left, and returns
the visited allocation with the smallest sample-average objective.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from multiprocessing.pool import ThreadPool
from pathlib import Path
from typing import Callable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from dnalloc.greedy import GreedyResult, greedy_stage2
from dnalloc.milp import (
    INFEASIBLE,
    LIMIT,
    OPTIMAL,
    BranchAndBound,
    LinearRow,
    LpSolution,
    MilpInstance,
    SolverError,
    add_cut,
    solve_lp,
    solve_milp,
)
from dnalloc.network import (
    Allocation,
    DistributionNetwork,
    InputError,
    Scenario,
    enumerate_allocations,
)
from dnalloc.stage2 import (
    KAPPA,
    REPAIR,
    SHED,
    RestorationPlan,
    SolveConfig,
    build_stage2,
    extract_plan,
)

logger = logging.getLogger(__name__)


###############################################
#          Allocation evaluation              #
###############################################


@dataclass
class FixedSubproblem:
    """Continuous LP left after fixing kappa, y and kappa_c."""

    instance: MilpInstance
    solution: LpSolution
    discrete_cost: float

    @property
    def value(self) -> float:
        return self.solution.objective + self.discrete_cost


def _discrete_point(instance: MilpInstance, plan: RestorationPlan) -> np.ndarray:
    x = np.zeros(instance.n)
    pos = {k: t for t, k in enumerate(plan.periods)}
    for j in np.flatnonzero(instance.integrality):
        key = instance.keys[j]
        t = pos[key.period]
        if key.role == KAPPA:
            x[j] = plan.operational_state[t][key.index[0]]
        elif key.role == REPAIR:
            x[j] = float(key.index[0] in plan.repairs[t])
        elif key.role == SHED:
            x[j] = plan.dispatch[t].shed[key.index[0]]
        else:
            raise ValueError("unexpected discrete variable %r" % (key,))
    return x


def solve_subproblem_fixed(dn: DistributionNetwork, a: Allocation, s: Scenario,
                           plan: RestorationPlan, cfg: SolveConfig,
                           instance: Optional[MilpInstance] = None) -> FixedSubproblem:
    """LP over the continuous Stage II variables with the plan's discretes fixed.

    @return FixedSubproblem whose LP objective plus ``discrete_cost`` is the Stage II cost.
    """
    if instance is None:
        instance = build_stage2(dn, a, s, cfg)
    lp, dcost = instance.fix_discrete(_discrete_point(instance, plan))
    sol = solve_lp(lp, **cfg.lp_settings())
    if sol.status != OPTIMAL:
        raise SolverError("fixed-discrete LP is %s" % sol.status, a.label, s.name)
    return FixedSubproblem(lp, sol, dcost)


@dataclass
class ScenarioOutcome:
    scenario: Scenario
    value: float
    greedy_bound: float
    plan: RestorationPlan
    greedy: GreedyResult = field(repr=False)
    node_count: int = 0
    fixed: Optional[FixedSubproblem] = field(default=None, repr=False)


@dataclass
class AllocationEvaluation:
    allocation: Allocation
    site_cost: float
    outcomes: Tuple[ScenarioOutcome, ...]
    weights: np.ndarray

    @property
    def stage2_values(self) -> np.ndarray:
        return np.array([o.value for o in self.outcomes])

    @property
    def greedy_bounds(self) -> np.ndarray:
        return np.array([o.greedy_bound for o in self.outcomes])

    @property
    def expected_stage2(self) -> float:
        return float(self.weights @ self.stage2_values)

    @property
    def objective(self) -> float:
        return self.site_cost + self.expected_stage2

    @property
    def loss(self) -> float:
        """Site cost plus the unweighted scenario sum of Stage II costs."""
        return self.site_cost + float(self.stage2_values.sum())

    @property
    def plans(self) -> List[RestorationPlan]:
        return [o.plan for o in self.outcomes]

    @property
    def node_counts(self) -> List[int]:
        return [o.node_count for o in self.outcomes]


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPool(min(workers, len(items))) as pool:
            return pool.map(fn, items)
    return [fn(item) for item in items]


def _scenario_weights(scenarios: Sequence[Scenario]) -> np.ndarray:
    if not scenarios:
        raise InputError("at least one scenario is required")
    w = np.array([s.probability for s in scenarios], dtype=float)
    if abs(w.sum() - 1.0) > 1e-9:
        raise InputError("scenario weights sum to %.12g, expected 1" % w.sum())
    return w


def evaluate_allocation(dn: DistributionNetwork, a: Allocation,
                        scenarios: Sequence[Scenario], cfg: SolveConfig,
                        with_duals: bool = False) -> AllocationEvaluation:
    """Greedy bound, bounded Stage II MILP and, optionally, the fixed LP per scenario."""
    scenarios = tuple(scenarios)
    weights = _scenario_weights(scenarios)
    settings = cfg.milp_settings()

    def run(s):
        try:
            inst = build_stage2(dn, a, s, cfg)
            greedy = greedy_stage2(dn, a, s, cfg)
            sol = solve_milp(inst, upper_bound=greedy.total,
                             incumbent=greedy.incumbent_for(inst), **settings)
            if not sol.has_incumbent:
                raise SolverError("Stage II MILP is %s" % sol.status)
            if sol.status == LIMIT:
                logger.warning("%s stopped at the node limit, gap %.3g",
                               inst.label, sol.objective - sol.best_bound)
            plan = extract_plan(inst, sol, tol=cfg.lp_tolerance)
            fixed = solve_subproblem_fixed(dn, a, s, plan, cfg, inst) if with_duals else None
        except SolverError as exc:
            raise exc.with_context(a.label, s.name) from exc
        logger.debug("%s: J_II=%.10g greedy=%.10g nodes=%d",
                     inst.label, sol.objective, greedy.total, sol.node_count)
        return ScenarioOutcome(s, sol.objective, greedy.total, plan, greedy,
                               sol.node_count, fixed)

    outcomes = _map(run, scenarios, cfg.workers)
    return AllocationEvaluation(a, a.site_cost(dn), tuple(outcomes), weights)


###############################################
#          Benders cuts                       #
###############################################


@dataclass(frozen=True, eq=False)
class BendersCut:
    """beta(a) - relaxation * hamming(a, anchor) <= rhs, beta affine in a."""

    coefficients: np.ndarray
    constant: float
    rhs: float
    anchor: np.ndarray
    relaxation: float = 0.0
    duality_residual: float = 0.0

    def value(self, a) -> float:
        return float(self.coefficients @ np.asarray(a, dtype=float)) + self.constant

    def hamming(self, a) -> float:
        return float(np.abs(np.asarray(a, dtype=float) - self.anchor).sum())

    def row_value(self, a) -> float:
        return self.value(a) - self.relaxation * self.hamming(a)

    def is_satisfied(self, a, tol=0.0) -> bool:
        return self.row_value(a) <= self.rhs + tol

    def safeguarded(self) -> "BendersCut":
        """Relax the row so that only the anchor violates it."""
        peak = self.constant + float(np.maximum(self.coefficients, 0.0).sum())
        return replace(self, relaxation=max(0.0, peak - self.rhs) + 1.0)

    def as_row(self) -> LinearRow:
        flip = 1.0 - 2.0 * self.anchor
        coefs = self.coefficients - self.relaxation * flip
        rhs = self.rhs - self.constant + self.relaxation * float(self.anchor.sum())
        return LinearRow({j: float(v) for j, v in enumerate(coefs) if v != 0.0}, rhs, "<=")


def build_benders_cut(a_star, subproblems: Sequence[FixedSubproblem], site_costs,
                      loss: float, epsilon: float) -> BendersCut:
    """Cut from the fixed-discrete duals, anchored to evaluate to ``loss`` at a*.

    @param a_star       allocation vector the subproblems were solved for.
    @param subproblems  one FixedSubproblem per sampled scenario.
    @param site_costs   site-cost coefficients over the allocation vector.
    @param loss         site cost of a* plus its Stage II cost summed over scenarios.
    @param epsilon      strictly positive margin; rhs = loss - epsilon.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be strictly positive")
    a_star = np.asarray(a_star, dtype=float)
    grad = np.asarray(site_costs, dtype=float).copy()
    raw = 0.0
    origin = np.zeros(a_star.size)
    for sp in subproblems:
        grad -= sp.instance.T.T @ sp.solution.ineq_duals
        raw += sp.solution.dual_objective(sp.instance, alloc=origin) + sp.discrete_cost
    constant = loss - float(grad @ a_star)
    return BendersCut(grad, constant, loss - epsilon, a_star, 0.0, raw - constant)


###############################################
#          Master problem                     #
###############################################


def _master_instance(dn: DistributionNetwork, budget: int, cuts: Sequence[BendersCut],
                     cost=None) -> MilpInstance:
    n_s, n_d = dn.n_sites, dn.n_ders
    rows, h = [], []

    def row(coefs, rhs):
        r = np.zeros(dn.n_alloc)
        for j, v in coefs:
            r[j] += v
        rows.append(r)
        h.append(rhs)

    for u in range(n_s):
        for d in range(n_d):
            row([(u, 1.0), (dn.gen_index(u, d), -1.0)], 0.0)  # DER only at a chosen site
        row([(dn.gen_index(u, d), 1.0) for d in range(n_d)] + [(u, -1.0)], 0.0)  # site used
    for d in range(n_d):
        row([(dn.gen_index(u, d), -1.0) for u in range(n_s)], -1.0)  # each DER at most once
    row([(dn.gen_index(u, d), -1.0) for u in range(n_s) for d in range(n_d)],
        -float(budget))  # budget
    keys = [("y_s", site) for site in dn.candidate_sites] + [
        ("y_g", site, d) for site in dn.candidate_sites for d in range(n_d)
    ]
    inst = MilpInstance(
        c=dn.site_cost_vector() if cost is None else cost,
        A=np.array(rows).reshape(-1, dn.n_alloc),
        h=np.array(h),
        lb=np.zeros(dn.n_alloc),
        ub=np.ones(dn.n_alloc),
        integrality=np.ones(dn.n_alloc, dtype=bool),
        keys=tuple(keys),
        label="master",
    )
    for cut in cuts:
        inst = add_cut(inst, cut.as_row())
    return inst


def _cut_tol(cut: BendersCut) -> float:
    # stays below the margin by which the anchor violates its own cut
    margin = cut.row_value(cut.anchor) - cut.rhs
    return min(1e-9 * max(1.0, abs(cut.rhs)), 0.5 * max(margin, 0.0))


def _admissible(a: Allocation, budget: int, cuts: Sequence[BendersCut]) -> bool:
    vec = a.vector()
    return a.satisfies(budget) and all(c.is_satisfied(vec, _cut_tol(c)) for c in cuts)


def _filter_master(dn, candidates, budget, cuts) -> Optional[Allocation]:
    best, best_key = None, None
    for pos, a in enumerate(candidates):
        if not _admissible(a, budget, cuts):
            continue
        key = (round(a.site_cost(dn), 9), int(a.vector().sum()), pos)
        if best_key is None or key < best_key:
            best, best_key = a, key
    return best


def solve_master(dn: DistributionNetwork, budget: int, cuts: Sequence[BendersCut],
                 allocations: Optional[Sequence[Allocation]] = None,
                 cfg: Optional[SolveConfig] = None) -> Optional[Allocation]:
    """Cheapest allocation that satisfies the placement rules and every cut, or None.

    Ties on site cost go to the allocation with the fewest nonzero binaries.  With
    ``allocations`` given, the master is restricted to that list.
    """
    if not 0 <= budget <= dn.n_ders:
        raise InputError("budget %d outside 0..%d" % (budget, dn.n_ders))
    if allocations is not None:
        return _filter_master(dn, allocations, budget, cuts)
    cfg = cfg or SolveConfig()
    settings = dict(engine=cfg.lp_engine, mip_gap=0.0,
                    lp_tolerance=min(cfg.lp_tolerance, 1e-7), max_nodes=cfg.max_nodes)
    inst = _master_instance(dn, budget, cuts)
    first = BranchAndBound(inst, **settings).solve()
    if first.status == INFEASIBLE:
        return None
    if first.status != OPTIMAL:
        raise SolverError("master problem is %s" % first.status)
    # fewest binaries among the cheapest allocations
    tie = add_cut(_master_instance(dn, budget, cuts, cost=np.ones(dn.n_alloc)),
                  LinearRow(dict(enumerate(inst.c)), first.objective + 1e-9, "<="))
    second = BranchAndBound(tie, **settings).solve(incumbent=first.x)
    x = second.x if second.has_incumbent else first.x
    a = Allocation.from_vector(dn, x)
    if _admissible(a, budget, cuts):
        return a
    logger.warning("master returned %s, which violates a cut in floating point;"
                   " filtering the allocation set instead", a.label)
    return _filter_master(dn, enumerate_allocations(dn, budget), budget, cuts)


###############################################
#          L-shaped loop                      #
###############################################


@dataclass
class IterationRecord:
    iteration: int
    allocation: str
    placement: Mapping[int, int]
    site_cost: float
    stage2: List[float]
    greedy_bounds: List[float]
    objective: float
    incumbent: float
    cut_rhs: float
    cut_relaxation: float
    duality_residual: float
    node_counts: List[int]


@dataclass
class LbdState:
    iteration: int = 0
    visited: List[Allocation] = field(default_factory=list)
    cuts: List[BendersCut] = field(default_factory=list)
    incumbent_value: float = np.inf
    incumbent: Optional[Allocation] = None

    def update(self, evaluation: AllocationEvaluation, cut: BendersCut):
        self.iteration += 1
        self.visited.append(evaluation.allocation)
        self.cuts.append(cut)
        if evaluation.objective < self.incumbent_value:
            self.incumbent_value = evaluation.objective
            self.incumbent = evaluation.allocation


@dataclass
class LbdResult:
    allocation: Allocation
    objective: float
    records: List[IterationRecord]
    cuts: List[BendersCut]
    evaluations: List[AllocationEvaluation] = field(repr=False)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def best_evaluation(self) -> AllocationEvaluation:
        for ev in self.evaluations:
            if ev.allocation == self.allocation:
                return ev
        raise LookupError(self.allocation.label)


def run_lbd(dn: DistributionNetwork, scenarios: Sequence[Scenario], budget: int,
            cfg: Optional[SolveConfig] = None,
            allocations: Optional[Sequence[Allocation]] = None) -> LbdResult:
    """Alternate master and scenario subproblems until the master is empty."""
    cfg = cfg or SolveConfig()
    scenarios = tuple(scenarios)
    _scenario_weights(scenarios)
    if allocations is not None and not allocations:
        raise InputError("the allocation restriction is empty")
    site_costs = dn.site_cost_vector()
    state = LbdState()
    records, evaluations = [], []
    seen = set()
    while True:
        a = solve_master(dn, budget, state.cuts, allocations, cfg)
        if a is None:
            break
        if a.label in seen:
            raise SolverError("master proposed a visited allocation again", a.label)
        seen.add(a.label)
        ev = evaluate_allocation(dn, a, scenarios, cfg, with_duals=True)
        cut = build_benders_cut(a.vector(), [o.fixed for o in ev.outcomes], site_costs,
                                ev.loss, cfg.epsilon_cut)
        if cfg.cut_mode == "safeguarded":
            cut = cut.safeguarded()
        state.update(ev, cut)
        evaluations.append(ev)
        records.append(IterationRecord(
            iteration=state.iteration,
            allocation=a.label,
            placement=dict(a.placement),
            site_cost=ev.site_cost,
            stage2=ev.stage2_values.tolist(),
            greedy_bounds=ev.greedy_bounds.tolist(),
            objective=ev.objective,
            incumbent=state.incumbent_value,
            cut_rhs=cut.rhs,
            cut_relaxation=cut.relaxation,
            duality_residual=cut.duality_residual,
            node_counts=ev.node_counts,
        ))
        logger.info("iteration %d: %s J_I=%.10g J=%.10g incumbent=%.10g",
                    state.iteration, a.label, ev.site_cost, ev.objective,
                    state.incumbent_value)
    if state.incumbent is None:
        raise SolverError("no allocation satisfies the budget")
    return LbdResult(state.incumbent, state.incumbent_value, records, state.cuts, evaluations)


def write_trace(path, records: Sequence[IterationRecord], manifest=None) -> Path:
    """One JSON object per line: the manifest, then one record per iteration."""
    path = Path(path)
    lines = [json.dumps({"manifest": manifest or {}}, sort_keys=True)]
    for rec in records:
        d = asdict(rec)
        d["placement"] = {str(k): v for k, v in d["placement"].items()}
        lines.append(json.dumps(d, sort_keys=True))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError("cannot write %s: %s" % (path, exc.strerror or exc)) from exc
    return path


###############################################
#          Baselines                          #
###############################################


@dataclass
class BaselineResult:
    method: str
    allocation: Allocation
    objective: float
    evaluations: List[AllocationEvaluation] = field(repr=False)

    @property
    def best_evaluation(self) -> AllocationEvaluation:
        return next(ev for ev in self.evaluations if ev.allocation == self.allocation)


def _best_of(method, dn, candidates, scenarios, cfg) -> BaselineResult:
    evaluations = [evaluate_allocation(dn, a, scenarios, cfg) for a in candidates]
    if not evaluations:
        raise InputError("%s: no allocation to evaluate" % method)
    best = min(range(len(evaluations)), key=lambda i: (evaluations[i].objective, i))
    logger.info("%s: %s J=%.10g over %d allocations", method,
                evaluations[best].allocation.label, evaluations[best].objective,
                len(evaluations))
    return BaselineResult(method, evaluations[best].allocation,
                          evaluations[best].objective, evaluations)


def baseline_se(dn: DistributionNetwork, scenarios: Sequence[Scenario], budget: int,
                cfg: SolveConfig, allocations: Optional[Sequence[Allocation]] = None
                ) -> BaselineResult:
    """Evaluate every allocation and keep the best."""
    pool = list(allocations) if allocations is not None else enumerate_allocations(dn, budget)
    return _best_of("SE", dn, [a for a in pool if a.satisfies(budget)], scenarios, cfg)


def baseline_bora(dn: DistributionNetwork, scenarios: Sequence[Scenario], budget: int,
                  cfg: SolveConfig, n_samples: int = 10, seed: int = 0,
                  allocations: Optional[Sequence[Allocation]] = None) -> BaselineResult:
    """Best of ``n_samples`` allocations drawn without replacement."""
    if n_samples < 1:
        raise InputError("n_samples must be positive")
    pool = list(allocations) if allocations is not None else enumerate_allocations(dn, budget)
    pool = [a for a in pool if a.satisfies(budget)]
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(pool), size=min(n_samples, len(pool)), replace=False))
    return _best_of("BoRA", dn, [pool[i] for i in picks], scenarios, cfg)


def spread_allocation(dn: DistributionNetwork, budget: int) -> Allocation:
    """Spread ``budget`` DERs over distinct sites, as far apart as possible.

    The site set maximizes the minimum pairwise hop distance among the chosen
    sites (a single site has no pairs, so every site ties); ties go to the
    lexicographically smallest node ids.  DERs are then placed largest first
    on the sites in ascending node order.
    """
    if not 0 <= budget <= dn.n_ders:
        raise InputError("budget %d outside 0..%d" % (budget, dn.n_ders))
    order = sorted(range(dn.n_ders), key=lambda d: (-dn.ders[d].pg_max, d))
    count = min(budget, dn.n_sites)
    hops = dn.hop_distance

    def spread(sites):
        return min((hops[i].get(j, np.inf) for i, j in itertools.combinations(sites, 2)),
                   default=np.inf)

    best = None
    for sites in itertools.combinations(sorted(dn.candidate_sites), count):
        if best is None or spread(sites) > spread(best):
            best = sites
    return Allocation.from_placement(dn, dict(zip(order, best or ())))


def baseline_sa(dn: DistributionNetwork, scenarios: Sequence[Scenario], budget: int,
                cfg: SolveConfig) -> BaselineResult:
    return _best_of("SA", dn, [spread_allocation(dn, budget)], scenarios, cfg)
