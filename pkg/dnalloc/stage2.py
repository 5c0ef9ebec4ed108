"""Stage II model: multi-period line repair and islanded dispatch.

Period k = 0 is the post-storm state, periods 1..K-1 allow at most
``crew_capacity`` repairs each, and at k = K every line is back and the
substation feeds the network at nominal voltage.  kappa = 1 means the line
is NOT operational.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from dnalloc.metrics import load_cost
from dnalloc.milp import (
    FEASIBLE,
    LIMIT,
    OPTIMAL,
    MilpInstance,
    MilpSolution,
    NonIntegralError,
    SolverError,
)
from dnalloc.network import (
    Allocation,
    DistributionNetwork,
    InputError,
    Scenario,
    failed_edge_count_horizon,
)

logger = logging.getLogger(__name__)

KAPPA = "kappa"
REPAIR = "repair"
P_FLOW = "p_flow"
Q_FLOW = "q_flow"
NU = "nu"
GAMMA = "gamma"
SHED = "shed"
P_NET = "p_net"
Q_NET = "q_net"
P_GEN = "p_gen"
Q_GEN = "q_gen"


class VarKey(NamedTuple):
    role: str
    period: int
    index: Tuple[int, ...]


@dataclass(frozen=True)
class SolveConfig:
    crew_capacity: int = 1
    big_m: Optional[float] = None
    droop_enabled: bool = True
    epsilon_cut: float = 1e-6
    lp_tolerance: float = 1e-6
    mip_gap: float = 1e-9
    lp_engine: str = "highs"
    milp_backend: str = "bnb"
    max_nodes: int = 200000
    cut_mode: str = "safeguarded"
    workers: int = 1

    def __post_init__(self):
        if int(self.crew_capacity) != self.crew_capacity or self.crew_capacity < 1:
            raise ValueError("crew_capacity must be an integer >= 1")
        if self.big_m is not None and not self.big_m > 0:
            raise ValueError("big_m must be positive")
        if not self.epsilon_cut > 0:
            raise ValueError("epsilon_cut must be positive")
        if self.lp_tolerance <= 0 or self.mip_gap < 0:
            raise ValueError("tolerances must be nonnegative (lp_tolerance positive)")
        if self.lp_engine not in ("highs", "simplex"):
            raise ValueError("lp_engine must be 'highs' or 'simplex'")
        if self.milp_backend not in ("bnb", "highs"):
            raise ValueError("milp_backend must be 'bnb' or 'highs'")
        if self.cut_mode not in ("safeguarded", "printed"):
            raise ValueError("cut_mode must be 'safeguarded' or 'printed'")
        if self.max_nodes < 1 or self.workers < 1:
            raise ValueError("max_nodes and workers must be positive")

    def resolve_big_m(self, dn: DistributionNetwork) -> float:
        return float(self.big_m) if self.big_m is not None else dn.default_big_m()

    def milp_settings(self) -> Dict[str, object]:
        return {
            "engine": self.lp_engine,
            "backend": self.milp_backend,
            "mip_gap": self.mip_gap,
            "lp_tolerance": self.lp_tolerance,
            "max_nodes": self.max_nodes,
        }

    def lp_settings(self) -> Dict[str, object]:
        return {"engine": self.lp_engine, "lp_tolerance": self.lp_tolerance}


@dataclass(frozen=True, eq=False)
class DispatchState:
    pg: np.ndarray  # (sites, ders)
    qg: np.ndarray
    gamma: np.ndarray  # per node
    shed: np.ndarray
    pt: np.ndarray
    qt: np.ndarray
    p_flow: np.ndarray  # per edge
    q_flow: np.ndarray
    nu: np.ndarray  # per node


@dataclass(frozen=True, eq=False)
class RestorationPlan:
    periods: Tuple[int, ...]
    repairs: Tuple[frozenset, ...]
    operational_state: np.ndarray  # (len(periods), edges), 1 = failed
    dispatch: Tuple[DispatchState, ...]

    def period_costs(self, dn: DistributionNetwork) -> np.ndarray:
        return np.array([
            sum(load_cost(dn.nodes[i], st.shed[i], st.gamma[i]) for i in dn.load_nodes)
            for st in self.dispatch
        ])

    def total_cost(self, dn: DistributionNetwork) -> float:
        return float(self.period_costs(dn).sum())

    def invariant_violations(self) -> List[str]:
        out = []
        kap = self.operational_state
        if np.any((kap != 0) & (kap != 1)):
            out.append("operational state is not binary")
        if self.periods and self.periods[0] == 0 and self.repairs[0]:
            out.append("repairs scheduled in period 0")
        for t in range(1, len(self.periods)):
            if self.periods[t] != self.periods[t - 1] + 1:
                out.append("periods are not consecutive")
                break
            if np.any(kap[t] > kap[t - 1]):
                out.append("line failed again in period %d" % self.periods[t])
            fixed = frozenset(np.flatnonzero(kap[t - 1] - kap[t] == 1).tolist())
            if fixed != self.repairs[t]:
                out.append("repairs in period %d disagree with the state change"
                           % self.periods[t])
        return out

    @classmethod
    def concat(cls, plans: Sequence["RestorationPlan"]) -> "RestorationPlan":
        return cls(
            periods=tuple(k for p in plans for k in p.periods),
            repairs=tuple(r for p in plans for r in p.repairs),
            operational_state=np.vstack([p.operational_state for p in plans]),
            dispatch=tuple(d for p in plans for d in p.dispatch),
        )


class _Assembler(object):
    """Collects variables and rows, then emits one MilpInstance."""

    def __init__(self):
        self.keys = []
        self._lb = []
        self._ub = []
        self._cost = []
        self._int = []
        self._ge = ([], [], [])
        self._h = []
        self._t = ([], [], [])
        self._eq = ([], [], [])
        self._b_eq = []
        self.offset = 0.0

    def var(self, role, k, index, lb=-math.inf, ub=math.inf, cost=0.0, integer=False):
        self.keys.append(VarKey(role, k, tuple(index)))
        self._lb.append(lb)
        self._ub.append(ub)
        self._cost.append(cost)
        self._int.append(integer)
        return len(self.keys) - 1

    def ge(self, terms, rhs, alloc=()):
        """sum(coef * x) >= rhs - sum(T_j * a_j)."""
        row = len(self._h)
        for col, coef in terms:
            self._ge[0].append(row)
            self._ge[1].append(col)
            self._ge[2].append(coef)
        for j, coef in alloc:
            self._t[0].append(row)
            self._t[1].append(j)
            self._t[2].append(coef)
        self._h.append(rhs)

    def eq(self, terms, rhs):
        row = len(self._b_eq)
        for col, coef in terms:
            self._eq[0].append(row)
            self._eq[1].append(col)
            self._eq[2].append(coef)
        self._b_eq.append(rhs)

    def build(self, alloc, label, meta):
        n = len(self.keys)

        def coo(parts, rows, cols):
            return sparse.coo_matrix((parts[2], (parts[0], parts[1])), shape=(rows, cols)).tocsr()

        return MilpInstance(
            c=np.array(self._cost),
            A=coo(self._ge, len(self._h), n),
            h=np.array(self._h),
            A_eq=coo(self._eq, len(self._b_eq), n),
            b_eq=np.array(self._b_eq),
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            integrality=np.array(self._int, dtype=bool),
            T=coo(self._t, len(self._h), alloc.size),
            alloc=alloc,
            offset=self.offset,
            keys=tuple(self.keys),
            label=label,
            meta=meta,
        )


@dataclass(frozen=True)
class _Context:
    dn: DistributionNetwork
    a: Allocation
    s: Scenario
    cfg: SolveConfig
    K: int
    big_m: float


def _context(dn, a, s, cfg) -> _Context:
    if tuple(a.site_ids) != dn.candidate_sites or len(a.sites) != dn.n_sites:
        raise InputError("allocation does not match the network's candidate sites")
    if any(len(row) != dn.n_ders for row in a.assignment):
        raise InputError("allocation does not match the network's DERs")
    unknown = [e for e in s.failed_edges if not 0 <= e < dn.n_edges]
    if unknown:
        raise InputError("scenario %r references unknown edges %s" % (s.name, unknown))
    missing = sorted(dn.substation_edges - s.failed_edges)
    if missing:
        raise InputError("scenario %r leaves substation edges %s intact; "
                         "build it with Scenario.build" % (s.name, missing))
    return _Context(dn, a, s, cfg, failed_edge_count_horizon(dn), cfg.resolve_big_m(dn))


def _meta(ctx, periods):
    dn = ctx.dn
    return {
        "n_nodes": dn.n_nodes,
        "n_edges": dn.n_edges,
        "n_sites": dn.n_sites,
        "n_ders": dn.n_ders,
        "substation": dn.substation_id,
        "periods": tuple(periods),
        "allocation": ctx.a.label,
        "scenario": ctx.s.name,
    }


def _emit_period(asm, ctx, k, prev, prev_is_var):
    dn, cfg, L = ctx.dn, ctx.cfg, ctx.big_m
    failed = ctx.s.failed_edges
    last = k == ctx.K

    kappa, repair = {}, {}
    for e in range(dn.n_edges):
        if e not in failed:
            kb, yb = (0, 0), (0, 0)  # undamaged
        elif k == 0:
            kb, yb = (1, 1), (0, 0)  # initial state
        elif last:
            kb, yb = (0, 0), (0, 1)  # all back at K
        elif e in dn.substation_edges:
            kb, yb = (1, 1), (0, 0)  # islanded until K
        else:
            kb, yb = (0, 1), (0, 1)
        kappa[e] = asm.var(KAPPA, k, (e,), *kb, integer=True)
        repair[e] = asm.var(REPAIR, k, (e,), *yb, integer=True)

    if k > 0:
        for e in sorted(failed):
            # kappa^{k-1} - y^k - kappa^k = 0
            terms = [(repair[e], -1.0), (kappa[e], -1.0)]
            if prev_is_var:
                asm.eq(terms + [(prev[e], 1.0)], 0.0)
            else:
                asm.eq(terms, -float(prev[e]))
        crew = [(repair[e], -1.0) for e in sorted(failed) if e not in dn.substation_edges]
        if crew and not last:
            asm.ge(crew, -float(cfg.crew_capacity))  # crews

    nu = {}
    for i in range(dn.n_nodes):
        if last and i == dn.substation_id:
            nu[i] = asm.var(NU, k, (i,), dn.nominal_sq_voltage, dn.nominal_sq_voltage)
        else:
            nu[i] = asm.var(NU, k, (i,))

    gamma, shed, pt, qt = {}, {}, {}, {}
    for i in dn.load_nodes:
        node = dn.nodes[i]
        gamma[i] = asm.var(GAMMA, k, (i,), 0.0, 1.0, cost=-node.cost_control)
        shed[i] = asm.var(SHED, k, (i,), 0.0, 1.0,
                          cost=node.cost_shed - node.cost_control, integer=True)
        pt[i] = asm.var(P_NET, k, (i,))
        qt[i] = asm.var(Q_NET, k, (i,))
        asm.offset += node.cost_control

    pg, qg = {}, {}
    for u in range(dn.n_sites):
        for d, der in enumerate(dn.ders):
            pg[u, d] = asm.var(P_GEN, k, (u, d), 0.0, der.pg_max)
            qg[u, d] = asm.var(Q_GEN, k, (u, d), -der.q_limit, der.q_limit)

    P, Q = {}, {}
    for e in range(dn.n_edges):
        P[e] = asm.var(P_FLOW, k, (e,))
        Q[e] = asm.var(Q_FLOW, k, (e,))

    for (u, d), col in pg.items():
        der = dn.ders[d]
        site = dn.candidate_sites[u]
        node = dn.nodes[site]
        g = dn.gen_index(u, d)
        asm.ge([(col, -1.0)], 0.0, alloc=[(g, der.pg_max)])  # allocated capacity
        asm.ge([(col, der.pf_tan), (qg[u, d], -1.0)], 0.0)  # power factor
        asm.ge([(col, der.pf_tan), (qg[u, d], 1.0)], 0.0)
        if last:
            continue
        if cfg.droop_enabled:  # droop
            asm.ge([(nu[site], -1.0), (qg[u, d], -der.droop_coeff)],
                   -der.v_ref - L, alloc=[(g, -L)])
            asm.ge([(nu[site], 1.0), (qg[u, d], der.droop_coeff)],
                   der.v_ref - L, alloc=[(g, -L)])
        if node.has_dg_bounds:
            asm.ge([(nu[site], 1.0)], node.v_dg_min - L, alloc=[(g, -L)])
            asm.ge([(nu[site], -1.0)], -node.v_dg_max - L, alloc=[(g, -L)])

    for i in dn.load_nodes:
        node = dn.nodes[i]
        if not last:  # served loads stay in band
            asm.ge([(shed[i], 1.0), (nu[i], 1.0)], node.v_load_min)
            asm.ge([(shed[i], 1.0), (nu[i], -1.0)], -node.v_load_max)
        # load fraction
        asm.ge([(gamma[i], 1.0), (shed[i], node.gamma_min)], node.gamma_min)
        asm.ge([(gamma[i], -1.0), (shed[i], -1.0)], -1.0)
        local = [(u, d) for (u, d) in pg if dn.candidate_sites[u] == i]
        # net consumption
        asm.eq([(pt[i], 1.0), (gamma[i], -node.pc_max)] + [(pg[g], 1.0) for g in local], 0.0)
        asm.eq([(qt[i], 1.0), (gamma[i], -node.qc_max)] + [(qg[g], 1.0) for g in local], 0.0)

    for e, edge in enumerate(dn.edges):
        j = edge.to_node
        below = dn.out_edges.get(j, ())
        # flow balance
        asm.eq([(P[e], 1.0), (pt[j], -1.0)] + [(P[l], -1.0) for l in below], 0.0)
        asm.eq([(Q[e], 1.0), (qt[j], -1.0)] + [(Q[l], -1.0) for l in below], 0.0)
        for flow in (P[e], Q[e]):  # no flow on failed lines
            asm.ge([(flow, -1.0), (kappa[e], -L)], -L)
            asm.ge([(flow, 1.0), (kappa[e], -L)], -L)
        drop = [(nu[edge.from_node], 1.0), (nu[j], -1.0),
                (P[e], -2.0 * edge.resistance), (Q[e], -2.0 * edge.reactance)]
        asm.ge(drop + [(kappa[e], L)], 0.0)  # voltage drop
        asm.ge([(col, -coef) for col, coef in drop] + [(kappa[e], L)], 0.0)

    return kappa, repair


def build_stage2(dn: DistributionNetwork, a: Allocation, s: Scenario,
                 cfg: SolveConfig) -> MilpInstance:
    """The multi-period Stage II instance for one allocation and scenario."""
    ctx = _context(dn, a, s, cfg)
    asm = _Assembler()
    prev = None
    repair_cols = {e: [] for e in s.failed_edges}
    for k in range(ctx.K + 1):
        prev, repair = _emit_period(asm, ctx, k, prev, prev_is_var=True)
        for e in s.failed_edges:
            repair_cols[e].append(repair[e])
    for e in sorted(s.failed_edges):  # one repair per line
        asm.ge([(col, -1.0) for col in repair_cols[e]], -1.0)
    return asm.build(a.vector(), "stage2[%s|%s]" % (a.label, s.name),
                     _meta(ctx, range(ctx.K + 1)))


def build_period_mip(dn: DistributionNetwork, a: Allocation, s: Scenario,
                     prev_state, k: int, cfg: SolveConfig) -> MilpInstance:
    """Single-period slice with kappa^{k-1} fixed to ``prev_state``."""
    ctx = _context(dn, a, s, cfg)
    if not 0 <= k <= ctx.K:
        raise InputError("period %d outside 0..%d" % (k, ctx.K))
    prev = None
    if k > 0:
        prev = np.asarray(prev_state, dtype=float)
        if prev.shape != (dn.n_edges,) or np.any((prev != 0) & (prev != 1)):
            raise InputError("previous state must be a 0/1 vector over edges")
        if any(prev[e] for e in range(dn.n_edges) if e not in s.failed_edges):
            raise InputError("previous state marks a never-failed edge as failed")
        prev = dict(enumerate(prev))
    asm = _Assembler()
    _emit_period(asm, ctx, k, prev, prev_is_var=False)
    return asm.build(a.vector(), "period %d[%s|%s]" % (k, a.label, s.name), _meta(ctx, [k]))


def extract_plan(instance: MilpInstance, solution: MilpSolution, tol=1e-6) -> RestorationPlan:
    meta = instance.meta
    if solution.status not in (OPTIMAL, FEASIBLE, LIMIT) or solution.x is None:
        raise SolverError("cannot extract a plan from a %s solution of %s"
                          % (solution.status, instance.label),
                          meta.get("allocation"), meta.get("scenario"))
    x = np.asarray(solution.x, dtype=float).copy()
    mask = np.flatnonzero(instance.integrality)
    dev = np.abs(x[mask] - np.rint(x[mask]))
    if dev.size and dev.max() > tol:
        j = mask[int(np.argmax(dev))]
        raise NonIntegralError("non-integral binary %s = %.9g" % (instance.keys[j], x[j]),
                               meta.get("allocation"), meta.get("scenario"),
                               instance.keys[j].period)
    x[mask] = np.rint(x[mask])

    idx = instance.index
    n_nodes, n_edges = meta["n_nodes"], meta["n_edges"]
    n_sites, n_ders = meta["n_sites"], meta["n_ders"]
    loads = [i for i in range(n_nodes) if i != meta["substation"]]
    repairs, kappas, states = [], [], []
    for k in meta["periods"]:
        def val(role, i):
            return x[idx[VarKey(role, k, i)]]

        kap = np.array([val(KAPPA, (e,)) for e in range(n_edges)])
        kappas.append(kap)
        repairs.append(frozenset(e for e in range(n_edges) if val(REPAIR, (e,)) > 0.5))
        gamma = np.ones(n_nodes)
        shed = np.zeros(n_nodes)
        pt = np.zeros(n_nodes)
        qt = np.zeros(n_nodes)
        for i in loads:
            gamma[i] = val(GAMMA, (i,))
            shed[i] = val(SHED, (i,))
            pt[i] = val(P_NET, (i,))
            qt[i] = val(Q_NET, (i,))
        gens = [(u, d) for u in range(n_sites) for d in range(n_ders)]
        states.append(DispatchState(
            pg=np.array([val(P_GEN, g) for g in gens]).reshape(n_sites, n_ders),
            qg=np.array([val(Q_GEN, g) for g in gens]).reshape(n_sites, n_ders),
            gamma=gamma,
            shed=shed,
            pt=pt,
            qt=qt,
            p_flow=np.array([val(P_FLOW, (e,)) for e in range(n_edges)]),
            q_flow=np.array([val(Q_FLOW, (e,)) for e in range(n_edges)]),
            nu=np.array([val(NU, (i,)) for i in range(n_nodes)]),
        ))
    plan = RestorationPlan(tuple(meta["periods"]), tuple(repairs),
                           np.vstack(kappas), tuple(states))
    bad = plan.invariant_violations()
    if bad:
        raise SolverError("extracted plan is inconsistent: %s" % "; ".join(bad),
                          meta.get("allocation"), meta.get("scenario"))
    return plan


def check_plan(dn: DistributionNetwork, a: Allocation, s: Scenario,
               plan: RestorationPlan, cfg: SolveConfig, tol=1e-6) -> List[str]:
    """Re-check repair, dispatch, voltage and flow constraints on a plan, node by node."""
    K = failed_edge_count_horizon(dn)
    out = []
    if tuple(plan.periods) != tuple(range(K + 1)):
        return ["plan covers periods %s, expected 0..%d" % (plan.periods, K)]
    out.extend(plan.invariant_violations())
    kap = plan.operational_state
    failed = s.failed_edges
    for e in range(dn.n_edges):
        if kap[0][e] != (1 if e in failed else 0):
            out.append("edge %d: period-0 state differs from the scenario" % e)
        if e not in failed and np.any(kap[:, e] != 0):
            out.append("undamaged edge %d is not operational" % e)
        if e in dn.substation_edges and e in failed and np.any(kap[:K, e] != 1):
            out.append("substation edge %d operational before period K" % e)
        if kap[K][e] != 0:
            out.append("edge %d still failed at period K" % e)
        if sum(e in r for r in plan.repairs) > 1:
            out.append("edge %d repaired more than once" % e)
    for k in range(1, K):
        crew = [e for e in plan.repairs[k] if e not in dn.substation_edges]
        if len(crew) > cfg.crew_capacity:
            out.append("period %d repairs %d lines" % (k, len(crew)))

    placement = a.placement
    for k, st in zip(plan.periods, plan.dispatch):
        last = k == K
        where = "period %d" % k
        for u, site in enumerate(dn.candidate_sites):
            for d, der in enumerate(dn.ders):
                on = placement.get(d) == site
                p, q = st.pg[u, d], st.qg[u, d]
                if p < -tol or p > der.pg_max * on + tol:
                    out.append("%s: DER %d at node %d outputs %.6g" % (where, d, site, p))
                if abs(q) > der.pf_tan * p + tol or abs(q) > der.q_limit + tol:
                    out.append("%s: DER %d reactive output %.6g" % (where, d, q))
                if on and not last and cfg.droop_enabled:
                    if abs(st.nu[site] - der.v_ref + der.droop_coeff * q) > tol:
                        out.append("%s: droop violated at node %d" % (where, site))
                node = dn.nodes[site]
                if on and not last and node.has_dg_bounds:
                    if not node.v_dg_min - tol <= st.nu[site] <= node.v_dg_max + tol:
                        out.append("%s: DG voltage bound violated at node %d" % (where, site))
        for i in dn.load_nodes:
            node = dn.nodes[i]
            kc, g = st.shed[i], st.gamma[i]
            if kc not in (0, 1):
                out.append("%s: shed flag of node %d not binary" % (where, i))
            if not last and kc == 0 and not node.v_load_min - tol <= st.nu[i] <= node.v_load_max + tol:
                out.append("%s: node %d served outside voltage bounds" % (where, i))
            if g < node.gamma_min * (1 - kc) - tol or g > 1 - kc + tol:
                out.append("%s: load fraction of node %d is %.6g" % (where, i, g))
            gen_p = sum(st.pg[dn.site_position(i), d] for d in range(dn.n_ders)) \
                if i in dn.candidate_sites else 0.0
            gen_q = sum(st.qg[dn.site_position(i), d] for d in range(dn.n_ders)) \
                if i in dn.candidate_sites else 0.0
            if abs(st.pt[i] - (node.pc_max * g - gen_p)) > tol \
                    or abs(st.qt[i] - (node.qc_max * g - gen_q)) > tol:
                out.append("%s: net consumption of node %d" % (where, i))
        for e, edge in enumerate(dn.edges):
            j = edge.to_node
            below = dn.out_edges.get(j, ())
            if abs(st.p_flow[e] - st.pt[j] - sum(st.p_flow[l] for l in below)) > tol \
                    or abs(st.q_flow[e] - st.qt[j] - sum(st.q_flow[l] for l in below)) > tol:
                out.append("%s: flow balance on edge %d" % (where, e))
            if kap[k][e] == 1 and (abs(st.p_flow[e]) > tol or abs(st.q_flow[e]) > tol):
                out.append("%s: flow on failed edge %d" % (where, e))
            if kap[k][e] == 0:
                drop = 2.0 * (edge.resistance * st.p_flow[e] + edge.reactance * st.q_flow[e])
                if abs(st.nu[edge.from_node] - st.nu[j] - drop) > tol:
                    out.append("%s: voltage drop on edge %d" % (where, e))
        if last and abs(st.nu[dn.substation_id] - dn.nominal_sq_voltage) > tol:
            out.append("period K: substation voltage is not nominal")
    return out


def _lp_name(key) -> str:
    if isinstance(key, VarKey):
        return "%s_%d_%s" % (key.role, key.period, "_".join(str(i) for i in key.index))
    return "x%s" % (key,)


def _lp_terms(cols, vals, names):
    parts = []
    for t, (j, v) in enumerate(zip(cols, vals)):
        sep = "\n   " if t and t % 6 == 0 else " "
        parts.append("%s%s %r %s" % (sep, "-" if v < 0 else "+", abs(float(v)), names[j]))
    return "".join(parts) if parts else " 0 %s" % names[0]


def write_lp(instance: MilpInstance, path) -> Path:
    """Dump an instance in CPLEX LP text format."""
    path = Path(path)
    names = [_lp_name(k) for k in instance.keys]
    lines = ["\\ %s" % (instance.label or "instance"),
             "\\ objective offset %r" % instance.offset,
             "Minimize"]
    nz = np.flatnonzero(instance.c)
    lines.append(" obj:" + _lp_terms(nz, instance.c[nz], names))
    lines.append("Subject To")
    rhs = instance.rhs
    for i in range(instance.m):
        row = instance.A.getrow(i)
        lines.append(" r%d:%s >= %r" % (i, _lp_terms(row.indices, row.data, names), float(rhs[i])))
    for i in range(instance.m_eq):
        row = instance.A_eq.getrow(i)
        lines.append(" e%d:%s = %r" % (i, _lp_terms(row.indices, row.data, names),
                                       float(instance.b_eq[i])))
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = instance.lb[j], instance.ub[j]
        if np.isinf(lo) and np.isinf(hi):
            lines.append(" %s free" % name)
        elif lo == hi:
            lines.append(" %s = %r" % (name, float(lo)))
        else:
            lo_s = "-inf" if np.isinf(lo) else repr(float(lo))
            hi_s = "+inf" if np.isinf(hi) else repr(float(hi))
            lines.append(" %s <= %s <= %s" % (lo_s, name, hi_s))
    ints = np.flatnonzero(instance.integrality)
    binaries = [names[j] for j in ints if instance.lb[j] >= 0 and instance.ub[j] <= 1]
    general = [names[j] for j in ints if not (instance.lb[j] >= 0 and instance.ub[j] <= 1)]
    if binaries:
        lines.append("Binaries")
        lines.extend(" %s" % b for b in binaries)
    if general:
        lines.append("General")
        lines.extend(" %s" % g for g in general)
    lines.append("End")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError("cannot write %s: %s" % (path, exc.strerror or exc)) from exc
    return path
