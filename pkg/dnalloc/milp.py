"""Sparse MILP instances, LP solves with duals, and branch-and-bound.

Instances are always in the form

    min  c'x + offset
    s.t. A x    >= h - T a      (inequality rows, duals lambda >= 0)
         A_eq x  = b_eq         (equality rows, duals mu)
         lb <= x <= ub,  x_j integer for j in the integrality mask

where ``a`` is the allocation vector the instance was built for.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Callable, Hashable, Mapping, Optional, Sequence, Tuple
from warnings import warn

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from dnalloc.simplex import linprog_simplex

logger = logging.getLogger(__name__)

_LP_ENGINE_DEFAULT = "highs"
_MILP_BACKEND_DEFAULT = "bnb"


# solve status strings shared by LP and MILP results
OPTIMAL = "optimal"  # solved to tolerance / gap
FEASIBLE = "feasible"  # incumbent found, optimality not proven
INFEASIBLE = "infeasible"  # no feasible point
UNBOUNDED = "unbounded"  # objective unbounded below
LIMIT = "limit"  # node limit hit, carries the best incumbent if any
NUMERICAL = "numerical"  # iteration cap or engine failure

_LINPROG_STATUS = {0: OPTIMAL, 1: NUMERICAL, 2: INFEASIBLE, 3: UNBOUNDED, 4: NUMERICAL}


class SolverError(RuntimeError):
    """A solve failed; carries the (allocation, scenario, period) it belongs to."""

    def __init__(self, msg, allocation=None, scenario=None, period=None):
        self.allocation = allocation
        self.scenario = scenario
        self.period = period
        ctx = []
        if allocation is not None:
            ctx.append("allocation=%s" % allocation)
        if scenario is not None:
            ctx.append("scenario=%s" % scenario)
        if period is not None:
            ctx.append("period=%s" % period)
        if ctx:
            msg = "%s [%s]" % (msg, ", ".join(ctx))
        super().__init__(msg)

    def with_context(self, allocation=None, scenario=None, period=None):
        return type(self)(
            str(self).split(" [")[0],
            allocation if allocation is not None else self.allocation,
            scenario if scenario is not None else self.scenario,
            period if period is not None else self.period,
        )


class NonIntegralError(SolverError):
    """A variable in the integrality mask is not within tolerance of an integer."""


def _as_csr(M, name, shape):
    if M is None:
        return sparse.csr_matrix(shape)
    if not sparse.issparse(M):
        M = sparse.csr_matrix(np.atleast_2d(np.asarray(M, dtype=float)))
    elif M.format != "csr":
        warn("Converting %s to a CSR (compressed sparse row) matrix;"
             " may take a while." % name)
        M = M.tocsr()
    if M.shape != shape and M.nnz == 0:
        M = sparse.csr_matrix(shape)
    if M.shape != shape:
        raise ValueError("%s has shape %s, expected %s" % (name, M.shape, shape))
    return M.astype(float)


@dataclass(frozen=True, eq=False)
class MilpInstance:
    c: np.ndarray
    A: Any = None
    h: Any = None
    A_eq: Any = None
    b_eq: Any = None
    lb: Any = None
    ub: Any = None
    integrality: Any = None
    T: Any = None
    alloc: Any = None
    offset: float = 0.0
    keys: Tuple[Hashable, ...] = ()
    label: str = ""
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        h = np.zeros(0) if self.h is None else np.asarray(self.h, dtype=float).ravel()
        b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        alloc = np.zeros(0) if self.alloc is None else np.asarray(self.alloc, dtype=float).ravel()
        lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        mask = (np.zeros(n, dtype=bool) if self.integrality is None
                else np.asarray(self.integrality, dtype=bool).ravel())
        if lb.shape != (n,) or ub.shape != (n,) or mask.shape != (n,):
            raise ValueError("bounds and integrality must have one entry per variable")
        keys = tuple(self.keys) if self.keys else tuple(range(n))
        if len(keys) != n:
            raise ValueError("variable name map has %d keys for %d variables" % (len(keys), n))
        if len(set(keys)) != n:
            raise ValueError("variable name map has duplicate keys")
        sets = object.__setattr__
        sets(self, "c", c)
        sets(self, "h", h)
        sets(self, "b_eq", b_eq)
        sets(self, "alloc", alloc)
        sets(self, "lb", lb)
        sets(self, "ub", ub)
        sets(self, "integrality", mask)
        sets(self, "keys", keys)
        sets(self, "offset", float(self.offset))
        sets(self, "A", _as_csr(self.A, "A", (h.size, n)))
        sets(self, "A_eq", _as_csr(self.A_eq, "A_eq", (b_eq.size, n)))
        sets(self, "T", _as_csr(self.T, "T", (h.size, alloc.size)))

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.h.size

    @property
    def m_eq(self) -> int:
        return self.b_eq.size

    @cached_property
    def index(self) -> Mapping[Hashable, int]:
        return {k: j for j, k in enumerate(self.keys)}

    @property
    def rhs(self) -> np.ndarray:
        """h - T a for the stored allocation."""
        if self.alloc.size == 0:
            return self.h
        return self.h - self.T @ self.alloc

    def objective_value(self, x) -> float:
        return float(self.c @ x) + self.offset

    def violation(self, x) -> float:
        """Largest constraint or bound violation at x."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.m:
            worst = max(worst, float(np.max(self.rhs - self.A @ x, initial=0.0)))
        if self.m_eq:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        worst = max(worst, float(np.max(self.lb - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.ub, initial=0.0)))
        return worst

    def is_feasible(self, x, tol=1e-6) -> bool:
        x = np.asarray(x, dtype=float)
        frac = np.abs(x[self.integrality] - np.rint(x[self.integrality]))
        return self.violation(x) <= tol and bool(np.all(frac <= tol))

    def relaxed(self) -> "MilpInstance":
        return replace(self, integrality=np.zeros(self.n, dtype=bool))

    def with_bounds(self, lb, ub) -> "MilpInstance":
        return replace(self, lb=lb, ub=ub)

    def with_alloc(self, alloc) -> "MilpInstance":
        return replace(self, alloc=alloc)

    def fix_discrete(self, x) -> Tuple["MilpInstance", float]:
        """Continuous LP left after fixing the masked variables at round(x).

        Returns the LP (discrete columns moved to the right-hand side) and
        the discrete objective share c_d' x_d.
        """
        d = self.integrality
        xd = np.rint(np.asarray(x, dtype=float)[d])
        keep = ~d
        lp = MilpInstance(
            c=self.c[keep],
            A=self.A[:, keep],
            h=self.h - self.A[:, d] @ xd,
            A_eq=self.A_eq[:, keep],
            b_eq=self.b_eq - self.A_eq[:, d] @ xd,
            lb=self.lb[keep],
            ub=self.ub[keep],
            T=self.T,
            alloc=self.alloc,
            offset=self.offset,
            keys=tuple(k for k, f in zip(self.keys, d) if not f),
            label=self.label,
            meta=self.meta,
        )
        return lp, float(self.c[d] @ xd)


@dataclass(frozen=True)
class LinearRow:
    """sum_j coefs[j] x_j (sense) rhs, keyed by variable key or column."""

    coefs: Mapping[Hashable, float]
    rhs: float
    sense: str = ">="


def _is_column(key, n):
    return (isinstance(key, (int, np.integer)) and not isinstance(key, bool)
            and 0 <= key < n)


def add_cut(instance: MilpInstance, row: LinearRow) -> MilpInstance:
    """Append one inequality row; the input instance is left untouched."""
    if row.sense not in (">=", "<="):
        raise ValueError("cut sense must be '>=' or '<=', got %r" % row.sense)
    vals = np.zeros(instance.n)
    for key, coef in row.coefs.items():
        j = instance.index.get(key)
        if j is None and _is_column(key, instance.n):
            j = int(key)
        if j is None:
            raise ValueError("cut references unknown variable %r" % (key,))
        vals[j] += coef
    rhs = float(row.rhs)
    if row.sense == "<=":
        vals, rhs = -vals, -rhs
    return replace(
        instance,
        A=sparse.vstack([instance.A, sparse.csr_matrix(vals)], format="csr"),
        h=np.append(instance.h, rhs),
        T=sparse.vstack([instance.T, sparse.csr_matrix((1, instance.alloc.size))],
                        format="csr"),
    )


def objective_cut(instance: MilpInstance, upper_bound: float) -> LinearRow:
    """c'x + offset <= upper_bound."""
    coefs = {j: v for j, v in enumerate(instance.c) if v != 0.0}
    return LinearRow(coefs, upper_bound - instance.offset, "<=")


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = np.nan
    ineq_duals: Optional[np.ndarray] = None
    eq_duals: Optional[np.ndarray] = None
    lower_duals: Optional[np.ndarray] = None
    upper_duals: Optional[np.ndarray] = None
    nit: int = 0

    def dual_objective(self, instance: MilpInstance, alloc=None) -> float:
        """lambda'(h - T a) + mu'b_eq + bound terms + offset."""
        rhs = instance.rhs if alloc is None else instance.h - instance.T @ alloc
        val = float(self.ineq_duals @ rhs) + float(self.eq_duals @ instance.b_eq)
        lo = np.isfinite(instance.lb)
        hi = np.isfinite(instance.ub)
        val += float(self.lower_duals[lo] @ instance.lb[lo])
        val += float(self.upper_duals[hi] @ instance.ub[hi])
        return val + instance.offset


@dataclass
class MilpSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = np.inf
    best_bound: float = -np.inf
    node_count: int = 0

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None


###############################################
#          LP engines                         #
###############################################


def _empty_lp(instance, lb, ub, tol):
    if np.any(instance.rhs > tol) or np.any(np.abs(instance.b_eq) > tol):
        return LpSolution(INFEASIBLE)
    return LpSolution(OPTIMAL, np.zeros(0), instance.offset,
                      np.zeros(instance.m), np.zeros(instance.m_eq),
                      np.zeros(0), np.zeros(0))


def _highs_lp(instance, lb, ub, tol):
    if instance.n == 0:
        return _empty_lp(instance, lb, ub, tol)
    kw = {}
    if instance.m:
        kw["A_ub"] = -instance.A
        kw["b_ub"] = -instance.rhs
    if instance.m_eq:
        kw["A_eq"] = instance.A_eq
        kw["b_eq"] = instance.b_eq
    ftol = min(tol, 1e-7)
    res = linprog(
        instance.c,
        bounds=np.column_stack([lb, ub]),
        method="highs",
        options={"primal_feasibility_tolerance": ftol, "dual_feasibility_tolerance": ftol},
        **kw
    )
    status = _LINPROG_STATUS.get(res.status, NUMERICAL)
    if status != OPTIMAL:
        return LpSolution(status, nit=int(getattr(res, "nit", 0) or 0))
    lam = -res.ineqlin.marginals if instance.m else np.zeros(0)
    mu = res.eqlin.marginals if instance.m_eq else np.zeros(0)
    return LpSolution(
        OPTIMAL,
        x=res.x,
        objective=float(res.fun) + instance.offset,
        ineq_duals=np.maximum(lam, 0.0),
        eq_duals=np.asarray(mu, dtype=float),
        lower_duals=np.asarray(res.lower.marginals, dtype=float),
        upper_duals=np.asarray(res.upper.marginals, dtype=float),
        nit=int(res.nit),
    )


def _simplex_lp(instance, lb, ub, tol):
    if instance.n == 0:
        return _empty_lp(instance, lb, ub, tol)
    res = linprog_simplex(
        instance.c,
        instance.A.toarray(), instance.rhs,
        instance.A_eq.toarray(), instance.b_eq,
        lb, ub,
        tol=min(tol, 1e-9),
    )
    status = _LINPROG_STATUS[res.status]
    if status != OPTIMAL:
        return LpSolution(status, nit=res.nit)
    return LpSolution(
        OPTIMAL,
        x=res.x,
        objective=res.fun + instance.offset,
        ineq_duals=res.ineq_duals,
        eq_duals=res.eq_duals,
        lower_duals=res.lower_duals,
        upper_duals=res.upper_duals,
        nit=res.nit,
    )


# Choose the LP engine based on settings.
def _select_lp_engine(stgs) -> Callable:
    engine = stgs.pop("engine", _LP_ENGINE_DEFAULT)
    if engine == "highs":
        return _highs_lp
    if engine == "simplex":
        return _simplex_lp
    raise ValueError("unknown LP engine %r, use 'highs' or 'simplex'" % (engine,))


def _reject_unknown(stgs):
    if stgs:
        raise ValueError("unknown solver settings: %s" % ", ".join(sorted(stgs)))


def solve_lp(instance: MilpInstance, **settings) -> LpSolution:
    """Solve the LP relaxation of an instance.

    @param instance  MilpInstance; its integrality mask is ignored.
    @param settings  `engine` ('highs' or 'simplex') and `lp_tolerance`.

    @return LpSolution with primal vector, row and bound duals.
    """
    stgs = dict(settings)
    engine = _select_lp_engine(stgs)
    tol = float(stgs.pop("lp_tolerance", 1e-6))
    stgs.pop("mip_gap", None)
    stgs.pop("max_nodes", None)
    stgs.pop("backend", None)
    _reject_unknown(stgs)
    return engine(instance, instance.lb, instance.ub, tol)


###############################################
#          MILP backends                      #
###############################################


class BranchAndBound(object):
    def __init__(self, instance: MilpInstance, **settings):
        """Depth-first branch-and-bound over LP relaxations.

        @param instance  MilpInstance to minimize.
        @param settings  `engine`, `mip_gap` (relative), `lp_tolerance`,
                         `int_tol`, `max_nodes`.
        """
        stgs = dict(settings)
        self._lp = _select_lp_engine(stgs)
        self.mip_gap = float(stgs.pop("mip_gap", 1e-9))
        self.tol = float(stgs.pop("lp_tolerance", 1e-6))
        self.int_tol = float(stgs.pop("int_tol", self.tol))
        self.max_nodes = int(stgs.pop("max_nodes", 200000))
        _reject_unknown(stgs)
        if self.mip_gap < 0 or self.tol <= 0 or self.max_nodes < 1:
            raise ValueError("invalid branch-and-bound settings")
        self.instance = instance

    def _cutoff(self, best):
        if not np.isfinite(best):
            return best
        return best - max(self.tol, self.mip_gap * abs(best))

    def solve(self, incumbent=None) -> MilpSolution:
        inst = self.instance
        mask = np.flatnonzero(inst.integrality)
        best_x, best = None, np.inf
        if incumbent is not None:
            x0 = np.asarray(incumbent, dtype=float)
            if x0.shape == (inst.n,) and inst.is_feasible(x0, 10 * self.tol):
                best_x = x0.copy()
                best_x[mask] = np.rint(best_x[mask])
                best = inst.objective_value(best_x)
            else:
                warn("Ignoring an incumbent that is infeasible for %s" % (inst.label or "the instance"))

        stack = [(inst.lb.copy(), inst.ub.copy(), -np.inf)]
        nodes = 0
        limited = False
        while stack:
            lb, ub, parent = stack.pop()
            if parent >= self._cutoff(best):
                continue
            if nodes >= self.max_nodes:
                stack.append((lb, ub, parent))
                limited = True
                break
            sol = self._lp(inst, lb, ub, self.tol)
            nodes += 1
            if sol.status == INFEASIBLE:
                continue
            if sol.status == UNBOUNDED:
                return MilpSolution(UNBOUNDED, node_count=nodes)
            if sol.status != OPTIMAL:
                raise SolverError("LP relaxation failed (%s) at node %d of %s"
                                  % (sol.status, nodes, inst.label or "instance"))
            bound = sol.objective
            if bound >= self._cutoff(best):
                continue
            x = sol.x
            frac = x[mask] - np.floor(x[mask])
            dist = np.minimum(frac, 1.0 - frac)
            if mask.size == 0 or dist.max() <= self.int_tol:
                x = x.copy()
                x[mask] = np.rint(x[mask])
                best_x, best = x, inst.objective_value(x)
                logger.debug("node %d: incumbent %.10g", nodes, best)
                continue
            pos = int(np.argmax(dist))
            j = mask[pos]
            down_ub = ub.copy()
            down_ub[j] = np.floor(x[j])
            up_lb = lb.copy()
            up_lb[j] = np.ceil(x[j])
            down = (lb, down_ub, bound)
            up = (up_lb, ub, bound)
            if frac[pos] >= 0.5:
                stack.extend([down, up])
            else:
                stack.extend([up, down])

        if limited:
            open_bound = min(p for _, _, p in stack)
            logger.debug("node limit %d reached on %s", self.max_nodes, inst.label)
            return MilpSolution(LIMIT, best_x, best, min(best, open_bound), nodes)
        if best_x is None:
            return MilpSolution(INFEASIBLE, node_count=nodes)
        logger.debug("%s: optimal %.10g after %d nodes", inst.label, best, nodes)
        return MilpSolution(OPTIMAL, best_x, best, best, nodes)


def _highs_milp(instance, incumbent, stgs):
    stgs.pop("engine", None)
    gap = float(stgs.pop("mip_gap", 1e-9))
    tol = float(stgs.pop("lp_tolerance", 1e-6))
    max_nodes = int(stgs.pop("max_nodes", 200000))
    stgs.pop("int_tol", None)
    _reject_unknown(stgs)
    constraints = []
    if instance.m:
        constraints.append(LinearConstraint(instance.A, instance.rhs, np.inf))
    if instance.m_eq:
        constraints.append(LinearConstraint(instance.A_eq, instance.b_eq, instance.b_eq))
    res = milp(
        instance.c,
        constraints=constraints,
        integrality=instance.integrality.astype(int),
        bounds=Bounds(instance.lb, instance.ub),
        options={"mip_rel_gap": gap, "node_limit": max_nodes, "disp": False},
    )
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return MilpSolution(INFEASIBLE, node_count=nodes)
    if res.status == 3:
        return MilpSolution(UNBOUNDED, node_count=nodes)
    if res.x is None:
        if res.status == 1:
            return MilpSolution(LIMIT, node_count=nodes)
        raise SolverError("HiGHS MILP failed: %s" % res.message)
    x = np.asarray(res.x, dtype=float).copy()
    x[instance.integrality] = np.rint(x[instance.integrality])
    obj = instance.objective_value(x)
    bound = getattr(res, "mip_dual_bound", None)
    bound = obj if bound is None else float(bound) + instance.offset
    status = OPTIMAL if res.status == 0 else FEASIBLE
    if incumbent is not None and status != OPTIMAL:
        x0 = np.asarray(incumbent, dtype=float)
        if instance.is_feasible(x0, 10 * tol) and instance.objective_value(x0) < obj:
            x, obj = x0, instance.objective_value(x0)
    return MilpSolution(status, x, obj, min(bound, obj), nodes)


# Choose the MILP backend based on settings.
def _select_milp_backend(stgs):
    backend = stgs.pop("backend", _MILP_BACKEND_DEFAULT)
    if backend == "bnb":
        return lambda inst, x0, s: BranchAndBound(inst, **s).solve(x0)
    if backend == "highs":
        return _highs_milp
    raise ValueError("unknown MILP backend %r, use 'bnb' or 'highs'" % (backend,))


def solve_milp(instance: MilpInstance, upper_bound: Optional[float] = None,
               incumbent=None, **settings) -> MilpSolution:
    """Solve a MILP, optionally with an objective upper-bound cut.

    @param instance     MilpInstance to minimize.
    @param upper_bound  Objective value of some feasible point; adds the row
                        c'x + offset <= upper_bound before the search.
    @param incumbent    Optional feasible point used to prune from the root.
    @param settings     `backend` ('bnb' or 'highs') plus backend settings.
    """
    stgs = dict(settings)
    backend = _select_milp_backend(stgs)
    if upper_bound is not None:
        instance = add_cut(instance, objective_cut(instance, upper_bound))
    return backend(instance, incumbent, stgs)
