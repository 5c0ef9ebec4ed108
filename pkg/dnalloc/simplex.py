"""Dense two-phase tableau simplex with dual recovery.

Solves

    min  c'x
    s.t. A_ge x >= b_ge
         A_eq x  = b_eq
         lb <= x <= ub

Status codes follow ``scipy.optimize.linprog``: 0 optimal, 1 iteration
limit, 2 infeasible, 3 unbounded.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

# consecutive degenerate pivots before switching to Bland's rule
_DEGENERATE_RUN = 50


@dataclass
class SimplexResult:
    status: int
    x: Optional[np.ndarray] = None
    fun: float = np.nan
    ineq_duals: Optional[np.ndarray] = None
    eq_duals: Optional[np.ndarray] = None
    lower_duals: Optional[np.ndarray] = None
    upper_duals: Optional[np.ndarray] = None
    nit: int = 0


class _Tableau(object):
    def __init__(self, M, rhs, tol):
        m, n = M.shape
        self.tol = tol
        self.n = n
        # artificial identity appended to the right
        self.T = np.hstack([M, np.eye(m)])
        self.rhs = rhs.astype(float).copy()
        self.basis = np.arange(n, n + m)
        self.nit = 0
        self._degenerate = 0
        self.bland = False

    def reduced_costs(self, cost):
        return cost - cost[self.basis] @ self.T

    def pivot(self, r, q):
        T = self.T
        piv = T[r, q]
        T[r] /= piv
        self.rhs[r] /= piv
        col = T[:, q].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.rhs -= col * self.rhs[r]
        self.basis[r] = q

    def run(self, cost, blocked, maxiter):
        """Pivot to optimality; returns 0, 1 (limit) or 3 (unbounded)."""
        tol = self.tol
        allowed = ~blocked
        while True:
            d = self.reduced_costs(cost)
            cand = np.flatnonzero(allowed & (d < -tol))
            if cand.size == 0:
                return 0
            if self.nit >= maxiter:
                return 1
            if self.bland:
                q = cand[0]
            else:
                q = cand[np.argmin(d[cand])]
            col = self.T[:, q]
            rows = np.flatnonzero(col > tol)
            if rows.size == 0:
                return 3
            ratios = self.rhs[rows] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + tol]
            r = ties[np.argmin(self.basis[ties])]
            self._degenerate = self._degenerate + 1 if best <= tol else 0
            if not self.bland and self._degenerate > _DEGENERATE_RUN:
                logger.debug("switching to Bland's rule after %d degenerate pivots",
                             self._degenerate)
                self.bland = True
            self.pivot(r, q)
            self.nit += 1


def linprog_simplex(c, A_ge, b_ge, A_eq, b_eq, lb, ub, tol=1e-9, maxiter=None):
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ge = np.asarray(A_ge, dtype=float).reshape(-1, n)
    A_eq = np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_ge = np.asarray(b_ge, dtype=float).ravel()
    b_eq = np.asarray(b_eq, dtype=float).ravel()
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m_ge, m_eq = A_ge.shape[0], A_eq.shape[0]

    if np.any(ub < lb - tol):
        return SimplexResult(status=2)

    # x = shift + D z with z >= 0
    shift = np.zeros(n)
    cols = []  # (var, sign)
    bounded = []
    for j in range(n):
        if np.isfinite(lb[j]):
            shift[j] = lb[j]
            cols.append((j, 1.0))
            if np.isfinite(ub[j]):
                bounded.append((j, len(cols) - 1))
        elif np.isfinite(ub[j]):
            shift[j] = ub[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    D = np.zeros((n, nz))
    for k, (j, sgn) in enumerate(cols):
        D[j, k] = sgn
    m_ub = len(bounded)
    m = m_ge + m_eq + m_ub
    N = nz + m_ge + m_ub

    M = np.zeros((m, N))
    r = np.zeros(m)
    M[:m_ge, :nz] = A_ge @ D
    M[:m_ge, nz:nz + m_ge] = -np.eye(m_ge)
    r[:m_ge] = b_ge - A_ge @ shift
    M[m_ge:m_ge + m_eq, :nz] = A_eq @ D
    r[m_ge:m_ge + m_eq] = b_eq - A_eq @ shift
    for t, (j, k) in enumerate(bounded):
        row = m_ge + m_eq + t
        M[row, k] = 1.0
        M[row, nz + m_ge + t] = 1.0
        r[row] = ub[j] - lb[j]

    sign = np.where(r < 0, -1.0, 1.0)
    tab = _Tableau(M * sign[:, None], r * sign, tol)
    if maxiter is None:
        maxiter = 50 * (m + N) + 1000

    # phase 1
    w = np.concatenate([np.zeros(N), np.ones(m)])
    status = tab.run(w, np.zeros(N + m, dtype=bool), maxiter)
    if status == 1:
        return SimplexResult(status=1, nit=tab.nit)
    infeas = float(w[tab.basis] @ tab.rhs)
    if infeas > max(1e-7, tol * (1.0 + np.abs(r).sum())):
        return SimplexResult(status=2, nit=tab.nit)
    for i in range(m):
        if tab.basis[i] >= N:
            nonzero = np.flatnonzero(np.abs(tab.T[i, :N]) > 1e-7)
            if nonzero.size:
                tab.pivot(i, nonzero[0])

    # phase 2
    cz = np.zeros(N + m)
    cz[:nz] = D.T @ c
    blocked = np.zeros(N + m, dtype=bool)
    blocked[N:] = True
    tab._degenerate = 0
    status = tab.run(cz, blocked, maxiter)
    if status != 0:
        return SimplexResult(status=status, nit=tab.nit)

    z = np.zeros(N + m)
    z[tab.basis] = tab.rhs
    x = shift + D @ z[:nz]

    binv = tab.T[:, N:]
    y = (cz[tab.basis] @ binv) * sign
    rc = cz[:nz] - y @ M[:, :nz]

    lower = np.zeros(n)
    upper = np.zeros(n)
    for k, (j, sgn) in enumerate(cols):
        if np.isfinite(lb[j]):
            lower[j] = rc[k]
        elif np.isfinite(ub[j]):
            upper[j] = -rc[k]
    for t, (j, _) in enumerate(bounded):
        upper[j] = y[m_ge + m_eq + t]

    return SimplexResult(
        status=0,
        x=x,
        fun=float(c @ x),
        ineq_duals=y[:m_ge].copy(),
        eq_duals=y[m_ge:m_ge + m_eq].copy(),
        lower_duals=lower,
        upper_duals=upper,
        nit=tab.nit,
    )
