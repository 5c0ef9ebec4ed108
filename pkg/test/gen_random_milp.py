import itertools

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from dnalloc.milp import MilpInstance

#############################################
#      Generate random LPs and MILPs        #
#############################################

# All instances are  min c'x  s.t.  A x >= h,  x >= 0  (plus optional ub).


def gen_feasible(m, n, density):
    """LP with a known optimum, built from complementary slackness."""
    A = sparse.random(m, n, density, format="csr")
    A.data = np.random.randn(A.nnz)
    x = np.where(np.random.rand(n) < 0.5, np.abs(np.random.randn(n)), 0.0)
    lam = np.where(np.random.rand(m) < 0.5, np.abs(np.random.randn(m)), 0.0)
    z = np.where(x > 0, 0.0, np.abs(np.random.randn(n)))
    slack = np.where(lam > 0, 0.0, np.abs(np.random.randn(m)))
    h = A @ x - slack
    c = A.T @ lam + z
    return MilpInstance(c=c, A=A, h=h), float(c @ x)


def gen_infeasible(m, n):
    """Ax >= h, x >= 0 with a Farkas certificate y >= 0, A'y <= 0, h'y > 0."""
    y = pos(np.random.randn(m)) + 0.1
    A = np.random.randn(m, n)
    A = A - np.outer(y, A.T @ y + np.abs(np.random.randn(n))) / np.linalg.norm(y) ** 2
    h = np.random.randn(m)
    h = h / np.dot(h, y)
    return MilpInstance(c=np.random.randn(n), A=sparse.csr_matrix(A), h=h), y


def gen_unbounded(m, n):
    """Feasible LP with a ray d >= 0, A d >= 0, c'd < 0."""
    x0 = np.abs(np.random.randn(n))
    d = np.abs(np.random.randn(n)) + 0.1
    A = np.random.randn(m, n)
    A = A - np.outer(A @ d - np.abs(np.random.randn(m)), d) / np.linalg.norm(d) ** 2
    h = A @ x0 - np.abs(np.random.randn(m))
    c = np.random.randn(n)
    c = c - d * (np.dot(c, d) + 1.0) / np.linalg.norm(d) ** 2
    return MilpInstance(c=c, A=sparse.csr_matrix(A), h=h), d


def gen_milp(n_bin, n_cont, m, rng):
    """Bounded MILP with binaries first; a random point is kept feasible."""
    n = n_bin + n_cont
    A = rng.standard_normal((m, n))
    x0 = np.concatenate([rng.integers(0, 2, n_bin), rng.uniform(0, 5, n_cont)])
    h = A @ x0 - rng.uniform(0, 1, m)
    ub = np.concatenate([np.ones(n_bin), np.full(n_cont, 10.0)])
    mask = np.arange(n) < n_bin
    return MilpInstance(
        c=rng.standard_normal(n),
        A=sparse.csr_matrix(A),
        h=h,
        lb=np.zeros(n),
        ub=ub,
        integrality=mask,
        label="random milp",
    )


def enumerate_binaries(instance):
    """Brute-force optimum over every 0/1 setting of the integer columns."""
    mask = instance.integrality
    idx = np.flatnonzero(mask)
    kw = {}
    if instance.m:
        kw["A_ub"] = -instance.A.toarray()
        kw["b_ub"] = -instance.rhs
    if instance.m_eq:
        kw["A_eq"] = instance.A_eq.toarray()
        kw["b_eq"] = instance.b_eq
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=idx.size):
        lb = instance.lb.copy()
        ub = instance.ub.copy()
        lb[idx] = bits
        ub[idx] = bits
        res = linprog(instance.c, bounds=np.column_stack([lb, ub]), method="highs", **kw)
        if res.status == 0:
            best = min(best, res.fun + instance.offset)
    return best


def pos(x):
    return (x + abs(x)) / 2
