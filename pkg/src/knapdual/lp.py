"""Small dense LP machinery for the per-round packing problem.

Self-contained on purpose: instances are tiny (a handful of actions and
resources), determinism matters more than speed, and we want every solve to
be auditable against brute-force oracles in the test suite.  No third-party
solver is used anywhere in the package.
"""
from __future__ import annotations

import itertools

import numpy as np

_FEAS_TOL = 1e-9


def simplex_max(c, A, b, *, tol: float = 1e-10, max_iter: int = 100_000):
    """Maximize ``c @ x`` subject to ``A @ x <= b`` and ``x >= 0``.

    Dense tableau simplex with Bland's rule.  Requires ``b >= 0`` so that the
    slack basis is feasible (no phase-1 needed); callers arrange their
    problems accordingly.  Returns ``(value, x)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    k, n = A.shape
    if b.shape != (k,) or c.shape != (n,):
        raise ValueError("inconsistent LP dimensions")
    if np.any(b < -tol):
        raise ValueError("simplex_max requires a nonnegative right-hand side")

    tab = np.zeros((k + 1, n + k + 1))
    tab[:k, :n] = A
    tab[:k, n:n + k] = np.eye(k)
    tab[:k, -1] = np.maximum(b, 0.0)
    tab[k, :n] = c
    basis = list(range(n, n + k))

    for _ in range(max_iter):
        enter = -1
        for j in range(n + k):  # Bland: lowest eligible index
            if tab[k, j] > tol:
                enter = j
                break
        if enter < 0:
            break
        leave = -1
        best = np.inf
        for i in range(k):
            if tab[i, enter] > tol:
                ratio = tab[i, -1] / tab[i, enter]
                if ratio < best - tol or (ratio < best + tol and (leave < 0 or basis[i] < basis[leave])):
                    best = ratio
                    leave = i
        if leave < 0:
            raise ArithmeticError("LP is unbounded")
        pivot = tab[leave, enter]
        tab[leave] /= pivot
        for i in range(k + 1):
            if i != leave and tab[i, enter] != 0.0:
                tab[i] -= tab[i, enter] * tab[leave]
        basis[leave] = enter
    else:
        raise ArithmeticError("simplex iteration limit reached")

    x = np.zeros(n)
    for i, var in enumerate(basis):
        if var < n:
            x[var] = tab[i, -1]
    return -tab[k, -1], x


def mixture_polytope_vertices(costs, rho: float):
    """Enumerate the vertices of ``{w >= 0, sum w = 1, costs.T @ w <= rho}``.

    ``costs`` is an ``n x m`` matrix.  A vertex is determined by ``n - 1``
    active constraints out of the ``n`` nonnegativity rows and ``m`` budget
    rows, together with the normalization equality.  Rank-deficient
    selections are skipped.  Intended for ``n + m`` up to a dozen or so.
    """
    costs = np.asarray(costs, dtype=float)
    n, m = costs.shape
    if n == 1:
        only = np.ones(1)
        if costs[0].max(initial=0.0) <= rho + _FEAS_TOL:
            return [only]
        return []

    # Inequality rows written as <=: -w_j <= 0 and costs[:, i] @ w <= rho.
    rows = np.vstack([-np.eye(n), costs.T])
    rhs = np.concatenate([np.zeros(n), np.full(m, rho)])

    seen = set()
    vertices = []
    for active in itertools.combinations(range(n + m), n - 1):
        mat = np.vstack([np.ones((1, n)), rows[list(active)]])
        vec = np.concatenate([[1.0], rhs[list(active)]])
        try:
            w = np.linalg.solve(mat, vec)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(w)) or np.max(np.abs(mat @ w - vec)) > 1e-7:
            continue
        if np.min(w) < -_FEAS_TOL:
            continue
        if m and np.max(costs.T @ w) > rho + _FEAS_TOL:
            continue
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        key = tuple(np.round(w, 9))
        if key not in seen:
            seen.add(key)
            vertices.append(w)
    return vertices


def packing_lp(rewards, costs, rho: float, void_index: int):
    """Solve ``max rewards @ w`` over the mixture polytope above.

    Dispatches to vertex enumeration for small instances and to the dense
    simplex otherwise.  The simplex route relaxes ``sum w = 1`` to
    ``sum w <= 1`` and tops the slack up with the zero-reward, zero-cost
    action at ``void_index``; with ``rewards >= 0`` the two problems have the
    same optimum.  Returns ``(value, w)``.
    """
    rewards = np.asarray(rewards, dtype=float)
    costs = np.asarray(costs, dtype=float)
    n, m = costs.shape
    if n + m <= 12:
        verts = mixture_polytope_vertices(costs, rho)
        if not verts:
            raise ArithmeticError("empty mixture polytope despite void action")
        values = [float(rewards @ w) for w in verts]
        best = int(np.argmax(values))
        return values[best], verts[best]

    A = np.vstack([costs.T, np.ones((1, n))])
    b = np.concatenate([np.full(m, rho), [1.0]])
    value, w = simplex_max(rewards, A, b)
    slack = 1.0 - w.sum()
    if slack > 0.0:
        w = w.copy()
        w[void_index] += slack
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    return value, w
