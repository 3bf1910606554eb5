"""Dense phase-1 simplex used as an equality-feasibility engine.

Solves "does x >= 0 with A x = b exist?" by minimizing the sum of
artificial variables with Bland's pivoting rule (no cycling). An
iteration cap turns pathological runs into an explicit 'inconclusive'
outcome; the solver never reports 'infeasible' without a certified
phase-1 optimum.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-9
_PIVOT_EPS = 1e-10

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
INCONCLUSIVE = "inconclusive"


def solve_feasibility(A, b, max_iter: int | None = None):
    """Search for x >= 0 with A x = b.

    Returns (status, x) where status is one of 'feasible', 'infeasible',
    'inconclusive'; x is a witness when feasible, else None.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError("b length must match the row count of A")
    if max_iter is None:
        max_iter = 10 * (n + m)

    # phase-1 tableau [A | I | b] with b >= 0, artificial basis
    A = A.copy()
    b = b.copy()
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    T = np.hstack([A, np.eye(m), b[:, None]])
    basis = list(range(n, n + m))
    # reduced costs for min(sum of artificials): structural columns get
    # minus their column sums, artificial columns start at zero
    red = np.concatenate([-A.sum(axis=0), np.zeros(m), [-b.sum()]])

    for _ in range(max_iter):
        entering = -1
        for j in range(n + m):
            if red[j] < -_EPS:
                entering = j  # Bland: leftmost negative reduced cost
                break
        if entering < 0:
            obj = -red[-1]
            if obj > _EPS * max(1.0, float(np.abs(b).max(initial=0.0))):
                return INFEASIBLE, None
            x = np.zeros(n)
            for i, bc in enumerate(basis):
                if bc < n:
                    x[bc] = max(T[i, -1], 0.0)
            return FEASIBLE, x

        ratios = []
        for i in range(m):
            a = T[i, entering]
            if a > _PIVOT_EPS:
                ratios.append((T[i, -1] / a, basis[i], i))
        if not ratios:
            # phase-1 objective is bounded below by zero; cannot happen
            return INCONCLUSIVE, None
        ratios.sort()  # Bland tie-break: smallest basis index among min ratios
        _, _, leave = ratios[0]

        piv = T[leave, entering]
        T[leave] /= piv
        for i in range(m):
            if i != leave and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leave]
        red -= red[entering] * T[leave]
        basis[leave] = entering

    return INCONCLUSIVE, None
