"""Dense two-phase simplex for the tiny linear programs of the decoy analysis.

Problems have at most five variables and a few dozen rows, so a full
tableau with Bland's anti-cycling rule is plenty fast and fully
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LinearProgramResult", "InfeasibleError", "UnboundedError", "solve_lp"]

PIVOT_TOL = 1e-12


class InfeasibleError(ValueError):
    pass


class UnboundedError(ValueError):
    pass


@dataclass(frozen=True)
class LinearProgramResult:
    x: np.ndarray
    fun: float
    iterations: int


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]
    basis[row] = col


def _run(T, basis, n_allowed, max_iter):
    """Minimize the objective held in the last row of ``T`` (reduced costs)."""
    it = 0
    m = T.shape[0] - 1
    while True:
        cost = T[-1, :n_allowed]
        entering = next((j for j in range(n_allowed) if cost[j] < -PIVOT_TOL), None)
        if entering is None:
            return it
        col = T[:m, entering]
        rhs = T[:m, -1]
        best, leave = None, None
        for r in range(m):
            if col[r] > PIVOT_TOL:
                ratio = rhs[r] / col[r]
                if best is None or ratio < best - PIVOT_TOL or (
                    abs(ratio - best) <= PIVOT_TOL and basis[r] < basis[leave]
                ):
                    best, leave = ratio, r
        if leave is None:
            raise UnboundedError("objective unbounded")
        _pivot(T, basis, leave, entering)
        it += 1
        if it > max_iter:
            raise RuntimeError("simplex iteration limit reached")


def solve_lp(c, A_ub=None, b_ub=None, A_lb=None, b_lb=None, max_iter=10_000) -> LinearProgramResult:
    """Minimize ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_lb x >= b_lb``, ``x >= 0``.

    Rows are rescaled internally; the returned ``x`` and ``fun`` are in the
    caller's units.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows, rhs, kinds = [], [], []
    for A, b, kind in ((A_ub, b_ub, "le"), (A_lb, b_lb, "ge")):
        if A is None:
            continue
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.shape != (b.size, n):
            raise ValueError(f"constraint shape {A.shape} does not match {b.size} x {n}")
        for a_row, b_val in zip(A, b):
            rows.append(a_row)
            rhs.append(b_val)
            kinds.append(kind)
    m = len(rows)

    # Put every row in "a x (<=|>=) b" with b >= 0, scaled so max |entry| is 1.
    scale_x = max([abs(v) for v in rhs] + [1.0])
    a_rows, b_vals, slack_sign = [], [], []
    for a_row, b_val, kind in zip(rows, rhs, kinds):
        b_val = b_val / scale_x
        sign = 1.0 if kind == "le" else -1.0
        if b_val < 0:
            a_row, b_val, sign = -a_row, -b_val, -sign
        norm = max(np.max(np.abs(a_row)), 1e-300)
        a_rows.append(a_row / norm)
        b_vals.append(b_val / norm)
        slack_sign.append(sign)

    # Columns: x (n), slacks (m), artificials (one per row that needs one).
    needs_art = [s < 0 for s in slack_sign]
    n_art = sum(needs_art)
    width = n + m + n_art + 1
    T = np.zeros((m + 1, width))
    basis = [0] * m
    a_col = n + m
    for r in range(m):
        T[r, :n] = a_rows[r]
        T[r, n + r] = slack_sign[r]
        T[r, -1] = b_vals[r]
        if needs_art[r]:
            T[r, a_col] = 1.0
            basis[r] = a_col
            a_col += 1
        else:
            basis[r] = n + r

    iterations = 0
    if n_art:
        # Phase one: minimize the sum of artificials.
        T[-1, :] = 0.0
        T[-1, n + m:n + m + n_art] = 1.0
        for r in range(m):
            if needs_art[r]:
                T[-1] -= T[r]
        iterations += _run(T, basis, n + m + n_art, max_iter)
        if T[-1, -1] < -1e-9:
            raise InfeasibleError("constraints are infeasible")
        # Drive remaining artificials out of the basis where possible.
        for r in range(m):
            if basis[r] >= n + m:
                for j in range(n + m):
                    if abs(T[r, j]) > PIVOT_TOL:
                        _pivot(T, basis, r, j)
                        break
        T = np.delete(T, np.s_[n + m:n + m + n_art], axis=1)
        keep = [r for r in range(m) if basis[r] < n + m]
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[r] for r in keep]
        m = len(basis)

    scale_c = max(np.max(np.abs(c)), 1e-300)
    cs = c / scale_c
    T[-1, :] = 0.0
    T[-1, :n] = cs
    for r, j in enumerate(basis):
        if j < n and cs[j] != 0.0:
            T[-1] -= cs[j] * T[r]
    iterations += _run(T, basis, T.shape[1] - 1, max_iter)

    x = np.zeros(n)
    for r, j in enumerate(basis):
        if j < n:
            x[j] = T[r, -1]
    x = np.maximum(x, 0.0) * scale_x
    return LinearProgramResult(x=x, fun=float(c @ x), iterations=iterations)
