"""Dense two-phase simplex with Bland's anticycling rule.

Deterministic and dependency-free; sized for the desk-scale linear programs
the oracle module produces (a few thousand variables).  Problems are stated
as  max/min c.x  subject to  A_eq x = b_eq, A_ub x <= b_ub, x >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_PIVOTS = 200_000
MAX_VARIABLES = 5_000


class LPError(ValueError):
    """Malformed linear program."""


class InfeasibleError(LPError):
    """Phase one terminated with positive artificial mass."""


class UnboundedError(LPError):
    """A negative reduced cost column has no blocking row."""


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    pivots: int


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    colvals = T[:, col].copy()
    colvals[row] = 0.0
    T -= np.outer(colvals, T[row])
    # exact unit column to stop drift
    T[:, col] = 0.0
    T[row, col] = 1.0
    basis[row] = col


STALL_LIMIT = 12


def _bland_loop(T: np.ndarray, basis: np.ndarray, ncols: int, start_pivots: int) -> int:
    """Run minimizing pivots on tableau T (last row = objective, last col = rhs).

    Pivots on the most negative reduced cost while the objective moves and
    falls back to Bland's anticycling rule during degenerate stalls, which
    guarantees termination.
    """
    m = T.shape[0] - 1
    pivots = start_pivots
    stall = 0
    while True:
        red = T[-1, :ncols]
        if stall < STALL_LIMIT:
            col = int(np.argmin(red))
            if red[col] >= -PIVOT_TOL:
                return pivots
        else:
            candidates = np.nonzero(red < -PIVOT_TOL)[0]
            if candidates.size == 0:
                return pivots
            col = int(candidates[0])                  # Bland: smallest index
        rows = np.nonzero(T[:m, col] > PIVOT_TOL)[0]
        if rows.size == 0:
            raise UnboundedError("objective unbounded along a feasible ray")
        ratios = T[rows, -1] / T[rows, col]
        best = np.min(ratios)
        ties = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
        row = int(ties[np.argmin(basis[ties])])       # Bland: smallest basic var
        before = T[-1, -1]
        _pivot(T, basis, row, col)
        stall = 0 if T[-1, -1] > before + 1e-13 * (1.0 + abs(before)) else stall + 1
        pivots += 1
        if pivots - start_pivots > MAX_PIVOTS:
            raise LPError("pivot limit exceeded")


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None,
             maximize: bool = False) -> LPResult:
    """Solve the LP; returns primal solution and optimal value.

    Raises InfeasibleError / UnboundedError; rhs rows are sign-normalized and
    equilibrated before phase one.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    if n > MAX_VARIABLES:
        raise LPError(f"{n} variables exceed the {MAX_VARIABLES} cap")
    blocks = []
    rhs = []
    n_ub = 0
    if A_eq is not None and len(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float))
        if A_eq.shape != (b_eq.size, n):
            raise LPError("A_eq shape mismatch")
        blocks.append(np.hstack([A_eq, np.zeros((A_eq.shape[0], 0))]))
        rhs.append(b_eq)
    if A_ub is not None and len(A_ub):
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        b_ub = np.atleast_1d(np.asarray(b_ub, dtype=float))
        if A_ub.shape != (b_ub.size, n):
            raise LPError("A_ub shape mismatch")
        n_ub = A_ub.shape[0]
        blocks.append(A_ub)
        rhs.append(b_ub)
    if not blocks:
        raise LPError("no constraints")
    n_eq = rhs[0].size if A_eq is not None and len(A_eq) else 0
    m = n_eq + n_ub
    A = np.zeros((m, n + n_ub))
    b = np.zeros(m)
    if n_eq:
        A[:n_eq, :n] = blocks[0][:, :n]
        b[:n_eq] = rhs[0]
    if n_ub:
        A[n_eq:, :n] = A_ub
        A[n_eq:, n:] = np.eye(n_ub)                   # slack variables
        b[n_eq:] = rhs[-1]
    # row equilibration, then sign-normalize the rhs
    scale = np.maximum(np.max(np.abs(A), axis=1), np.abs(b))
    scale[scale == 0.0] = 1.0
    A /= scale[:, None]
    b /= scale
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    ntot = n + n_ub
    # phase one: artificial basis
    T = np.zeros((m + 1, ntot + m + 1))
    T[:m, :ntot] = A
    T[:m, ntot:ntot + m] = np.eye(m)
    T[:m, -1] = b
    basis = np.arange(ntot, ntot + m)
    T[-1, :] = -T[:m, :].sum(axis=0)                  # minimize sum of artificials
    T[-1, ntot:ntot + m] = 0.0
    pivots = _bland_loop(T, basis, ntot, 0)
    if T[-1, -1] < -FEAS_TOL:
        raise InfeasibleError(f"phase one residual {-T[-1, -1]:.3e}")
    # drive leftover artificials out of the basis / drop redundant rows
    keep_rows = []
    for i in range(m):
        if basis[i] >= ntot:
            piv = np.nonzero(np.abs(T[i, :ntot]) > PIVOT_TOL)[0]
            if piv.size:
                _pivot(T, basis, i, int(piv[0]))
                pivots += 1
                keep_rows.append(i)
            # else: redundant row, drop it
        else:
            keep_rows.append(i)
    keep_rows = np.asarray(keep_rows, dtype=int)
    T2 = np.zeros((keep_rows.size + 1, ntot + 1))
    T2[:-1, :ntot] = T[keep_rows, :ntot]
    T2[:-1, -1] = T[keep_rows, -1]
    basis = basis[keep_rows]

    obj = np.zeros(ntot)
    obj[:n] = -c if maximize else c
    T2[-1, :ntot] = obj
    for i, bi in enumerate(basis):                    # reduce over the basis
        T2[-1, :] -= T2[-1, bi] * T2[i, :]
    pivots = _bland_loop(T2, basis, ntot, pivots)
    x = np.zeros(ntot)
    x[basis] = T2[:-1, -1]
    fun = float(obj @ x)
    return LPResult(x=x[:n], fun=-fun if maximize else fun, pivots=pivots)
