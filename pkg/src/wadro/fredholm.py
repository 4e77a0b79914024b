"""Composed conditional-expectation operator and its second-kind equation.

The operator maps a function f of the first stage to E[E[f(X1) | X2] | X1],
with the inner conditioning realized on a bin partition of the second
marginal.  On zero-mean functions it is a strict contraction whenever the
two stages share no common nontrivial information at grid scale; the hedge
component of the martingale-plus-marginal sensitivity solves
(I - K) h = rhs on that subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measure import BinPartition, GridMeasure, bin_masses

NEUMANN_GATE = 0.999
NEUMANN_TOL = 1e-12
NEUMANN_MAX_TERMS = 10_000
DUAL_PATH_TOL = 1e-8
POWER_TOL = 1e-10


class FredholmError(ValueError):
    """Operator assembly or solve failed a structural check."""


@dataclass(frozen=True)
class FredholmOperator:
    """Discrete kernel of E1 o E2 through bins.

    ``K[i, i'] = sum_b P(bin b | X1 = x1[i]) P(X1 = x1[i'] | bin b)``.
    Row sums equal one and ``w1`` is a left fixed vector, so K preserves
    both constants and the mu1-mean.
    """

    K: np.ndarray
    w1: np.ndarray
    m: int

    @property
    def n1(self) -> int:
        return self.w1.size

    def zero_mean_matrix(self) -> np.ndarray:
        """K restricted to zero-mean input: K - 1 w1^T."""
        return self.K - np.outer(np.ones(self.n1), self.w1)


def build_operator(mu: GridMeasure, bins: BinPartition) -> FredholmOperator:
    """Assemble the operator from the joint atom masses."""
    idx = bins.assign(mu.x2.ravel()).reshape(mu.x2.shape)
    fwd = np.zeros((mu.n1, bins.m))          # P(bin | x1 = i)
    for i in range(mu.n1):
        np.add.at(fwd[i], idx[i], mu.q[i])
    mass = bin_masses(mu, bins)
    back = (fwd * mu.w1[:, None]).T / mass[:, None]   # P(x1 = i' | bin)
    K = fwd @ back
    if np.max(np.abs(K.sum(axis=1) - 1.0)) > 1e-12:
        raise FredholmError("operator rows do not sum to one")
    if np.max(np.abs(mu.w1 @ K - mu.w1)) > 1e-12:
        raise FredholmError("operator does not preserve the mu1-mean")
    return FredholmOperator(K, mu.w1.copy(), bins.m)


def apply_forward(mu: GridMeasure, bins: BinPartition, u: np.ndarray) -> np.ndarray:
    """E1 of a bin function: (A u)[i] = sum_b P(bin b | i) u[b]."""
    idx = bins.assign(mu.x2.ravel()).reshape(mu.x2.shape)
    return np.sum(mu.q * np.asarray(u, dtype=float)[idx], axis=1)


def contraction_norm(op: FredholmOperator, alpha: str = "l2") -> float:
    """Operator norm of K on mu1-weighted zero-mean functions.

    ``l2`` runs power iteration (with zero-mean re-projection) on the
    similarity-transformed matrix and returns the largest singular value;
    ``linf`` returns the row-sum bound of the projected matrix, which is an
    upper bound for the norm on the zero-mean subspace.
    """
    K0 = op.zero_mean_matrix()
    if alpha == "linf":
        return float(np.max(np.abs(K0).sum(axis=1)))
    if alpha != "l2":
        raise FredholmError(f"unsupported norm {alpha!r}")
    d = np.sqrt(op.w1)
    M = (K0 * (1.0 / d)[None, :]) * d[:, None]
    A = M.T @ M
    n = op.n1
    # deterministic start with a zero-mean-like sign pattern
    v = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    v -= (d @ v) * d
    nv = np.linalg.norm(v)
    if nv == 0.0:
        v = np.zeros(n)
        v[0] = 1.0
        v -= (d @ v) * d
        nv = np.linalg.norm(v)
    v /= nv
    lam = 0.0
    for _ in range(20_000):
        w = A @ v
        w -= (d @ w) * d
        nw = np.linalg.norm(w)
        if nw < 1e-300:
            return 0.0
        w /= nw
        lam_new = float(w @ (A @ w))
        if abs(lam_new - lam) <= POWER_TOL * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam, v = lam_new, w
    return float(np.sqrt(max(lam, 0.0)))


def _check_zero_mean(op: FredholmOperator, rhs: np.ndarray) -> None:
    if abs(float(op.w1 @ rhs)) > 1e-10:
        raise FredholmError("right-hand side must have zero mu1-mean")


def solve(op: FredholmOperator, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - K) h = rhs on the zero-mean subspace.

    Runs the Neumann series (when the contraction norm allows) and a direct
    solve of the projected system; the two must agree within 1e-8.
    """
    rhs = np.asarray(rhs, dtype=float)
    _check_zero_mean(op, rhs)
    K0 = op.zero_mean_matrix()
    n = op.n1
    try:
        h_direct = np.linalg.solve(np.eye(n) - K0, rhs)
    except np.linalg.LinAlgError:
        h_direct = None
    norm = contraction_norm(op, "l2")
    h_neumann = None
    if norm < NEUMANN_GATE:
        term = rhs.copy()
        acc = rhs.copy()
        for _ in range(NEUMANN_MAX_TERMS):
            term = K0 @ term
            acc += term
            if float(np.max(np.abs(term))) < NEUMANN_TOL:
                break
        h_neumann = acc
    if h_direct is None and h_neumann is None:
        raise FredholmError("Neumann series diverges and direct solve is singular")
    if h_direct is not None and h_neumann is not None:
        gap = float(np.max(np.abs(h_direct - h_neumann)))
        if gap > DUAL_PATH_TOL:
            raise FredholmError(f"Neumann and direct solves disagree by {gap:.3e}")
    h = h_direct if h_direct is not None else h_neumann
    return h - float(op.w1 @ h)


def solve_regularized(op: FredholmOperator, rhs: np.ndarray) -> np.ndarray:
    """Minimum-norm solve of the projected system, for near-singular operators."""
    rhs = np.asarray(rhs, dtype=float)
    rhs = rhs - float(op.w1 @ rhs)
    K0 = op.zero_mean_matrix()
    h, *_ = np.linalg.lstsq(np.eye(op.n1) - K0, rhs, rcond=1e-10)
    return h - float(op.w1 @ h)


def to_csv(op: FredholmOperator, path: str) -> None:
    """Export the kernel matrix for inspection."""
    header = ",".join(f"k{i}" for i in range(op.n1))
    np.savetxt(path, op.K, delimiter=",", header=header, comments="")
