"""First-order model-risk sensitivities and optimal hedging multipliers.

Every sensitivity is the infimum, over the active hedging multipliers, of
the dual norm of the gradient field plus the hedge field.  At p = 2 the
first-order conditions are linear and solved in closed form; for general
p > 1 a damped fixed-point iteration on the first-order conditions uses
the p = 2 solve as preconditioner.  Both paths report the normalized
optimal direction together with a first-order-condition residual
certificate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fredholm
from .criterion import GradientField
from .measure import (BinPartition, GridMeasure, MARTINGALE_RTOL, bin_centers,
                      bin_masses, cond_exp_1, quantile_bins)

FOC_TOL = 1e-8
FOC_MAX_ITER = 10_000
FOC_DAMPING = 0.5
CONTRACTION_FLAG = fredholm.NEUMANN_GATE


class SensitivityError(ValueError):
    """Unusable constraint set or violated non-degeneracy assumption."""


@dataclass(frozen=True)
class Metric:
    """Ambiguity ball: classical or adapted p-Wasserstein."""

    ball: str
    p: float = 2.0

    def __post_init__(self):
        if self.ball not in ("wp", "wp_adapted"):
            raise SensitivityError(f"unknown ball {self.ball!r}")
        if not (self.p > 1):
            raise SensitivityError("the exponent must satisfy p > 1")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def adapted(self) -> bool:
        return self.ball == "wp_adapted"


W2 = Metric("wp", 2.0)
W2AD = Metric("wp_adapted", 2.0)


@dataclass(frozen=True)
class MeanConstraint:
    """Mean-type constraint: integral of fn against the perturbed law is kept."""

    fn: Callable
    d1: Callable
    d2: Callable
    name: str = "phi"


@dataclass(frozen=True)
class CondConstraint:
    """Conditional constraint E[psi(X) | X1] = 0 with partials d1, d2."""

    fn: Callable
    d1: Callable
    d2: Callable
    name: str = "psi"


def martingale_psi() -> CondConstraint:
    return CondConstraint(
        fn=lambda a, b: b - a,
        d1=lambda a, b: -np.ones_like(a),
        d2=lambda a, b: np.ones_like(b),
        name="x2-x1",
    )


@dataclass(frozen=True)
class ConstraintSet:
    martingale: bool = False
    marginal1: bool = False
    marginal2: bool = False
    mean_phi: tuple = ()
    cond_psi: CondConstraint | None = None

    def __post_init__(self):
        if self.martingale and self.cond_psi is not None:
            a = np.linspace(-1.3, 2.1, 7)
            b = a[::-1] + 0.4
            if np.max(np.abs(self.cond_psi.fn(a, b) - (b - a))) > 1e-9:
                raise SensitivityError(
                    "martingale flag with a conditional constraint other than x2 - x1 is redundant")

    def label(self) -> str:
        parts = [name for flag, name in ((self.martingale, "M"), (self.marginal1, "m1"),
                                         (self.marginal2, "m2")) if flag]
        parts += [f"phi:{c.name}" for c in self.mean_phi]
        if self.cond_psi is not None:
            parts.append(f"psi:{self.cond_psi.name}")
        return "+".join(parts) if parts else "unconstrained"


@dataclass
class SensitivityReport:
    """Sensitivity value with multipliers, optimal direction and certificate."""

    value: float
    metric: Metric
    constraints: str
    T1: np.ndarray
    T2: np.ndarray
    foc_residual: float
    iterations: int
    lambda_hat: np.ndarray | None = None
    h_hat: np.ndarray | None = None
    f1: np.ndarray | None = None
    f2: np.ndarray | None = None
    bins: BinPartition | None = None
    warnings: tuple = ()

    def direction(self) -> GradientField:
        return GradientField(self.T1, self.T2)


def n_map(v, p: float):
    """Duality map sgn(v) |v|^{p'-1}, applied componentwise; N(0) = 0."""
    if not (p > 1):
        raise SensitivityError("the exponent must satisfy p > 1")
    v = np.asarray(v, dtype=float)
    e = p / (p - 1.0) - 1.0
    out = np.sign(v) * np.power(np.abs(v), e, where=v != 0, out=np.zeros_like(v))
    return float(out) if out.ndim == 0 else out


def adapted_gradient(mu: GridMeasure, G: GradientField) -> GradientField:
    """Replace the first component by its conditional expectation given X1."""
    g1 = cond_exp_1(mu, G.g1)
    return GradientField(np.broadcast_to(g1[:, None], G.g1.shape).copy(), G.g2.copy())


def _grad_d(mu: GridMeasure, G: GradientField, metric: Metric):
    if metric.adapted:
        Ga = adapted_gradient(mu, G)
        return Ga.g1, Ga.g2
    return np.asarray(G.g1, dtype=float), np.asarray(G.g2, dtype=float)


def _dual_norm(mw: np.ndarray, S1: np.ndarray, S2: np.ndarray, metric: Metric) -> float:
    pc = metric.p_conj
    if metric.adapted:
        val = np.sum(mw * (np.abs(S1) ** pc + np.abs(S2) ** pc))
    else:
        val = np.sum(mw * np.hypot(S1, S2) ** pc)
    return float(val ** (1.0 / pc))


def _primal_norm(mw: np.ndarray, T1: np.ndarray, T2: np.ndarray, metric: Metric) -> float:
    p = metric.p
    if metric.adapted:
        val = np.sum(mw * (np.abs(T1) ** p + np.abs(T2) ** p))
    else:
        val = np.sum(mw * np.hypot(T1, T2) ** p)
    return float(val ** (1.0 / p))


def _direction(mw, S1, S2, metric: Metric):
    """Normalized optimal direction T = N_d(S)/c with unit primal norm."""
    if metric.adapted:
        T1, T2 = n_map(S1, metric.p), n_map(S2, metric.p)
    else:
        mag = np.hypot(S1, S2)
        fac = np.power(mag, metric.p_conj - 2.0, where=mag > 0, out=np.zeros_like(mag))
        T1, T2 = fac * S1, fac * S2
    c = _primal_norm(mw, T1, T2, metric)
    if c == 0.0:
        return np.zeros_like(S1), np.zeros_like(S2), 0.0
    return T1 / c, T2 / c, c


class _FlagProblem:
    """FOC state for the martingale / marginal flag combinations."""

    def __init__(self, mu: GridMeasure, G: GradientField, metric: Metric,
                 cs: ConstraintSet, bins: BinPartition | None):
        self.mu = mu
        self.metric = metric
        self.cs = cs
        self.mw = mu.atom_masses()
        self.S1_0, self.S2_0 = _grad_d(mu, G, metric)
        self.warnings: list[str] = []
        self.bins = None
        self.binidx = None
        self.op = None
        if cs.marginal2:
            self.bins = bins if bins is not None else quantile_bins(mu, mu.n2)
            self.binidx = self.bins.assign(mu.x2.ravel()).reshape(mu.x2.shape)
            self.binmass = bin_masses(mu, self.bins)
            if cs.martingale:
                self.op = fredholm.build_operator(mu, self.bins)
                self.contraction = fredholm.contraction_norm(self.op, "l2")
                if cs.marginal1 and self.contraction >= CONTRACTION_FLAG:
                    msg = (f"informational-discrepancy contraction {self.contraction:.6f} >= "
                           f"{CONTRACTION_FLAG}; using regularized hedge solve")
                    warnings.warn(msg, RuntimeWarning, stacklevel=4)
                    self.warnings.append(msg)
        self.f1 = np.zeros(mu.n1) if cs.marginal1 else None
        self.f2 = np.zeros(self.bins.m) if cs.marginal2 else None
        self.h = np.zeros(mu.n1) if cs.martingale else None

    def _e2(self, fld: np.ndarray) -> np.ndarray:
        acc = np.zeros(self.bins.m)
        np.add.at(acc, self.binidx.ravel(), (self.mw * fld).ravel())
        return acc / self.binmass

    def _e1_of_bin(self, u: np.ndarray) -> np.ndarray:
        return np.sum(self.mu.q * u[self.binidx], axis=1)

    def hedge_field(self):
        F1 = np.zeros_like(self.S1_0)
        F2 = np.zeros_like(self.S2_0)
        if self.f1 is not None:
            F1 += self.f1[:, None]
        if self.f2 is not None:
            F2 += self.f2[self.binidx]
        if self.h is not None:
            F1 -= self.h[:, None]
            F2 += self.h[:, None]
        return F1, F2

    def residual(self, T1, T2):
        comps = {}
        if self.cs.marginal1:
            comps["m1"] = cond_exp_1(self.mu, T1)
        if self.cs.marginal2:
            comps["m2"] = self._e2(T2)
        if self.cs.martingale:
            comps["M"] = cond_exp_1(self.mu, T2 - T1)
        return comps

    def correction(self, comps):
        """Solve the p = 2 linear map L(field(du)) = R for du."""
        R1 = comps.get("m1")
        R2 = comps.get("m2")
        RM = comps.get("M")
        df1 = df2 = dh = None
        if self.cs.martingale:
            if self.cs.marginal1 and self.cs.marginal2:
                rhs = RM + R1 - self._e1_of_bin(R2)
                rhs = rhs - float(self.mu.w1 @ rhs)
                if self.contraction >= CONTRACTION_FLAG:
                    dh = fredholm.solve_regularized(self.op, rhs)
                else:
                    dh = fredholm.solve(self.op, rhs)
                df1 = R1 + dh
                df2 = R2 - self._e2(np.broadcast_to(dh[:, None], self.mw.shape))
            elif self.cs.marginal2:
                rhs = RM - self._e1_of_bin(R2)
                dh = np.linalg.solve(2.0 * np.eye(self.mu.n1) - self.op_matrix(), rhs)
                df2 = R2 - self._e2(np.broadcast_to(dh[:, None], self.mw.shape))
            elif self.cs.marginal1:
                dh = R1 + RM
                df1 = 2.0 * R1 + RM
            else:
                dh = 0.5 * RM
        else:
            if self.cs.marginal1:
                df1 = R1
            if self.cs.marginal2:
                df2 = R2
        return df1, df2, dh

    def op_matrix(self):
        if self.op is None:
            self.op = fredholm.build_operator(self.mu, self.bins)
            self.contraction = fredholm.contraction_norm(self.op, "l2")
        return self.op.K

    def update(self, duple, scale: float):
        df1, df2, dh = duple
        if df1 is not None:
            self.f1 -= scale * df1
        if df2 is not None:
            self.f2 -= scale * df2
        if dh is not None:
            self.h -= scale * dh
        if self.h is not None and self.cs.marginal1 and self.cs.marginal2:
            # zero-mean representative; the shift is absorbed by f1 and f2
            c = float(self.mu.w1 @ self.h)
            if c != 0.0:
                self.h = self.h - c
                self.f1 = self.f1 - c
                self.f2 = self.f2 + c

    def snapshot(self):
        return (None if self.f1 is None else self.f1.copy(),
                None if self.f2 is None else self.f2.copy(),
                None if self.h is None else self.h.copy())

    def restore(self, state):
        self.f1, self.f2, self.h = (None if s is None else s.copy() for s in state)

    def multipliers(self):
        return {"f1": None if self.f1 is None else self.f1.copy(),
                "f2": None if self.f2 is None else self.f2.copy(),
                "h_hat": None if self.h is None else self.h.copy()}


class _GeneralProblem:
    """FOC state for mean (phi) and conditional (psi) constraints."""

    def __init__(self, mu: GridMeasure, G: GradientField, metric: Metric, cs: ConstraintSet):
        self.mu = mu
        self.metric = metric
        self.cs = cs
        self.mw = mu.atom_masses()
        self.S1_0, self.S2_0 = _grad_d(mu, G, metric)
        self.warnings: list[str] = []
        a = np.broadcast_to(mu.x1[:, None], mu.x2.shape)
        self.phi1 = []
        self.phi2 = []
        for c in cs.mean_phi:
            p1 = np.asarray(c.d1(a, mu.x2), dtype=float) + np.zeros_like(mu.x2)
            p2 = np.asarray(c.d2(a, mu.x2), dtype=float) + np.zeros_like(mu.x2)
            if metric.adapted:
                p1 = np.broadcast_to(cond_exp_1(mu, p1)[:, None], p1.shape).copy()
            self.phi1.append(p1)
            self.phi2.append(p2)
        self.k = len(self.phi1)
        self.psi1 = self.psi2 = None
        if cs.cond_psi is not None:
            if not metric.adapted:
                raise SensitivityError("conditional constraints require the adapted ball")
            psi = cs.cond_psi
            self.psi1 = np.asarray(psi.d1(a, mu.x2), dtype=float) + np.zeros_like(mu.x2)
            self.psi1 = np.broadcast_to(cond_exp_1(mu, self.psi1)[:, None], mu.x2.shape).copy()
            self.psi2 = np.asarray(psi.d2(a, mu.x2), dtype=float) + np.zeros_like(mu.x2)
            self.psi_gram = cond_exp_1(mu, self.psi1 ** 2 + self.psi2 ** 2)
            if np.min(cond_exp_1(mu, self.psi2 ** 2)) <= 1e-14:
                raise SensitivityError(
                    "E1[(d2 psi)^2] is degenerate on some atom (assumption A (iii) surrogate)")
        if self.k and cs.cond_psi is not None:
            for p1, p2 in zip(self.phi1, self.phi2):
                if (np.max(np.abs(p1 + p2)) < 1e-12
                        and np.max(np.abs(p1 - p1[0, 0])) < 1e-12
                        and np.max(np.abs(self.psi1 + self.psi2)) < 1e-12):
                    raise SensitivityError(
                        "mean constraint spans the conditional-constraint direction "
                        "(non-redundancy assumption A (iv) violated)")
        self.lam = np.zeros(self.k)
        self.h = np.zeros(mu.n1) if cs.cond_psi is not None else None
        self._assemble_p2()

    def _assemble_p2(self):
        k = self.k
        self.Gphi = np.zeros((k, k))
        for a in range(k):
            for b in range(k):
                self.Gphi[a, b] = np.sum(self.mw * (self.phi1[a] * self.phi1[b]
                                                    + self.phi2[a] * self.phi2[b]))
        if self.h is not None:
            self.Bx = np.zeros((k, self.mu.n1))   # E1[phi_a . psi] per atom
            for a in range(k):
                self.Bx[a] = cond_exp_1(self.mu, self.phi1[a] * self.psi1
                                        + self.phi2[a] * self.psi2)
        if k:
            cond = np.linalg.cond(self._reduced_matrix())
            if not np.isfinite(cond) or cond > 1e12:
                raise SensitivityError(
                    "normal matrix is singular (positive-definiteness assumption violated)")

    def _reduced_matrix(self):
        M = self.Gphi.copy()
        if self.h is not None:
            M -= (self.Bx * self.mu.w1[None, :] / self.psi_gram[None, :]) @ self.Bx.T
        return M

    def hedge_field(self):
        F1 = np.zeros_like(self.S1_0)
        F2 = np.zeros_like(self.S2_0)
        for a in range(self.k):
            F1 += self.lam[a] * self.phi1[a]
            F2 += self.lam[a] * self.phi2[a]
        if self.h is not None:
            F1 += self.psi1 * self.h[:, None]
            F2 += self.psi2 * self.h[:, None]
        return F1, F2

    def residual(self, T1, T2):
        comps = {}
        if self.k:
            comps["phi"] = np.array([np.sum(self.mw * (p1 * T1 + p2 * T2))
                                     for p1, p2 in zip(self.phi1, self.phi2)])
        if self.h is not None:
            comps["psi"] = cond_exp_1(self.mu, self.psi1 * T1 + self.psi2 * T2)
        return comps

    def correction(self, comps):
        Rphi = comps.get("phi")
        Rpsi = comps.get("psi")
        if self.h is None:
            dlam = np.linalg.solve(self.Gphi, Rphi)
            return dlam, None
        if self.k == 0:
            return None, Rpsi / self.psi_gram
        red = Rphi - (self.Bx * self.mu.w1[None, :] / self.psi_gram[None, :]) @ Rpsi
        dlam = np.linalg.solve(self._reduced_matrix(), red)
        dh = (Rpsi - self.Bx.T @ dlam) / self.psi_gram
        return dlam, dh

    def update(self, duple, scale: float):
        dlam, dh = duple
        if dlam is not None:
            self.lam = self.lam - scale * dlam
        if dh is not None:
            self.h = self.h - scale * dh

    def snapshot(self):
        return (self.lam.copy(), None if self.h is None else self.h.copy())

    def restore(self, state):
        self.lam = state[0].copy()
        self.h = None if state[1] is None else state[1].copy()

    def multipliers(self):
        return {"lambda_hat": self.lam.copy() if self.k else None,
                "h_hat": None if self.h is None else self.h.copy()}


def _residual_norm(problem, comps) -> float:
    """Norm of the constraint operator applied to T.

    Per-atom and per-bin components are measured in the weighted L2 norms of
    the spaces the operator maps into (L^p(mu_1) and its bin analogue);
    finite-dimensional mean-constraint components in the max norm.
    """
    worst = 0.0
    w1 = problem.mu.w1
    for key, v in comps.items():
        if not np.size(v):
            continue
        if key == "phi":
            worst = max(worst, float(np.max(np.abs(v))))
        elif key == "m2":
            worst = max(worst, float(np.sqrt(np.sum(problem.binmass * v ** 2))))
        else:
            worst = max(worst, float(np.sqrt(np.sum(w1 * v ** 2))))
    return worst


def _run_foc(problem, metric: Metric, warm_start: bool = True) -> SensitivityReport:
    mw = problem.mw
    if warm_start:
        # p = 2 closed form (exact solve of the linearized FOC)
        F1, F2 = problem.hedge_field()
        comps0 = problem.residual(problem.S1_0 + F1, problem.S2_0 + F2)
        if comps0:
            problem.update(problem.correction(comps0), 1.0)
    iterations = 0
    res = 0.0
    damping = FOC_DAMPING
    best_res = np.inf
    best_state = None
    improved_streak = 0
    for it in range(FOC_MAX_ITER + 1):
        F1, F2 = problem.hedge_field()
        S1, S2 = problem.S1_0 + F1, problem.S2_0 + F2
        T1, T2, c = _direction(mw, S1, S2, metric)
        if c == 0.0:
            res = 0.0
            iterations = it
            break
        comps = problem.residual(T1, T2)
        res = _residual_norm(problem, comps)
        iterations = it
        if res <= FOC_TOL or not comps:
            break
        # trust-region flavored damping: for p > 2 the duality map's
        # derivative is unbounded near zeros of the dual field, so the
        # nominal step can overshoot; shrink the step from the best state
        if res < best_res:
            best_res = res
            best_state = problem.snapshot()
            improved_streak += 1
            if improved_streak >= 3:        # hysteresis against thrashing
                damping = min(1.5 * damping, FOC_DAMPING)
        elif res > 1.2 * best_res:
            problem.restore(best_state)
            improved_streak = 0
            damping *= 0.5
            if damping >= 1e-8:
                continue            # retry from the best state, smaller step
        if it == FOC_MAX_ITER or damping < 1e-8:
            if best_state is not None:
                problem.restore(best_state)
                res = best_res
                F1, F2 = problem.hedge_field()
                S1, S2 = problem.S1_0 + F1, problem.S2_0 + F2
                T1, T2, c = _direction(mw, S1, S2, metric)
            msg = f"FOC iteration did not converge: residual {res:.3e} after {it} steps"
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
            problem.warnings.append(msg)
            break
        problem.update(problem.correction(comps), damping * c)
    value = _dual_norm(mw, S1, S2, metric)
    out = SensitivityReport(
        value=value, metric=metric, constraints=problem.cs.label(),
        T1=T1, T2=T2, foc_residual=res, iterations=iterations,
        bins=getattr(problem, "bins", None), warnings=tuple(problem.warnings))
    for key, val in problem.multipliers().items():
        setattr(out, key, val)
    return out


def _require_martingale(mu: GridMeasure) -> None:
    tol = MARTINGALE_RTOL * max(1.0, float(np.max(np.abs(mu.x1))))
    if not mu.is_martingale and mu.martingale_residual() > tol:
        raise SensitivityError("martingale constraint needs a martingale measure")


def solve_foc(mu: GridMeasure, G: GradientField, metric: Metric,
              constraints: ConstraintSet, bins: BinPartition | None = None,
              warm_start: bool = True) -> SensitivityReport:
    """Minimize the dual norm over the active multipliers via the FOC.

    ``warm_start=False`` iterates the damped fixed point from zero
    multipliers instead of starting at the p = 2 closed form, which keeps
    the two solution paths independent for cross-validation.
    """
    if constraints.mean_phi or constraints.cond_psi is not None:
        if constraints.martingale or constraints.marginal1 or constraints.marginal2:
            raise SensitivityError(
                "mean/conditional constraints cannot be mixed with marginal flags")
        return _run_foc(_GeneralProblem(mu, G, metric, constraints), metric, warm_start)
    if constraints.martingale:
        _require_martingale(mu)
    return _run_foc(_FlagProblem(mu, G, metric, constraints, bins), metric, warm_start)


def sens_unconstrained(mu: GridMeasure, G: GradientField, metric: Metric) -> SensitivityReport:
    return solve_foc(mu, G, metric, ConstraintSet())


def sens_martingale(mu: GridMeasure, G: GradientField, metric: Metric) -> SensitivityReport:
    return solve_foc(mu, G, metric, ConstraintSet(martingale=True))


def sens_marginal(mu: GridMeasure, G: GradientField, metric: Metric,
                  bins: BinPartition | None = None) -> SensitivityReport:
    return solve_foc(mu, G, metric, ConstraintSet(marginal1=True, marginal2=True), bins)


def sens_mart_marginal(mu: GridMeasure, G: GradientField,
                       bins: BinPartition | None = None, p: float = 2.0) -> SensitivityReport:
    """Martingale plus both marginals under the adapted ball (hedge via Fredholm)."""
    return solve_foc(mu, G, Metric("wp_adapted", p),
                     ConstraintSet(martingale=True, marginal1=True, marginal2=True), bins)


def sens_general(mu: GridMeasure, G: GradientField, metric: Metric,
                 phi=(), psi: CondConstraint | None = None) -> SensitivityReport:
    """Sensitivity under mean constraints phi and conditional constraint psi."""
    cs = ConstraintSet(mean_phi=tuple(phi), cond_psi=psi)
    return solve_foc(mu, G, metric, cs)


def marginal_value_closed_form(mu: GridMeasure, G: GradientField, metric: Metric,
                               bins: BinPartition | None = None) -> float:
    """Variance-style p = 2 expression for the marginal-constrained value.

    Independent of the optimization path: centers each gradient component by
    its own conditional expectation and takes the L2 norm.
    """
    if metric.p != 2.0:
        raise SensitivityError("closed form is for p = 2")
    bins = bins if bins is not None else quantile_bins(mu, mu.n2)
    G1d, G2d = _grad_d(mu, G, metric)
    mw = mu.atom_masses()
    idx = bins.assign(mu.x2.ravel()).reshape(mu.x2.shape)
    mass = bin_masses(mu, bins)
    e2 = np.zeros(bins.m)
    np.add.at(e2, idx.ravel(), (mw * G2d).ravel())
    e2 /= mass
    c2 = G2d - e2[idx]
    if metric.adapted:
        return float(np.sqrt(np.sum(mw * c2 ** 2)))
    c1 = G1d - cond_exp_1(mu, G1d)[:, None]
    return float(np.sqrt(np.sum(mw * (c1 ** 2 + c2 ** 2))))


def report_to_json(report: SensitivityReport) -> dict:
    """JSON-ready dict: value, multipliers as tables, residuals."""
    def arr(x):
        return None if x is None else [float(v) for v in np.asarray(x).ravel()]

    return {
        "value": report.value,
        "metric": {"ball": report.metric.ball, "p": report.metric.p},
        "constraints": report.constraints,
        "foc_residual": report.foc_residual,
        "iterations": report.iterations,
        "lambda_hat": arr(report.lambda_hat),
        "h_hat": arr(report.h_hat),
        "f1": arr(report.f1),
        "f2": arr(report.f2),
        "warnings": list(report.warnings),
    }


def report_tables(report: SensitivityReport, mu: GridMeasure):
    """CSV-ready rows: (x1, h, f1) and (x2_bin_center, f2)."""
    n1 = mu.n1
    h = report.h_hat if report.h_hat is not None else np.full(n1, np.nan)
    f1 = report.f1 if report.f1 is not None else np.full(n1, np.nan)
    rows1 = [(float(mu.x1[i]), float(h[i]), float(f1[i])) for i in range(n1)]
    rows2 = []
    if report.f2 is not None and report.bins is not None:
        centers = bin_centers(mu, report.bins)
        rows2 = [(float(centers[b]), float(report.f2[b])) for b in range(report.bins.m)]
    return rows1, rows2
