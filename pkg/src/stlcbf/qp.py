"""Dense strictly convex quadratic programs: min u'Qu s.t. A u >= c.

A primal active-set method tailored to the tiny problems this package
produces (a handful of variables, a handful of rows).  The solver is exact
up to linear-algebra rounding: it iterates equality-constrained
subproblems on a working set, so KKT residuals come out at solver
precision rather than at an iterative tolerance.

Feasibility is established by a phase-1 program over (u, s):

    min  eps * u'u + s^2   s.t.   A u + 1 s >= c,  s >= 0

which is always feasible (take s large) and strictly convex, so the same
active-set core solves it.  The phase-1 point is classified by its
residual constraint violation (after a least-squares touch-up that
removes the eps-proportional floor); when the polyhedron is genuinely
empty, the phase-1 multipliers form a Farkas-type certificate: lam >= 0
with A'lam ~ 0 and c'lam > 0.

All tolerances are relative to scale = 1 + ||A||_inf + ||c||_inf computed
from the problem's own constraint rows (optional box bounds participate
in the solve but not in the scale).  Solving is stateless and
deterministic: identical inputs produce bit-identical outputs.  Warm
starts are per-caller via the x0 argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "QpProblem",
    "QpSolution",
    "KktReport",
    "QpError",
    "solve_qp",
    "check_kkt",
    "farkas_residuals",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


class QpError(ValueError):
    """Malformed problems: dimension mismatch, non-positive-definite cost."""


@dataclass(frozen=True)
class QpProblem:
    """min u'Qu over {u | A u >= c} intersected with optional box bounds."""

    Q: np.ndarray
    A: np.ndarray
    c: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Inequality system with the box bounds folded in as rows."""
        m = self.Q.shape[0]
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((0, m))
        else:
            A = np.atleast_2d(A)
            if A.shape[1] != m:
                raise QpError(f"constraint width {A.shape[1]} does not match Q dimension {m}")
        rows = [A]
        rhs = [np.atleast_1d(np.asarray(self.c, dtype=float))]
        if self.lower is not None:
            rows.append(np.eye(m))
            rhs.append(np.asarray(self.lower, dtype=float))
        if self.upper is not None:
            rows.append(-np.eye(m))
            rhs.append(-np.asarray(self.upper, dtype=float))
        return np.vstack(rows), np.concatenate(rhs)


@dataclass(frozen=True)
class QpSolution:
    status: str
    u: Optional[np.ndarray]
    multipliers: Optional[np.ndarray]      # one per stacked row
    objective: float
    kkt_residual: float
    certificate: Optional[np.ndarray] = field(default=None)  # Farkas lam when infeasible

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal_feasibility: float
    complementarity: float
    scale: float

    def within(self, rel: float = 1e-8) -> bool:
        bound = rel * self.scale
        return (
            self.stationarity <= bound
            and self.primal_feasibility <= bound
            and self.complementarity <= bound
        )


def _scale(A: np.ndarray, c: np.ndarray) -> float:
    sa = float(np.max(np.abs(A))) if A.size else 0.0
    sc = float(np.max(np.abs(c))) if c.size else 0.0
    return 1.0 + sa + sc


def _problem_scale(problem: QpProblem) -> float:
    """Tolerance scale from the genuine constraint rows.

    Box bounds are folded into the row system for solving but stay out of
    the scale: a wide default box would otherwise inflate every tolerance.
    """
    A = np.asarray(problem.A, dtype=float)
    c = np.atleast_1d(np.asarray(problem.c, dtype=float))
    return _scale(A if A.size else np.zeros((0,)), c)


def _kkt_step(G: np.ndarray, g: np.ndarray, Aw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Equality-constrained step: min (1/2)p'Gp + g'p s.t. Aw p = 0.

    Returns (p, lam_w) where lam_w are the multipliers of the working rows
    in the sign convention G(x+p) - Aw' lam_w = 0.
    """
    n = G.shape[0]
    w = Aw.shape[0]
    if w == 0:
        p = np.linalg.solve(G, -g)
        return p, np.zeros(0)
    K = np.zeros((n + w, n + w))
    K[:n, :n] = G
    K[:n, n:] = Aw.T
    K[n:, :n] = Aw
    rhs = np.concatenate([-g, np.zeros(w)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    p = sol[:n]
    lam_w = -sol[n:]
    return p, lam_w


def _polish(
    G: np.ndarray, A: np.ndarray, c: np.ndarray, work: list[int], p_rows: int, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Re-solve exactly on the final working set, removing step rounding.

    min (1/2)x'Gx s.t. A_w x = c_w, from scratch; multipliers in the
    convention Gx - A_w' lam_w = 0.
    """
    w = len(work)
    if w == 0:
        return np.zeros(n), np.zeros(p_rows)
    Aw = A[work]
    K = np.zeros((n + w, n + w))
    K[:n, :n] = G
    K[:n, n:] = Aw.T
    K[n:, :n] = Aw
    rhs = np.concatenate([np.zeros(n), c[work]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    x = sol[:n]
    lam = np.zeros(p_rows)
    for idx, row in enumerate(work):
        lam[row] = max(-sol[n + idx], 0.0)
    return x, lam


def _active_set(
    G: np.ndarray,
    A: np.ndarray,
    c: np.ndarray,
    x: np.ndarray,
    scale: float,
    max_iter: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Primal active-set iteration from a feasible x.

    Returns (x_opt, lam) with lam >= 0 over all rows.  Ties in the add/drop
    rules break toward the lowest row index, which makes the iteration
    deterministic.  The working set starts empty and grows one blocking row
    at a time, which keeps its rows independent on nondegenerate data.
    """
    p_rows = A.shape[0]
    work: list[int] = []

    for _ in range(max_iter):
        Aw = A[work] if work else np.zeros((0, len(x)))
        g = G @ x
        p, lam_w = _kkt_step(G, g, Aw)

        alpha = 1.0
        blocking = -1
        if np.max(np.abs(p), initial=0.0) > 1e-13 * (1.0 + np.max(np.abs(x))):
            for row in range(p_rows):
                if row in work:
                    continue
                d = float(A[row] @ p)
                if d < -1e-13 * scale:
                    step = float(c[row] - A[row] @ x) / d
                    if step < alpha - 1e-15:
                        alpha = max(step, 0.0)
                        blocking = row
        x = x + alpha * p

        if blocking >= 0:
            work.append(blocking)
            work.sort()
            continue

        # Full step: x solves the equality subproblem on the working set and
        # lam_w are its multipliers, so the optimality test applies now.
        if len(work) == 0 or np.min(lam_w) >= -1e-10 * scale:
            x_fin, lam = _polish(G, A, c, work, p_rows, len(x))
            # keep the polished point only if it stayed feasible
            if p_rows == 0 or np.min(A @ x_fin - c) >= -1e-8 * scale:
                return x_fin, lam
            lam = np.zeros(p_rows)
            for idx, row in enumerate(work):
                lam[row] = max(lam_w[idx], 0.0)
            return x, lam
        work.pop(int(np.argmin(lam_w)))

    raise QpError(f"active-set iteration did not converge within {max_iter} steps")


def _phase1(A: np.ndarray, c: np.ndarray, scale: float) -> tuple[np.ndarray, float, np.ndarray]:
    """Feasibility program over (u, s); returns (u, s_opt, lam_rows)."""
    p_rows, m = A.shape
    eps = 1e-9 * scale
    G = np.zeros((m + 1, m + 1))
    G[:m, :m] = 2.0 * eps * np.eye(m)
    G[m, m] = 2.0
    A1 = np.hstack([A, np.ones((p_rows, 1))])
    A1 = np.vstack([A1, np.concatenate([np.zeros(m), [1.0]])])  # s >= 0
    c1 = np.concatenate([c, [0.0]])
    s0 = max(0.0, float(np.max(c)) if c.size else 0.0) + 1.0
    x0 = np.concatenate([np.zeros(m), [s0]])
    x_opt, lam = _active_set(G, A1, c1, x0, scale, max_iter=50 * (p_rows + m) + 100)
    return x_opt[:m], float(x_opt[m]), lam[:p_rows]


def solve_qp(problem: QpProblem, x0: Optional[np.ndarray] = None) -> QpSolution:
    """Global minimum of the strictly convex QP, or an infeasibility certificate.

    ``x0`` is an optional warm-start point; it is used when it is feasible
    and ignored otherwise.
    """
    Q = np.asarray(problem.Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise QpError(f"Q must be square, got shape {Q.shape}")
    m = Q.shape[0]
    if np.max(np.abs(Q - Q.T)) > 1e-12 * (1.0 + np.max(np.abs(Q))):
        raise QpError("Q must be symmetric")
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise QpError("Q must be positive definite") from None

    A, c = problem.stacked()
    if A.shape[1] != m:
        raise QpError(f"constraint width {A.shape[1]} does not match Q dimension {m}")
    scale = _problem_scale(problem)
    G = 2.0 * Q

    if A.shape[0] == 0:
        u = np.zeros(m)
        return QpSolution(OPTIMAL, u, np.zeros(0), 0.0, 0.0)

    feas_tol = 1e-9 * scale
    start = None
    if x0 is not None and np.min(A @ np.asarray(x0, dtype=float) - c) >= -feas_tol:
        start = np.asarray(x0, dtype=float)
    elif np.min(-c) >= -feas_tol and np.min(A @ np.zeros(m) - c) >= -feas_tol:
        start = np.zeros(m)
    else:
        u1, _, lam1 = _phase1(A, c, scale)
        # The regularized phase-1 leaves an eps-proportional residual when
        # the feasible set sits far from the origin; one least-squares
        # correction on the near-active rows collapses it.  A genuinely
        # empty polyhedron keeps a violation of the order of its margin.
        accept = 1e-7 * scale
        violation = float(max(0.0, np.max(c - A @ u1)))
        if violation > accept:
            near = (c - A @ u1) >= -1e-4 * scale
            if np.any(near):
                delta, *_ = np.linalg.lstsq(A[near], (c - A @ u1)[near], rcond=None)
                u_try = u1 + delta
                if float(max(0.0, np.max(c - A @ u_try))) <= accept:
                    u1, violation = u_try, 0.0
        if violation > accept:
            lam1 = np.maximum(lam1, 0.0)
            return QpSolution(
                INFEASIBLE, None, None, math.inf, math.inf, certificate=lam1
            )
        start = u1

    u, lam = _active_set(G, A, c, start, scale, max_iter=50 * (A.shape[0] + m) + 100)
    residual = _kkt_residuals(Q, A, c, u, lam)
    objective = float(u @ Q @ u)
    return QpSolution(OPTIMAL, u, lam, objective, max(residual))


def _kkt_residuals(Q, A, c, u, lam) -> tuple[float, float, float]:
    stationarity = float(np.max(np.abs(2.0 * Q @ u - A.T @ lam))) if A.size else float(
        np.max(np.abs(2.0 * Q @ u))
    )
    slack = A @ u - c
    primal = float(max(0.0, -np.min(slack))) if A.size else 0.0
    comp = float(np.max(np.abs(lam * slack))) if A.size else 0.0
    return stationarity, primal, comp


def check_kkt(problem: QpProblem, solution: QpSolution) -> KktReport:
    """Recompute the three optimality residuals for an optimal solution."""
    if not solution.optimal:
        raise QpError("KKT check requires an optimal solution")
    A, c = problem.stacked()
    Q = np.asarray(problem.Q, dtype=float)
    stationarity, primal, comp = _kkt_residuals(Q, A, c, solution.u, solution.multipliers)
    return KktReport(stationarity, primal, comp, _problem_scale(problem))


def farkas_residuals(problem: QpProblem, lam: np.ndarray) -> tuple[float, float, float]:
    """How well lam certifies infeasibility of {u | A u >= c}.

    Returns (negativity, combination, gain): lam >= 0 up to ``negativity``,
    ||A'lam||_inf = ``combination``, and c'lam = ``gain``.  A valid
    certificate has negativity ~ 0, combination ~ 0, and gain > 0, which
    makes A u >= c impossible: 0 ~ (A'lam)'u = lam'(Au) >= lam'c > 0.
    """
    A, c = problem.stacked()
    negativity = float(max(0.0, -np.min(lam))) if lam.size else 0.0
    combination = float(np.max(np.abs(A.T @ lam))) if lam.size else 0.0
    gain = float(c @ lam)
    return negativity, combination, gain
