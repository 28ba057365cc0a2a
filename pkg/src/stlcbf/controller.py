"""Per-section QP controller over a barrier tree.

At each (t, x) the active leaves partition the neighborhood into sections
where the tree value is smooth.  For each active leaf k the controller
solves

    min  u'Qu
    s.t. (d b0^k/dx)(f(x) + g(x)u) + d b0^k/dt  >=  -alpha(b0(t, x))
         s'_kl(t, x, u) >= 0   for every other active leaf l

where s'_kl is the directional derivative of the switching function along
(1, f+gu): the second constraint family keeps the state inside leaf k's
section for a short time, so the smooth branch gradient is the right one
to push on.  The applied input is the candidate with the smallest
objective; an infeasible candidate is skipped (its objective is +inf).
Time derivatives are left-sided, so deactivation instants evaluate without
special cases.

alpha is the linear gain family alpha(s) = kappa * s.  The feasibility
condition for the gain is kappa * b_min > max over funnels and time of
(-d gamma/dt): with enough barrier headroom b_min, the funnels never
outrun the controller's reaction.  ``check_assumptions`` verifies this
exactly for the closed-form funnel shapes and samples the predicate
conditions.

control_input is pure given a history snapshot; candidate QPs are
independent and could be solved concurrently before the argmin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import barrier as bf
from .barrier import BfTree, History, IndexSets
from .predicates import Predicate
from .qp import QpProblem, QpSolution, solve_qp

__all__ = [
    "ControlConfig",
    "CandidateResult",
    "ControlResult",
    "SampleGrid",
    "AssumptionReport",
    "InfeasibleControlError",
    "candidate_input",
    "control_input",
    "check_assumptions",
    "estimate_b_min",
]

DEFAULT_INPUT_BOUND = 1e6
OBJECTIVE_TIE_TOL = 1e-9


class InfeasibleControlError(RuntimeError):
    """Every candidate QP is infeasible.

    Under the feasibility assumptions at least one candidate always admits
    a finite input, so this signals a violated assumption or input bounds
    that are too tight.  Carries all candidate results (with their
    infeasibility certificates) for diagnosis.
    """

    def __init__(self, t: float, candidates: Mapping[str, "CandidateResult"]):
        super().__init__(
            f"all {len(candidates)} candidate programs infeasible at t={t:g}; "
            "check gain/b_min and input bounds"
        )
        self.t = t
        self.candidates = dict(candidates)


@dataclass(frozen=True)
class ControlConfig:
    """Controller parameters.

    - ``Q``:     positive-definite input cost.
    - ``kappa``: linear class-K gain, alpha(s) = kappa * s, kappa > 0.
    - ``b_min``: positive headroom constant for the gain condition
                 (scenario-supplied; see ``estimate_b_min`` for a sampled
                 estimate).
    - ``tol``:   activity tolerance; None selects 1e-7 * (1 + |b0|).
                 Under zero-order hold set it to at least one tick of the
                 worst funnel drift so branches about to bind already join
                 the candidate set.
    - ``u_lo`` / ``u_hi``: optional input box; defaults to +-1e6, wide
                 enough to stand in for unbounded inputs.
    - ``descent_margin``: constant tightening of the descent constraint
                 (>= 0).  Zero-order hold makes a boundary ride settle a
                 curvature-proportional hair below zero; a small margin
                 moves the equilibrium strictly inside.  The enforced
                 condition is stronger than the continuous one, never
                 weaker.
    """

    Q: np.ndarray
    kappa: float
    b_min: float
    tol: Optional[float] = None
    u_lo: Optional[np.ndarray] = None
    u_hi: Optional[np.ndarray] = None
    descent_margin: float = 0.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.b_min <= 0:
            raise ValueError("b_min must be positive")

    def alpha(self, s: float) -> float:
        return self.kappa * s

    def bounds(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(m, -DEFAULT_INPUT_BOUND) if self.u_lo is None else np.asarray(self.u_lo, dtype=float)
        hi = np.full(m, DEFAULT_INPUT_BOUND) if self.u_hi is None else np.asarray(self.u_hi, dtype=float)
        return lo, hi


@dataclass(frozen=True)
class CandidateResult:
    k: str
    u: Optional[np.ndarray]
    objective: float                       # +inf when infeasible
    status: str
    n_constraints: int
    qp: QpSolution = field(repr=False)

    @property
    def feasible(self) -> bool:
        return self.u is not None


@dataclass(frozen=True)
class ControlResult:
    u: np.ndarray
    k: Optional[str]                       # None when the tree is inactive
    objective: float
    b0: float
    active: tuple[str, ...]
    candidates: Mapping[str, CandidateResult]
    reason: str = "optimal"                # "optimal" | "expired"


def candidate_input(
    k: str,
    t: float,
    x: np.ndarray,
    tree: BfTree,
    hist: History,
    dyn,
    cfg: ControlConfig,
    sets: Optional[IndexSets] = None,
) -> CandidateResult:
    """Solve leaf k's sectional program at (t, x)."""
    if sets is None:
        sets = bf.active_sets(tree, t, x, hist, tol=cfg.tol)
    b0 = sets.values[tree.root]
    bk = bf.eval_bk(tree, k, t, x, hist, sets=sets)
    fx = np.asarray(dyn.f(x), dtype=float)
    gx = np.asarray(dyn.g(x), dtype=float)

    rows = [bk.dx @ gx]
    rhs = [-cfg.alpha(b0) - float(bk.dx @ fx) - bk.dt + cfg.descent_margin]
    for l in sorted(sets.active_elementary[tree.root]):
        if l == k:
            continue
        _, grad = bf.switch_fn(tree, k, l, t, x, hist, sets=sets)
        ds_dt, ds_dx = grad[0], grad[1:]
        rows.append(ds_dx @ gx)
        rhs.append(-ds_dt - float(ds_dx @ fx))

    lo, hi = cfg.bounds(dyn.m)
    problem = QpProblem(
        Q=np.asarray(cfg.Q, dtype=float),
        A=np.vstack(rows),
        c=np.asarray(rhs, dtype=float),
        lower=lo,
        upper=hi,
    )
    sol = solve_qp(problem)
    if sol.optimal:
        return CandidateResult(k, sol.u, sol.objective, sol.status, len(rows), sol)
    return CandidateResult(k, None, math.inf, sol.status, len(rows), sol)


def control_input(
    t: float,
    x: np.ndarray,
    tree: BfTree,
    hist: History,
    dyn,
    cfg: ControlConfig,
) -> ControlResult:
    """Input applied to the plant: the cheapest feasible sectional program.

    Ties within 1e-9 in objective break toward the smallest leaf id, which
    keeps runs deterministic.  Once the tree has expired (the root is past
    its deactivation time under the current history, or no leaf is active)
    the whole state space is safe and the zero input is returned.
    """
    zero = np.zeros(dyn.m)
    if t > bf.node_beta(tree, tree.root, hist):
        return ControlResult(zero, None, 0.0, 0.0, (), {}, reason="expired")

    sets = bf.active_sets(tree, t, x, hist, tol=cfg.tol)
    actives = tuple(sorted(sets.active_elementary[tree.root]))
    if not actives:
        return ControlResult(zero, None, 0.0, sets.values[tree.root], (), {}, reason="expired")

    candidates = {
        k: candidate_input(k, t, x, tree, hist, dyn, cfg, sets=sets) for k in actives
    }
    best: Optional[CandidateResult] = None
    for k in actives:  # ascending leaf id
        cand = candidates[k]
        if not cand.feasible:
            continue
        if best is None or cand.objective < best.objective - OBJECTIVE_TIE_TOL:
            best = cand
    if best is None:
        raise InfeasibleControlError(t, candidates)
    return ControlResult(
        u=best.u,
        k=best.k,
        objective=best.objective,
        b0=sets.values[tree.root],
        active=actives,
        candidates=candidates,
    )


# ---------------------------------------------------------------------------
# Assumption checking


@dataclass(frozen=True)
class SampleGrid:
    """States and times used by the sampled assumption checks."""

    states: np.ndarray                     # (N, n)
    times: np.ndarray                      # (M,)


@dataclass(frozen=True)
class AssumptionReport:
    gain_at_b_min: float                   # kappa * b_min
    max_funnel_rate: float                 # max over funnels/time of -d gamma/dt
    worst_funnel_node: Optional[str]
    gain_ok: bool
    gain_margin: float
    concavity_violations: dict[str, int]
    vanishing_input_gradient: dict[str, int]
    b_min_estimate: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.gain_ok and not any(self.concavity_violations.values())


def check_assumptions(
    tree: BfTree,
    cfg: ControlConfig,
    dyn,
    sampler: Optional[SampleGrid] = None,
    concavity_tol: float = 1e-9,
) -> AssumptionReport:
    """Verify the controller's standing conditions.

    (a) Gain condition, exact on the closed-form funnels:
        kappa * b_min > max over funnels i and t of -d gamma_i/dt.
    (b) Sampled concavity of every leaf predicate.
    (c) Sampled first-order condition: points where the input cannot move
        the predicate value (grad h . g ~ 0) should only occur where the
        predicate is at a maximum (grad h ~ 0); others are flagged.
    Report-only; callers decide whether to abort.
    """
    t_hi = tree.horizon if math.isfinite(tree.horizon) else tree.t1 + 1.0
    max_rate = 0.0
    worst: Optional[str] = None
    for nid in tree.postorder:
        gamma = tree.nodes[nid].gamma
        if gamma is None:
            continue
        rate = gamma.max_neg_deriv(tree.t1, t_hi)
        if rate > max_rate:
            max_rate, worst = rate, nid
    gain_at_b_min = cfg.kappa * cfg.b_min
    gain_margin = gain_at_b_min - max_rate

    concavity: dict[str, int] = {}
    vanishing: dict[str, int] = {}
    b_min_est = None
    if sampler is not None:
        states = np.asarray(sampler.states, dtype=float)
        n_pts = len(states)
        preds = [(k, tree.nodes[k].pred) for k in tree.elementary]
        for k, pred in preds:
            bad = 0
            half = n_pts // 2
            for i in range(half):
                xa, xb = states[i], states[half + i]
                lam = (i + 1) / (half + 1)
                mix = pred.eval(lam * xa + (1 - lam) * xb)
                if mix < lam * pred.eval(xa) + (1 - lam) * pred.eval(xb) - concavity_tol:
                    bad += 1
            concavity[k] = bad

            flat = 0
            for xi in states:
                grad = pred.grad(xi)
                lg = grad @ np.asarray(dyn.g(xi), dtype=float)
                if np.max(np.abs(lg), initial=0.0) < 1e-9 and np.max(np.abs(grad), initial=0.0) > 1e-6:
                    flat += 1
            vanishing[k] = flat

        b_min_est = estimate_b_min(tree, sampler.times, states)

    return AssumptionReport(
        gain_at_b_min=gain_at_b_min,
        max_funnel_rate=max_rate,
        worst_funnel_node=worst,
        gain_ok=gain_at_b_min > max_rate,
        gain_margin=gain_margin,
        concavity_violations=concavity,
        vanishing_input_gradient=vanishing,
        b_min_estimate=b_min_est,
    )


def estimate_b_min(
    tree: BfTree,
    times: Sequence[float],
    states: np.ndarray,
    hist: History = bf.EMPTY_HISTORY,
) -> float:
    """Sampled estimate of the barrier headroom: min over t of max over x of b0.

    A sampled maximum under-estimates the true one, so treat the result as
    a plausibility check on the configured b_min, not a certified bound.
    """
    worst = math.inf
    horizon = tree.horizon
    for t in times:
        if t > horizon:
            continue
        best = max(bf.eval_all(tree, float(t), x, hist)[tree.root] for x in states)
        worst = min(worst, best)
    return worst
