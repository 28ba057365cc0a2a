"""Offline verification of recorded runs.

Two independent checks per trajectory:

- ``min_barrier`` replays the disjunction history along the trace and
  scans the barrier value, the quantity the controller promises to keep
  nonnegative.
- ``stl_robustness`` evaluates the task formula directly with discrete-time
  quantitative semantics over the recorded samples (predicate: h(x(t));
  and: min; or: max; eventually: window max; always: window min; until:
  max over witness samples of min(right-operand, prefix minimum of the
  left operand)).  Until is evaluated from its own semantics, not through
  the construction's rewrite, so the two checks stay independent.

A nonnegative barrier along the run implies the task is satisfied, which
``satisfaction_report`` turns into a one-directional report: barrier premise
=> robustness above the sampling error budget.  The converse direction is
never asserted.  Everything here is pure over immutable trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import barrier as bf
from . import formulas as fm
from .barrier import BfTree, EMPTY_HISTORY, History
from .sim import Trajectory, default_history_tol

__all__ = [
    "RobustnessResult",
    "SatisfactionReport",
    "min_barrier",
    "stl_robustness",
    "sampling_tolerance",
    "satisfaction_report",
    "replay_history",
    "input_jump_count",
]

_WINDOW_EPS = 1e-9


@dataclass(frozen=True)
class RobustnessResult:
    value: float
    verdict: str                           # "satisfied" | "violated" | "boundary"


@dataclass(frozen=True)
class SatisfactionReport:
    min_b0: float
    argmin_t: float
    robustness: float
    tol_sampling: float
    premise: bool                          # min_b0 >= 0
    holds: bool                            # premise => robustness >= -tol_sampling
    vacuous: bool                          # premise false: nothing to check


def replay_history(
    traj: Trajectory, tree: BfTree, tol: float | None = None
) -> list[History]:
    """History snapshot at each sample, rebuilt in recording order.

    The default disqualification band matches the one the simulation loop
    derives from the funnel rates and the sample spacing, so replayed
    histories agree with recorded runs.
    """
    if tol is None:
        dt = float(np.median(np.diff(traj.times))) if len(traj.times) > 1 else 1.0
        tol = default_history_tol(tree, dt)
    out = []
    hist = EMPTY_HISTORY
    for i in range(len(traj.times)):
        hist = bf.update_history(tree, hist, float(traj.times[i]), traj.states[i], tol=tol)
        out.append(hist)
    return out


def min_barrier(
    traj: Trajectory, tree: BfTree, refine: int = 4, history_tol: float | None = None
) -> tuple[float, float]:
    """(min over the trace of b0, argmin time), with inter-sample refinement.

    Between samples the state is interpolated linearly and the funnels
    evaluated exactly, which catches dips the tick grid straddles.  The
    history snapshot of the left sample applies across its interval.
    """
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    hists = replay_history(traj, tree, tol=history_tol)
    best = math.inf
    best_t = float(traj.times[0])
    for i in range(len(traj.times)):
        t_i = float(traj.times[i])
        val = bf.eval_all(tree, t_i, traj.states[i], hists[i])[tree.root]
        if val < best:
            best, best_t = val, t_i
        if i + 1 < len(traj.times) and refine > 0:
            t_next = float(traj.times[i + 1])
            x_i, x_next = traj.states[i], traj.states[i + 1]
            for j in range(1, refine + 1):
                w = j / (refine + 1)
                t_mid = t_i + w * (t_next - t_i)
                x_mid = (1 - w) * x_i + w * x_next
                val = bf.eval_all(tree, t_mid, x_mid, hists[i])[tree.root]
                if val < best:
                    best, best_t = val, t_mid
    return best, best_t


def _window_indices(times: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi > times[-1] + _WINDOW_EPS:
        raise ValueError(
            f"window [{lo:g},{hi:g}] extends beyond the trace end {times[-1]:g}"
        )
    idx = np.flatnonzero((times >= lo - _WINDOW_EPS) & (times <= hi + _WINDOW_EPS))
    if idx.size == 0:
        raise ValueError(f"window [{lo:g},{hi:g}] contains no samples")
    return idx


def _robustness_signal(formula: fm.Formula, traj: Trajectory) -> np.ndarray:
    """Pointwise robustness of a boolean-layer formula at every sample."""
    if isinstance(formula, fm.TrueNode):
        return np.full(len(traj.times), math.inf)
    if isinstance(formula, fm.Pred):
        if formula.binding is None:
            raise ValueError(f"predicate {formula.name!r} has no bound function")
        return np.array([formula.binding.eval(x) for x in traj.states])
    if isinstance(formula, fm.And):
        return np.min([_robustness_signal(c, traj) for c in formula.children], axis=0)
    if isinstance(formula, fm.Or):
        return np.max([_robustness_signal(c, traj) for c in formula.children], axis=0)
    raise ValueError(f"not a boolean-layer formula: {fm.to_string(formula)}")


def _robustness_at(formula: fm.Formula, traj: Trajectory, i: int) -> float:
    times = traj.times
    t_i = float(times[i])
    if isinstance(formula, (fm.TrueNode, fm.Pred)):
        return float(_robustness_signal(formula, traj)[i])
    if isinstance(formula, fm.And):
        return min(_robustness_at(c, traj, i) for c in formula.children)
    if isinstance(formula, fm.Or):
        return max(_robustness_at(c, traj, i) for c in formula.children)
    if isinstance(formula, fm.Eventually):
        idx = _window_indices(times, t_i + formula.a, t_i + formula.b)
        inner = _robustness_signal(formula.child, traj)
        return float(np.max(inner[idx]))
    if isinstance(formula, fm.Always):
        idx = _window_indices(times, t_i + formula.a, t_i + formula.b)
        inner = _robustness_signal(formula.child, traj)
        return float(np.min(inner[idx]))
    if isinstance(formula, fm.Until):
        idx = _window_indices(times, t_i + formula.a, t_i + formula.b)
        left = _robustness_signal(formula.left, traj)
        right = _robustness_signal(formula.right, traj)
        best = -math.inf
        for j in idx:
            prefix = float(np.min(left[i: j + 1]))
            best = max(best, min(float(right[j]), prefix))
        return best
    raise TypeError(f"not a formula node: {formula!r}")


def stl_robustness(
    traj: Trajectory,
    formula: fm.Formula,
    t: Optional[float] = None,
    boundary_tol: float = 1e-9,
) -> RobustnessResult:
    """Quantitative robustness of the task formula over the recorded trace.

    ``t`` selects the evaluation sample (nearest recorded time; defaults
    to the first).  Positive robustness certifies satisfaction of the
    sampled trace, negative certifies violation, and values inside
    ``boundary_tol`` are reported as boundary.
    """
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    if t is None:
        i = 0
    else:
        i = int(np.argmin(np.abs(traj.times - t)))
    value = _robustness_at(formula, traj, i)
    if value > boundary_tol:
        verdict = "satisfied"
    elif value < -boundary_tol:
        verdict = "violated"
    else:
        verdict = "boundary"
    return RobustnessResult(value=value, verdict=verdict)


def sampling_tolerance(traj: Trajectory, formula: fm.Formula) -> float:
    """Error budget of sampled verification: worst per-tick predicate drift.

    Estimates (Lipschitz constant along the run) * dt as the largest change
    of any predicate value between consecutive samples.
    """
    preds = {
        n.name: n.binding
        for n in fm.iter_nodes(formula)
        if isinstance(n, fm.Pred) and n.binding is not None
    }
    worst = 0.0
    for pred in preds.values():
        vals = np.array([pred.eval(x) for x in traj.states])
        if len(vals) > 1:
            worst = max(worst, float(np.max(np.abs(np.diff(vals)))))
    return worst


def satisfaction_report(traj: Trajectory, tree: BfTree, formula: fm.Formula) -> SatisfactionReport:
    """One-directional implication report: barrier premise => robustness.

    A nonnegative barrier minimum along the run must come with sampled
    robustness above -tol_sampling.  When the premise fails the report is
    a vacuous pass; the reverse implication is never claimed.
    """
    min_b0, argmin_t = min_barrier(traj, tree)
    rob = stl_robustness(traj, formula)
    tol = sampling_tolerance(traj, formula)
    premise = min_b0 >= 0.0
    holds = (not premise) or (rob.value >= -tol)
    return SatisfactionReport(
        min_b0=min_b0,
        argmin_t=argmin_t,
        robustness=rob.value,
        tol_sampling=tol,
        premise=premise,
        holds=holds,
        vacuous=not premise,
    )


def input_jump_count(
    traj: Trajectory,
    tree: BfTree,
    threshold: Optional[float] = None,
    guard_ticks: int = 1,
) -> int:
    """Count input discontinuities away from expected switching events.

    Jumps are expected at deactivation times and when the active leaf
    changes; elsewhere the closed-loop input should be continuous, so any
    jump beyond ``threshold`` (default: 20x the median per-tick input
    change) counts.
    """
    du = np.max(np.abs(np.diff(traj.inputs, axis=0)), axis=1)
    if len(du) == 0:
        return 0
    if threshold is None:
        threshold = 20.0 * float(np.median(du)) + 1e-9
    betas = sorted(
        {tree.nodes[n].beta for n in tree.nodes if math.isfinite(tree.nodes[n].beta)}
    )
    dt = float(np.median(np.diff(traj.times)))
    count = 0
    for i in range(len(du)):
        if du[i] <= threshold:
            continue
        t = float(traj.times[i])
        near_beta = any(abs(t - b) <= (guard_ticks + 1) * dt for b in betas)
        switched = traj.chosen[i] != traj.chosen[i + 1]
        if not near_beta and not switched:
            count += 1
    return count
