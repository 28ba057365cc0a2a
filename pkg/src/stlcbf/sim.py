"""Closed-loop simulation under zero-order-hold control.

The loop runs at a fixed controller rate.  Each tick: update the
disjunction history with the current state, solve for the input, hold it
constant over the tick, and integrate the plant with the chosen scheme
(RK4 with substeps by default, explicit Euler for minimal setups).  The
loop is single-threaded and owns the History; everything it records lands
in an immutable Trajectory.
"""

from __future__ import annotations

import csv
import io
import math
import time as _time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import barrier as bf
from .barrier import BfTree, EMPTY_HISTORY, History
from .controller import ControlConfig, InfeasibleControlError, control_input
from .dynamics import Dynamics

__all__ = [
    "Trajectory",
    "SimulationError",
    "simulate",
]


class SimulationError(RuntimeError):
    """Aborted run; carries the offending tick's time and state."""

    def __init__(self, message: str, t: float, x: np.ndarray):
        super().__init__(f"{message} (t={t:g})")
        self.t = t
        self.x = np.asarray(x)


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped record of one closed-loop run.

    All arrays share the tick axis; the final row repeats the last held
    input so every row is complete.  ``candidate_status`` and ``ctrl_time``
    exist only on freshly simulated trajectories (not after CSV round
    trips).
    """

    times: np.ndarray                      # (K+1,)
    states: np.ndarray                     # (K+1, n)
    inputs: np.ndarray                     # (K+1, m), ZOH per tick
    b0: np.ndarray                         # (K+1,)
    chosen: tuple[str, ...]                # (K+1,)
    candidate_status: Optional[tuple] = None
    ctrl_time: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.times) < 1:
            raise ValueError("trajectory must contain at least one sample")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    def to_csv(self) -> str:
        """Rows t, x[0..n), u[0..m), b0, chosen_k with shortest-round-trip floats."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = (
            ["t"]
            + [f"x{i}" for i in range(self.n)]
            + [f"u{i}" for i in range(self.m)]
            + ["b0", "chosen_k"]
        )
        writer.writerow(header)
        for i in range(len(self.times)):
            row = (
                [repr(float(self.times[i]))]
                + [repr(float(v)) for v in self.states[i]]
                + [repr(float(v)) for v in self.inputs[i]]
                + [repr(float(self.b0[i])), self.chosen[i]]
            )
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        n = sum(1 for h in header if h.startswith("x"))
        m = sum(1 for h in header if h.startswith("u"))
        times, states, inputs, b0, chosen = [], [], [], [], []
        for row in reader:
            times.append(float(row[0]))
            states.append([float(v) for v in row[1: 1 + n]])
            inputs.append([float(v) for v in row[1 + n: 1 + n + m]])
            b0.append(float(row[1 + n + m]))
            chosen.append(row[2 + n + m])
        return cls(
            times=np.asarray(times),
            states=np.asarray(states),
            inputs=np.asarray(inputs),
            b0=np.asarray(b0),
            chosen=tuple(chosen),
        )


def _euler_step(dyn: Dynamics, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    return x + dt * (dyn.f(x) + dyn.g(x) @ u)


def _rk4_step(dyn: Dynamics, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    def rhs(xi):
        return dyn.f(xi) + dyn.g(xi) @ u

    k1 = rhs(x)
    k2 = rhs(x + 0.5 * dt * k1)
    k3 = rhs(x + 0.5 * dt * k2)
    k4 = rhs(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


_STEPPERS = {"euler": _euler_step, "rk4": _rk4_step}


def default_history_tol(tree: BfTree, dt: float) -> float:
    """Disqualification guard band matched to the sampling resolution.

    A branch fighting a funnel at rate r can lag the continuous trajectory
    by about r*dt under zero-order hold; dips inside that band are
    discretization artifacts, not genuine violations.
    """
    t_hi = tree.horizon if math.isfinite(tree.horizon) else tree.t1 + 1.0
    worst = 0.0
    for nid in tree.postorder:
        gamma = tree.nodes[nid].gamma
        if gamma is not None:
            worst = max(worst, gamma.max_neg_deriv(tree.t1, t_hi))
    return max(1e-7, 2.5 * worst * dt)


def simulate(
    dyn: Dynamics,
    tree: BfTree,
    cfg: ControlConfig,
    t0: float,
    x0: np.ndarray,
    t_end: float,
    ctrl_rate: float,
    integrator: str = "rk4",
    substeps: int = 10,
    history_tol: float | None = None,
) -> Trajectory:
    """Run the closed loop from a feasible initial state.

    Every control tick records the state, the held input, the barrier
    value (after the tick's history update), the chosen leaf, the
    per-candidate statuses, and the controller wall time.  ``history_tol``
    defaults to a guard band scaled to the funnel rates and the tick
    length (see ``default_history_tol``).
    """
    if ctrl_rate <= 0:
        raise ValueError("ctrl_rate must be positive")
    if integrator not in _STEPPERS:
        raise ValueError(f"unknown integrator {integrator!r} (euler or rk4)")
    step = _STEPPERS[integrator]
    if history_tol is None:
        history_tol = default_history_tol(tree, 1.0 / ctrl_rate)

    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (dyn.n,):
        raise ValueError(f"x0 must have shape ({dyn.n},)")
    dt = 1.0 / ctrl_rate
    n_ticks = max(1, int(round((t_end - t0) * ctrl_rate)))
    hist: History = EMPTY_HISTORY

    times, states, inputs, b0s, chosen, statuses, ctrl_times = [], [], [], [], [], [], []
    for i in range(n_ticks):
        t = t0 + i * dt
        hist = bf.update_history(tree, hist, t, x, tol=history_tol)
        started = _time.perf_counter()
        try:
            res = control_input(t, x, tree, hist, dyn, cfg)
        except InfeasibleControlError as exc:
            raise SimulationError(str(exc), t, x) from exc
        elapsed = _time.perf_counter() - started

        times.append(t)
        states.append(x.copy())
        inputs.append(res.u.copy())
        b0s.append(bf.eval_all(tree, t, x, hist)[tree.root])
        chosen.append(res.k if res.k is not None else "")
        statuses.append({k: c.status for k, c in res.candidates.items()})
        ctrl_times.append(elapsed)

        sub_dt = dt / substeps
        for _ in range(substeps):
            x = step(dyn, x, res.u, sub_dt)
        if not np.all(np.isfinite(x)):
            raise SimulationError("state became non-finite", t + dt, x)

    t_final = t0 + n_ticks * dt
    hist = bf.update_history(tree, hist, t_final, x, tol=history_tol)
    times.append(t_final)
    states.append(x.copy())
    inputs.append(inputs[-1].copy())
    b0s.append(bf.eval_all(tree, t_final, x, hist)[tree.root])
    chosen.append(chosen[-1])
    statuses.append({})
    ctrl_times.append(0.0)

    return Trajectory(
        times=np.asarray(times),
        states=np.asarray(states),
        inputs=np.asarray(inputs),
        b0=np.asarray(b0s),
        chosen=tuple(chosen),
        candidate_status=tuple(statuses),
        ctrl_time=np.asarray(ctrl_times),
    )
