"""Command-line entry point: run a scenario end to end.

Pipeline: load -> parse/rewrite -> compile the barrier tree -> check the
standing assumptions -> simulate the closed loop -> verify with the
barrier scan and the robustness monitor -> write CSV and SVG artifacts.

Exit codes: 0 success, 1 usage or input error, 2 assumption check failed
(unless --force), 3 runtime infeasibility.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import barrier as bf
from .controller import SampleGrid, check_assumptions
from .monitor import satisfaction_report, min_barrier, stl_robustness
from .scenario import (
    BuiltScenario,
    ScenarioError,
    build_scenario,
    load_scenario,
    shipped_scenario_names,
    shipped_scenario_path,
)
from .sim import SimulationError, Trajectory, simulate

__all__ = ["main", "run_scenario", "emit_plots"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSUMPTIONS = 2
EXIT_INFEASIBLE = 3


def emit_plots(traj: Trajectory, out_dir: str | Path, team=None) -> list[Path]:
    """Write paths/barrier/input SVGs for a recorded trajectory."""
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    out = Path(out_dir)
    if not out.is_dir():
        raise ValueError(f"output directory {out} does not exist")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []

    fig, ax = plt.subplots(figsize=(6, 6))
    if team is not None:
        for i in range(team.agents):
            ax.plot(traj.states[:, 3 * i], traj.states[:, 3 * i + 1], label=f"agent {i + 1}")
            ax.plot(traj.states[0, 3 * i], traj.states[0, 3 * i + 1], "o", color="black", ms=4)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal")
    else:
        for i in range(traj.n):
            ax.plot(traj.times, traj.states[:, i], label=f"x{i}")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("state")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("trajectories")
    path = out / "paths.svg"
    fig.savefig(path, format="svg")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(traj.times, traj.b0)
    ax.axhline(0.0, color="black", lw=0.8, ls="--")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("barrier value")
    ax.set_title("barrier along the run")
    path = out / "barrier.svg"
    fig.savefig(path, format="svg")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 3.2))
    for i in range(traj.m):
        ax.plot(traj.times, traj.inputs[:, i], lw=0.7)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("input")
    ax.set_title("applied inputs (zero-order hold)")
    path = out / "inputs.svg"
    fig.savefig(path, format="svg")
    plt.close(fig)
    written.append(path)
    return written


def _write_csvs(traj: Trajectory, out: Path) -> list[Path]:
    written = []
    path = out / "trajectory.csv"
    path.write_text(traj.to_csv())
    written.append(path)

    lines = ["t,b0"]
    for i in range(len(traj.times)):
        lines.append(f"{float(traj.times[i])!r},{float(traj.b0[i])!r}")
    path = out / "barrier.csv"
    path.write_text("\n".join(lines) + "\n")
    written.append(path)

    header = "t," + ",".join(f"u{i}" for i in range(traj.m))
    lines = [header]
    for i in range(len(traj.times)):
        row = ",".join(repr(float(v)) for v in traj.inputs[i])
        lines.append(f"{float(traj.times[i])!r},{row}")
    path = out / "inputs.csv"
    path.write_text("\n".join(lines) + "\n")
    written.append(path)
    return written


def _temporal_table(built: BuiltScenario) -> str:
    lines = ["temporal operators (depth-first order):"]
    dfs_nodes = [nid for nid in _dfs_order(built.tree) if built.tree.nodes[nid].gamma is not None]
    for idx, nid in enumerate(dfs_nodes):
        node = built.tree.nodes[nid]
        a, b = node.interval
        lines.append(
            f"  [{idx}] {node.kind:10s} window=[{a:g},{b:g}] "
            f"gamma={node.gamma.shape}({node.gamma.gamma_zero:g} -> {node.gamma.gamma_inf:g} "
            f"by {node.gamma.t_star:g}) deactivates at {node.beta:.4g}"
        )
    lines.append(f"  horizon: {built.tree.horizon:.6g}")
    return "\n".join(lines)


def _dfs_order(tree) -> list[str]:
    order = []

    def walk(nid):
        order.append(nid)
        for c in tree.nodes[nid].children:
            walk(c)

    walk(tree.root)
    return order


def run_scenario(
    path: str | Path,
    out_dir: str | Path | None = None,
    rate: float | None = None,
    force: bool = False,
    check_only: bool = False,
    seed: int = 0,
    quiet: bool = False,
) -> int:
    """Execute the pipeline for one scenario file; returns the exit code."""

    def say(msg: str):
        if not quiet:
            print(msg)

    try:
        scenario = load_scenario(path)
        if rate is not None:
            run_cfg = dict(scenario.run)
            run_cfg["ctrl_rate"] = float(rate)
            scenario = replace(scenario, run=run_cfg)
        built = build_scenario(scenario)
    except (ScenarioError, ValueError) as exc:
        print(f"error while loading scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE

    say(f"scenario {scenario.name!r}: {built.dyn.n} states, {built.dyn.m} inputs, "
        f"{len(built.tree.elementary)} elementary constraints")
    say(_temporal_table(built))

    rng = np.random.default_rng(seed)
    spread = float(scenario.run.get("check_spread", 10.0))
    states = built.x0 + rng.uniform(-spread, spread, size=(256, built.dyn.n))
    times = np.linspace(built.t0, min(built.tree.horizon, built.t_end), 32)
    report = check_assumptions(built.tree, built.cfg, built.dyn,
                               SampleGrid(states=states, times=times))
    say(f"gain condition: kappa*b_min = {report.gain_at_b_min:g} vs "
        f"max funnel rate {report.max_funnel_rate:g} "
        f"({'ok' if report.gain_ok else 'VIOLATED'}, margin {report.gain_margin:g})")
    if report.b_min_estimate is not None:
        say(f"sampled barrier headroom estimate: {report.b_min_estimate:g} "
            f"(configured b_min = {built.cfg.b_min:g})")
    bad_concave = {k: v for k, v in report.concavity_violations.items() if v}
    if bad_concave:
        say(f"concavity violations: {bad_concave}")
    flagged = {k: v for k, v in report.vanishing_input_gradient.items() if v}
    if flagged:
        say(f"predicates with input-blind samples (informational): {flagged}")
    if not report.ok and not force:
        print("assumption check failed; aborting (use --force to run anyway)", file=sys.stderr)
        return EXIT_ASSUMPTIONS
    if check_only:
        return EXIT_OK

    x0 = built.x0
    b0_start = bf.eval_all(built.tree, built.t0, x0)[built.tree.root]
    if b0_start < 0:
        print(f"initial state is infeasible (barrier {b0_start:g} < 0)", file=sys.stderr)
        return EXIT_USAGE

    try:
        started = time.perf_counter()
        traj = simulate(
            built.dyn, built.tree, built.cfg, built.t0, x0, built.t_end,
            ctrl_rate=built.ctrl_rate, integrator=built.integrator,
            substeps=built.substeps,
        )
        wall = time.perf_counter() - started
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    low, low_t = min_barrier(traj, built.tree)
    rob = stl_robustness(traj, built.formula)
    report1 = satisfaction_report(traj, built.tree, built.formula)
    mean_tick_ms = 1e3 * float(np.mean(traj.ctrl_time[:-1])) if traj.ctrl_time is not None else float("nan")
    say(f"simulated {traj.times[-1] - traj.times[0]:g} s in {wall:.2f} s wall time "
        f"({mean_tick_ms:.2f} ms mean controller time per tick)")
    say(f"min barrier value: {low:.6g} at t={low_t:.4g}")
    say(f"task robustness: {rob.value:.6g} ({rob.verdict}; "
        f"sampling tolerance {report1.tol_sampling:.3g})")

    out = Path(out_dir) if out_dir is not None else Path(scenario.output.get("dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    written = _write_csvs(traj, out)
    written += emit_plots(traj, out, team=built.team)
    say("artifacts: " + ", ".join(str(p) for p in written))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def main(argv=None) -> int:
    parser = _Parser(prog="stlcbf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a scenario file end to end")
    run_p.add_argument("scenario", help="path to a scenario JSON file, or a shipped scenario name")
    run_p.add_argument("--out", default=None, help="output directory (default: scenario's)")
    run_p.add_argument("--rate", type=float, default=None, help="override the control rate [Hz]")
    run_p.add_argument("--force", action="store_true", help="run even if assumption checks fail")
    run_p.add_argument("--check-only", action="store_true", help="stop after the assumption checks")
    run_p.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
    sub.add_parser("list", help="list shipped scenarios")

    args = parser.parse_args(argv)
    if args.command == "list":
        for name in shipped_scenario_names():
            print(name)
        return EXIT_OK

    path = Path(args.scenario)
    if not path.exists():
        try:
            path = shipped_scenario_path(args.scenario)
        except ScenarioError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_USAGE
    return run_scenario(
        path,
        out_dir=args.out,
        rate=args.rate,
        force=args.force,
        check_only=args.check_only,
        seed=args.seed,
    )


if __name__ == "__main__":
    raise SystemExit(main())
