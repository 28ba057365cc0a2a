"""Nonsmooth time-varying control barrier functions for temporal logic tasks.

Pipeline: parse a task formula, compile it into a barrier tree, check the
feasibility assumptions, run the QP-based controller in closed loop, and
verify the recorded trajectory with an independent robustness monitor.
"""

from .barrier import (
    BfNode,
    BfTree,
    EMPTY_HISTORY,
    GammaFn,
    History,
    IndexSets,
    NodeKind,
    active_sets,
    branch_triple,
    build_bf_tree,
    eval_all,
    eval_bk,
    eval_node,
    node_beta,
    path_set,
    qualified_children,
    switch_fn,
    update_history,
)
from .controller import (
    AssumptionReport,
    CandidateResult,
    ControlConfig,
    ControlResult,
    InfeasibleControlError,
    SampleGrid,
    candidate_input,
    check_assumptions,
    control_input,
    estimate_b_min,
)
from .dynamics import Dynamics, OmniRobotTeam, robot_dynamics, single_integrator
from .formulas import (
    Always,
    And,
    Eventually,
    Formula,
    Or,
    Pred,
    Stratum,
    TrueNode,
    Until,
    desugar_until,
    parse_formula,
    to_string,
    validate_fragment,
)
from .monitor import (
    RobustnessResult,
    SatisfactionReport,
    satisfaction_report,
    min_barrier,
    sampling_tolerance,
    stl_robustness,
)
from .predicates import Predicate, affine, ball2, ball2_diff, box_inf, constant
from .qp import KktReport, QpProblem, QpSolution, check_kkt, farkas_residuals, solve_qp
from .scenario import (
    BuiltScenario,
    Scenario,
    build_scenario,
    load_scenario,
    save_scenario,
    shipped_scenario_names,
    shipped_scenario_path,
)
from .sim import SimulationError, Trajectory, simulate

__all__ = [name for name in dir() if not name.startswith("_")]
