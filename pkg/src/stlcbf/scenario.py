"""Scenario files: one JSON document describing a complete run.

Schema (all numbers are IEEE doubles in decimal text)::

    {
      "name":        "<label>",
      "formula":     "<task formula text>",
      "predicates":  { "<ident>": {"form": "ball2", ...}, ... },
      "gamma":       [ {"shape": "...", "gamma_zero": ..., "gamma_inf": ...,
                        "t_star": ..., "t1": ...?}, ... ],
      "until_tprime": {"default": "b" | "a" | "mid" | <number>,
                       "overrides": {"<occurrence index>": <number>}}?,
      "dynamics":    {"kind": "single_integrator", "dim": n}
                   | {"kind": "omni_robot_team", "gains": [..]},
      "control":     {"Q": "identity" | [[..]], "kappa": ..., "b_min": ...,
                      "tol": null | ..., "u_lo": null | [..], "u_hi": null | [..]},
      "run":         {"t0": ..., "t_end": ..., "x0": [..], "ctrl_rate": ...,
                      "integrator": "rk4" | "euler", "substeps": ...},
      "output":      {"dir": "<path>"}?
    }

``gamma`` entries configure the temporal operators of the rewritten
(until-free) formula in depth-first order; ``stlcbf run --check-only``
prints the numbered operator table for authoring.  Predicate forms:
ball2, ball2_diff, affine, and box_inf (which expands to one affine
predicate per face at parse time).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import formulas as fm
from .barrier import BfTree, GammaFn, build_bf_tree
from .controller import ControlConfig
from .dynamics import Dynamics, OmniRobotTeam, single_integrator
from .predicates import Predicate, affine, ball2, ball2_diff, box_inf

__all__ = [
    "Scenario",
    "ScenarioError",
    "BuiltScenario",
    "load_scenario",
    "save_scenario",
    "build_scenario",
    "shipped_scenario_path",
    "shipped_scenario_names",
]


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario documents."""


_REQUIRED_KEYS = ("name", "formula", "predicates", "gamma", "dynamics", "control", "run")


@dataclass(frozen=True)
class Scenario:
    name: str
    formula: str
    predicates: Mapping[str, Mapping]
    gamma: Sequence[Mapping]
    dynamics: Mapping
    control: Mapping
    run: Mapping
    until_tprime: Mapping = field(default_factory=dict)
    output: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "formula": self.formula,
            "predicates": {k: dict(v) for k, v in self.predicates.items()},
            "gamma": [dict(g) for g in self.gamma],
            "until_tprime": dict(self.until_tprime),
            "dynamics": dict(self.dynamics),
            "control": dict(self.control),
            "run": dict(self.run),
            "output": dict(self.output),
        }


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    missing = [k for k in _REQUIRED_KEYS if k not in doc]
    if missing:
        raise ScenarioError(f"{path}: missing keys {missing}")
    return Scenario(
        name=doc["name"],
        formula=doc["formula"],
        predicates=doc["predicates"],
        gamma=doc["gamma"],
        dynamics=doc["dynamics"],
        control=doc["control"],
        run=doc["run"],
        until_tprime=doc.get("until_tprime", {}),
        output=doc.get("output", {}),
    )


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


def _build_registry(predicates: Mapping[str, Mapping], dim: int):
    registry: dict[str, Predicate | tuple[Predicate, ...]] = {}
    for name, entry in predicates.items():
        form = entry.get("form")
        if form == "ball2":
            registry[name] = ball2(
                name, center=entry["center"], radius=entry["radius"], dim=dim,
                select=entry.get("select"),
            )
        elif form == "ball2_diff":
            registry[name] = ball2_diff(
                name, radius=entry["radius"], dim=dim,
                select_a=entry["select_a"], select_b=entry["select_b"],
                offset=entry.get("offset"),
            )
        elif form == "affine":
            registry[name] = affine(
                name, coeffs=entry["coeffs"], offset=entry["offset"], dim=dim,
                select=entry.get("select"),
            )
        elif form == "box_inf":
            registry[name] = box_inf(
                name, radius=entry["radius"], dim=dim, select=entry["select"],
            )
        else:
            raise ScenarioError(f"predicate {name!r}: unknown form {form!r}")
    return registry


def _tprime_policy(config: Mapping):
    default = config.get("default", "b")
    overrides = {int(k): float(v) for k, v in config.get("overrides", {}).items()}

    def policy(index: int, a: float, b: float) -> float:
        if index in overrides:
            return overrides[index]
        if default == "b":
            return b
        if default == "a":
            return a
        if default == "mid":
            return 0.5 * (a + b)
        return float(default)

    return policy


def _build_gammas(entries: Sequence[Mapping], t0: float) -> list[GammaFn]:
    out = []
    for i, entry in enumerate(entries):
        try:
            out.append(GammaFn(
                gamma_zero=float(entry["gamma_zero"]),
                gamma_inf=float(entry["gamma_inf"]),
                t_star=float(entry["t_star"]),
                t1=float(entry.get("t1", t0)),
                shape=entry.get("shape", "affine"),
            ))
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"gamma entry {i}: {exc}") from exc
    return out


def _build_dynamics(entry: Mapping) -> tuple[Dynamics, OmniRobotTeam | None]:
    kind = entry.get("kind")
    if kind == "single_integrator":
        return single_integrator(int(entry["dim"])), None
    if kind == "omni_robot_team":
        team = OmniRobotTeam(gains=tuple(float(g) for g in entry["gains"]))
        return team.dynamics(), team
    raise ScenarioError(f"unknown dynamics kind {kind!r}")


def _build_control(entry: Mapping, m: int) -> ControlConfig:
    q = entry.get("Q", "identity")
    Q = np.eye(m) if q == "identity" else np.asarray(q, dtype=float)
    lo = entry.get("u_lo")
    hi = entry.get("u_hi")
    return ControlConfig(
        Q=Q,
        kappa=float(entry["kappa"]),
        b_min=float(entry["b_min"]),
        tol=None if entry.get("tol") is None else float(entry["tol"]),
        u_lo=None if lo is None else np.asarray(lo, dtype=float),
        u_hi=None if hi is None else np.asarray(hi, dtype=float),
        descent_margin=float(entry.get("descent_margin", 0.0)),
    )


@dataclass(frozen=True)
class BuiltScenario:
    scenario: Scenario
    formula: fm.Formula                     # original, until included (for the monitor)
    rewritten: fm.Formula                   # until-free (compiled into the tree)
    tree: BfTree
    dyn: Dynamics
    team: OmniRobotTeam | None
    cfg: ControlConfig
    t0: float
    t_end: float
    x0: np.ndarray
    ctrl_rate: float
    integrator: str
    substeps: int


def build_scenario(scenario: Scenario) -> BuiltScenario:
    """Assemble every runtime object a scenario describes.

    Raises ScenarioError (or the parser/tree errors it wraps) when parts
    are inconsistent, e.g. a gamma list that does not match the rewritten
    formula's temporal operators.
    """
    run = scenario.run
    try:
        t0 = float(run["t0"])
        t_end = float(run["t_end"])
        x0 = np.asarray(run["x0"], dtype=float)
        ctrl_rate = float(run["ctrl_rate"])
    except KeyError as exc:
        raise ScenarioError(f"run section missing {exc}") from exc
    integrator = run.get("integrator", "rk4")
    substeps = int(run.get("substeps", 10))

    dyn, team = _build_dynamics(scenario.dynamics)
    if x0.shape != (dyn.n,):
        raise ScenarioError(f"x0 has shape {x0.shape}, dynamics expect ({dyn.n},)")

    registry = _build_registry(scenario.predicates, dyn.n)
    formula = fm.parse_formula(scenario.formula, registry)
    rewritten = fm.desugar_until(formula, _tprime_policy(scenario.until_tprime))
    gammas = _build_gammas(scenario.gamma, t0)
    n_temporal = len(fm.temporal_nodes(rewritten))
    if len(gammas) != n_temporal:
        raise ScenarioError(
            f"gamma list has {len(gammas)} entries but the rewritten formula "
            f"has {n_temporal} temporal operators"
        )
    tree = build_bf_tree(rewritten, gammas, t1=t0)
    cfg = _build_control(scenario.control, dyn.m)
    return BuiltScenario(
        scenario=scenario,
        formula=formula,
        rewritten=rewritten,
        tree=tree,
        dyn=dyn,
        team=team,
        cfg=cfg,
        t0=t0,
        t_end=t_end,
        x0=x0,
        ctrl_rate=ctrl_rate,
        integrator=integrator,
        substeps=substeps,
    )


def shipped_scenario_names() -> list[str]:
    pkg = resources.files("stlcbf") / "scenarios"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def shipped_scenario_path(name: str) -> Path:
    path = resources.files("stlcbf") / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise ScenarioError(
            f"no shipped scenario {name!r}; available: {shipped_scenario_names()}"
        )
    return Path(str(path))
