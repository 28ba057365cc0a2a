"""Input-affine plants: xdot = f(x) + g(x) u.

Ships a generic single integrator and the planar omnidirectional robot
team.  Each team agent has state [px, py, rho] (position in meters,
orientation in radians) and three wheel angular velocities as input.  The
wheel geometry matrix

        B = [ 0          cos(pi/6)  -cos(pi/6) ]
            [-1          sin(pi/6)   sin(pi/6) ]
            [ L          L           L         ]

maps body twists to wheel speeds for a body of radius L = 0.2 m with
wheel radius R = 0.02 m, so the input map is Rot(rho) (B^T)^-1 R.  The
drift couples agents through a repulsive collision-avoidance field:

    f_{i,k}(x) = sum_{j != i} gain_i * (x_{i,k} - x_{j,k})
                 / (||p_i - p_j||^2 + 0.00001),   k in {1, 2},

with no drift on the orientation component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Dynamics",
    "OmniRobotTeam",
    "single_integrator",
    "robot_dynamics",
]


@dataclass(frozen=True)
class Dynamics:
    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]


def single_integrator(n: int) -> Dynamics:
    """xdot = u."""
    eye = np.eye(n)
    return Dynamics(n=n, m=n, f=lambda x: np.zeros(n), g=lambda x: eye)


@dataclass(frozen=True)
class OmniRobotTeam:
    """Omnidirectional robots with repulsive inter-agent drift."""

    gains: tuple[float, ...] = (1.0, 1.0, 1.0)
    body_radius: float = 0.2
    wheel_radius: float = 0.02
    _bt_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if any(k < 0 for k in self.gains):
            raise ValueError("interaction gains must be nonnegative")
        B = self.wheel_geometry()
        object.__setattr__(self, "_bt_inv", np.linalg.inv(B.T))

    @property
    def agents(self) -> int:
        return len(self.gains)

    def wheel_geometry(self) -> np.ndarray:
        L = self.body_radius
        c, s = math.cos(math.pi / 6), math.sin(math.pi / 6)
        return np.array([
            [0.0, c, -c],
            [-1.0, s, s],
            [L, L, L],
        ])

    def drift(self, x: np.ndarray) -> np.ndarray:
        n_agents = self.agents
        out = np.zeros(3 * n_agents)
        pos = [x[3 * i: 3 * i + 2] for i in range(n_agents)]
        for i in range(n_agents):
            acc = np.zeros(2)
            for j in range(n_agents):
                if j == i:
                    continue
                diff = pos[i] - pos[j]
                acc += self.gains[i] * diff / (float(diff @ diff) + 0.00001)
            out[3 * i: 3 * i + 2] = acc
        return out

    def input_matrix(self, x: np.ndarray) -> np.ndarray:
        n_agents = self.agents
        G = np.zeros((3 * n_agents, 3 * n_agents))
        for i in range(n_agents):
            rho = x[3 * i + 2]
            c, s = math.cos(rho), math.sin(rho)
            rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            G[3 * i: 3 * i + 3, 3 * i: 3 * i + 3] = rot @ self._bt_inv * self.wheel_radius
        return G

    def dynamics(self) -> Dynamics:
        return Dynamics(n=3 * self.agents, m=3 * self.agents, f=self.drift, g=self.input_matrix)


def robot_dynamics(team: OmniRobotTeam, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """State derivative of the team under stacked wheel speeds u."""
    return team.drift(x) + team.input_matrix(x) @ np.asarray(u, dtype=float)
