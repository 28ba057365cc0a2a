"""Plant models and the zero-order-hold closed loop."""

import numpy as np
import pytest

from stlcbf import formulas as fm
from stlcbf.barrier import GammaFn, build_bf_tree
from stlcbf.controller import ControlConfig
from stlcbf.dynamics import Dynamics, OmniRobotTeam, robot_dynamics, single_integrator
from stlcbf.predicates import affine, ball2
from stlcbf.sim import SimulationError, Trajectory, simulate


class TestOmniRobot:
    def test_zero_gains_zero_input_is_stationary(self):
        team = OmniRobotTeam(gains=(0.0, 0.0, 0.0))
        x = np.array([1.0, 2.0, 0.3, -1.0, 0.0, 1.0, 4.0, 4.0, -0.5])
        np.testing.assert_allclose(robot_dynamics(team, x, np.zeros(9)), np.zeros(9))

    def test_wheel_geometry_inverts_to_unit_velocity(self):
        # u_i = B^T e1 / R makes the input map contribute exactly e1
        team = OmniRobotTeam(gains=(1.0, 1.0, 1.0))
        B = team.wheel_geometry()
        e1 = np.array([1.0, 0.0, 0.0])
        u_agent = B.T @ e1 / team.wheel_radius
        x = np.array([0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 5.0, 0.0])
        u = np.concatenate([u_agent, np.zeros(6)])
        xdot = robot_dynamics(team, x, u)
        np.testing.assert_allclose(xdot[:3] - team.drift(x)[:3], e1, atol=1e-12)
        np.testing.assert_allclose(xdot[3:], team.drift(x)[3:], atol=1e-12)

    def test_rotation_steers_the_input_map(self):
        team = OmniRobotTeam(gains=(0.0, 0.0))
        B = team.wheel_geometry()
        u_agent = B.T @ np.array([1.0, 0.0, 0.0]) / team.wheel_radius
        x = np.zeros(6)
        x[2] = np.pi / 2  # body frame rotated: e1 maps to e2 in the world
        xdot = robot_dynamics(team, x, np.concatenate([u_agent, np.zeros(3)]))
        np.testing.assert_allclose(xdot[:3], [0.0, 1.0, 0.0], atol=1e-12)

    def test_pairwise_repulsion_magnitude(self):
        team = OmniRobotTeam(gains=(1.0, 1.0))
        x = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0])  # unit distance along x
        drift = team.drift(x)
        expect = 1.0 / (1.0 + 0.00001)
        assert drift[0] == pytest.approx(-expect)
        assert drift[3] == pytest.approx(expect)
        assert drift[1] == drift[4] == 0.0
        assert drift[2] == drift[5] == 0.0  # no drift on orientation

    def test_geometry_matrix_invertible(self):
        team = OmniRobotTeam()
        assert abs(np.linalg.det(team.wheel_geometry())) > 1e-6

    def test_negative_gain_rejected(self):
        with pytest.raises(ValueError):
            OmniRobotTeam(gains=(1.0, -0.1))


def eventually_1d():
    """Reach x >= 4 within 5 seconds under xdot = u."""
    p = affine("goal", coeffs=[1.0], offset=-4.0, dim=1)
    g = GammaFn(gamma_zero=5.0, gamma_inf=-0.5, t_star=5.0)
    tree = build_bf_tree(fm.Eventually(0.0, 5.0, fm.Pred("goal", p)), [g])
    cfg = ControlConfig(Q=np.eye(1), kappa=1.0, b_min=2.0)
    return tree, cfg


class TestSimulate:
    def test_already_satisfied_stays_put(self):
        p = ball2("p", center=[0.0], radius=1.0, dim=1)
        g = GammaFn(gamma_zero=0.0, gamma_inf=0.0, t_star=5.0)
        tree = build_bf_tree(fm.Always(0.0, 5.0, fm.Pred("p", p)), [g])
        cfg = ControlConfig(Q=np.eye(1), kappa=1.0, b_min=0.5)
        traj = simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]),
                        5.0, ctrl_rate=20.0)
        np.testing.assert_allclose(traj.inputs, 0.0, atol=1e-12)
        np.testing.assert_allclose(traj.states, 0.0, atol=1e-12)
        assert np.all(traj.b0 >= 0.0)

    def test_eventually_task_reaches_goal(self):
        tree, cfg = eventually_1d()
        traj = simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]),
                        5.0, ctrl_rate=50.0)
        beta = tree.nodes[tree.root].beta
        reached = traj.states[traj.times <= beta + 1e-9, 0].max()
        assert reached >= 4.0
        assert traj.b0.min() >= -1e-3

    def test_trajectory_shapes_and_zoh_tail(self):
        tree, cfg = eventually_1d()
        traj = simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]),
                        1.0, ctrl_rate=10.0, substeps=4)
        assert len(traj.times) == 11
        assert traj.states.shape == (11, 1)
        assert traj.inputs.shape == (11, 1)
        np.testing.assert_allclose(traj.inputs[-1], traj.inputs[-2])
        assert np.all(np.diff(traj.times) > 0)

    def test_infeasible_abort_carries_state(self):
        tree, _ = eventually_1d()
        cfg = ControlConfig(Q=np.eye(1), kappa=1.0, b_min=2.0,
                            u_lo=np.array([-1e-4]), u_hi=np.array([1e-4]))
        with pytest.raises(SimulationError) as exc:
            simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]),
                     5.0, ctrl_rate=50.0)
        assert exc.value.t >= 0.0
        assert exc.value.x.shape == (1,)

    def test_bad_arguments(self):
        tree, cfg = eventually_1d()
        with pytest.raises(ValueError):
            simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]), 1.0,
                     ctrl_rate=0.0)
        with pytest.raises(ValueError):
            simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]), 1.0,
                     ctrl_rate=10.0, integrator="verlet")
        with pytest.raises(ValueError):
            simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0, 0.0]), 1.0,
                     ctrl_rate=10.0)


class TestIntegratorConvergence:
    def _terminal_state(self, integrator, substeps):
        # trivially-satisfied task so u stays 0 and only the drift acts
        p = ball2("p", center=[0.0], radius=10.0, dim=1)
        tree = build_bf_tree(fm.Pred("p", p), [])
        cfg = ControlConfig(Q=np.eye(1), kappa=1.0, b_min=1.0)
        dyn = Dynamics(n=1, m=1,
                       f=lambda x: np.array([np.sin(x[0]) + 0.3]),
                       g=lambda x: np.eye(1))
        traj = simulate(dyn, tree, cfg, 0.0, np.array([0.2]), 1.0,
                        ctrl_rate=1.0, integrator=integrator, substeps=substeps)
        return traj.states[-1, 0]

    def test_euler_first_order(self):
        ref = self._terminal_state("rk4", 512)
        e1 = abs(self._terminal_state("euler", 8) - ref)
        e2 = abs(self._terminal_state("euler", 16) - ref)
        assert 1.6 < e1 / e2 < 2.4

    def test_rk4_fourth_order(self):
        ref = self._terminal_state("rk4", 512)
        e1 = abs(self._terminal_state("rk4", 4) - ref)
        e2 = abs(self._terminal_state("rk4", 8) - ref)
        assert e1 / e2 > 10.0


class TestTrajectoryCsv:
    def test_round_trip(self):
        tree, cfg = eventually_1d()
        traj = simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]),
                        1.0, ctrl_rate=10.0)
        text = traj.to_csv()
        again = Trajectory.from_csv(text)
        np.testing.assert_array_equal(again.times, traj.times)
        np.testing.assert_array_equal(again.states, traj.states)
        np.testing.assert_array_equal(again.inputs, traj.inputs)
        np.testing.assert_array_equal(again.b0, traj.b0)
        assert again.chosen == traj.chosen
        assert again.to_csv() == text

    def test_rejects_decreasing_times(self):
        with pytest.raises(ValueError):
            Trajectory(
                times=np.array([0.0, 0.0]),
                states=np.zeros((2, 1)),
                inputs=np.zeros((2, 1)),
                b0=np.zeros(2),
                chosen=("a", "a"),
            )
