"""Offline verification: barrier scan, quantitative robustness, implication report."""

import numpy as np
import pytest

from stlcbf import formulas as fm
from stlcbf.barrier import EMPTY_HISTORY, GammaFn, build_bf_tree, eval_all
from stlcbf.controller import ControlConfig
from stlcbf.dynamics import single_integrator
from stlcbf.monitor import (
    satisfaction_report,
    input_jump_count,
    min_barrier,
    replay_history,
    sampling_tolerance,
    stl_robustness,
)
from stlcbf.predicates import affine, ball2
from stlcbf.sim import Trajectory, simulate


def make_traj(times, xs, us=None):
    times = np.asarray(times, dtype=float)
    xs = np.asarray(xs, dtype=float).reshape(len(times), -1)
    us = np.zeros_like(xs) if us is None else np.asarray(us, dtype=float).reshape(len(times), -1)
    return Trajectory(times=times, states=xs, inputs=us, b0=np.zeros(len(times)),
                      chosen=("",) * len(times))


def ramp_trace(t_end=4.0, dt=0.5, x0=0.0, slope=1.0):
    times = np.arange(0.0, t_end + dt / 2, dt)
    return make_traj(times, x0 + slope * times)


GE0 = affine("ge0", coeffs=[1.0], offset=0.0, dim=1)
GE2 = affine("ge2", coeffs=[1.0], offset=-2.0, dim=1)
GE3 = affine("ge3", coeffs=[1.0], offset=-3.0, dim=1)
LE3 = affine("le3", coeffs=[-1.0], offset=3.0, dim=1)


class TestRobustness:
    def test_always_on_constant_trace(self):
        traj = make_traj(np.linspace(0, 1, 11), np.full(11, 2.0))
        res = stl_robustness(traj, fm.Always(0.0, 1.0, fm.Pred("ge0", GE0)))
        assert res.value == pytest.approx(2.0)
        assert res.verdict == "satisfied"

    def test_eventually_on_ramp_hits_zero(self):
        # x(t) = 2 + t: the window max of x - 3 lands exactly on 0 at t = 1
        traj = make_traj(np.linspace(0, 1, 5), 2.0 + np.linspace(0, 1, 5))
        res = stl_robustness(traj, fm.Eventually(0.0, 1.0, fm.Pred("ge3", GE3)))
        assert res.value == pytest.approx(0.0, abs=1e-12)
        assert res.verdict == "boundary"

    def test_boolean_combinations(self):
        traj = ramp_trace()
        conj = fm.And((fm.Pred("ge2", GE2), fm.Pred("le3", LE3)))
        disj = fm.Or((fm.Pred("ge2", GE2), fm.Pred("le3", LE3)))
        # at t=0: x=0, ge2 = -2, le3 = 3
        assert stl_robustness(traj, conj).value == pytest.approx(-2.0)
        assert stl_robustness(traj, disj).value == pytest.approx(3.0)

    def test_until_hand_computed(self):
        # x(t) = t sampled every 0.5; left: x <= 3, right: x >= 2, window [1,3].
        # best witness is t' = 2.5: min(right, prefix-min left) = min(0.5, 0.5)
        traj = ramp_trace()
        res = stl_robustness(traj, fm.Until(1.0, 3.0, fm.Pred("le3", LE3), fm.Pred("ge2", GE2)))
        assert res.value == pytest.approx(0.5)

    def test_until_witness_needs_full_prefix(self):
        # left fails early: every witness t' is capped by the prefix minimum
        # of 0.5 - x, so the best is t' = 1: min(1 - 2, 0.5 - 1) = -1
        drop = affine("drop", coeffs=[-1.0], offset=0.5, dim=1)  # 0.5 - x
        traj = ramp_trace()
        res = stl_robustness(traj, fm.Until(1.0, 3.0, fm.Pred("drop", drop), fm.Pred("ge2", GE2)))
        assert res.value == pytest.approx(-1.0)
        assert res.verdict == "violated"

    def test_window_beyond_trace_rejected(self):
        traj = ramp_trace(t_end=2.0)
        with pytest.raises(ValueError):
            stl_robustness(traj, fm.Eventually(0.0, 5.0, fm.Pred("ge0", GE0)))

    def test_evaluation_time_selects_sample(self):
        traj = ramp_trace()
        f = fm.Always(0.0, 1.0, fm.Pred("ge2", GE2))
        assert stl_robustness(traj, f, t=0.0).value == pytest.approx(-2.0)
        assert stl_robustness(traj, f, t=3.0).value == pytest.approx(1.0)

    def test_soundness_against_window_closed_form(self, rng):
        # on a sampled linear trace the window extrema sit at the endpoints
        for _ in range(50):
            slope = rng.uniform(-2, 2)
            x0 = rng.uniform(-3, 3)
            traj = ramp_trace(t_end=6.0, dt=0.25, x0=x0, slope=slope)
            a = float(rng.integers(0, 8)) * 0.25
            b = a + float(rng.integers(1, 8)) * 0.25
            val = lambda t: x0 + slope * t
            g = stl_robustness(traj, fm.Always(a, b, fm.Pred("ge0", GE0))).value
            f = stl_robustness(traj, fm.Eventually(a, b, fm.Pred("ge0", GE0))).value
            assert g == pytest.approx(min(val(a), val(b)), abs=1e-9)
            assert f == pytest.approx(max(val(a), val(b)), abs=1e-9)

    def test_monotone_traces_order_robustness(self, rng):
        formula = fm.Eventually(0.0, 2.0, fm.Pred("ge2", GE2))
        for _ in range(30):
            base = np.cumsum(rng.uniform(-0.5, 1.0, size=9))
            lift = base + rng.uniform(0.0, 2.0)
            times = np.linspace(0, 2, 9)
            low = stl_robustness(make_traj(times, base), formula).value
            high = stl_robustness(make_traj(times, lift), formula).value
            assert high >= low - 1e-12


def eventually_1d_setup():
    p = affine("goal", coeffs=[1.0], offset=-4.0, dim=1)
    g = GammaFn(gamma_zero=5.0, gamma_inf=-0.5, t_star=5.0)
    tree = build_bf_tree(fm.Eventually(0.0, 5.0, fm.Pred("goal", p)), [g])
    formula = tree.formula
    cfg = ControlConfig(Q=np.eye(1), kappa=1.0, b_min=2.0)
    return tree, formula, cfg


class TestMinBarrier:
    def test_matches_direct_scan_on_recorded_samples(self):
        tree, _, cfg = eventually_1d_setup()
        traj = simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]),
                        5.0, ctrl_rate=20.0)
        got, argmin_t = min_barrier(traj, tree, refine=0)
        expect = float(np.min(traj.b0))
        assert got == pytest.approx(expect, abs=1e-12)
        assert argmin_t in traj.times

    def test_refinement_only_tightens(self):
        tree, _, cfg = eventually_1d_setup()
        traj = simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]),
                        5.0, ctrl_rate=10.0)
        coarse, _ = min_barrier(traj, tree, refine=0)
        fine, _ = min_barrier(traj, tree, refine=8)
        assert fine <= coarse + 1e-15

    def test_adversarial_input_goes_negative(self):
        # zero input from a boundary state: the funnel decay drags b0 down
        tree, _, _ = eventually_1d_setup()
        times = np.linspace(0.0, 4.0, 41)
        states = np.zeros((41, 1))  # x pinned at 0 (adversarial u = 0)
        traj = make_traj(times, states)
        low, at_t = min_barrier(traj, tree)
        gamma = tree.nodes[tree.root].gamma
        assert low == pytest.approx(-4.0 + gamma(4.0), abs=1e-9)
        assert at_t == pytest.approx(4.0)
        assert low < 0

    def test_replay_matches_recorded_barrier(self):
        # disjunction scenario: replayed history must reproduce the run
        pa = ball2("pa", center=[2.0, 0.0], radius=1.5, dim=2)
        pb = ball2("pb", center=[-2.0, 0.0], radius=1.5, dim=2)
        f = fm.Or((
            fm.Eventually(0.0, 4.0, fm.Pred("pa", pa)),
            fm.Eventually(0.0, 6.0, fm.Pred("pb", pb)),
        ))
        gammas = [
            GammaFn(gamma_zero=9.0, gamma_inf=-1.0, t_star=4.0, shape="smooth_clamp"),
            GammaFn(gamma_zero=9.0, gamma_inf=-1.0, t_star=6.0, shape="smooth_clamp"),
        ]
        tree = build_bf_tree(f, gammas)
        cfg = ControlConfig(Q=np.eye(2), kappa=2.0, b_min=1.0)
        traj = simulate(single_integrator(2), tree, cfg, 0.0, np.array([0.6, 0.1]),
                        4.0, ctrl_rate=20.0)
        hists = replay_history(traj, tree)
        replayed = np.array([
            eval_all(tree, float(traj.times[i]), traj.states[i], hists[i])[tree.root]
            for i in range(len(traj.times))
        ])
        np.testing.assert_allclose(replayed, traj.b0, atol=1e-12)

    def test_empty_trajectory_rejected(self):
        with pytest.raises(ValueError):
            make_traj([], [])


class TestSamplingTolerance:
    def test_linear_trace_budget_is_slope_times_dt(self):
        traj = ramp_trace(t_end=3.0, dt=0.25, slope=2.0)
        formula = fm.Always(0.0, 3.0, fm.Pred("ge0", GE0))
        assert sampling_tolerance(traj, formula) == pytest.approx(0.5)


class TestSatisfactionImplication:
    def test_feasible_run_implication_holds(self):
        tree, formula, cfg = eventually_1d_setup()
        traj = simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]),
                        5.0, ctrl_rate=50.0)
        report = satisfaction_report(traj, tree, formula)
        assert report.premise
        assert report.holds and not report.vacuous
        assert report.robustness >= -report.tol_sampling

    def test_violated_premise_is_vacuous(self):
        tree, formula, _ = eventually_1d_setup()
        times = np.linspace(0.0, 5.0, 51)
        traj = make_traj(times, np.zeros((51, 1)))
        report = satisfaction_report(traj, tree, formula)
        assert not report.premise
        assert report.vacuous and report.holds

    def test_randomized_runs_no_counterexample(self, rng):
        tree, formula, cfg = eventually_1d_setup()
        for _ in range(20):
            x0 = np.array([float(rng.uniform(-0.9, 3.0))])
            traj = simulate(single_integrator(1), tree, cfg, 0.0, x0, 5.0,
                            ctrl_rate=50.0)
            report = satisfaction_report(traj, tree, formula)
            assert report.holds


class TestInputJumps:
    def test_smooth_run_has_no_unexplained_jumps(self):
        tree, _, cfg = eventually_1d_setup()
        traj = simulate(single_integrator(1), tree, cfg, 0.0, np.array([0.0]),
                        5.0, ctrl_rate=50.0)
        assert input_jump_count(traj, tree) == 0
