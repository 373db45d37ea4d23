import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from botlab.exceptions import ConfigurationError, SingularGeometryError
from botlab.geometry import (
    ObserverPath,
    PowerBasis,
    TrajectoryModel,
    bearing,
    bearing_residual,
    build_observer_path,
    eval_trajectory,
    grad_theta_bearing,
    grad_x_bearing,
    hess_theta_bearing,
    observer_position,
    smooth_step,
    to_table_order,
    validate_scenario,
    wrap_angle,
)


def straight(heading=0.0, start=(0.0, 0.0)):
    return ObserverPath(start, heading, 0.25, ((0.0, 20.0, 0.0),), duration=20.0)


class TestTrajectory:
    def test_final_position_matches_reference_value(self, model, theta_star):
        # (x0, y0, vx, vy) = (2.8, 3.8, 0.225, -0.15) ends at (7.3, 0.8) after 20 s
        np.testing.assert_allclose(eval_trajectory(model, theta_star, 1.0), [7.3, 0.8], atol=1e-12)

    def test_half_time(self, model, theta_star):
        np.testing.assert_allclose(eval_trajectory(model, theta_star, 0.5), [5.05, 2.3], atol=1e-12)

    def test_zero_theta(self, model):
        t = np.linspace(0, 1, 11)
        assert np.all(eval_trajectory(model, np.zeros(4), t) == 0)

    def test_dimension_mismatch(self, model):
        with pytest.raises(ConfigurationError):
            eval_trajectory(model, np.zeros(3), 0.5)

    def test_time_outside_unit_interval(self, model):
        with pytest.raises(ConfigurationError):
            eval_trajectory(model, np.zeros(4), 1.5)

    def test_discontinuous_basis_rejected(self):
        with pytest.raises(ConfigurationError):
            TrajectoryModel((PowerBasis(0), lambda t: (np.asarray(t) > 0.5).astype(float)), 20.0)

    def test_non_finite_basis_rejected(self):
        with pytest.raises(ConfigurationError), np.errstate(divide="ignore"):
            TrajectoryModel((lambda t: 1.0 / np.asarray(t),), 20.0)

    def test_table_order(self, theta_star):
        np.testing.assert_array_equal(to_table_order(theta_star), [2.8, 3.8, 0.225, -0.15])


class TestObserver:
    def test_straight_line_end(self):
        np.testing.assert_allclose(observer_position(straight(), 1.0), [5.0, 0.0], atol=1e-12)

    def test_straight_line_start(self):
        np.testing.assert_allclose(observer_position(straight(), 0.0), [0.0, 0.0], atol=1e-15)

    def test_path_length_is_speed_times_duration(self, path):
        t = np.linspace(0, 1, 200_001)
        p = path.position(t)
        length = np.sum(np.hypot(*np.diff(p, axis=0).T))
        assert length == pytest.approx(5.0, rel=1e-8)

    def test_constant_speed(self, path):
        t = np.linspace(0, 1, 10_001)
        speed = np.hypot(*path.velocity(t).T)
        assert np.max(np.abs(speed / 0.25 - 1)) < 1e-6

    def test_turn_rate_is_smooth(self, path):
        s = np.linspace(0, 20, 20_001)
        w = path.turn_rate(s)
        # no jumps: the largest increment shrinks with the grid step
        assert np.max(np.abs(np.diff(w))) < 0.01
        np.testing.assert_allclose(path.turn_rate([3.0, 8.5, 12.5, 18.0]), [0.2, 0.0, -0.22, 0.0], atol=1e-12)

    def test_heading_integrates_turn_rate(self, path):
        # heading change over the run equals the integral of the smoothed rate
        s = np.linspace(0, 20, 400_001)
        expected = np.trapezoid(path.turn_rate(s), s)
        v0, v1 = path.velocity(np.array([0.0, 1.0]))
        turned = math.atan2(v1[1], v1[0]) - math.atan2(v0[1], v0[0])
        assert wrap_angle(turned - expected) == pytest.approx(0.0, abs=1e-8)

    def test_smooth_step_limits(self):
        np.testing.assert_array_equal(smooth_step([-1.0, 0.0, 1.0, 2.0]), [0, 0, 1, 1])
        assert smooth_step(0.5) == pytest.approx(0.5)

    def test_overlapping_segments_rejected(self):
        spec = dict(initial_position=(0, 0), initial_heading=0, speed=0.25, duration=20,
                    segments=[(0, 11, 0.1), (10, 20, 0.0)])
        with pytest.raises(ConfigurationError):
            build_observer_path(spec)

    def test_segments_must_tile(self):
        with pytest.raises(ConfigurationError):
            ObserverPath((0, 0), 0.0, 0.25, ((0, 10, 0.0), (10, 19, 0.0)), duration=20)

    def test_gapped_table_becomes_transitions(self, path):
        assert path.transition_half_width == 0.5
        assert path.segments[0] == (0.0, 6.5, 0.2)
        assert path.segments[1] == (6.5, 10.5, 0.0)


class TestBearing:
    def test_diagonal(self):
        assert bearing([1.0, 1.0], 0.0, straight()) == pytest.approx(math.pi / 4)

    def test_branch_edge(self):
        assert bearing([-1.0, 0.0], 0.0, straight()) == math.pi

    def test_shifted_observer(self):
        p = straight(start=(1.0, 2.0))
        assert bearing([1 + math.sqrt(3), 3.0], 0.0, p) == pytest.approx(math.pi / 6, abs=1e-15)

    def test_singular(self):
        with pytest.raises(SingularGeometryError):
            bearing([0.0, 0.0], 0.0, straight())

    def test_residual_examples(self):
        assert bearing_residual(0.1, -0.1) == pytest.approx(0.2)
        assert bearing_residual(math.pi - 0.01, -math.pi + 0.01) == pytest.approx(-0.02)

    @given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
    def test_residual_antisymmetric_and_bounded(self, a, b):
        r = bearing_residual(a, b)
        assert -math.pi < r <= math.pi
        assert bearing_residual(b, a) == pytest.approx(-r, abs=1e-12) or abs(abs(r) - math.pi) < 1e-12
        assert bearing_residual(a, a) == 0.0

    @given(st.floats(-50, 50, allow_nan=False))
    def test_wrap_range(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


class TestDerivatives:
    def test_gradient_norm_times_range(self, path):
        rng = np.random.default_rng(1)
        t = rng.uniform(0, 1, 100)
        x = path.position(t) + rng.uniform(-8, 8, (100, 2))
        g = grad_x_bearing(x, t, path)
        r = np.hypot(*(x - path.position(t)).T)
        np.testing.assert_allclose(np.hypot(*g.T) * r, 1.0, rtol=0, atol=1e-12)

    def test_gradient_norm_example(self):
        p = straight()
        assert np.linalg.norm(grad_x_bearing([2.0, 0.0], 0.0, p)) == pytest.approx(0.5)

    def test_position_entries(self, model, path, theta_star):
        t = np.array([0.3])
        d = eval_trajectory(model, theta_star, t) - path.position(t)
        r = np.hypot(*d[0])
        beta = math.atan2(d[0, 1], d[0, 0])
        g = grad_theta_bearing(model, theta_star, t, path)[0]
        np.testing.assert_allclose([g[0], g[2]], [-math.sin(beta) / r, math.cos(beta) / r], rtol=1e-12)
        # velocity entries carry the factor T t
        np.testing.assert_allclose([g[1], g[3]], [g[0] * 6.0, g[2] * 6.0], rtol=1e-12)

    def test_against_central_differences(self, model, path, theta_star):
        rng = np.random.default_rng(7)
        h = 1e-5
        worst_g = worst_h = 0.0
        for _ in range(100):
            th = theta_star + rng.uniform(-1, 1, 4) * [1.0, 0.05, 1.0, 0.05]
            t = np.array([rng.uniform(0, 1)])
            scale = np.array([1.0, 1 / 20, 1.0, 1 / 20])  # keep steps comparable in position
            g = grad_theta_bearing(model, th, t, path)[0]
            hs = hess_theta_bearing(model, th, t, path)[0]
            num_g = np.empty(4)
            num_h = np.empty((4, 4))
            for i in range(4):
                e = np.zeros(4)
                e[i] = h * scale[i]
                fp = bearing(eval_trajectory(model, th + e, t), t, path)[0]
                fm = bearing(eval_trajectory(model, th - e, t), t, path)[0]
                num_g[i] = (fp - fm) / (2 * e[i])
                num_h[i] = (grad_theta_bearing(model, th + e, t, path)[0]
                            - grad_theta_bearing(model, th - e, t, path)[0]) / (2 * e[i])
            worst_g = max(worst_g, np.max(np.abs(num_g - g)) / np.max(np.abs(g)))
            worst_h = max(worst_h, np.max(np.abs(num_h - hs)) / np.max(np.abs(hs)))
            np.testing.assert_allclose(hs, hs.T, atol=1e-15)
        assert worst_g < 1e-6
        assert worst_h < 1e-6


class TestValidity:
    def test_default_scenario_passes(self, model, path, theta_star):
        rep = validate_scenario(model, theta_star, path, 6.0)
        assert rep.passed and rep.min_range >= 6.0 and rep.bearing_span < math.pi
        assert not rep.observability_risk

    def test_grid_oracle(self, model, path, theta_star):
        rep = validate_scenario(model, theta_star, path, 6.0)
        t = np.arange(10_001) / 10_000
        r = np.hypot(*(eval_trajectory(model, theta_star, t) - path.position(t)).T)
        assert rep.min_range == pytest.approx(r.min(), rel=1e-12)

    def test_observer_on_target_fails(self, model, theta_star):
        p = ObserverPath((2.8, 3.8), 0.0, 0.25, ((0, 20, 0.0),), duration=20)
        rep = validate_scenario(model, theta_star, p, 6.0)
        assert not rep.passed and rep.min_range == 0.0

    def test_straight_observer_flags_risk(self, model, straight_path, theta_star):
        rep = validate_scenario(model, theta_star, straight_path, 6.0)
        assert rep.passed and rep.observability_risk
