import math

import numpy as np
import pytest

from romsafe import (FilterGains, InfeasibleFilterError, ReducedCbf,
                     circular_obstacle_cbf, issf_residual,
                     make_safety_controller, safety_filter, single_integrator_rom,
                     smooth_combine)
from romsafe.filters import _constraint_halfspace
from romsafe.numdiff import central_gradient
from romsafe.sampling import Box

from util import dense_grid_argmin, empirical_lipschitz, feasible_grid_points

ROM = single_integrator_rom()
UNIT_DISK = circular_obstacle_cbf((0.0, 0.0), 1.0)
GAINS_20 = FilterGains(alpha=1.0, epsilon=20.0, mu=1.0, sigma=None)


def random_instance(rng, with_sigma):
    """A random filter instance; returns (cbf, gains, y, kappa_d)."""
    center = rng.uniform(-1.5, 1.5, 2)
    cbf = circular_obstacle_cbf(center, rng.uniform(0.3, 1.2))
    gains = FilterGains(alpha=rng.uniform(0.2, 2.0),
                        epsilon=rng.uniform(2.0, 40.0), mu=1.0,
                        sigma=rng.uniform(2.0, 40.0) if with_sigma else None)
    theta = rng.uniform(0, 2 * np.pi)
    y = center + rng.uniform(0.2, 2.5) * np.array([np.cos(theta), np.sin(theta)])
    kd = rng.uniform(-1.5, 1.5, 2)
    return cbf, gains, y, kd


class TestIssfResidual:
    def test_strongly_inward_velocity_is_positive(self):
        y = np.array([1.2, 0.0])
        v = 50.0 * UNIT_DISK.gradient(y)
        assert issf_residual(UNIT_DISK, ROM, GAINS_20, y, v) > 0

    def test_filtered_output_is_nonnegative(self):
        rng = np.random.default_rng(21)
        for i in range(300):
            cbf, gains, y, kd = random_instance(rng, with_sigma=bool(i % 2))
            v = safety_filter(cbf, ROM, gains, lambda z: kd, y)
            assert issf_residual(cbf, ROM, gains, y, v) >= -1e-9

    def test_sigma_term_reduces_residual(self):
        y = np.array([2.0, 0.5])
        v = np.array([0.3, -0.2])
        gains_sigma = FilterGains(alpha=1.0, epsilon=20.0, mu=1.0, sigma=4.0)
        grad = UNIT_DISK.gradient(y)
        expected_drop = float(grad @ grad) / 4.0
        r_without = issf_residual(UNIT_DISK, ROM, GAINS_20, y, v)
        r_with = issf_residual(UNIT_DISK, ROM, gains_sigma, y, v)
        assert r_without - r_with == pytest.approx(expected_drop)


class TestSafetyFilter:
    def test_inactive_passthrough(self):
        v = safety_filter(UNIT_DISK, ROM, GAINS_20, lambda y: np.array([1.0, 0.0]),
                          np.array([2.0, 0.0]))
        assert np.allclose(v, [1.0, 0.0])

    def test_active_projection_closed_form(self):
        # At y=(2,0): a=(4,0), b=-3+16/20=-2.2, a.kd=-4 < b,
        # so v = kd + ((b - a.kd)/16) a = (-0.55, 0).
        v = safety_filter(UNIT_DISK, ROM, GAINS_20, lambda y: np.array([-1.0, 0.0]),
                          np.array([2.0, 0.0]))
        assert np.allclose(v, [-0.55, 0.0], atol=1e-12)

    def test_active_projection_against_dense_grid(self):
        # Full dense-grid argmin over [-2,2]^2 at step 1e-3 for the worked
        # instance above.
        a, b = _constraint_halfspace(UNIT_DISK, ROM, GAINS_20, np.array([2.0, 0.0]))
        kd = np.array([-1.0, 0.0])
        best = dense_grid_argmin(a, b, kd, -2.0, 2.0, 1e-3)
        v = safety_filter(UNIT_DISK, ROM, GAINS_20, lambda y: kd,
                          np.array([2.0, 0.0]))
        assert np.linalg.norm(v - best) <= 1e-3 + 1e-9

    def test_exactly_active_constraint_passes_through(self):
        y = np.array([2.0, 0.0])
        a, b = _constraint_halfspace(UNIT_DISK, ROM, GAINS_20, y)
        kd = (b / float(a @ a)) * a  # a . kd == b exactly up to rounding
        v = safety_filter(UNIT_DISK, ROM, GAINS_20, lambda z: kd, y)
        assert np.allclose(v, kd, atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(22)
        for i in range(200):
            cbf, gains, y, kd = random_instance(rng, with_sigma=bool(i % 2))
            v1 = safety_filter(cbf, ROM, gains, lambda z: kd, y)
            v2 = safety_filter(cbf, ROM, gains, lambda z: v1, y)
            assert np.linalg.norm(v2 - v1) <= 1e-12

    def test_minimal_deviation_among_feasible_grid_points(self):
        rng = np.random.default_rng(23)
        checked = 0
        while checked < 1000:
            cbf, gains, y, kd = random_instance(rng, with_sigma=False)
            a, b = _constraint_halfspace(cbf, ROM, gains, y)
            if float(a @ kd) >= b or float(a @ a) < 1e-8:
                continue  # need an active, nondegenerate instance
            v = safety_filter(cbf, ROM, gains, lambda z: kd, y)
            pts = feasible_grid_points(a, b, -6.0, 6.0, 0.25)
            if pts.size == 0:
                continue
            best_grid = float(np.min(np.linalg.norm(pts - kd, axis=1)))
            assert np.linalg.norm(v - kd) <= best_grid + 1e-9
            checked += 1

    def test_degenerate_active_constraint_raises(self):
        # At the disk center the gradient vanishes while h=-r^2 keeps the
        # constraint active.
        with pytest.raises(InfeasibleFilterError):
            safety_filter(UNIT_DISK, ROM, GAINS_20, lambda y: np.zeros(2),
                          np.zeros(2))

    def test_strictness_margin_shifts_constraint(self):
        y = np.array([2.0, 0.0])
        kd = np.array([-1.0, 0.0])
        v = safety_filter(UNIT_DISK, ROM, GAINS_20, lambda z: kd, y, margin=0.4)
        # margin eta adds to b: v_1 = (b + eta)/a_1
        assert v[0] == pytest.approx((-2.2 + 0.4) / 4.0)

    def test_output_locally_lipschitz_away_from_degeneracy(self):
        gains = FilterGains(alpha=1.0, epsilon=20.0, mu=1.0, sigma=None)
        kappa = make_safety_controller(UNIT_DISK, ROM, gains,
                                       lambda y: np.array([-1.0, 0.3]))
        box = Box(np.array([1.2, -0.5]), np.array([2.5, 0.5]))
        slope = empirical_lipschitz(kappa, box, 400, seed=24)
        assert np.isfinite(slope)
        assert slope < 60.0


class TestSmoothCombine:
    def test_single_barrier_identity(self):
        combined = smooth_combine([UNIT_DISK], kappa_smooth=100.0)
        rng = np.random.default_rng(25)
        for _ in range(50):
            y = rng.uniform(-3, 3, 2)
            assert combined.value(y) == pytest.approx(UNIT_DISK.value(y), abs=1e-12)
            assert np.allclose(combined.gradient(y), UNIT_DISK.gradient(y))

    def test_two_equal_barriers_closed_form(self):
        c = 0.37
        flat = ReducedCbf(h=lambda y: c, grad_h=lambda y: np.zeros(2))
        for ks in (10.0, 100.0):
            combined = smooth_combine([flat, flat], kappa_smooth=ks)
            assert combined.value(np.zeros(2)) == pytest.approx(c - math.log(2) / ks)

    def test_under_approximates_pointwise_min(self):
        obstacles = [circular_obstacle_cbf((1.5, 0.3), 0.5),
                     circular_obstacle_cbf((3.2, -0.45), 0.6),
                     circular_obstacle_cbf((5.0, 0.25), 0.5)]
        combined = smooth_combine(obstacles, kappa_smooth=1000.0)
        pts = Box(np.array([-1.0, -3.0]), np.array([7.0, 3.0])).sample(10_000, seed=4)
        for y in pts:
            h_min = min(o.value(y) for o in obstacles)
            assert combined.value(y) <= h_min + 1e-12

    def test_gap_shrinks_with_sharpness(self):
        obstacles = [circular_obstacle_cbf((1.5, 0.3), 0.5),
                     circular_obstacle_cbf((3.2, -0.45), 0.6),
                     circular_obstacle_cbf((5.0, 0.25), 0.5)]
        pts = Box(np.array([-1.0, -3.0]), np.array([7.0, 3.0])).sample(512, seed=5)
        gaps = []
        for ks in (10.0, 100.0, 1000.0):
            combined = smooth_combine(obstacles, kappa_smooth=ks)
            gap = max(min(o.value(y) for o in obstacles) - combined.value(y)
                      for y in pts)
            gaps.append(gap)
        assert gaps[0] > gaps[1] > gaps[2]

    def test_gradient_matches_finite_differences(self):
        obstacles = [circular_obstacle_cbf((0.0, 0.0), 1.0),
                     circular_obstacle_cbf((2.0, 1.0), 0.7)]
        combined = smooth_combine(obstacles, kappa_smooth=50.0)
        rng = np.random.default_rng(26)
        for _ in range(50):
            y = rng.uniform(-3, 4, 2)
            fd = central_gradient(combined.value, y)
            assert np.allclose(combined.gradient(y), fd, rtol=1e-5, atol=1e-7)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            smooth_combine([], kappa_smooth=10.0)


class TestCircularObstacle:
    def test_boundary_value(self):
        cbf = circular_obstacle_cbf((1.0, 1.0), 1.0)
        assert cbf.value(np.array([2.0, 1.0])) == pytest.approx(0.0)

    def test_offset_value(self):
        cbf = circular_obstacle_cbf((1.0, 1.0), 1.0)
        assert cbf.value(np.array([3.0, 1.0])) == pytest.approx(3.0)

    def test_gradient_matches_finite_differences(self):
        cbf = circular_obstacle_cbf((0.5, -0.3), 0.8)
        rng = np.random.default_rng(27)
        for _ in range(100):
            y = rng.uniform(-2, 2, 2)
            assert np.allclose(cbf.gradient(y), central_gradient(cbf.value, y),
                               rtol=1e-5, atol=1e-8)

    def test_nonpositive_radius_rejected(self):
        with pytest.raises(ValueError):
            circular_obstacle_cbf((0.0, 0.0), 0.0)


def test_gain_validation():
    with pytest.raises(ValueError):
        FilterGains(alpha=0.0, epsilon=1.0)
    with pytest.raises(ValueError):
        FilterGains(alpha=1.0, epsilon=-2.0)
    with pytest.raises(ValueError):
        FilterGains(alpha=1.0, epsilon=1.0, sigma=0.0)
    with pytest.raises(ValueError):
        FilterGains(alpha=1.0, epsilon=1.0, mu=0.0)
