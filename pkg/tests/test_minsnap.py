import math

import numpy as np
import pytest

from softgrasp.errors import ConfigError, PlannerError
from softgrasp.minsnap import (
    PolyTrajectory,
    Waypoint,
    build_grasp_waypoints,
    sample_trajectory,
    solve_minsnap,
)

# ---- independent oracles ----------------------------------------------------


def seg_derivative(coeffs, duration, tau, order):
    """Evaluate one segment's order-th derivative at local tau from scratch."""
    val = 0.0
    for k in range(order, len(coeffs)):
        val += coeffs[k] * math.perm(k, order) * tau ** (k - order)
    return val / duration ** order


def quadrature_snap_cost(traj):
    """Snap integral by Gauss-Legendre quadrature, no shared code paths."""
    nodes, weights = np.polynomial.legendre.leggauss(16)
    total = 0.0
    for i in range(traj.coeffs.shape[0]):
        duration = float(traj.breaks[i + 1] - traj.breaks[i])
        for ax in range(3):
            c = traj.coeffs[i, ax]
            for x, w in zip(nodes, weights):
                tau = 0.5 * (x + 1.0)
                s = seg_derivative(c, duration, tau, 4)
                total += w * 0.5 * duration * s * s
    return total


# rest-to-rest snap minimum over all polynomials: cost = 30240 d^2 / T^7,
# frozen from a degree-15 Chebyshev-basis QP with exact integration
# (degree 11 and 15 agree to 1e-14, so this is the functional optimum)
REST_TO_REST_UNIT_COST = 30240.0


def grasp_trajectory():
    wps = build_grasp_waypoints(start=(-2.0, 0.0, 1.0),
                                target_centroid=(0.0, 0.0, 0.2),
                                finger_length=0.2, final=(2.0, 0.0, 1.0),
                                t_g=3.0, t_f=6.0)
    return wps, solve_minsnap(wps)


# ---- waypoint construction --------------------------------------------------


def test_grasp_waypoints_geometry_and_times():
    wps, _ = grasp_trajectory()
    assert [w.t for w in wps] == [0.0, 3.0, 6.0]
    assert np.allclose(wps[1].position, [0.0, 0.0, 0.4])
    assert np.array_equal(wps[0].velocity, np.zeros(3))
    assert np.array_equal(wps[2].acceleration, np.zeros(3))


def test_grasp_waypoint_pins_forward_velocity():
    wps = build_grasp_waypoints((-2.0, 0.0, 1.0), (0.0, 0.0, 0.2), 0.2,
                                (2.0, 0.0, 1.0), 3.0, 6.0, grasp_speed=0.5)
    assert np.allclose(wps[1].velocity, [0.5, 0.0, 0.0])
    wps = build_grasp_waypoints((-2.0, 0.0, 1.0), (0.0, 0.0, 0.2), 0.2,
                                (2.0, 0.0, 1.0), 3.0, 6.0, grasp_speed=None)
    assert wps[1].velocity is None


def test_grasp_waypoints_rejects_bad_times():
    with pytest.raises(ConfigError):
        build_grasp_waypoints((0, 0, 0), (1, 0, 0), 0.2, (2, 0, 0), 3.0, 3.0)
    with pytest.raises(ConfigError):
        build_grasp_waypoints((0, 0, 0), (1, 0, 0), 0.2, (2, 0, 0), -1.0, 6.0)


# ---- solver -----------------------------------------------------------------


def test_stationary_waypoints_give_constant_zero_cost():
    p = np.array([1.0, -2.0, 3.0])
    zero = np.zeros(3)
    wps = [Waypoint(0.0, p, zero, zero, zero),
           Waypoint(1.0, p, zero, zero, zero)]
    traj = solve_minsnap(wps)
    assert traj.snap_cost() < 1e-12
    for t in (0.0, 0.33, 0.77, 1.0):
        assert np.allclose(traj.position(t), p, atol=1e-9)


def test_rest_to_rest_matches_functional_optimum():
    zero = np.zeros(3)
    wps = [Waypoint(0.0, np.zeros(3), zero, zero),
           Waypoint(1.0, np.array([1.0, 0.0, 0.0]), zero, zero)]
    traj = solve_minsnap(wps)
    cost = traj.snap_cost()
    assert abs(cost - REST_TO_REST_UNIT_COST) / REST_TO_REST_UNIT_COST < 1e-3
    assert quadrature_snap_cost(traj) == pytest.approx(cost, rel=1e-9)


def test_time_scaling_seventh_power():
    zero = np.zeros(3)
    for s in (2.0, 3.0):
        wps = [Waypoint(0.0, np.zeros(3), zero, zero),
               Waypoint(s, np.array([1.0, 0.0, 0.0]), zero, zero)]
        cost = solve_minsnap(wps).snap_cost()
        assert cost == pytest.approx(REST_TO_REST_UNIT_COST / s ** 7,
                                     rel=1e-6)


def test_snap_cost_translation_invariant():
    wps, traj = grasp_trajectory()
    shift = np.array([5.0, -3.0, 2.0])
    shifted = [Waypoint(w.t, w.position + shift, w.velocity, w.acceleration)
               for w in wps]
    assert solve_minsnap(shifted).snap_cost() == pytest.approx(
        traj.snap_cost(), rel=1e-9)


def test_waypoints_and_continuity_satisfied():
    wps, traj = grasp_trajectory()
    for w in wps:
        assert np.allclose(traj.position(w.t), w.position, atol=1e-8)
    # C1..C4 across the interior waypoint, via one-sided segment evaluation
    t_mid = 3.0
    d0 = float(traj.breaks[1] - traj.breaks[0])
    d1 = float(traj.breaks[2] - traj.breaks[1])
    for order in range(5):
        for ax in range(3):
            left = seg_derivative(traj.coeffs[0, ax], d0, 1.0, order)
            right = seg_derivative(traj.coeffs[1, ax], d1, 0.0, order)
            assert abs(left - right) < 1e-8, (order, ax)
    # pinned grasp velocity came through
    assert np.allclose(traj.derivative(t_mid, 1), [0.5, 0.0, 0.0], atol=1e-8)


def test_duplicate_times_raise_planner_error():
    zero = np.zeros(3)
    wps = [Waypoint(0.0, np.zeros(3), zero, zero),
           Waypoint(0.0, np.ones(3), zero, zero)]
    with pytest.raises(PlannerError):
        solve_minsnap(wps)


def test_optimality_certificate_against_null_space_perturbations():
    # every constraint-preserving perturbation must strictly raise the cost
    wps, traj = grasp_trajectory()
    durations = np.diff(traj.breaks)
    n = traj.coeffs.shape[0] * 8

    def constraint_values(flat, ax_positions):
        # same functionals the solve must satisfy, evaluated independently
        c = flat.reshape(-1, 8)
        vals = []
        vals.append(seg_derivative(c[0], durations[0], 0.0, 0)
                    - ax_positions[0])
        vals.append(seg_derivative(c[0], durations[0], 1.0, 0)
                    - ax_positions[1])
        vals.append(seg_derivative(c[1], durations[1], 0.0, 0)
                    - ax_positions[1])
        vals.append(seg_derivative(c[1], durations[1], 1.0, 0)
                    - ax_positions[2])
        for order in (1, 2):
            vals.append(seg_derivative(c[0], durations[0], 0.0, order))
            vals.append(seg_derivative(c[1], durations[1], 1.0, order))
        vals.append(seg_derivative(c[0], durations[0], 1.0, 1) - 0.5)
        for order in range(1, 5):
            vals.append(seg_derivative(c[0], durations[0], 1.0, order)
                        - seg_derivative(c[1], durations[1], 0.0, order))
        return np.array(vals)

    # x-axis scalar problem; build the constraint matrix column by column
    x_pos = np.array([w.position[0] for w in wps])
    base = traj.coeffs[:, 0, :].ravel()
    assert np.abs(constraint_values(base, x_pos)).max() < 1e-7

    a = np.zeros((13, n))
    zero_rhs = constraint_values(np.zeros(n), x_pos * 0)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        a[:, i] = constraint_values(e, x_pos * 0) - zero_rhs

    cost0 = quadrature_snap_cost(traj)
    rng = np.random.default_rng(7)
    perturbed = traj.coeffs.copy()
    for _ in range(100):
        delta = rng.normal(size=n)
        # project onto the null space of the constraints
        delta -= np.linalg.pinv(a) @ (a @ delta)
        if np.linalg.norm(delta) < 1e-9:
            continue
        delta *= 0.01 / np.linalg.norm(delta)
        assert np.abs(a @ delta).max() < 1e-9
        perturbed[:, 0, :] = (base + delta).reshape(-1, 8)
        cost = quadrature_snap_cost(
            PolyTrajectory(traj.breaks, perturbed))
        assert cost > cost0 + 1e-12


# ---- sampling ---------------------------------------------------------------


def test_sample_at_rest_start():
    _, traj = grasp_trajectory()
    des, ok = sample_trajectory(traj, 0.0)
    assert ok
    assert np.allclose(des.velocity, 0.0, atol=1e-8)
    assert np.allclose(des.rotation, np.eye(3), atol=1e-6)


def test_sample_hits_grasp_waypoint():
    _, traj = grasp_trajectory()
    des, ok = sample_trajectory(traj, 3.0)
    assert ok
    assert np.allclose(des.position, [0.0, 0.0, 0.4], atol=1e-8)
    assert np.allclose(des.velocity, [0.5, 0.0, 0.0], atol=1e-8)


def test_sample_clamps_out_of_domain():
    _, traj = grasp_trajectory()
    des, ok = sample_trajectory(traj, -1.0)
    assert not ok
    assert np.allclose(des.position, [-2.0, 0.0, 1.0], atol=1e-8)
    des, ok = sample_trajectory(traj, 7.5)
    assert not ok
    assert np.allclose(des.position, [2.0, 0.0, 1.0], atol=1e-8)


def test_sample_velocity_consistent_with_position():
    _, traj = grasp_trajectory()
    h = 1e-6
    for t in (1.5, 2.5, 3.5, 4.5):
        des, _ = sample_trajectory(traj, t)
        fd = (traj.position(t + h) - traj.position(t)) / h
        rel = np.linalg.norm(fd - des.velocity) / np.linalg.norm(des.velocity)
        assert rel < 1e-4


def test_sample_yaw_policy_callable():
    _, traj = grasp_trajectory()
    des, _ = sample_trajectory(traj, 0.0, yaw_policy=lambda t: (0.0, 1.0, 0.0))
    assert np.allclose(des.rotation[:, 0], [0.0, 1.0, 0.0], atol=1e-6)


def test_desired_omega_matches_attitude_rate():
    # omega_d from the sampler agrees with a finer finite difference
    _, traj = grasp_trajectory()
    for t in (1.0, 2.0, 4.0):
        des, _ = sample_trajectory(traj, t)
        des_hi, _ = sample_trajectory(traj, t + 5e-3)
        des_lo, _ = sample_trajectory(traj, t - 5e-3)
        dr = (des_hi.rotation - des_lo.rotation) / 1e-2
        w_hat = des.rotation.T @ dr
        w = np.array([w_hat[2, 1], w_hat[0, 2], w_hat[1, 0]])
        assert np.allclose(des.omega, w, atol=5e-3)
