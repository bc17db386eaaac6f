"""Tests for the tendon length objectives, optimizer, and schedule."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from softgrasp.errors import ConfigError, OptimizationError
from softgrasp.gripperopt import (
    ARMIJO_ALPHA,
    ARMIJO_BETA,
    KIND_APPROACH,
    KIND_GRASP,
    STEP_NORM_MAX,
    STEP_NORM_MIN,
    GraspSchedule,
    GripperObjective,
    approach_objective,
    grasp_objective,
    interpolate_lengths,
    objective_length_gradient,
    objective_tip_gradient,
    optimize_lengths,
)
from softgrasp.softbody import TendonLengths, build_default_gripper, solve_quasistatic

_MESH = build_default_gripper()
_TIPS4 = np.arange(4)

# target used throughout: 5 cm below the palm center
GRASP_TARGET = np.array([0.0, 0.0, -0.05])

_CACHE = {}


def _rest_grasp_run():
    """One shared grasp optimization run (the expensive fixture)."""
    if "grasp" not in _CACHE:
        obj = GripperObjective.grasp(_MESH, GRASP_TARGET)
        _CACHE["grasp"] = (obj, optimize_lengths(_MESH, obj, TendonLengths()))
    return _CACHE["grasp"]


def _square_objective(kind):
    tips = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0], [0, -1.0, 0]])
    return tips, GripperObjective(kind, np.zeros(3), _TIPS4)


def test_approach_value_matches_hand_computation():
    # unit tips on the axes around the origin: each of the 3 consecutive
    # pairs is orthogonal with unit norms, so each |a x b|^2 = 1
    tips, obj = _square_objective(KIND_APPROACH)
    assert_allclose(approach_objective(tips, obj), 3.0, rtol=1e-14)


def test_approach_zero_for_collinear_tips():
    direction = np.array([1.0, 2.0, -0.5])
    tips = np.outer([0.3, -1.2, 2.0, 0.7], direction)
    obj = GripperObjective(KIND_APPROACH, np.zeros(3), _TIPS4)
    assert approach_objective(tips, obj) == pytest.approx(0.0, abs=1e-14)


def test_approach_scales_quartically():
    # |sa x sb|^2 = s^4 |a x b|^2
    rng = np.random.default_rng(7)
    for _ in range(10):
        tips = rng.normal(size=(4, 3))
        s = float(rng.uniform(0.2, 3.0))
        obj = GripperObjective(KIND_APPROACH, np.zeros(3), _TIPS4)
        assert_allclose(approach_objective(s * tips, obj),
                        s ** 4 * approach_objective(tips, obj), rtol=1e-12)


def test_grasp_value_matches_hand_computation():
    tips, obj = _square_objective(KIND_GRASP)
    assert_allclose(grasp_objective(tips, obj), 4.0, rtol=1e-14)
    assert grasp_objective(np.zeros((4, 3)), obj) == 0.0


def test_objective_kind_guards():
    tips, grasp_obj = _square_objective(KIND_GRASP)
    _, approach_obj = _square_objective(KIND_APPROACH)
    with pytest.raises(ValueError):
        approach_objective(tips, grasp_obj)
    with pytest.raises(ValueError):
        grasp_objective(tips, approach_obj)


def test_objective_validation():
    with pytest.raises(ConfigError):
        GripperObjective("open", np.zeros(3), _TIPS4)
    with pytest.raises(ConfigError):
        GripperObjective(KIND_GRASP, np.zeros(2), _TIPS4)
    with pytest.raises(ConfigError):
        GripperObjective(KIND_GRASP, np.zeros(3), np.arange(3))


def test_tip_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    h = 1e-6
    for kind, fn in ((KIND_APPROACH, approach_objective),
                     (KIND_GRASP, grasp_objective)):
        for _ in range(10):
            tips = rng.normal(size=(4, 3))
            target = rng.normal(size=3)
            obj = GripperObjective(kind, target, _TIPS4)
            value, grad = objective_tip_gradient(tips, obj)
            assert_allclose(value, fn(tips, obj), rtol=1e-12)
            fd = np.zeros((4, 3))
            for i in range(4):
                for j in range(3):
                    e = np.zeros((4, 3))
                    e[i, j] = h
                    fd[i, j] = (fn(tips + e, obj) - fn(tips - e, obj)) / (2 * h)
            assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)


def test_length_gradient_matches_finite_differences():
    # three taut groups and one slack group: the slack column must vanish
    # exactly, the taut columns must match a re-solve finite difference
    l = np.array([0.185, 0.190, 0.200, 0.215])
    obj = GripperObjective.grasp(_MESH, GRASP_TARGET)
    res = solve_quasistatic(_MESH, TendonLengths(l))
    grad = objective_length_gradient(_MESH, res.positions, l, obj)

    assert grad[3] == 0.0  # slack group: no coupling
    h = 5e-5
    for i in range(3):
        vals = []
        for s in (+h, -h):
            lp = l.copy()
            lp[i] += s
            rp = solve_quasistatic(_MESH, TendonLengths(lp),
                                   q_guess=res.positions)
            vals.append(grasp_objective(rp.positions, obj))
        fd = (vals[0] - vals[1]) / (2 * h)
        assert_allclose(grad[i], fd, rtol=1e-3, atol=1e-8)


def test_grasp_optimization_halves_objective():
    obj, result = _rest_grasp_run()
    v_rest = grasp_objective(_MESH.rest_positions, obj)
    assert result.objective <= 0.5 * v_rest
    assert result.objective == grasp_objective(result.positions, obj)
    lo, hi = TendonLengths().lower, TendonLengths().upper
    assert np.all(result.lengths.lengths >= lo - 1e-12)
    assert np.all(result.lengths.lengths <= hi + 1e-12)
    lengths, positions = result  # unpacks as a pair
    assert lengths is result.lengths and positions is result.positions


def test_optimizer_records_certify_invariants():
    _, result = _rest_grasp_run()
    assert result.records, "expected at least one accepted step"
    for rec in result.records:
        snorm = float(np.linalg.norm(rec.proposed_step))
        assert STEP_NORM_MIN - 1e-12 <= snorm <= STEP_NORM_MAX + 1e-12
        # t is a whole number of backtracking multiplications
        k = round(np.log(rec.t) / np.log(ARMIJO_BETA))
        assert rec.t == pytest.approx(ARMIJO_BETA ** k, rel=1e-12)
        # sufficient decrease on the accepted trial point
        bound = rec.phi_before + ARMIJO_ALPHA * float(rec.gradient @ rec.delta)
        assert rec.phi_after <= bound + 1e-12
        assert rec.phi_after < rec.phi_before
    # the history chains the accepted iterates
    for (l_a, phi_a), (l_b, phi_b), rec in zip(
            result.history, result.history[1:], result.records):
        assert_allclose(l_b - l_a, rec.delta, atol=1e-15)
        assert phi_a == rec.phi_before and phi_b == rec.phi_after


def test_approach_optimization_spreads_fingers():
    # a deep target: the fingers must spread (dorsal contraction) to grow
    # the spanned area, strictly beating the starting configuration
    obj = GripperObjective.approach(_MESH, (0.0, 0.0, -0.25))
    l0 = TendonLengths(np.array([0.208, 0.208, 0.190, 0.190]))
    v0 = approach_objective(solve_quasistatic(_MESH, l0).positions, obj)
    result = optimize_lengths(_MESH, obj, l0, max_iters=4)
    assert result.objective > v0
    # history stores the minimized (negated) objective: strictly decreasing
    phis = [phi for _, phi in result.history]
    assert all(b < a for a, b in zip(phis, phis[1:]))


def test_optimizer_stops_when_every_tendon_is_slack():
    slack = TendonLengths(_MESH.rest_group_lengths() + 0.02)
    obj = GripperObjective.grasp(_MESH, GRASP_TARGET)
    result = optimize_lengths(_MESH, obj, slack)
    assert result.iterations == 1 and not result.records
    assert_allclose(result.lengths.lengths, slack.lengths, rtol=0)


def test_optimizer_raises_when_start_has_no_equilibrium():
    # an asymmetric volar pattern whose quasi-static solve does not certify
    bad = TendonLengths(np.array([0.10, 0.15, 0.25, 0.25]))
    obj = GripperObjective.grasp(_MESH, GRASP_TARGET)
    with pytest.raises(OptimizationError) as err:
        optimize_lengths(_MESH, obj, bad)
    lengths, positions = err.value.last_iterate
    assert lengths is bad and positions is None


def test_schedule_validation():
    l = np.full(4, 0.2)
    frames = [(0.0, l), (1.0, l), (2.0, l)]
    GraspSchedule(frames, t_a=1.0, t_g=2.0, t_f=2.0)  # valid
    with pytest.raises(ConfigError):
        GraspSchedule(frames, t_a=2.0, t_g=1.0, t_f=3.0)
    with pytest.raises(ConfigError):
        GraspSchedule(frames, t_a=1.0, t_g=2.0, t_f=1.5)
    with pytest.raises(ConfigError):
        GraspSchedule([(0.0, l), (0.0, l)], t_a=1.0, t_g=2.0, t_f=2.0)
    with pytest.raises(ConfigError):
        GraspSchedule([(0.0, np.full(4, 0.5))], t_a=1.0, t_g=2.0, t_f=2.0)
    with pytest.raises(ConfigError):
        GraspSchedule([(0.0, np.full(3, 0.2))], t_a=1.0, t_g=2.0, t_f=2.0)


def test_interpolation_reproduces_keyframes_and_holds_ends():
    a = np.array([0.20, 0.21, 0.19, 0.18])
    b = np.array([0.12, 0.13, 0.25, 0.26])
    c = np.array([0.15, 0.15, 0.15, 0.15])
    sched = GraspSchedule([(1.0, a), (2.0, b), (4.0, c)],
                          t_a=1.0, t_g=2.0, t_f=4.0)
    assert_allclose(interpolate_lengths(sched, 1.0).lengths, a, rtol=0)
    assert_allclose(interpolate_lengths(sched, 2.0).lengths, b, rtol=0)
    assert_allclose(interpolate_lengths(sched, 4.0).lengths, c, rtol=0)
    assert_allclose(interpolate_lengths(sched, 1.5).lengths, (a + b) / 2)
    assert_allclose(interpolate_lengths(sched, 3.0).lengths, (b + c) / 2)
    # constant off both ends: before the first keyframe and after the last
    assert_allclose(interpolate_lengths(sched, 0.0).lengths, a, rtol=0)
    assert_allclose(interpolate_lengths(sched, 9.0).lengths, c, rtol=0)


def _piecewise_warp(rng, t0, t1, knots=6):
    """Random monotone time warp of [t0, t1] onto itself."""
    gaps = rng.uniform(0.1, 1.0, size=knots)
    u = np.concatenate([[0.0], np.cumsum(gaps)]) / np.sum(gaps)
    times = np.linspace(t0, t1, knots + 1)
    return lambda t: np.interp(t, times, t0 + u * (t1 - t0))


def test_linear_schedule_minimizes_peak_tendon_speed():
    # among all monotone schedules through the same keyframes, the linear
    # one has the smallest worst-case |dl/dt|; check against random
    # keyframe-preserving time warps on a dense grid
    rng = np.random.default_rng(23)
    a = np.array([0.20, 0.21, 0.19, 0.18])
    b = np.array([0.12, 0.13, 0.25, 0.26])
    sched = GraspSchedule([(1.0, a), (3.0, b)], t_a=1.0, t_g=3.0, t_f=3.0)

    grid = np.linspace(1.0, 3.0, 2001)
    dt = grid[1] - grid[0]

    def peak_speed(times):
        ls = np.array([interpolate_lengths(sched, t).lengths for t in times])
        return np.max(np.abs(np.diff(ls, axis=0)) / dt)

    linear_peak = peak_speed(grid)
    assert_allclose(linear_peak, np.max(np.abs(b - a)) / 2.0, rtol=1e-9)
    for _ in range(20):
        warp = _piecewise_warp(rng, 1.0, 3.0)
        warped_peak = peak_speed(warp(grid))
        assert warped_peak >= linear_peak - 1e-9
