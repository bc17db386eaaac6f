"""Minimum-snap piecewise-polynomial trajectories.

Each axis is a chain of degree-7 segments in a scaled local basis
tau = (t - t_i)/T_i. The snap integral is a quadratic form in the
coefficients, so the planner is an equality-constrained QP solved through
its KKT system: waypoint positions, pinned derivatives, rest endpoints,
and C1..C4 continuity at interior waypoints are the equality rows.

Interior pinned derivatives are written on one segment side only; the
continuity rows propagate them, which keeps the constraint matrix full
rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from softgrasp.control import DesiredState, attitude_from_flat_outputs
from softgrasp.errors import ConfigError, PlannerError

DEGREE = 7
NCOEF = DEGREE + 1


@dataclass
class Waypoint:
    t: float
    position: np.ndarray
    velocity: np.ndarray | None = None
    acceleration: np.ndarray | None = None
    jerk: np.ndarray | None = None

    def pinned(self):
        """(order, value) pairs for derivatives constrained at this point."""
        out = []
        for order, val in ((1, self.velocity), (2, self.acceleration),
                           (3, self.jerk)):
            if val is not None:
                out.append((order, np.asarray(val, dtype=float)))
        return out


def _fall(k: int, d: int) -> float:
    # falling factorial k!/(k-d)!, the derivative weight of tau^k
    return float(math.perm(k, d))


def _deriv_row(order: int, tau: float, duration: float) -> np.ndarray:
    row = np.zeros(NCOEF)
    for k in range(order, NCOEF):
        row[k] = _fall(k, order) * tau ** (k - order)
    return row / duration ** order


def _snap_quadratic(duration: float) -> np.ndarray:
    q = np.zeros((NCOEF, NCOEF))
    for j in range(4, NCOEF):
        for k in range(4, NCOEF):
            q[j, k] = _fall(j, 4) * _fall(k, 4) / (j + k - 7)
    return q / duration ** 7


@dataclass
class PolyTrajectory:
    breaks: np.ndarray           # segment boundary times, length K+1
    coeffs: np.ndarray           # (K, 3, 8) in the scaled local basis

    @property
    def duration(self) -> float:
        return float(self.breaks[-1])

    def _locate(self, t: float) -> tuple[int, float, float]:
        i = int(np.searchsorted(self.breaks, t, side="right") - 1)
        i = min(max(i, 0), len(self.breaks) - 2)
        duration = float(self.breaks[i + 1] - self.breaks[i])
        tau = (t - float(self.breaks[i])) / duration
        return i, tau, duration

    def derivative(self, t: float, order: int = 0) -> np.ndarray:
        i, tau, duration = self._locate(t)
        row = _deriv_row(order, tau, duration) if order else \
            np.array([tau ** k for k in range(NCOEF)])
        return self.coeffs[i] @ row

    def position(self, t: float) -> np.ndarray:
        return self.derivative(t, 0)

    def snap_cost(self) -> float:
        total = 0.0
        for i in range(self.coeffs.shape[0]):
            q = _snap_quadratic(float(self.breaks[i + 1] - self.breaks[i]))
            for ax in range(3):
                c = self.coeffs[i, ax]
                total += float(c @ q @ c)
        return total


def build_grasp_waypoints(start, target_centroid, finger_length: float,
                          final, t_g: float, t_f: float,
                          grasp_speed: float | None = 0.5) -> list[Waypoint]:
    """Start -> grasp point a finger length above the target -> final.

    The grasp waypoint optionally pins a forward velocity (horizontal
    direction from start toward the target); pass grasp_speed=None to
    leave it free.
    """
    if not 0.0 < t_g < t_f:
        raise ConfigError(f"need 0 < t_g < t_f, got t_g={t_g}, t_f={t_f}")
    start = np.asarray(start, dtype=float)
    target = np.asarray(target_centroid, dtype=float)
    final = np.asarray(final, dtype=float)
    grasp_point = target + np.array([0.0, 0.0, finger_length])

    grasp_vel = None
    if grasp_speed is not None:
        forward = grasp_point - start
        forward[2] = 0.0
        norm = float(np.linalg.norm(forward))
        forward = forward / norm if norm > 1e-9 else np.array([1.0, 0.0, 0.0])
        grasp_vel = grasp_speed * forward

    zero = np.zeros(3)
    return [
        Waypoint(0.0, start, velocity=zero, acceleration=zero),
        Waypoint(t_g, grasp_point, velocity=grasp_vel),
        Waypoint(t_f, final, velocity=zero, acceleration=zero),
    ]


def solve_minsnap(wps: list[Waypoint]) -> PolyTrajectory:
    """Minimize the snap integral subject to waypoint constraints.

    Solved per axis as one dense KKT system over all segment coefficients.
    """
    if len(wps) < 2:
        raise PlannerError("need at least 2 waypoints")
    times = np.array([w.t for w in wps], dtype=float)
    if not np.all(np.diff(times) > 0):
        raise PlannerError(f"waypoint times must strictly increase: {times}")

    nseg = len(wps) - 1
    n = nseg * NCOEF
    durations = np.diff(times)

    quad = np.zeros((n, n))
    for i, duration in enumerate(durations):
        sl = slice(i * NCOEF, (i + 1) * NCOEF)
        quad[sl, sl] = _snap_quadratic(float(duration))

    rows, rhs = [], []  # rhs entries are 3-vectors, one QP per axis

    def add(row_seg, seg_index, value):
        row = np.zeros(n)
        row[seg_index * NCOEF:(seg_index + 1) * NCOEF] = row_seg
        rows.append(row)
        rhs.append(np.asarray(value, dtype=float))

    for i, duration in enumerate(durations):
        add(_deriv_row(0, 0.0, duration), i, wps[i].position)
        add(_deriv_row(0, 1.0, duration), i, wps[i + 1].position)

    for order, val in wps[0].pinned():
        add(_deriv_row(order, 0.0, durations[0]), 0, val)
    for order, val in wps[-1].pinned():
        add(_deriv_row(order, 1.0, durations[-1]), nseg - 1, val)
    # interior pins go on the left segment only; continuity carries them over
    for w in range(1, nseg):
        for order, val in wps[w].pinned():
            add(_deriv_row(order, 1.0, durations[w - 1]), w - 1, val)

    for w in range(1, nseg):
        for order in range(1, 5):
            row = np.zeros(n)
            left = _deriv_row(order, 1.0, durations[w - 1])
            right = _deriv_row(order, 0.0, durations[w])
            row[(w - 1) * NCOEF:w * NCOEF] = left
            row[w * NCOEF:(w + 1) * NCOEF] = -right
            rows.append(row)
            rhs.append(np.zeros(3))

    a = np.vstack(rows)
    b = np.vstack(rhs)  # (m, 3)
    m = a.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = 2.0 * quad
    kkt[:n, n:] = a.T
    kkt[n:, :n] = a
    rhs_full = np.vstack([np.zeros((n, 3)), b])
    try:
        sol = np.linalg.solve(kkt, rhs_full)
    except np.linalg.LinAlgError as exc:
        raise PlannerError(f"singular constraint system: {exc}") from exc
    if not np.isfinite(sol).all():
        raise PlannerError("constraint system produced non-finite solution")

    coeffs = sol[:n].T.reshape(3, nseg, NCOEF).transpose(1, 0, 2)
    return PolyTrajectory(times, np.ascontiguousarray(coeffs))


def sample_trajectory(traj: PolyTrajectory, t: float,
                      yaw_policy=(1.0, 0.0, 0.0),
                      gravity=(0.0, 0.0, -9.81),
                      fd_step: float = 0.01) -> tuple[DesiredState, bool]:
    """Desired state at time t; returns (state, in_domain).

    Out-of-domain times clamp to the endpoints. The desired attitude puts
    body z along the commanded specific force; its angular velocity comes
    from finite-differencing that attitude at the control step, and the
    angular acceleration feedforward is dropped.
    """
    in_domain = 0.0 <= t <= traj.duration
    t = min(max(t, 0.0), traj.duration)
    b1 = np.asarray(yaw_policy(t) if callable(yaw_policy) else yaw_policy,
                    dtype=float)
    gravity = np.asarray(gravity, dtype=float)

    def attitude(at):
        acc = traj.derivative(at, 2)
        r, _ = attitude_from_flat_outputs(acc - gravity, b1)
        return r

    lo = max(t - fd_step, 0.0)
    hi = min(t + fd_step, traj.duration)
    r_d = attitude(t)
    if hi > lo:
        dr = (attitude(hi) - attitude(lo)) / (hi - lo)
        w_hat = r_d.T @ dr
        w_hat = 0.5 * (w_hat - w_hat.T)
        omega_d = np.array([w_hat[2, 1], w_hat[0, 2], w_hat[1, 0]])
    else:
        omega_d = np.zeros(3)

    des = DesiredState(traj.position(t), traj.derivative(t, 1),
                       traj.derivative(t, 2), r_d, omega_d, np.zeros(3), b1)
    return des, in_domain
