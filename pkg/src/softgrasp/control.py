"""Geometric tracking controller on SE(3) with adaptive disturbance estimation.

Thrust and moment follow the geometric tracking form

    f   = -b3 . (k_p e_p + k_v e_v + m g - m a_d + th_f)
    tau = -k_r e_R - k_O e_O + Om x J Om
          - J (hat(Om) R^T R_d Om_d - R^T R_d dOm_d) - th_tau

where th_f, th_tau are online estimates of the force/torque disturbances,
integrated from tracking errors and projected onto a ball of radius beta.
Setting both adaptation rates to zero recovers the plain geometric
controller, so the baseline and the adaptive variant share one code path.

Sign conventions are fixed by the anchor: zero-error hover commands
f = m |g| and tau = 0, with e_p = p - p_d and e_v = v - v_d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from softgrasp.rigid import ControlWrench, QuadrotorState, RigidParams, hat, vee


@dataclass
class ControllerGains:
    k_p: float = 10.0
    k_v: float = 10.0
    k_r: float = 16.0
    k_omega: float = 2.5
    gamma_f: float = 15.0
    gamma_tau: float = 15.0
    k_af: float = 2.0
    k_atau: float = 2.0
    beta: float = 5.0  # disturbance-estimate bound [N and N·m]

    @classmethod
    def geometric(cls, **overrides) -> "ControllerGains":
        """Baseline without adaptation: same law, zero adaptation rates."""
        overrides.setdefault("gamma_f", 0.0)
        overrides.setdefault("gamma_tau", 0.0)
        return cls(**overrides)


@dataclass
class DesiredState:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    rotation: np.ndarray
    omega: np.ndarray
    omega_dot: np.ndarray
    b1: np.ndarray  # desired heading direction in the world xy-plane

    @classmethod
    def hover(cls, position, b1=(1.0, 0.0, 0.0)) -> "DesiredState":
        return cls(np.asarray(position, dtype=float), np.zeros(3),
                   np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3),
                   np.asarray(b1, dtype=float))


@dataclass
class TrackingErrors:
    e_p: np.ndarray
    e_v: np.ndarray
    e_r: np.ndarray
    e_omega: np.ndarray

    @classmethod
    def zero(cls) -> "TrackingErrors":
        return cls(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))


@dataclass
class DisturbanceEstimate:
    theta_f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta_tau: np.ndarray = field(default_factory=lambda: np.zeros(3))


def project_ball(v: np.ndarray, beta: float) -> np.ndarray:
    """Radial projection of v onto the closed ball of radius beta."""
    n = float(np.linalg.norm(v))
    if n <= beta:
        return v
    return v * (beta / n)


def attitude_from_flat_outputs(acc_cmd: np.ndarray, b1_d: np.ndarray,
                               fallback: np.ndarray | None = None
                               ) -> tuple[np.ndarray, bool]:
    """Desired attitude whose body z axis carries the commanded acceleration.

    acc_cmd is the required specific force (desired acceleration minus
    gravity). Returns (R_d, ok). When acc_cmd is near zero, or b1_d is
    parallel to it, the construction is degenerate: returns the fallback
    (identity if none given) with ok = False.
    """
    if fallback is None:
        fallback = np.eye(3)
    norm_a = float(np.linalg.norm(acc_cmd))
    if norm_a < 1e-9:
        return fallback, False
    b3 = acc_cmd / norm_a
    b2 = np.cross(b3, b1_d)
    norm_b2 = float(np.linalg.norm(b2))
    if norm_b2 < 1e-9:
        return fallback, False
    b2 = b2 / norm_b2
    b1 = np.cross(b2, b3)
    return np.column_stack([b1, b2, b3]), True


def commanded_acceleration(err: TrackingErrors, des: DesiredState,
                           gains: ControllerGains, est: DisturbanceEstimate,
                           params: RigidParams) -> np.ndarray:
    """Specific-force command of the position loop, in acceleration units.

    This is the vector the thrust projects onto the body z axis; feeding it
    to attitude_from_flat_outputs closes the loop through attitude, which
    is what lets thrust reject lateral errors.
    """
    f_cmd = -(gains.k_p * err.e_p + gains.k_v * err.e_v
              + params.mass * params.gravity
              - params.mass * des.acceleration + est.theta_f)
    return f_cmd / params.mass


def tracking_errors(state: QuadrotorState, des: DesiredState) -> TrackingErrors:
    r, r_d = state.rotation, des.rotation
    e_r = 0.5 * vee(r_d.T @ r - r.T @ r_d)
    e_omega = state.omega - r.T @ r_d @ des.omega
    return TrackingErrors(state.position - des.position,
                          state.velocity - des.velocity, e_r, e_omega)


def control_wrench(err: TrackingErrors, state: QuadrotorState,
                   des: DesiredState, gains: ControllerGains,
                   est: DisturbanceEstimate, params: RigidParams,
                   clamp: bool = True) -> ControlWrench:
    """Thrust and moment command; thrust clamped to [0, f_max] by default."""
    b3 = state.rotation[:, 2]
    f = -float(b3 @ (gains.k_p * err.e_p + gains.k_v * err.e_v
                     + params.mass * params.gravity
                     - params.mass * des.acceleration + est.theta_f))
    if clamp:
        f = min(max(f, 0.0), params.thrust_limit())

    r, r_d, j = state.rotation, des.rotation, params.inertia
    omega = state.omega
    rr_d = r.T @ r_d
    tau = (-gains.k_r * err.e_r - gains.k_omega * err.e_omega
           + np.cross(omega, j @ omega)
           - j @ (hat(omega) @ rr_d @ des.omega - rr_d @ des.omega_dot)
           - est.theta_tau)
    return ControlWrench(f, tau)


def update_adaptive(err: TrackingErrors, gains: ControllerGains,
                    est: DisturbanceEstimate, dt: float) -> DisturbanceEstimate:
    """One explicit-Euler step of the adaptive law, then ball projection.

    Both estimates are kept inside the beta-ball; with zero adaptation
    rates the estimate is a fixed point, giving the geometric baseline.
    """
    theta_f = est.theta_f + dt * gains.gamma_f * (err.e_v + gains.k_af * err.e_p)
    theta_tau = est.theta_tau + dt * gains.gamma_tau * (err.e_omega
                                                        + gains.k_atau * err.e_r)
    return DisturbanceEstimate(project_ball(theta_f, gains.beta),
                               project_ball(theta_tau, gains.beta))
