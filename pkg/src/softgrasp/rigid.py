"""Rigid-body quadrotor dynamics.

State evolves on SE(3) under thrust along the body z axis, gravity,
aerodynamic drag, and arbitrary external force/torque disturbances:

    m p'' = m g + f b3 + F_ext
    J w'  = -w x Jw + tau + T_ext

Integration is semi-implicit Euler with the rotation updated through the
exponential map, which keeps the conservation defects of a torque-free
spin small enough to test against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from softgrasp.errors import DivergenceError

GRAVITY = 9.81


def hat(v: np.ndarray) -> np.ndarray:
    """Skew matrix of v, so hat(v) @ w == cross(v, w)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of hat for skew-symmetric m."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rotation matrix exp(hat(w)) via Rodrigues' formula."""
    theta = float(np.linalg.norm(w))
    k = hat(w)
    if theta < 1e-8:
        # series expansion; avoids 0/0 while staying exact to machine eps
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """One Newton step toward R^T R = I; enough to cancel per-step drift."""
    return r @ (1.5 * np.eye(3) - 0.5 * (r.T @ r))


def so3_defect(r: np.ndarray) -> float:
    return float(max(np.abs(r.T @ r - np.eye(3)).max(),
                     abs(abs(np.linalg.det(r)) - 1.0)))


@dataclass
class QuadrotorState:
    position: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray  # body frame angular velocity

    @classmethod
    def rest(cls, position=(0.0, 0.0, 0.0)) -> "QuadrotorState":
        return cls(np.asarray(position, dtype=float), np.eye(3),
                   np.zeros(3), np.zeros(3))

    def copy(self) -> "QuadrotorState":
        return QuadrotorState(self.position.copy(), self.rotation.copy(),
                              self.velocity.copy(), self.omega.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.position).all()
                    and np.isfinite(self.rotation).all()
                    and np.isfinite(self.velocity).all()
                    and np.isfinite(self.omega).all())


@dataclass
class RigidParams:
    mass: float = 1.7
    inertia: np.ndarray = field(
        default_factory=lambda: np.diag([0.08, 0.08, 0.14]))
    gravity: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, -GRAVITY]))
    drag_coeff: float = 0.3
    f_max: float | None = None  # None -> 4 m |g|

    def thrust_limit(self) -> float:
        if self.f_max is not None:
            return self.f_max
        return 4.0 * self.mass * float(np.linalg.norm(self.gravity))

    def weight(self) -> float:
        return self.mass * float(np.linalg.norm(self.gravity))


@dataclass
class ControlWrench:
    thrust: float
    torque: np.ndarray

    @classmethod
    def zero(cls) -> "ControlWrench":
        return cls(0.0, np.zeros(3))


@dataclass
class ExternalDisturbance:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class GroundEffectParams:
    k_ge: float = 0.1
    r_prop: float = 0.12  # propeller radius [m]
    h_min: float = 0.1    # floor on the h/r ratio; kills the singularity
    max_ratio: float = 0.5  # lift never exceeds this fraction of weight


def drag_force(state: QuadrotorState, params: RigidParams) -> np.ndarray:
    """Quadratic body drag -c_d |v| v at the center of mass."""
    v = state.velocity
    return -params.drag_coeff * float(np.linalg.norm(v)) * v


def ground_effect_force(state: QuadrotorState, params: RigidParams,
                        ground_z: float,
                        model: GroundEffectParams) -> np.ndarray:
    """Extra lift near the ground, decaying with the classic (r/h)^2 ratio."""
    h = float(state.position[2]) - ground_z
    ratio = max(h / model.r_prop, model.h_min)
    lift = params.weight() * model.k_ge / (ratio * ratio)
    lift = min(lift, model.max_ratio * params.weight())
    return np.array([0.0, 0.0, lift])


def step_quadrotor(state: QuadrotorState, params: RigidParams,
                   u: ControlWrench, d: ExternalDisturbance,
                   dt: float) -> QuadrotorState:
    """Advance one semi-implicit Euler step of length dt.

    Velocities are updated from forces at the current state, then the
    configuration is advanced with the *new* velocities. Thrust is clamped
    to [0, f_max] before use. Raises DivergenceError on non-finite input.
    """
    if not 0.0 < dt <= 0.05:
        raise ValueError(f"dt must be in (0, 0.05], got {dt}")
    if not (state.is_finite() and np.isfinite(u.thrust)
            and np.isfinite(u.torque).all()
            and np.isfinite(d.force).all() and np.isfinite(d.torque).all()):
        raise DivergenceError("non-finite state or wrench in step_quadrotor")

    f = min(max(u.thrust, 0.0), params.thrust_limit())
    b3 = state.rotation[:, 2]
    force = f * b3 + d.force + drag_force(state, params)
    acc = params.gravity + force / params.mass

    j_omega = params.inertia @ state.omega
    torque = u.torque + d.torque - np.cross(state.omega, j_omega)
    omega_dot = np.linalg.solve(params.inertia, torque)

    velocity = state.velocity + dt * acc
    omega = state.omega + dt * omega_dot
    position = state.position + dt * velocity
    rotation = orthonormalize(state.rotation @ so3_exp(dt * omega))
    return QuadrotorState(position, rotation, velocity, omega)
