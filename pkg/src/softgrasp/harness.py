"""Coupled grasp-episode simulation and the controller ablation study.

One episode plans a minimum-snap transit over the grasp target, tracks it
with the attitude controller (optionally with online disturbance
adaptation), drives the tendon lengths open-loop from a schedule, applies
the configured disturbances to the base — the soft gripper's pin reaction
wrench, ground effect, aerodynamic drag — and, at the grasp time, attaches
the target object as extra unmodeled mass plus an optional constant lever
torque.  Everything is logged per control step so tracking-error studies
can be replayed from the CSV alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from softgrasp.control import (
    ControllerGains, DesiredState, DisturbanceEstimate,
    attitude_from_flat_outputs, commanded_acceleration, control_wrench,
    tracking_errors, update_adaptive)
from softgrasp.errors import ConfigError, DivergenceError
from softgrasp.gripperopt import GraspSchedule, interpolate_lengths
from softgrasp.minsnap import build_grasp_waypoints, sample_trajectory, solve_minsnap
from softgrasp.rigid import (
    ExternalDisturbance, GroundEffectParams, QuadrotorState, RigidParams,
    ground_effect_force, step_quadrotor)
from softgrasp.softbody.fem import forces as soft_forces
from softgrasp.softbody.mesh import (
    MaterialParams, SoftBodyMesh, TendonLengths, build_default_gripper)
from softgrasp.softbody.quasistatic import solve_quasistatic

__all__ = [
    "Scenario",
    "EpisodeLog",
    "GraspOutcome",
    "AblationRow",
    "CONTROLLER_VARIANTS",
    "LOG_COLUMNS",
    "default_schedule",
    "gripper_coupling_wrench",
    "run_grasp_episode",
    "grasp_success",
    "run_ablation",
    "ABLATION_VELOCITIES",
]

CONTROLLER_VARIANTS = ("adaptive", "geometric")

#: Position-norm threshold treated as a diverged episode.
DIVERGENCE_RADIUS = 100.0

#: Window [s] at the episode tail over which steady-state errors average.
STEADY_WINDOW = 1.0

#: Grasp velocities [m/s] swept by the controller ablation.
ABLATION_VELOCITIES = tuple(round(0.1 * k, 1) for k in range(1, 11))


@dataclass
class Scenario:
    """Full description of one grasp episode.

    The rigid parameters describe the airframe alone; the target object is
    attached as unmodeled extra mass at the grasp time, so the controller
    keeps flying with the original model.  Disturbance toggles select which
    couplings act on the plant.
    """

    rigid: RigidParams = field(default_factory=RigidParams)
    gains: ControllerGains = field(default_factory=ControllerGains)
    material: MaterialParams | None = None
    start: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    final: np.ndarray = field(
        default_factory=lambda: np.array([2.5, 0.0, 1.0]))
    target_centroid: np.ndarray = field(
        default_factory=lambda: np.array([2.0, 0.0, 0.5]))
    target_mass: float = 0.1
    t_a: float = 3.0
    t_g: float = 5.0
    t_f: float = 8.0
    duration: float | None = None
    grasp_speed: float = 0.5
    ground_z: float = 0.0
    controller: str = "adaptive"
    use_gripper_coupling: bool = False
    use_ground_effect: bool = False
    capture_radius: float = 0.15
    lever_arm: np.ndarray = field(default_factory=lambda: np.zeros(3))
    coupling_decimation: int = 10
    finger_length: float = 0.1
    control_dt: float = 0.01
    seed: int = 0

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        self.final = np.asarray(self.final, dtype=float)
        self.target_centroid = np.asarray(self.target_centroid, dtype=float)
        self.lever_arm = np.asarray(self.lever_arm, dtype=float)
        if not self.t_a < self.t_g < self.t_f:
            raise ConfigError(
                f"phase times must satisfy t_a < t_g < t_f, got "
                f"({self.t_a}, {self.t_g}, {self.t_f})")
        if self.target_mass < 0.0:
            raise ConfigError(f"target mass must be >= 0, "
                              f"got {self.target_mass}")
        if self.controller not in CONTROLLER_VARIANTS:
            raise ConfigError(
                f"controller must be one of {CONTROLLER_VARIANTS}, "
                f"got {self.controller!r}")
        if self.capture_radius < 0.0:
            raise ConfigError("capture radius must be >= 0")
        if self.coupling_decimation < 1:
            raise ConfigError("coupling decimation must be >= 1")
        if not 0.0 < self.control_dt <= 0.05:
            raise ConfigError(f"control dt must be in (0, 0.05], "
                              f"got {self.control_dt}")
        if self.duration is not None and self.duration < self.t_f:
            raise ConfigError("episode duration must cover t_f")

    @property
    def end_time(self) -> float:
        """Episode end: explicit duration, else a settle tail after t_f."""
        if self.duration is not None:
            return float(self.duration)
        return float(max(self.t_f, self.t_g + 6.0) + STEADY_WINDOW)


#: Column schema (version 1) of the per-step episode CSV.
LOG_COLUMNS = (
    "t",
    "p_x", "p_y", "p_z", "v_x", "v_y", "v_z",
    "om_x", "om_y", "om_z",
    "r_00", "r_01", "r_02", "r_10", "r_11", "r_12", "r_20", "r_21", "r_22",
    "des_p_x", "des_p_y", "des_p_z", "des_v_x", "des_v_y", "des_v_z",
    "e_p_x", "e_p_y", "e_p_z", "e_v_x", "e_v_y", "e_v_z",
    "thrust", "tau_x", "tau_y", "tau_z",
    "theta_f_x", "theta_f_y", "theta_f_z",
    "theta_tau_x", "theta_tau_y", "theta_tau_z",
    "l_0", "l_1", "l_2", "l_3",
    "attached", "grasp_event",
)


@dataclass
class EpisodeLog:
    """Per-step arrays (one row per control step) plus the outcome record."""

    t: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray
    rotation: np.ndarray
    des_position: np.ndarray
    des_velocity: np.ndarray
    e_p: np.ndarray
    e_v: np.ndarray
    thrust: np.ndarray
    torque: np.ndarray
    theta_f: np.ndarray
    theta_tau: np.ndarray
    lengths: np.ndarray
    attached: np.ndarray
    grasp_event: np.ndarray
    grasped: bool
    attach_time: float | None
    diverged: bool
    divergence_time: float | None
    coupling_failures: int

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def e_p_norm(self) -> np.ndarray:
        return np.linalg.norm(self.e_p, axis=1)

    @property
    def peak_e_p(self) -> float:
        return float(self.e_p_norm.max())

    def steady_error(self, window: float = STEADY_WINDOW) -> float:
        """Mean |e_p| over the final ``window`` seconds."""
        rows = max(1, int(round(window / (self.t[1] - self.t[0]))))
        return float(self.e_p_norm[-rows:].mean())

    def steady_error_z(self, window: float = STEADY_WINDOW) -> float:
        """Mean |e_p,z| over the final ``window`` seconds."""
        rows = max(1, int(round(window / (self.t[1] - self.t[0]))))
        return float(np.abs(self.e_p[-rows:, 2]).mean())

    def to_csv(self, path) -> None:
        """Write the per-step rows under the versioned column schema."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            for k in range(len(self)):
                row = [self.t[k], *self.position[k], *self.velocity[k],
                       *self.omega[k], *self.rotation[k].ravel(),
                       *self.des_position[k], *self.des_velocity[k],
                       *self.e_p[k], *self.e_v[k],
                       self.thrust[k], *self.torque[k],
                       *self.theta_f[k], *self.theta_tau[k],
                       *self.lengths[k]]
                writer.writerow([repr(float(v)) for v in row]
                                + [int(self.attached[k]),
                                   int(self.grasp_event[k])])


@dataclass
class GraspOutcome:
    """Success verdict for an episode, with the failing reason if any."""

    success: bool
    reason: str
    final_error: float


def default_schedule(sc: Scenario) -> GraspSchedule:
    """Open-then-close tendon keyframes consistent with the scenario times."""
    rest = TendonLengths().lengths
    opened = np.array([0.21, 0.21, 0.19, 0.19])
    closed = np.array([0.15, 0.15, 0.21, 0.21])
    return GraspSchedule(
        keyframes=[(0.0, rest), (sc.t_a, opened), (sc.t_g, closed)],
        t_a=sc.t_a, t_g=sc.t_g, t_f=sc.t_f)


def gripper_coupling_wrench(q: np.ndarray, mesh: SoftBodyMesh,
                            base_pose) -> ExternalDisturbance:
    """Reaction wrench the soft gripper exerts on the base through the pins.

    ``base_pose`` is ``(rotation, position)`` of the base.  The force is the
    negated sum of the pin spring forces acting on the mesh nodes (world
    frame); the torque is the matching moment about the base origin,
    expressed in the body frame.
    """
    rot, pos = base_pose
    rot = np.asarray(rot, dtype=float)
    pos = np.asarray(pos, dtype=float)
    anchors_world = pos + mesh.pin_anchors @ rot.T
    pin_forces = mesh.pin_stiffness[:, None] * (anchors_world
                                                - q[mesh.pin_nodes])
    force = -pin_forces.sum(axis=0)
    torque_world = -np.cross(anchors_world - pos, pin_forces).sum(axis=0)
    return ExternalDisturbance(force=force, torque=rot.T @ torque_world)


def _desired_from(traj, t: float) -> DesiredState:
    des, _ = sample_trajectory(traj, t)
    return des


def run_grasp_episode(sc: Scenario,
                      schedule: GraspSchedule | None = None) -> EpisodeLog:
    """Run one grasp episode at the control timestep and log every row.

    The tendon schedule defaults to :func:`default_schedule`; its grasp
    time must match the scenario's.  At ``t_g`` the target attaches if the
    base is within the capture radius of the target centroid: the plant
    mass grows by the target mass (the controller keeps its nominal model)
    and the object's weight twists the body at the configured lever arm.
    The episode aborts (and the log records a divergence) if the base
    leaves a 100 m ball around the origin.
    """
    if schedule is None:
        schedule = default_schedule(sc)
    if abs(schedule.t_g - sc.t_g) > 1e-9:
        raise ConfigError(
            f"schedule grasp time {schedule.t_g} != scenario t_g {sc.t_g}")

    waypoints = build_grasp_waypoints(
        sc.start, sc.target_centroid, sc.finger_length, sc.final,
        sc.t_g, sc.t_f, sc.grasp_speed)
    traj = solve_minsnap(waypoints)

    mesh = None
    soft_q = None
    soft_p = None
    coupling = ExternalDisturbance()
    if sc.use_gripper_coupling:
        mesh = build_default_gripper(material=sc.material)

    plant = replace(sc.rigid)
    ge_model = GroundEffectParams()
    state = QuadrotorState.rest(sc.start)
    est = DisturbanceEstimate()
    adaptive = sc.controller == "adaptive"
    dt = sc.control_dt
    n_steps = int(round(sc.end_time / dt))
    grasp_step = int(round(sc.t_g / dt))

    rows = {name: [] for name in (
        "t", "p", "v", "om", "rot", "des_p", "des_v", "e_p", "e_v",
        "thrust", "tau", "th_f", "th_tau", "l", "attached", "event")}
    attached = False
    attach_time = None
    diverged = False
    divergence_time = None
    coupling_failures = 0

    for k in range(n_steps + 1):
        t = k * dt
        planned = _desired_from(traj, t)
        err_pos = tracking_errors(state, planned)
        # close the lateral loop through attitude: the commanded rotation
        # aligns body z with the position loop's specific-force command
        acc_cmd = commanded_acceleration(err_pos, planned, sc.gains, est,
                                         sc.rigid)
        r_cmd, _ = attitude_from_flat_outputs(acc_cmd, planned.b1,
                                              fallback=state.rotation)
        des = replace(planned, rotation=r_cmd)
        err = tracking_errors(state, des)
        if adaptive:
            est = update_adaptive(err, sc.gains, est, dt)
        u = control_wrench(err, state, des, sc.gains, est, sc.rigid)

        grasp_event = False
        if not attached and k == grasp_step:
            gap = float(np.linalg.norm(state.position - sc.target_centroid))
            if gap <= sc.capture_radius:
                attached = True
                attach_time = t
                grasp_event = True
                plant = replace(plant, mass=plant.mass + sc.target_mass)

        lengths = interpolate_lengths(schedule, t)
        if mesh is not None and k % sc.coupling_decimation == 0:
            base_pose = (state.rotation, state.position)
            if soft_q is not None:
                # carry the warm start along with the base so its quality
                # does not degrade with flight distance
                soft_q = soft_q + (state.position - soft_p)
            soft_p = state.position.copy()
            try:
                res = solve_quasistatic(mesh, lengths, q_guess=soft_q,
                                        gravity_on=True, base_pose=base_pose)
                soft_q = res.positions
                coupling = gripper_coupling_wrench(soft_q, mesh, base_pose)
            except DivergenceError:
                coupling_failures += 1  # hold the previous wrench

        d = ExternalDisturbance()
        if sc.use_gripper_coupling:
            d.force = d.force + coupling.force
            d.torque = d.torque + coupling.torque
        if sc.use_ground_effect:
            d.force = d.force + ground_effect_force(state, plant, sc.ground_z,
                                                    ge_model)
        if attached:
            # the mass bump already carries the object's weight through the
            # plant's gravity term; only the lever-arm torque remains
            weight = sc.target_mass * plant.gravity
            d.torque = d.torque + np.cross(sc.lever_arm,
                                           state.rotation.T @ weight)

        rows["t"].append(t)
        rows["p"].append(state.position.copy())
        rows["v"].append(state.velocity.copy())
        rows["om"].append(state.omega.copy())
        rows["rot"].append(state.rotation.copy())
        rows["des_p"].append(des.position.copy())
        rows["des_v"].append(des.velocity.copy())
        rows["e_p"].append(err.e_p.copy())
        rows["e_v"].append(err.e_v.copy())
        rows["thrust"].append(u.thrust)
        rows["tau"].append(u.torque.copy())
        rows["th_f"].append(est.theta_f.copy())
        rows["th_tau"].append(est.theta_tau.copy())
        rows["l"].append(lengths.lengths.copy())
        rows["attached"].append(attached)
        rows["event"].append(grasp_event)

        if float(np.linalg.norm(state.position)) > DIVERGENCE_RADIUS:
            diverged = True
            divergence_time = t
            break
        if k < n_steps:
            state = step_quadrotor(state, plant, u, d, dt)

    return EpisodeLog(
        t=np.array(rows["t"]),
        position=np.array(rows["p"]),
        velocity=np.array(rows["v"]),
        omega=np.array(rows["om"]),
        rotation=np.array(rows["rot"]),
        des_position=np.array(rows["des_p"]),
        des_velocity=np.array(rows["des_v"]),
        e_p=np.array(rows["e_p"]),
        e_v=np.array(rows["e_v"]),
        thrust=np.array(rows["thrust"]),
        torque=np.array(rows["tau"]),
        theta_f=np.array(rows["th_f"]),
        theta_tau=np.array(rows["th_tau"]),
        lengths=np.array(rows["l"]),
        attached=np.array(rows["attached"], dtype=bool),
        grasp_event=np.array(rows["event"], dtype=bool),
        grasped=attached,
        attach_time=attach_time,
        diverged=diverged,
        divergence_time=divergence_time,
        coupling_failures=coupling_failures)


def grasp_success(log: EpisodeLog,
                  error_threshold: float = 0.1) -> GraspOutcome:
    """Episode verdict: attached at t_g, no divergence, settled tracking."""
    final_error = log.steady_error()
    if log.diverged:
        return GraspOutcome(False, "divergence", final_error)
    if not log.grasped:
        return GraspOutcome(False, "no grasp", final_error)
    if final_error >= error_threshold:
        return GraspOutcome(False, "tracking error", final_error)
    return GraspOutcome(True, "", final_error)


@dataclass
class AblationRow:
    """Per-velocity summary of the geometric-vs-adaptive comparison."""

    velocity: float
    geometric_steady_z: float
    geometric_steady: float
    adaptive_steady: float
    adaptive_converged_5s: bool
    adaptive_peak_after_convergence: float
    both_grasped: bool


def _post_grasp_peak(log: EpisodeLog, settle: float = 5.0) -> float:
    """Largest |e_p| from ``attach_time + settle`` to the episode end."""
    if log.attach_time is None:
        return float("nan")
    mask = log.t >= log.attach_time + settle
    if not mask.any():
        return float("nan")
    return float(log.e_p_norm[mask].max())


def run_ablation(base: Scenario | None = None,
                 velocities=ABLATION_VELOCITIES) -> list[AblationRow]:
    """Sweep grasp velocities, comparing both controller variants.

    Every episode uses the attach disturbance only (coupling and ground
    effect off), isolating the unmodeled-mass rejection that the
    comparison is about.
    """
    if base is None:
        base = Scenario()
    rows = []
    for v in velocities:
        logs = {}
        for variant in CONTROLLER_VARIANTS:
            sc = replace(base, controller=variant, grasp_speed=float(v),
                         use_gripper_coupling=False, use_ground_effect=False)
            logs[variant] = run_grasp_episode(sc)
        adaptive, geometric = logs["adaptive"], logs["geometric"]
        peak_tail = _post_grasp_peak(adaptive)
        rows.append(AblationRow(
            velocity=float(v),
            geometric_steady_z=geometric.steady_error_z(),
            geometric_steady=geometric.steady_error(),
            adaptive_steady=adaptive.steady_error(),
            adaptive_converged_5s=bool(np.isfinite(peak_tail)
                                       and peak_tail < 0.01),
            adaptive_peak_after_convergence=peak_tail,
            both_grasped=adaptive.grasped and geometric.grasped))
    return rows
