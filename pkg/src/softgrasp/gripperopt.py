"""Tendon rest-length optimization and the open-loop tendon schedule.

Two fingertip objectives drive the gripper through its grasp sequence: an
opening objective (maximize the summed squared cross products of
consecutive tip offsets around the target, which spreads the fingers) and
a closing objective (minimize the summed squared tip-to-target distances).
Both are optimized over the four tendon group lengths by projected
gradient descent: the analytic descent direction comes from chaining the
objective's tip gradient through the equilibrium Jacobian dq/dl, the raw
step rate*gradient is clamped to a norm between 1 and 10 cm, and each
trial point is box-projected and accepted under the Armijo rule with
sufficient-decrease coefficient 0.5 and backtracking factor 0.1. Rest
lengths between the optimized keyframes are linearly interpolated and
held constant after the grasp time, which minimizes the worst-case tendon
speed among all monotone schedules through the same keyframes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from softgrasp.errors import ConfigError, DivergenceError, OptimizationError
from softgrasp.softbody.mesh import SoftBodyMesh, TendonLengths
from softgrasp.softbody.quasistatic import (
    configuration_jacobian,
    solve_quasistatic,
)

KIND_APPROACH = "approach"  # maximize: spread the fingers
KIND_GRASP = "grasp"        # minimize: close the tips on the target

ARMIJO_ALPHA = 0.5
ARMIJO_BETA = 0.1
STEP_NORM_MIN = 0.01
STEP_NORM_MAX = 0.10
DEFAULT_RATES = {KIND_APPROACH: 2.5, KIND_GRASP: 0.25}
IMPROVEMENT_TOL = 1e-8
MAX_OUTER_ITERS = 100
# Newton budget for line-search trial solves: warm-started solves along an
# accepted path converge in well under this; a trial that cannot is
# rejected rather than polished, which keeps failed probes cheap.
LINE_SEARCH_SOLVE_ITERS = 60


@dataclass
class GripperObjective:
    """Fingertip objective: kind, target centroid, cyclic tip indices."""
    kind: str
    target: np.ndarray
    fingertips: np.ndarray

    def __post_init__(self):
        if self.kind not in (KIND_APPROACH, KIND_GRASP):
            raise ConfigError(f"unknown objective kind {self.kind!r}")
        self.target = np.asarray(self.target, dtype=float)
        if self.target.shape != (3,):
            raise ConfigError("objective target must be a 3-vector")
        self.fingertips = np.asarray(self.fingertips, dtype=np.int64)
        if self.fingertips.shape != (4,):
            raise ConfigError("objective needs 4 fingertip indices")

    @classmethod
    def approach(cls, mesh: SoftBodyMesh, target) -> "GripperObjective":
        return cls(KIND_APPROACH, target, mesh.fingertips)

    @classmethod
    def grasp(cls, mesh: SoftBodyMesh, target) -> "GripperObjective":
        return cls(KIND_GRASP, target, mesh.fingertips)


@dataclass
class GraspSchedule:
    """Tendon-length keyframes with the phase times t_a < t_g <= t_f."""
    keyframes: list  # of (time, 4-vector lengths)
    t_a: float
    t_g: float
    t_f: float
    bounds: tuple = (0.10, 0.30)

    def __post_init__(self):
        if not self.t_a < self.t_g <= self.t_f:
            raise ConfigError(
                f"phase times must satisfy t_a < t_g <= t_f, got "
                f"({self.t_a}, {self.t_g}, {self.t_f})")
        self.keyframes = [(float(t), np.asarray(l, dtype=float))
                          for t, l in self.keyframes]
        times = [t for t, _ in self.keyframes]
        if not times or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("keyframe times must be strictly increasing")
        lo, hi = self.bounds
        for t, l in self.keyframes:
            if l.shape != (4,):
                raise ConfigError("keyframe lengths must be 4-vectors")
            if np.any(l < lo) or np.any(l > hi):
                raise ConfigError(
                    f"keyframe at t={t} outside bounds [{lo}, {hi}]")


def _tip_offsets(q: np.ndarray, obj: GripperObjective) -> np.ndarray:
    return q[obj.fingertips] - obj.target


def approach_objective(q: np.ndarray, obj: GripperObjective) -> float:
    """Sum over the 3 consecutive tip pairs of |a_i x a_{i+1}|^2 (maximize)."""
    if obj.kind != KIND_APPROACH:
        raise ValueError(f"approach_objective needs kind {KIND_APPROACH!r}")
    a = _tip_offsets(q, obj)
    c = np.cross(a[:3], a[1:])
    return float(np.sum(c * c))


def grasp_objective(q: np.ndarray, obj: GripperObjective) -> float:
    """Sum of squared tip-to-target distances (minimize)."""
    if obj.kind != KIND_GRASP:
        raise ValueError(f"grasp_objective needs kind {KIND_GRASP!r}")
    a = _tip_offsets(q, obj)
    return float(np.sum(a * a))


def objective_tip_gradient(q: np.ndarray,
                           obj: GripperObjective) -> tuple[float, np.ndarray]:
    """(value, d value / d tip positions) of the objective's natural sign.

    Uses |a x b|^2 = |a|^2 |b|^2 - (a.b)^2, so the pair gradients are
    d/da = 2 a |b|^2 - 2 (a.b) b and symmetrically for b.
    """
    a = _tip_offsets(q, obj)
    grad = np.zeros((4, 3))
    if obj.kind == KIND_GRASP:
        return float(np.sum(a * a)), 2.0 * a
    value = 0.0
    for i in range(3):
        u, w = a[i], a[i + 1]
        uw = float(u @ w)
        value += float(u @ u) * float(w @ w) - uw * uw
        grad[i] += 2.0 * u * float(w @ w) - 2.0 * uw * w
        grad[i + 1] += 2.0 * w * float(u @ u) - 2.0 * uw * u
    return value, grad


def objective_length_gradient(mesh: SoftBodyMesh, q_star: np.ndarray, l,
                              obj: GripperObjective) -> np.ndarray:
    """d objective / d group lengths at an equilibrium, by the chain rule."""
    _, tip_grad = objective_tip_gradient(q_star, obj)
    jac = configuration_jacobian(mesh, q_star, l)
    rows = (3 * obj.fingertips[:, None] + np.arange(3)).ravel()
    return tip_grad.ravel() @ jac[rows]


@dataclass
class StepRecord:
    """One accepted descent step, for auditing the line-search invariants."""
    gradient: np.ndarray       # of the minimized objective, at the start
    proposed_step: np.ndarray  # rate * descent direction after norm clamp
    t: float                   # accepted backtracking multiplier
    delta: np.ndarray          # actual (projected) displacement
    phi_before: float
    phi_after: float


@dataclass
class OptimizeLengthsResult:
    """Unpacks as (lengths, positions); history holds accepted iterates."""
    lengths: TendonLengths
    positions: np.ndarray
    objective: float
    iterations: int
    history: list = field(default_factory=list)  # of (lengths, objective)
    records: list = field(default_factory=list)  # of StepRecord

    def __iter__(self):
        yield self.lengths
        yield self.positions


def optimize_lengths(mesh: SoftBodyMesh, obj: GripperObjective,
                     l0: TendonLengths, rate: float | None = None,
                     max_iters: int = MAX_OUTER_ITERS) -> OptimizeLengthsResult:
    """Projected gradient descent over the four tendon group lengths.

    Per iteration: analytic gradient through dq/dl, raw step
    rate*(descent direction), step norm clamped to [0.01, 0.10] m, Armijo
    backtracking (alpha 0.5, beta 0.1) on box-projected trial points, warm
    starting every re-solve at q_prev + (dq/dl) dl (falling back to the
    current equilibrium). A trial point whose solve fails counts as
    infinitely bad and is backtracked past, so iterates stay where the
    equilibrium is certifiable. Stops when the (sign-normalized,
    minimized) objective improves by less than 1e-8 or after max_iters
    iterations.
    """
    if rate is None:
        rate = DEFAULT_RATES[obj.kind]
    sign = -1.0 if obj.kind == KIND_APPROACH else 1.0  # minimize sign*value
    lo, hi = l0.lower, l0.upper
    l = l0.lengths.copy()

    def resolve(lengths, guesses, solve_iters=None):
        # the Jacobian extrapolation is only a warm-start heuristic; fall
        # back to safer starting points before giving up
        last = None
        kw = {} if solve_iters is None else {"max_iters": solve_iters}
        for guess in guesses:
            try:
                return solve_quasistatic(mesh, lengths, q_guess=guess, **kw)
            except DivergenceError as exc:
                last = exc
        raise last

    try:
        res = resolve(l, [None])
    except DivergenceError as exc:
        raise OptimizationError(
            f"initial quasi-static solve failed: {exc}",
            last_iterate=(l0, None)) from exc
    q = res.positions
    value, tip_grad = objective_tip_gradient(q, obj)
    phi = sign * value
    history = [(l.copy(), phi)]
    records = []

    iterations = 0
    for iterations in range(1, max_iters + 1):
        jac = configuration_jacobian(mesh, q, l)
        rows = (3 * obj.fingertips[:, None] + np.arange(3)).ravel()
        grad = sign * (tip_grad.ravel() @ jac[rows])

        gnorm = float(np.linalg.norm(grad))
        if gnorm == 0.0:
            break  # stationary (e.g. every tendon slack)
        step = -rate * grad
        snorm = float(np.linalg.norm(step))
        step *= np.clip(snorm, STEP_NORM_MIN, STEP_NORM_MAX) / snorm

        accepted = False
        t = 1.0
        for _ in range(8):
            cand = np.clip(l + t * step, lo, hi)
            delta = cand - l
            if np.max(np.abs(delta)) < 1e-14:
                break  # pinned to the bounds; no movement possible
            guess = q + (jac @ delta).reshape(q.shape)
            try:
                res = resolve(cand, [guess, q, None],
                              solve_iters=LINE_SEARCH_SOLVE_ITERS)
            except DivergenceError:
                # no certified equilibrium there (e.g. a tendon routing
                # point collapses and the energy loses smoothness); treat
                # the candidate as infinitely bad and backtrack toward the
                # current, solvable iterate
                t *= ARMIJO_BETA
                continue
            cand_value, cand_tip_grad = objective_tip_gradient(
                res.positions, obj)
            cand_phi = sign * cand_value
            if cand_phi <= phi + ARMIJO_ALPHA * float(grad @ delta):
                accepted = True
                break
            t *= ARMIJO_BETA
        if not accepted:
            break
        improvement = phi - cand_phi
        records.append(StepRecord(
            gradient=grad, proposed_step=step.copy(), t=t, delta=delta,
            phi_before=phi, phi_after=cand_phi))
        l, q, phi = cand, res.positions, cand_phi
        value, tip_grad = cand_value, cand_tip_grad
        history.append((l.copy(), phi))
        if improvement < IMPROVEMENT_TOL:
            break

    return OptimizeLengthsResult(
        lengths=TendonLengths(l, lo, hi), positions=q,
        objective=value, iterations=iterations, history=history,
        records=records)


def interpolate_lengths(schedule: GraspSchedule, t: float) -> TendonLengths:
    """Piecewise-linear lengths at time t, held constant off both ends."""
    times = np.array([k[0] for k in schedule.keyframes])
    values = np.array([k[1] for k in schedule.keyframes])
    out = np.array([np.interp(t, times, values[:, i]) for i in range(4)])
    lo, hi = schedule.bounds
    return TendonLengths(out, lo, hi)
