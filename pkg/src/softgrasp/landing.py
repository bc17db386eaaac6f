"""Aggressive-landing pipeline for the soft tendon gripper.

A landing episode freezes the cable lengths, drops the quadrotor base with
its soft gripper onto flat ground, and integrates the coupled dynamics until
the assembly comes to rest.  The scalar cost of an episode is the time
integral of the squared contact force transmitted through the pin couplings
to the airframe — the load the vehicle structure actually experiences.

The module provides the episode simulator, the force metric, deterministic
dataset sampling for surrogate training (episodes are independent and keyed
by sample index, so any thread count produces identical rows), CSV dataset
I/O, and a projected-gradient planner that descends a trained surrogate to
pick pre-impact cable lengths.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import csv

import numpy as np

from softgrasp.errors import ConfigError, DivergenceError
from softgrasp.softbody.dynamics import (
    STATUS_REST, STATUS_UNSTABLE, ContactParams, DampingParams, FreeBase,
    run_rollout)
from softgrasp.softbody.mesh import SoftBodyMesh, TendonLengths
from softgrasp.softbody.quasistatic import solve_quasistatic
from softgrasp.surrogate import SurrogateModel, surrogate_input_gradient

__all__ = [
    "CollisionState",
    "ForceTrace",
    "LandingDataset",
    "LandingPlan",
    "simulate_landing",
    "force_metric",
    "sample_dataset",
    "save_dataset",
    "load_dataset",
    "optimize_landing",
    "FEATURE_COLUMNS",
]

#: Kinetic energy [J] below which the assembly counts as at rest.
REST_KE = 1e-4

#: How long [s] the kinetic energy must stay below :data:`REST_KE`.
REST_HOLD = 0.1

#: Hard cap [s] on simulated time per landing episode.
MAX_IMPACT_TIME = 2.0

#: Kinetic energy [J] treated as integrator blow-up.
KE_CAP = 1e3

#: Gap [m] between the lowest material point and the ground at release.
DEFAULT_CLEARANCE = 0.002

#: Default sampling ranges for collision states.
SPEED_RANGE = (-3.0, -0.5)
TILT_RANGE = (0.0, float(np.deg2rad(15.0)))
LATERAL_RANGE = (0.0, 0.0)

#: Column order for dataset files and surrogate inputs: the three collision
#: features followed by the four cable group lengths.
FEATURE_COLUMNS = ("vertical_speed", "lateral_speed", "tilt",
                   "l_0", "l_1", "l_2", "l_3")


def _tilt_rotation(tilt: float) -> np.ndarray:
    """Rotation of the base by ``tilt`` radians about the +y axis."""
    c, s = np.cos(tilt), np.sin(tilt)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass
class CollisionState:
    """Pre-touchdown state: approach kinematics plus frozen cable lengths.

    ``height`` is the base origin's height above the ground at release; if
    omitted, the assembly is placed so its lowest material point starts
    :data:`DEFAULT_CLEARANCE` above the ground.  ``configuration``
    optionally carries the body-frame equilibrium node positions for
    ``lengths`` (it is solved on demand otherwise).
    """

    vertical_speed: float
    lateral_speed: float = 0.0
    tilt: float = 0.0
    lengths: TendonLengths = field(default_factory=TendonLengths)
    height: float | None = None
    t_c: float = 0.0
    configuration: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.vertical_speed) or self.vertical_speed >= 0.0:
            raise ConfigError(
                f"approach must be downward: vertical_speed = "
                f"{self.vertical_speed}")
        if not np.isfinite(self.lateral_speed):
            raise ConfigError("lateral_speed must be finite")
        if not np.isfinite(self.tilt):
            raise ConfigError("tilt must be finite")
        if not isinstance(self.lengths, TendonLengths):
            self.lengths = TendonLengths(np.asarray(self.lengths, dtype=float))

    def features(self) -> np.ndarray:
        """Collision features in dataset order (without the lengths)."""
        return np.array([self.vertical_speed, self.lateral_speed, self.tilt])

    def row(self) -> np.ndarray:
        """Full surrogate input row: features followed by the lengths."""
        return np.concatenate([self.features(), self.lengths.lengths])


@dataclass
class ForceTrace:
    """Uniformly sampled magnitude of the net pin force on the base.

    ``f[k]`` is the force at time ``t_c + k*dt``; ``at_rest`` records
    whether the rest detector fired before the episode time cap.
    """

    f: np.ndarray
    t_c: float
    dt: float
    at_rest: bool = True

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        if self.f.ndim != 1 or self.f.size == 0:
            raise ConfigError("force trace must be a non-empty 1-D array")
        if self.dt <= 0.0:
            raise ConfigError("force trace needs a positive dt")
        if not np.all(np.isfinite(self.f)) or np.any(self.f < 0.0):
            raise ConfigError("force samples must be finite and nonnegative")

    @property
    def times(self) -> np.ndarray:
        return self.t_c + self.dt * np.arange(self.f.size)

    @property
    def t_rest(self) -> float:
        return self.t_c + self.dt * (self.f.size - 1)


def _release_state(mesh: SoftBodyMesh, state: CollisionState,
                   contact: ContactParams, solve_iters: int):
    """Build world-frame node positions, velocities, and base at release."""
    if state.configuration is not None:
        q_body = np.asarray(state.configuration, dtype=float)
    else:
        q_body = solve_quasistatic(mesh, state.lengths,
                                   max_iters=solve_iters).positions
    rot = _tilt_rotation(state.tilt)
    q = q_body @ rot.T
    base = FreeBase.at_rest()
    base.rotation = rot
    if state.height is not None:
        height = float(state.height)
    else:
        # lowest of the soft nodes and the rigid base box corners
        corner_drop = float(np.abs(rot[2]) @ base.half_extents)
        low = min(float(q[:, 2].min()), -corner_drop)
        height = contact.ground_z + DEFAULT_CLEARANCE - low
    base.position = np.array([0.0, 0.0, height])
    base.velocity = np.array([state.lateral_speed, 0.0, state.vertical_speed])
    q = q + base.position
    v = np.tile(base.velocity, (len(q), 1))
    return q, v, base


def simulate_landing(mesh: SoftBodyMesh, state: CollisionState,
                     dt: float = 1e-4, contact: ContactParams | None = None,
                     damping: DampingParams | None = None,
                     solve_iters: int = 200) -> ForceTrace:
    """Drop the gripper with frozen cable lengths and record the pin force.

    The base is released at the collision state's pose and velocity, the
    coupled dynamics run until the total kinetic energy stays below
    :data:`REST_KE` for :data:`REST_HOLD` seconds or :data:`MAX_IMPACT_TIME`
    elapses, and the magnitude of the net force transmitted through the pin
    couplings is sampled every step.  Raises :class:`DivergenceError` if the
    equilibrium solve fails or the integrator goes unstable.
    """
    contact = contact if contact is not None else ContactParams()
    q, v, base = _release_state(mesh, state, contact, solve_iters)
    n_steps = int(round(MAX_IMPACT_TIME / dt))
    _, status, f_trace, _, _ = run_rollout(
        mesh, q, v, state.lengths, contact, base, dt, n_steps,
        damping=damping, gravity_on=True,
        ke_stop=REST_KE, hold_time=REST_HOLD, ke_cap=KE_CAP)
    if status == STATUS_UNSTABLE:
        raise DivergenceError("landing simulation went unstable")
    return ForceTrace(f=f_trace, t_c=state.t_c, dt=dt,
                      at_rest=status == STATUS_REST)


def force_metric(trace: ForceTrace) -> float:
    """Trapezoidal integral of the squared pin force over the trace."""
    if trace.f.size < 2:
        return 0.0
    return float(np.trapezoid(trace.f * trace.f, dx=trace.dt))


@dataclass
class LandingDataset:
    """Sampled landing episodes: one row per successful episode.

    ``features`` columns follow :data:`FEATURE_COLUMNS`; ``indices`` holds
    the originating sample index of each row so parallel generation merges
    deterministically; ``failures`` counts skipped episodes.
    """

    seed: int
    features: np.ndarray
    metrics: np.ndarray
    indices: np.ndarray
    failures: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.metrics = np.asarray(self.metrics, dtype=float)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.features.shape != (self.metrics.size, len(FEATURE_COLUMNS)):
            raise ConfigError("dataset features/metrics shapes disagree")

    def __len__(self) -> int:
        return int(self.metrics.size)


def _draw_state(seed: int, index: int, bounds: TendonLengths,
                speed_range, tilt_range, lateral_range) -> CollisionState:
    """Collision state for one sample index; independent of episode order."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    vz = rng.uniform(*speed_range)
    lat = rng.uniform(*lateral_range)
    tilt = rng.uniform(*tilt_range)
    lengths = rng.uniform(bounds.lower, bounds.upper, size=4)
    return CollisionState(vertical_speed=vz, lateral_speed=lat, tilt=tilt,
                          lengths=TendonLengths(lengths, bounds.lower,
                                                bounds.upper))


def sample_dataset(mesh: SoftBodyMesh, n: int, seed: int = 0,
                   threads: int = 1, dt: float = 1e-4,
                   contact: ContactParams | None = None,
                   speed_range=SPEED_RANGE, tilt_range=TILT_RANGE,
                   lateral_range=LATERAL_RANGE,
                   solve_iters: int = 60) -> LandingDataset:
    """Simulate ``n`` independent landing episodes with random draws.

    Each episode's collision state is drawn from a generator keyed by
    ``(seed, sample index)``, so the dataset is identical for any thread
    count and any execution order.  Episodes whose equilibrium solve or
    integration fails are skipped and counted in ``failures``; the tight
    default solve budget keeps unsolvable length draws cheap (converging
    solves finish well under it, so successful rows are unaffected).
    """
    if n < 1:
        raise ConfigError(f"need at least one sample, got n = {n}")
    if threads < 1:
        raise ConfigError(f"thread count must be positive, got {threads}")
    bounds = TendonLengths()

    def episode(index: int):
        state = _draw_state(seed, index, bounds,
                            speed_range, tilt_range, lateral_range)
        try:
            trace = simulate_landing(mesh, state, dt=dt, contact=contact,
                                     solve_iters=solve_iters)
        except DivergenceError:
            return index, None, None
        return index, state.row(), force_metric(trace)

    if threads == 1:
        results = [episode(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(episode, range(n)))

    rows, metrics, indices = [], [], []
    failures = 0
    for index, row, metric in results:
        if row is None:
            failures += 1
            continue
        rows.append(row)
        metrics.append(metric)
        indices.append(index)
    return LandingDataset(seed=seed,
                          features=np.array(rows).reshape(-1,
                                                          len(FEATURE_COLUMNS)),
                          metrics=np.array(metrics),
                          indices=np.array(indices, dtype=np.int64),
                          failures=failures)


def save_dataset(dataset: LandingDataset, path) -> None:
    """Write the dataset as CSV: seed, index, features, lengths, metric."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("seed", "index", *FEATURE_COLUMNS, "force_metric"))
        for idx, row, metric in zip(dataset.indices, dataset.features,
                                    dataset.metrics):
            writer.writerow((dataset.seed, int(idx),
                             *(repr(float(v)) for v in row),
                             repr(float(metric))))


def load_dataset(path) -> LandingDataset:
    """Read a dataset written by :func:`save_dataset`.

    Only successful episodes are stored, so the reconstructed ``failures``
    counts just the gaps in the surviving index range.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["seed", "index", *FEATURE_COLUMNS, "force_metric"]
        if header != expected:
            raise ConfigError(f"unrecognized dataset header in {path}")
        seeds, indices, rows, metrics = [], [], [], []
        for record in reader:
            seeds.append(int(record[0]))
            indices.append(int(record[1]))
            rows.append([float(v) for v in record[2:-1]])
            metrics.append(float(record[-1]))
    if not rows:
        raise ConfigError(f"dataset file {path} holds no rows")
    if len(set(seeds)) != 1:
        raise ConfigError(f"dataset file {path} mixes seeds")
    indices_arr = np.array(indices, dtype=np.int64)
    failures = int(indices_arr.max() + 1 - indices_arr.size)
    return LandingDataset(seed=seeds[0], features=np.array(rows),
                          metrics=np.array(metrics), indices=indices_arr,
                          failures=failures)


@dataclass
class LandingPlan:
    """Result of descending the surrogate: best lengths found and the
    nonincreasing sequence of best-so-far surrogate values."""

    lengths: np.ndarray
    value: float
    best_values: np.ndarray


def optimize_landing(state, model,
                     l_init=None, bounds=None,
                     steps: int = 500, rate: float = 1e-5) -> LandingPlan:
    """Pick cable lengths minimizing the surrogate at a collision state.

    Runs projected gradient descent ``l <- clip(l - rate * dF/dl)`` from
    ``l_init`` (the state's lengths by default) and returns the iterate with
    the lowest surrogate value.  ``state`` may be a :class:`CollisionState`
    or a bare 3-vector of collision features; ``model`` is a
    :class:`~softgrasp.surrogate.SurrogateModel` or any object exposing
    ``predict(x) -> float`` and ``input_gradient(x) -> (4,)`` over full
    input rows.
    """
    if isinstance(state, CollisionState):
        feats = state.features()
        default_init = state.lengths
    else:
        feats = np.asarray(state, dtype=float)
        if feats.shape != (3,):
            raise ConfigError("expected a CollisionState or 3 features")
        default_init = TendonLengths()
    if bounds is None:
        bounds = (default_init.lower, default_init.upper)
    lo, hi = float(bounds[0]), float(bounds[1])
    if not lo < hi:
        raise ConfigError(f"invalid length bounds ({lo}, {hi})")
    if l_init is None:
        l = default_init.lengths.copy()
    else:
        l = np.asarray(l_init, dtype=float).copy()
    if l.shape != (4,):
        raise ConfigError("l_init must be a 4-vector")
    l = np.clip(l, lo, hi)

    def value_at(lengths):
        return float(model.predict(np.concatenate([feats, lengths])))

    if hasattr(model, "input_gradient"):
        def grad_at(x):
            return np.asarray(model.input_gradient(x), dtype=float)
    else:
        def grad_at(x):
            return surrogate_input_gradient(model, x)

    best_l = l.copy()
    best_v = value_at(l)
    best_seq = [best_v]
    for _ in range(steps):
        grad = grad_at(np.concatenate([feats, l]))
        l = np.clip(l - rate * grad, lo, hi)
        v = value_at(l)
        if v < best_v:
            best_v = v
            best_l = l.copy()
        best_seq.append(best_v)
    return LandingPlan(lengths=best_l, value=best_v,
                       best_values=np.array(best_seq))
