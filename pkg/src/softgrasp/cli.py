"""Command-line entry point: subcommand dispatch and artifact emission.

Artifacts are CSV/JSON files written into ``--out`` with fixed names, so
the landing pipeline chains through a shared directory::

    softgrasp land-sample --out runs/a
    softgrasp land-train --out runs/a
    softgrasp land-optimize --out runs/a

Every subcommand is deterministic given (config, seed): identical inputs
produce byte-identical artifacts.  ``SOFTGRASP_LOG`` selects the logging
level (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from softgrasp.config import Config, parse_config, serialize_config
from softgrasp.control import DisturbanceEstimate, tracking_errors
from softgrasp.errors import SoftgraspError
from softgrasp.gripperopt import (GraspSchedule, GripperObjective,
                                  interpolate_lengths, optimize_lengths)
from softgrasp.harness import run_ablation, run_grasp_episode, grasp_success
from softgrasp.landing import (CollisionState, load_dataset, optimize_landing,
                               sample_dataset, save_dataset)
from softgrasp.minsnap import (build_grasp_waypoints, sample_trajectory,
                               solve_minsnap)
from softgrasp.rigid import (ControlWrench, ExternalDisturbance,
                             QuadrotorState, RigidParams, so3_defect,
                             step_quadrotor)
from softgrasp.softbody.fem import forces, total_energy
from softgrasp.softbody.mesh import TendonLengths, build_default_gripper
from softgrasp.softbody.quasistatic import solve_quasistatic
from softgrasp.surrogate import (load_surrogate, save_surrogate,
                                 train_surrogate)

__all__ = ["main"]

log = logging.getLogger("softgrasp")

#: Artifact names, one writer each, keyed by the subcommand that owns them.
TRAJECTORY_CSV = "trajectory.csv"
SCHEDULE_JSON = "schedule.json"
EPISODE_CSV = "episode.csv"
OUTCOME_JSON = "outcome.json"
ABLATION_CSV = "ablation.csv"
DATASET_CSV = "landing_dataset.csv"
SURROGATE_TXT = "surrogate.txt"
TRAINING_JSON = "training_report.json"
PLAN_JSON = "landing_plan.json"

ABLATION_COLUMNS = (
    "velocity", "geometric_steady_z", "geometric_steady", "adaptive_steady",
    "adaptive_converged_5s", "adaptive_peak_after_convergence",
    "both_grasped",
)


def _setup_logging() -> None:
    name = os.environ.get("SOFTGRASP_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _mm(lengths) -> str:
    return "{" + ", ".join(f"{v * 1e3:.0f}" for v in np.asarray(lengths)) \
        + "} mm"


def _schedule_from(config: Config) -> GraspSchedule:
    sc = config.scenario
    rest = TendonLengths().lengths
    return GraspSchedule(
        keyframes=[(0.0, rest), (sc.t_a, config.schedule.opened),
                   (sc.t_g, config.schedule.closed)],
        t_a=sc.t_a, t_g=sc.t_g, t_f=sc.t_f)


def cmd_plan(config: Config, out: Path, args) -> int:
    sc = config.scenario
    waypoints = build_grasp_waypoints(
        sc.start, sc.target_centroid, sc.finger_length, sc.final,
        sc.t_g, sc.t_f, sc.grasp_speed)
    traj = solve_minsnap(waypoints)
    n = int(round(traj.duration / sc.control_dt))
    with open(out / TRAJECTORY_CSV, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t", "p_x", "p_y", "p_z", "v_x", "v_y", "v_z",
                         "a_x", "a_y", "a_z"))
        for k in range(n + 1):
            t = k * sc.control_dt
            des, _ = sample_trajectory(traj, t)
            row = [t, *des.position, *des.velocity, *des.acceleration]
            writer.writerow([repr(float(v)) for v in row])
    log.info("planned %.1f s trajectory over %d rows", traj.duration, n + 1)
    return 0


def cmd_optimize_grip(config: Config, out: Path, args) -> int:
    mesh = build_default_gripper(material=config.scenario.material)
    grip = config.grip
    target = grip.target_offset
    opened = optimize_lengths(
        mesh, GripperObjective.approach(mesh, target), TendonLengths(),
        rate=grip.rate_approach, max_iters=grip.max_iters)
    closed = optimize_lengths(
        mesh, GripperObjective.grasp(mesh, target), TendonLengths(),
        rate=grip.rate_grasp, max_iters=grip.max_iters)
    payload = {
        "schema_version": 1,
        "schedule": {
            "opened": [float(v) for v in opened.lengths.lengths],
            "closed": [float(v) for v in closed.lengths.lengths],
        },
        "approach_objective": float(opened.objective),
        "grasp_objective": float(closed.objective),
    }
    _write_json(out / SCHEDULE_JSON, payload)
    log.info("approach lengths %s, grasp lengths %s",
             _mm(opened.lengths.lengths), _mm(closed.lengths.lengths))
    return 0


def cmd_grasp(config: Config, out: Path, args) -> int:
    episode = run_grasp_episode(config.scenario, _schedule_from(config))
    episode.to_csv(out / EPISODE_CSV)
    outcome = grasp_success(episode)
    _write_json(out / OUTCOME_JSON, {
        "success": outcome.success,
        "reason": outcome.reason,
        "final_error": outcome.final_error,
        "attach_time": episode.attach_time,
        "diverged": episode.diverged,
        "divergence_time": episode.divergence_time,
        "coupling_failures": episode.coupling_failures,
        "peak_position_error": episode.peak_e_p,
        "steady_error": episode.steady_error(),
        "steady_error_z": episode.steady_error_z(),
    })
    log.info("episode: success=%s reason=%r steady error %.4f m",
             outcome.success, outcome.reason, outcome.final_error)
    return 0


def cmd_ablate(config: Config, out: Path, args) -> int:
    rows = run_ablation(config.scenario)
    with open(out / ABLATION_CSV, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow([
                repr(float(row.velocity)),
                repr(float(row.geometric_steady_z)),
                repr(float(row.geometric_steady)),
                repr(float(row.adaptive_steady)),
                int(row.adaptive_converged_5s),
                repr(float(row.adaptive_peak_after_convergence)),
                int(row.both_grasped),
            ])
    log.info("swept %d velocities", len(rows))
    return 0


def cmd_land_sample(config: Config, out: Path, args) -> int:
    sampling = config.landing
    seed = sampling.seed if args.seed is None else args.seed
    mesh = build_default_gripper(material=config.scenario.material)
    dataset = sample_dataset(
        mesh, sampling.n_samples, seed=seed, threads=args.threads,
        dt=sampling.dt, speed_range=tuple(sampling.speed_range),
        tilt_range=tuple(sampling.tilt_range),
        lateral_range=tuple(sampling.lateral_range),
        solve_iters=sampling.solve_iters)
    save_dataset(dataset, out / DATASET_CSV)
    log.info("sampled %d episodes: %d rows, %d failures",
             sampling.n_samples, len(dataset), dataset.failures)
    return 0


def cmd_land_train(config: Config, out: Path, args) -> int:
    dataset = load_dataset(out / DATASET_CSV)
    training = config.surrogate
    seeds = training.train_seeds
    if args.seed is not None:
        seeds = tuple(args.seed + k for k in range(len(seeds)))
    candidates = [
        train_surrogate(dataset.features, dataset.metrics, seed=s,
                        hidden=training.hidden, epochs=training.epochs,
                        batch_size=training.batch_size,
                        learning_rate=training.learning_rate,
                        holdout_fraction=training.holdout_fraction,
                        activation=training.activation)
        for s in seeds
    ]
    best = min(range(len(seeds)),
               key=lambda k: candidates[k].report.holdout_rmse)
    model = candidates[best]
    save_surrogate(model, out / SURROGATE_TXT)
    _write_json(out / TRAINING_JSON, {
        "chosen_seed": seeds[best],
        "candidates": [
            {"seed": seeds[k],
             "holdout_rmse": candidates[k].report.holdout_rmse}
            for k in range(len(seeds))
        ],
        "holdout_rmse": model.report.holdout_rmse,
        "relative_rmse": model.report.relative_rmse,
        "n_train": model.report.n_train,
        "n_holdout": model.report.n_holdout,
        "epochs": model.report.epochs,
    })
    log.info("trained %d candidates; holdout RMSE %.2f (seed %d)",
             len(seeds), model.report.holdout_rmse, seeds[best])
    return 0


def cmd_land_optimize(config: Config, out: Path, args) -> int:
    model = load_surrogate(out / SURROGATE_TXT)
    collision = config.collision
    state = CollisionState(
        vertical_speed=collision.vertical_speed,
        lateral_speed=collision.lateral_speed,
        tilt=collision.tilt, lengths=collision.lengths)
    search = config.search
    l_init = None
    dataset_path = out / DATASET_CSV
    if search.warm_start and dataset_path.exists():
        dataset = load_dataset(dataset_path)
        rows = np.tile(state.row(), (len(dataset), 1))
        rows[:, 3:] = dataset.features[:, 3:]
        l_init = dataset.features[int(np.argmin(model.predict(rows))),
                                  3:].copy()
    plan = optimize_landing(state, model, l_init=l_init,
                            bounds=(search.lower, search.upper),
                            steps=search.steps, rate=search.rate)
    _write_json(out / PLAN_JSON, {
        "lengths": [float(v) for v in plan.lengths],
        "surrogate_value": plan.value,
        "initial_value": float(plan.best_values[0]),
        "collision": {
            "vertical_speed": collision.vertical_speed,
            "lateral_speed": collision.lateral_speed,
            "tilt": collision.tilt,
            "lengths": [float(v) for v in state.lengths.lengths],
        },
    })
    log.info("landing lengths %s, predicted metric %.1f",
             _mm(plan.lengths), plan.value)
    return 0


def _selftest_checks(config: Config):
    mesh = build_default_gripper()
    rest = TendonLengths()

    def rest_solve():
        rest_routes = mesh.rest_group_lengths()
        res = solve_quasistatic(mesh, rest_routes)
        assert res.iterations <= 1, f"{res.iterations} iterations"
        residual = np.abs(forces(mesh, res.positions, rest_routes)).max()
        assert residual < 1e-6, f"force residual {residual:.2e}"

    def force_gradient():
        rng = np.random.default_rng(0)
        q = mesh.rest_positions + 0.002 * rng.standard_normal(
            mesh.rest_positions.shape)
        analytic = forces(mesh, q, rest)
        h = 1e-6
        for _ in range(12):
            i = int(rng.integers(mesh.rest_positions.shape[0]))
            j = int(rng.integers(3))
            qp, qm = q.copy(), q.copy()
            qp[i, j] += h
            qm[i, j] -= h
            fd = -(total_energy(mesh, qp, rest)
                   - total_energy(mesh, qm, rest)) / (2 * h)
            scale = max(abs(fd), 1.0)
            assert abs(analytic[i, j] - fd) / scale < 1e-4, \
                f"node {i} axis {j}: {analytic[i, j]} vs {fd}"

    def trajectory_constraints():
        sc = config.scenario
        wps = build_grasp_waypoints(
            sc.start, sc.target_centroid, sc.finger_length, sc.final,
            sc.t_g, sc.t_f, sc.grasp_speed)
        traj = solve_minsnap(wps)
        for wp in wps:
            des, _ = sample_trajectory(traj, wp.t)
            err = np.abs(des.position - wp.position).max()
            assert err < 1e-8, f"waypoint at t={wp.t}: {err:.2e}"

    def rigid_energy():
        params = RigidParams(drag_coeff=0.0)
        state = QuadrotorState.rest((0.0, 0.0, 5.0))
        state.velocity = np.array([0.4, -0.3, 0.2])
        state.omega = np.array([1.0, -2.0, 1.5])
        g = float(np.linalg.norm(params.gravity))

        def energy(s):
            return (0.5 * params.mass * s.velocity @ s.velocity
                    + 0.5 * s.omega @ params.inertia @ s.omega
                    + params.mass * g * s.position[2])

        e0 = energy(state)
        u = ControlWrench.zero()
        d = ExternalDisturbance()
        for _ in range(2500):
            state = step_quadrotor(state, params, u, d, 1e-4)
        drift = abs(energy(state) - e0) / abs(e0)
        assert drift < 1e-3, f"energy drift {drift:.2e}"
        defect = so3_defect(state.rotation)
        assert defect < 1e-9, f"SO(3) defect {defect:.2e}"

    def surrogate_round_trip(tmp=Path("/tmp")):
        rng = np.random.default_rng(1)
        x = rng.uniform(0.1, 0.3, size=(80, 7))
        y = (x[:, 3:] ** 2).sum(axis=1)
        model = train_surrogate(x, y, seed=0, epochs=40)
        path = tmp / "softgrasp_selftest_model.txt"
        save_surrogate(model, path)
        clone = load_surrogate(path)
        probe = x[:5]
        assert np.array_equal(model.predict(probe), clone.predict(probe)), \
            "reloaded model predicts differently"
        path.unlink()

    def schedule_keyframes():
        schedule = _schedule_from(config)
        for t, lengths in schedule.keyframes:
            hit = interpolate_lengths(schedule, t)
            assert np.array_equal(hit.lengths, lengths), f"keyframe at t={t}"
        held = interpolate_lengths(schedule, schedule.t_f + 99.0)
        assert np.array_equal(held.lengths, schedule.keyframes[-1][1]), \
            "post-grasp hold"

    def controller_equilibrium():
        sc = config.scenario
        state = QuadrotorState.rest(sc.start)
        from softgrasp.control import DesiredState, control_wrench
        des = DesiredState.hover(sc.start)
        err = tracking_errors(state, des)
        u = control_wrench(err, state, des, sc.gains, DisturbanceEstimate(),
                           sc.rigid)
        weight = sc.rigid.mass * float(np.linalg.norm(sc.rigid.gravity))
        assert abs(u.thrust - weight) < 1e-9, f"hover thrust {u.thrust}"
        assert np.abs(u.torque).max() < 1e-9, "hover torque"

    return [
        ("rest equilibrium solve", rest_solve),
        ("soft-body force gradient", force_gradient),
        ("trajectory waypoint constraints", trajectory_constraints),
        ("rigid-body energy and orthogonality", rigid_energy),
        ("surrogate save/load round trip", surrogate_round_trip),
        ("tendon schedule keyframes", schedule_keyframes),
        ("hover control equilibrium", controller_equilibrium),
    ]


def cmd_selftest(config: Config, out: Path, args) -> int:
    failures = 0
    for name, check in _selftest_checks(config):
        try:
            check()
        except AssertionError as exc:
            failures += 1
            print(f"FAIL - {name}: {exc}")
        except SoftgraspError as exc:
            failures += 1
            print(f"FAIL - {name}: {type(exc).__name__}: {exc}")
        else:
            print(f"ok - {name}")
    if failures:
        print(f"{failures} check(s) failed")
        return 1
    print("all checks passed")
    return 0


_DISPATCH = {
    "plan": cmd_plan,
    "optimize-grip": cmd_optimize_grip,
    "grasp": cmd_grasp,
    "ablate-controller": cmd_ablate,
    "land-sample": cmd_land_sample,
    "land-train": cmd_land_train,
    "land-optimize": cmd_land_optimize,
    "selftest": cmd_selftest,
}

_HELP = {
    "plan": "solve the grasp trajectory and emit trajectory.csv",
    "optimize-grip": "solve approach/grasp tendon lengths into "
                     "schedule.json",
    "grasp": "run one grasp episode into episode.csv + outcome.json",
    "ablate-controller": "sweep grasp velocities for both controllers "
                         "into ablation.csv",
    "land-sample": "sample landing episodes into landing_dataset.csv",
    "land-train": "train the impact-force surrogate from "
                  "landing_dataset.csv",
    "land-optimize": "descend the trained surrogate into "
                     "landing_plan.json",
    "selftest": "run the built-in invariant checks",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softgrasp",
        description="Soft tendon-driven gripper on a quadrotor: planning, "
                    "control, grasp optimization, and landing search.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="JSON config file (defaults apply if omitted)")
    common.add_argument("--out", metavar="DIR", default=".",
                        help="artifact directory (default: current)")
    common.add_argument("--seed", metavar="N", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--threads", metavar="N", type=int, default=1,
                        help="worker threads for sampling (default: 1)")
    subparsers = parser.add_subparsers(dest="command", required=True,
                                       metavar="subcommand")
    for name in _DISPATCH:
        subparsers.add_parser(name, parents=[common], help=_HELP[name])
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    try:
        config = parse_config(args.config) if args.config else Config()
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _DISPATCH[args.command](config, out, args)
    except SoftgraspError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
