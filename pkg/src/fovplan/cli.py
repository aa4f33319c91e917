"""Command line entry point: scenes, planning, optimization, flights and benchmarks.

Every command writes plain delimited text.  Exit codes: 0 on success, 1
when no feasible plan or trajectory exists, 2 on bad usage or input.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from fovplan.map import (
    SceneError,
    compute_distance_field,
    load_scene,
    parse_scene_text,
    query_distances,
    scene_extras,
)
from fovplan.optimizer import OptimizerConfig, optimize
from fovplan.pipeline import PipelineConfig, angle_profile, plan_config, retime_polyline, run_pipeline, trajectory_stats
from fovplan.planner import FRONT_FACING, OMNIDIRECTIONAL, PlanningError, SensorModel, plan, read_path, write_path
from fovplan.replan import ReplanConfig
from fovplan.retime import MotionModel, insert_transition_segments, read_trajectory, time_parameterize, write_trajectory
from fovplan.scenes import PRESETS, hidden_cube, make_scene
from fovplan.sim import SimConfig, simulate

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def _pose(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) not in (3, 4):
        raise argparse.ArgumentTypeError(f"expected x,y,z[,yaw], got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric pose {text!r}") from None
    if len(vals) == 3:
        vals.append(0.0)
    return tuple(vals)


def _param(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.replace("-", "_"), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric value in {text!r}") from None


def _load(args):
    """Grid plus start/goal from ``--scene`` (a YAML file or a preset name)."""
    if not args.scene:
        raise UsageError("--scene is required")
    src = Path(args.scene)
    if src.exists():
        text = src.read_text()
        grid = load_scene(parse_scene_text(text))
        extras = scene_extras(parse_scene_text(text))
    elif args.scene in PRESETS:
        sc = make_scene(args.scene, apex_deg=args.apex_deg)
        grid, extras = sc.grid, {"start": sc.start, "goal": sc.goal}
    else:
        raise UsageError(f"scene {args.scene!r} is neither a file nor a preset")
    start = getattr(args, "start", None) or extras.get("start")
    goal = getattr(args, "goal", None) or extras.get("goal")
    return grid, start, goal


def _sensor(args) -> SensorModel:
    mode = FRONT_FACING if args.mode == "front" else OMNIDIRECTIONAL
    hfov = math.radians(args.hfov_deg) if args.hfov_deg is not None else 2 * math.pi
    return SensorModel(math.radians(args.apex_deg), hfov, mode)


def _motion(args) -> MotionModel:
    return MotionModel(v_max=args.vmax, a_max=args.amax)


def _optimizer(args, iters_default: int = 300) -> OptimizerConfig:
    iters = args.iters if args.iters is not None else iters_default
    return OptimizerConfig(max_iterations=iters, visibility=not args.no_visibility)


def _pipeline(args) -> PipelineConfig:
    return PipelineConfig(sensor=_sensor(args), motion=_motion(args), optimizer=_optimizer(args),
                          dt=args.dt, heuristic=args.heuristic, visibility=not args.no_visibility)


def _need_out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    return Path(args.out)


def _sibling(out: Path, tag: str) -> Path:
    return out.with_name(f"{out.stem}.{tag}{out.suffix or '.txt'}")


def _emit(pairs) -> None:
    print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in pairs))


# ---------------------------------------------------------------------------
# commands


def cmd_gen_scene(args) -> int:
    out = _need_out(args)
    params = dict(args.param or [])
    params.setdefault("apex_deg", args.apex_deg)
    try:
        scene = make_scene(args.preset, **params)
    except TypeError as exc:
        raise UsageError(f"bad preset parameter: {exc}") from None
    out.write_text(scene.to_yaml())
    _emit([("preset", args.preset), ("dims", "x".join(map(str, scene.grid.dims))),
           ("occupied", int(scene.grid.occupied.sum()))])
    return EXIT_OK


def cmd_plan(args) -> int:
    out = _need_out(args)
    grid, start, goal = _load(args)
    if start is None or goal is None:
        raise UsageError("start and goal are required (flags or scene file)")
    cfg = _pipeline(args)
    field = compute_distance_field(grid)
    t0 = time.perf_counter()
    path = plan(plan_config(cfg, start, goal), grid, field)
    wall = time.perf_counter() - t0
    write_path(path, out)
    _emit([("cost", float(path.cost)), ("expansions", path.expansions),
           ("waypoints", len(path)), ("wall_time", wall)])
    return EXIT_OK


def cmd_optimize(args) -> int:
    out = _need_out(args)
    grid, _, _ = _load(args)
    path = read_path(args.path)
    if len(path) == 0:
        raise UsageError("empty path")
    cfg = _pipeline(args)
    field = compute_distance_field(grid)
    t0 = time.perf_counter()
    dev = cfg.optimizer.cost_params.d_min / 2
    initial = time_parameterize(insert_transition_segments(path, dev), cfg.motion, cfg.dt)
    if len(initial) >= 3:
        res = optimize(initial, field, cfg.optimizer)
        traj = retime_polyline(res.trajectory, cfg.motion, cfg.dt)
        iters = res.iterations
    else:
        traj, iters = initial, 0
    wall = time.perf_counter() - t0
    write_trajectory(traj, out)
    prof = angle_profile(traj)
    np.savetxt(_sibling(out, "angles"), prof, fmt="%.9g", header="t angle_deg")
    stats = trajectory_stats(traj, field)
    _emit([("samples", len(traj)), ("iterations", iters), ("max_angle_deg", stats["max_angle_deg"]),
           ("max_speed", stats["max_speed"]), ("min_clearance", stats["min_clearance"]),
           ("wall_time", wall)])
    return EXIT_OK


def cmd_run(args) -> int:
    """Plan and optimize in one go."""
    out = _need_out(args)
    grid, start, goal = _load(args)
    if start is None or goal is None:
        raise UsageError("start and goal are required (flags or scene file)")
    res = run_pipeline(grid, start, goal, _pipeline(args))
    write_path(res.path, _sibling(out, "path"))
    write_trajectory(res.trajectory, out)
    np.savetxt(_sibling(out, "angles"), angle_profile(res.trajectory), fmt="%.9g", header="t angle_deg")
    stats = trajectory_stats(res.trajectory, compute_distance_field(grid))
    _emit([("cost", float(res.path.cost)), ("expansions", res.path.expansions),
           ("max_angle_deg", stats["max_angle_deg"]), ("planar_length", stats["planar_length"]),
           ("max_speed", stats["max_speed"]), ("min_clearance", stats["min_clearance"]),
           ("wall_time", res.total_time)])
    return EXIT_OK


def cmd_fly(args) -> int:
    out = _need_out(args)
    grid, _, _ = _load(args)
    traj = read_trajectory(args.trajectory)
    log = simulate(traj, grid, grid, config=SimConfig(a_max=args.amax, sensor=_sensor(args)))
    log.write(out)
    s = log.summary()
    _emit([("ate_mean", s["ate_mean"]), ("ate_rmse", s["ate_rmse"]), ("v_max", s["v_max"]),
           ("collision", int(log.collision)), ("min_clearance", s["min_clearance"])])
    return EXIT_INFEASIBLE if log.collision else EXIT_OK


def replan_trial(seed: int, trial: int, scene_name: str, apex_deg: float, iters: int,
                 vmax: float, amax: float, dt: float, sensor_range: float = 15.0) -> dict:
    """One hidden-cube flight; the cube is drawn from the (seed, trial) stream."""
    scene = make_scene(scene_name, apex_deg=apex_deg)
    motion = MotionModel(v_max=vmax, a_max=amax)
    sensor = SensorModel(math.radians(apex_deg))
    base = run_pipeline(scene.grid, scene.start, scene.goal,
                        PipelineConfig(sensor=sensor, motion=motion, dt=dt))
    rng = np.random.default_rng([seed, trial])
    box = hidden_cube(rng, scene.start, scene.goal)
    truth = scene.grid.with_boxes([box])
    rcfg = ReplanConfig(optimizer=OptimizerConfig(max_iterations=iters), sensor=sensor, motion=motion)
    log = simulate(base.trajectory, truth, scene.grid, sensor_range,
                   SimConfig(a_max=amax, sensor=sensor, sensor_range=sensor_range, replan=rcfg))
    first = log.revelation_times[0] if log.revelation_times else math.inf
    guard = first + rcfg.initial_cycle_estimate
    after = log.times >= guard
    cmd_clear = float(log.command_clearance[after].min()) if after.any() else math.inf
    merged_clear = math.inf
    truth_field = compute_distance_field(truth)
    for t_pub, traj in zip(log.publish_times, log.published):
        if t_pub < guard:
            continue
        k0 = int(round(t_pub / dt))
        d, _ = query_distances(truth_field, traj.positions[k0:])
        if len(d):
            merged_clear = min(merged_clear, float(d.min()))
    s = log.summary()
    return {
        "trial": trial,
        "cube_x": 0.5 * (box[0][0] + box[1][0]),
        "cube_y": 0.5 * (box[0][1] + box[1][1]),
        "cube_z": 0.5 * (box[0][2] + box[1][2]),
        "collision": int(log.collision),
        "first_revelation": first,
        "min_clearance": s["min_clearance"],
        "command_clearance": cmd_clear,
        "merged_clearance": merged_clear,
        "cycles": len(log.cycles),
        "escalations": sum(c.escalated for c in log.cycles),
        "max_cycle_time": s["max_cycle_time"],
        "mean_cycle_time": float(np.mean([c.wall_time for c in log.cycles])) if log.cycles else 0.0,
        "ate_rmse": s["ate_rmse"],
        "reached_goal": int(np.linalg.norm(log.actual[-1, :3] - scene.goal[:3]) < 1.0),
    }


TRIAL_COLUMNS = ("trial", "cube_x", "cube_y", "cube_z", "collision", "first_revelation", "min_clearance",
                 "command_clearance", "merged_clearance", "cycles", "escalations", "max_cycle_time",
                 "mean_cycle_time", "ate_rmse", "reached_goal")


def format_trials(rows) -> str:
    lines = ["# " + " ".join(TRIAL_COLUMNS)]
    for r in rows:
        lines.append(" ".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in TRIAL_COLUMNS))
    return "\n".join(lines) + "\n"


def cmd_replan_sim(args) -> int:
    out = _need_out(args)
    name = args.scene or "corridor"
    if name not in PRESETS:
        raise UsageError("replan-sim takes a preset scene name")
    iters = args.iters if args.iters is not None else 10
    jobs = max(1, args.jobs or 1)
    call = [(args.seed, i, name, args.apex_deg, iters, args.vmax, args.amax, args.dt)
            for i in range(args.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(replan_trial, *zip(*call)))
    else:
        rows = [replan_trial(*c) for c in call]
    Path(out).write_text(format_trials(rows))
    _emit([("trials", len(rows)), ("collisions", sum(r["collision"] for r in rows)),
           ("min_command_clearance", min(r["command_clearance"] for r in rows)),
           ("max_cycle_time", max(r["max_cycle_time"] for r in rows))])
    return EXIT_OK


def cmd_bench_heuristic(args) -> int:
    out = _need_out(args)
    names = [args.scene] if args.scene else ["ascent", "wall", "wall-with-opening", "building", "village"]
    lines = ["# scene expansions_fov expansions_euclidean ratio cost_fov cost_euclidean"]
    for name in names:
        args.scene = name
        grid, start, goal = _load(args)
        field = compute_distance_field(grid)
        res = {}
        for h in ("fov", "euclidean"):
            cfg = replace(_pipeline(args), heuristic=h, visibility=True)
            res[h] = plan(plan_config(cfg, start, goal), grid, field)
        ratio = res["fov"].expansions / max(res["euclidean"].expansions, 1)
        lines.append(f"{name} {res['fov'].expansions} {res['euclidean'].expansions} {ratio:.6f} "
                     f"{res['fov'].cost:.12g} {res['euclidean'].cost:.12g}")
        print(lines[-1])
    Path(out).write_text("\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scene", help="scene YAML file or preset name")
    common.add_argument("--start", type=_pose, help="x,y,z,yaw")
    common.add_argument("--goal", type=_pose, help="x,y,z,yaw")
    common.add_argument("--apex-deg", type=float, default=30.0)
    common.add_argument("--hfov-deg", type=float, default=None)
    common.add_argument("--mode", choices=("omni", "front"), default="omni")
    common.add_argument("--heuristic", choices=("fov", "euclidean"), default="fov")
    common.add_argument("--no-visibility", action="store_true")
    common.add_argument("--vmax", type=float, default=3.0)
    common.add_argument("--amax", type=float, default=2.0)
    common.add_argument("--dt", type=float, default=0.1)
    common.add_argument("--iters", type=int, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=20)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out")

    parser = argparse.ArgumentParser(prog="fovplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", parents=[common], help="write a preset scene")
    p.add_argument("preset", choices=sorted(PRESETS))
    p.add_argument("--param", type=_param, action="append", help="preset parameter key=value")
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("plan", parents=[common], help="lattice plan to a path file")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("optimize", parents=[common], help="retime and optimize a path file")
    p.add_argument("path")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run", parents=[common], help="plan and optimize")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fly", parents=[common], help="fly a trajectory with the PD follower")
    p.add_argument("trajectory")
    p.set_defaults(func=cmd_fly)

    p = sub.add_parser("replan-sim", parents=[common], help="hidden-cube replanning trials")
    p.set_defaults(func=cmd_replan_sim)

    p = sub.add_parser("bench-heuristic", parents=[common], help="expansions with both heuristics")
    p.set_defaults(func=cmd_bench_heuristic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        if args.dt <= 0 or args.vmax <= 0 or args.amax <= 0:
            raise UsageError("--dt, --vmax and --amax must be positive")
        if args.iters is not None and args.iters < 1:
            raise UsageError("--iters must be at least 1")
        if args.trials < 0:
            raise UsageError("--trials must be nonnegative")
        return args.func(args)
    except PlanningError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, SceneError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
