"""In-place ascent: plan, optimize and write the trajectory and its angle profile.

Usage: python scripts/spiral_ascent.py [--height 7] [--out outputs/spiral]
"""

import argparse
from pathlib import Path

import numpy as np

from fovplan.pipeline import PipelineConfig, angle_profile, run_pipeline, trajectory_stats
from fovplan.retime import write_trajectory
from fovplan.scenes import make_scene


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--height", type=float, default=7.0)
    ap.add_argument("--apex-deg", type=float, default=30.0)
    ap.add_argument("--out", default="outputs/spiral")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    sc = make_scene("ascent", height=args.height, apex_deg=args.apex_deg)
    res = run_pipeline(sc.grid, sc.start, sc.goal, PipelineConfig())
    write_trajectory(res.trajectory, out / "trajectory.txt")
    np.savetxt(out / "angles.txt", angle_profile(res.trajectory), fmt="%.9g", header="t angle_deg")
    stats = trajectory_stats(res.trajectory)
    bound = args.height / np.tan(np.radians(args.apex_deg) / 2)
    print(f"planar_length={stats['planar_length']:.3f} lower_bound={bound:.3f} "
          f"max_angle_deg={stats['max_angle_deg']:.3f} wall_time={res.total_time:.3f}")


if __name__ == "__main__":
    main()
