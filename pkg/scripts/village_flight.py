"""Plan, optimize and fly the village scene with the PD follower; report tracking error."""

import argparse
from pathlib import Path

import numpy as np

from fovplan.pipeline import PipelineConfig, angle_profile, run_pipeline
from fovplan.retime import MotionModel, write_trajectory
from fovplan.scenes import make_scene
from fovplan.sim import SimConfig, simulate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--vmax", type=float, default=3.0)
    ap.add_argument("--amax", type=float, default=2.0)
    ap.add_argument("--out", default="outputs/village")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    sc = make_scene("village")
    cfg = PipelineConfig(motion=MotionModel(v_max=args.vmax, a_max=args.amax))
    res = run_pipeline(sc.grid, sc.start, sc.goal, cfg)
    write_trajectory(res.trajectory, out / "trajectory.txt")
    np.savetxt(out / "angles.txt", angle_profile(res.trajectory), fmt="%.9g", header="t angle_deg")
    log = simulate(res.trajectory, sc.grid, sc.grid, config=SimConfig(a_max=args.amax))
    log.write(out / "flight.txt")
    s = log.summary()
    print(" ".join(f"{k}={v:.4g}" for k, v in s.items()))


if __name__ == "__main__":
    main()
