"""Angle profiles with and without the visibility constraint for several scenes.

Writes one ``<scene>.<mode>.txt`` file of (t, angle_deg) rows per run and a
summary table of the extreme angles.
"""

import argparse
from pathlib import Path

import numpy as np

from fovplan.pipeline import PipelineConfig, angle_profile, run_pipeline
from fovplan.scenes import make_scene

SCENES = ("ascent", "wall", "wall-with-opening", "building", "village")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenes", nargs="*", default=list(SCENES))
    ap.add_argument("--out", default="outputs/bands")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = ["# scene mode min_angle_deg max_angle_deg"]
    for name in args.scenes:
        sc = make_scene(name)
        for mode, vis in (("constrained", True), ("free", False)):
            res = run_pipeline(sc.grid, sc.start, sc.goal, PipelineConfig(visibility=vis))
            prof = angle_profile(res.trajectory)
            np.savetxt(out / f"{name}.{mode}.txt", prof, fmt="%.9g", header="t angle_deg")
            rows.append(f"{name} {mode} {prof[:, 1].min():.4f} {prof[:, 1].max():.4f}")
            print(rows[-1])
    (out / "summary.txt").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
