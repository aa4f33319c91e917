"""Seeded hidden-cube replanning trials on the corridor scene.

Each trial hides a 4 m cube near the start-goal line, flies the nominal
trajectory with a 15 m sensor and reoptimizes whenever the map grows.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from fovplan.cli import format_trials, replan_trial


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="outputs/replan.txt")
    args = ap.parse_args()

    call = [(args.seed, i, "corridor", 30.0, args.iters, 3.0, 2.0, 0.1) for i in range(args.trials)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(replan_trial, *zip(*call)))
    else:
        rows = [replan_trial(*c) for c in call]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(format_trials(rows))
    clear = min(min(r["command_clearance"], r["merged_clearance"]) for r in rows)
    print(f"trials={len(rows)} collisions={sum(r['collision'] for r in rows)} "
          f"min_clearance={clear:.3f} max_cycle_time={max(r['max_cycle_time'] for r in rows):.3f}")


if __name__ == "__main__":
    main()
