"""Loss-only key rate vs distance for several network sizes and trust scenarios.

Writes one CSV per (scenario, N_B) into the output directory, ready for any
plotting tool.

    python3 scripts/lossonly_curves.py --out results/lossonly --workers 4
"""

import argparse
import os

import numpy as np

from mucvqkd.cli import RunConfig, run, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="results/lossonly")
    ap.add_argument("--bobs", default="1,2,4,8,16")
    ap.add_argument("--max-km", type=float, default=100.0)
    ap.add_argument("--step-km", type=float, default=5.0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    distances = tuple(float(d) for d in np.arange(0.0, args.max_km + 1e-9, args.step_km))
    for n_bobs in (int(b) for b in args.bobs.split(",")):
        for scenario in ("a", "c", "d"):
            if n_bobs == 1 and scenario != "a":
                continue
            cfg = RunConfig(
                scenario=scenario,
                n_bobs=n_bobs,
                sweep_axis="distance_km",
                sweep_values=distances,
                workers=args.workers,
            )
            rows = run(cfg)
            path = os.path.join(args.out, f"scenario_{scenario}_nb{n_bobs}.csv")
            with open(path, "w", newline="") as fh:
                write_csv(rows, fh)
            best = max(rows, key=lambda r: r.rate)
            print(f"{path}: {len(rows)} rows, peak rate {best.rate:.4g} at {best.distance_km:g} km")


if __name__ == "__main__":
    main()
