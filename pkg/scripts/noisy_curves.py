"""Numerical (SDP) key rates with excess noise for small star networks.

For each configuration and xi, sweeps distance with the numerical engine at
the reduced cutoff. Two-Bob points take tens of seconds each, so use
``--workers``.

    python3 scripts/noisy_curves.py --out results/noisy --workers 4
"""

import argparse
import os

from mucvqkd.cli import RunConfig, run, write_csv

CONFIGS = {
    "1of1": dict(scenario="a", n_bobs=1),
    "2of2": dict(scenario="c", n_bobs=2),
    "2of5": dict(scenario="b", n_bobs=5, m_trusted=2),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="results/noisy")
    ap.add_argument("--configs", default=",".join(CONFIGS))
    ap.add_argument("--xi", default="0,0.01")
    ap.add_argument("--distances", default="5,20,50")
    ap.add_argument("--alpha-span", type=int, default=0, help="extra amplitude grid steps around the loss-only optimum")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    distances = tuple(float(d) for d in args.distances.split(","))
    for name in args.configs.split(","):
        for xi in (float(x) for x in args.xi.split(",")):
            cfg = RunConfig(
                engine="sdp",
                xi=xi,
                alpha_span=args.alpha_span,
                sweep_axis="distance_km",
                sweep_values=distances,
                workers=args.workers,
                **CONFIGS[name],
            )
            rows = run(cfg)
            path = os.path.join(args.out, f"{name}_xi{xi:g}.csv")
            with open(path, "w", newline="") as fh:
                write_csv(rows, fh)
            for r in rows:
                print(f"{name} xi={xi:g} L={r.distance_km:g} km: rate {r.rate:+.5f} gap {r.gap:.1e} [{r.status}]")


if __name__ == "__main__":
    main()
