"""Numerical engine at tiny excess noise against the analytic loss-only rate.

python3 scripts/xi_convergence.py --n-bobs 1 --n-c 7
"""

import argparse
import math

from mucvqkd.cli import eta_from_distance
from mucvqkd.lossonly import TrustScenario, dw_rate
from mucvqkd.protocol import ChannelSpec, ProtocolSpec
from mucvqkd.sdpengine import CutoffSpec, NetworkSpec, keyrate_numeric


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n-bobs", type=int, default=1)
    ap.add_argument("--n-c", type=int, default=7)
    ap.add_argument("--alpha", type=float, default=0.87)
    ap.add_argument("--xi", type=float, default=1e-6)
    ap.add_argument("--distances", default="5,10,20,35,50")
    args = ap.parse_args()

    spec = ProtocolSpec.psk(args.alpha)
    print("L_km  eta       sdp_rate    analytic    rel_diff  gap       W         seconds")
    for L in (float(x) for x in args.distances.split(",")):
        eta = eta_from_distance(L)
        rep = keyrate_numeric(
            spec, ChannelSpec(eta, args.xi), NetworkSpec(args.n_bobs, args.n_bobs), CutoffSpec(args.n_c)
        )
        exact = dw_rate(TrustScenario.some_trusted(args.n_bobs), spec, eta, args.n_bobs).rate
        rel = abs(rep.rate - exact) / abs(exact) if exact else math.nan
        print(
            f"{L:<5g} {eta:<9.5f} {rep.rate:<11.6f} {exact:<11.6f} {rel:<9.2%} {rep.gap:<9.1e} "
            f"{rep.weight:<9.1e} {rep.wall_time:.1f}"
        )


if __name__ == "__main__":
    main()
