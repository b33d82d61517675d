"""Lyapunov exponent of an i.i.d. two-channel driver as the loss factor varies.

Prints both estimators (cocycle time average and stationary path average)
with their standard errors.
"""

import argparse

import numpy as np

from ergoproc.drivers import iid_driver
from ergoproc.families import amplitude_damping, depolarizing, kraus_scaled
from ergoproc.stats import lyapunov


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--replicas", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print(f"{'scale':>6} {'l_hat':>10} {'se':>9} {'time_avg':>10} {'agree':>6}")
    for s in np.linspace(0.4, 1.0, 7):
        d = iid_driver([depolarizing(0.2), kraus_scaled(float(s), amplitude_damping(0.4))])
        e = lyapunov(d, args.seed, args.n, args.replicas)
        print(f"{s:6.2f} {e.l_hat:10.6f} {e.stderr:9.2e} {e.time_average:10.6f} {str(e.agree):>6}")


if __name__ == "__main__":
    main()
