"""Contraction rate of deterministic depolarizing products against 1 - p.

Usage: python3 scripts/kappa_sweep.py [--ps 0.1 0.3 0.6 0.9]
"""

import argparse

import numpy as np

from ergoproc.drivers import deterministic_driver
from ergoproc.families import depolarizing
from ergoproc.stats import kappa


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ps", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.6, 0.8])
    args = ap.parse_args(argv)
    print(f"{'p':>5} {'kappa_hat':>10} {'1-p':>6} {'slope':>10} {'0.5 ln(1-p)':>12}")
    for p in args.ps:
        # c_n = 2 t / (1 + t^2) with t = (1-p)^n; keep c_n well above rounding
        n_hi = max(4, int(25 / -np.log(1 - p)))
        grid = np.unique(np.linspace(n_hi // 3, n_hi, 11).astype(int))
        est = kappa(deterministic_driver(depolarizing(p)), 0, grid, alpha=0.5)
        print(f"{p:5.2f} {est.kappa_hat:10.6f} {1 - p:6.3f} {est.window_slope:10.6f} {0.5 * np.log(1 - p):12.6f}")


if __name__ == "__main__":
    main()
