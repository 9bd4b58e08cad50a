"""Metropolis chain for the plasma at several inverse temperatures.

Runs one chain per beta, reports acceptance, the number variance in a
bulk disk with its effective sample size, and at beta = 2 the exact
Ginibre value for comparison.

Usage::

    python scripts/demo_metropolis.py --N 200 --sweeps 3000
"""

import argparse
import math
import warnings

from ocp2d.experiments import chain_variance
from ocp2d.statistics import BulkViolationWarning


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=200)
    ap.add_argument("--sweeps", type=int, default=3000)
    ap.add_argument("--radius", type=float, default=3.0, help="radius of the counting disk")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"N = {args.N}, system radius {math.sqrt(args.N / math.pi):.2f}, disk radius {args.radius}")
    for beta in (1.0, 2.0, 4.0):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BulkViolationWarning)
            cv = chain_variance(beta, args.N, [args.radius], args.sweeps, args.seed)
        c = cv.curve
        line = f"beta {beta:3.1f}: acceptance {cv.acceptance:.2f}, Var {c.variance[0]:.3f} +- {c.stderr[0]:.3f}, ESS {c.ess[0]:.0f}"
        if cv.oracle is not None:
            line += f", exact Ginibre {cv.oracle[0]:.3f}"
        print(line)
    print(f"Poisson reference: {math.pi * args.radius**2:.3f}")


if __name__ == "__main__":
    main()
