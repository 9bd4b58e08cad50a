"""Number variance of Ginibre eigenvalues against a Poisson process.

For a Poisson process of intensity 1 the count in a disk of radius R has
variance pi R^2. For the Ginibre ensemble (the plasma at beta = 2) the
variance grows only linearly in R. This script prints both curves, the
exact Ginibre values and the fitted exponents.

Usage::

    python scripts/demo_hyperuniformity.py --N 800 --samples 60
"""

import argparse
import math
import warnings

import numpy as np

from ocp2d.experiments import ginibre_variance, poisson_variance
from ocp2d.sampler import kostlan_count_variance
from ocp2d.statistics import BulkViolationWarning, scaling_fit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=800, help="matrix size")
    ap.add_argument("--samples", type=int, default=60, help="number of samples per ensemble")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    edge = math.sqrt(args.N / math.pi)
    radii = np.round(np.geomspace(2.0, 0.6 * edge, 4), 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BulkViolationWarning)
        gin = ginibre_variance(args.N, args.samples, args.seed, radii=radii)
    poi = poisson_variance(1.0, args.samples, args.seed, radii=radii)
    exact = kostlan_count_variance(args.N, radii)

    print(f"{'R':>6} {'Ginibre':>10} {'exact':>10} {'Poisson':>10} {'pi R^2':>10}")
    for R, g, e, p in zip(radii, gin.variance, exact, poi.variance):
        print(f"{R:6.2f} {g:10.3f} {e:10.3f} {p:10.3f} {math.pi * R * R:10.3f}")
    print(f"fitted exponent: Ginibre {scaling_fit(gin).gamma:.3f}, Poisson {scaling_fit(poi).gamma:.3f}")


if __name__ == "__main__":
    main()
