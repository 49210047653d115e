"""Gaussian mechanism: one-out-of-t random allocation against Poisson subsampling at rate 1/t.

Prints epsilon at delta = 1e-6 for both schemes (upper and lower bounds), and
then scans epsilon at t = 2 to show that neither privacy profile dominates
the other.
"""

import numpy as np

from pld_accounting.core import AdjacencyDirection, BoundDirection, TightnessParams, hockey_stick_delta
from pld_accounting.pipeline import allocation_bounds, compare_poisson, poisson_bounds

params = TightnessParams(1e-2, 1e-10)
for sigma in (0.8, 1.5, 3.0):
    r = compare_poisson(sigma, 100, 1, params, 1e-6)
    print(f"sigma={sigma}: allocation [{r['epsilon_alloc_lower']:.4f}, {r['epsilon_alloc_upper']:.4f}]  "
          f"poisson [{r['epsilon_poisson_lower']:.4f}, {r['epsilon_poisson_upper']:.4f}]")

fine = TightnessParams(1e-3, 1e-10)
alloc, pois = allocation_bounds(1.0, 2, 1, fine), poisson_bounds(1.0, 2, 1, fine)
dirs = (AdjacencyDirection.REMOVE, AdjacencyDirection.ADD)


def profile(plds, b, eps):
    return max(hockey_stick_delta(plds[(a, b)], eps) for a in dirs)


print("\nt=2, sigma=1: delta(eps)")
for eps in np.arange(0.0, 2.51, 0.5):
    a = profile(alloc, BoundDirection.UPPER, eps)
    p = profile(pois, BoundDirection.UPPER, eps)
    print(f"  eps={eps:.1f}  allocation {a:.5f}  poisson {p:.5f}  {'allocation' if a < p else 'poisson'} smaller")
