"""Random allocation of randomized response, bounds against the exact PLD.

For a small alphabet the allocation PLD can be enumerated outright, so the
upper and lower bounds can be seen bracketing the truth as t grows.
"""

from pld_accounting import oracle
from pld_accounting.allocation import rand_alloc_remove
from pld_accounting.core import AdjacencyDirection, BoundDirection, TightnessParams, epsilon_for_delta
from pld_accounting.mechanisms import pair_sources, randomized_response

pair = randomized_response(0.75)
rem, add = pair_sources(pair)
params = TightnessParams(1e-3, 1e-12)
delta = 1e-3

print(f"{'t':>3} {'eps_lower':>10} {'eps_exact':>10} {'eps_upper':>10}")
for t in (2, 3, 4, 5):
    exact = oracle.brute_force_alloc_pld(pair, t, AdjacencyDirection.REMOVE)
    up = rand_alloc_remove(rem, t, params, BoundDirection.UPPER, dual_source=add)
    lo = rand_alloc_remove(rem, t, params, BoundDirection.LOWER, dual_source=add)
    row = [epsilon_for_delta(L, delta) for L in (lo, exact, up)]
    print(f"{t:>3} " + " ".join(f"{e:10.5f}" for e in row))
