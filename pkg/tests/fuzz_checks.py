"""Randomized invariant checks shared by the fuzz tests and the acceptance run.

Every operation output must conserve mass (|total - 1| <= 1e-9) and every
upper-bound object must be a PLD realization (no -inf mass, E[e^-L] <= 1).
"""

import numpy as np

from pld_accounting.allocation import AllocationParams, rand_alloc_add, rand_alloc_k, rand_alloc_remove
from pld_accounting.composition import compose, resolve_infinities, self_compose, truncate_pld
from pld_accounting.core import (
    AdjacencyDirection,
    BoundDirection,
    TightnessParams,
    check_stoch_dom,
    discretize,
)
from pld_accounting.mechanisms import DiscretePair, discrete_pair_pld, pair_sources
from pld_accounting.subsampling import SamplingRate, subsample_add, subsample_remove

UPPER = BoundDirection.UPPER
LOWER = BoundDirection.LOWER
REMOVE = AdjacencyDirection.REMOVE
ADD = AdjacencyDirection.ADD
MASS_TOL = 1e-9


def random_pair(rng: np.random.Generator) -> DiscretePair:
    size = int(rng.integers(2, 5))
    while True:
        p, q = rng.random(size), rng.random(size)
        # occasional zeros give infinite losses in one or both directions
        p[rng.random(size) < 0.2] = 0.0
        q[rng.random(size) < 0.2] = 0.0
        if p.sum() > 0 and q.sum() > 0 and np.any((p > 0) & (q > 0)):
            return DiscretePair(p / p.sum(), q / q.sum())


def check(name: str, L, dir: BoundDirection, failures: list):
    if abs(L.total_mass() - 1.0) > MASS_TOL:
        failures.append(f"{name}: mass {L.total_mass()!r}")
    if dir is UPPER and not L.is_realization():
        failures.append(f"{name}: upper bound is not a realization")
    return L


def run_case(seed: int) -> list:
    """Runs one random scenario; returns a list of violated invariants."""
    rng = np.random.default_rng(seed)
    pair = random_pair(rng)
    lam = float(rng.uniform(0.01, 0.99))
    t = int(rng.integers(1, 7))
    k = int(rng.integers(1, t + 1))
    alpha = float(rng.choice([1e-3, 1e-2, 5e-2]))
    params = TightnessParams(alpha, 1e-10)
    rate = SamplingRate(lam)
    fails = []
    rem_src, add_src = pair_sources(pair)
    exact = {a: check(f"pair {a.value}", discrete_pair_pld(pair, a), UPPER, fails) for a in (REMOVE, ADD)}
    for d in (UPPER, LOWER):
        tag = f"[{d.value} t={t} k={k} lam={lam:.3f}]"
        disc = {a: check(f"discretize {a.value} {tag}", discretize(s, params, d), d, fails)
                for a, s in ((REMOVE, rem_src), (ADD, add_src))}
        # subsampling: exact input and discretized bounds with explicit duals
        check(f"subsample_remove exact {tag}", subsample_remove(exact[REMOVE], rate), UPPER, fails)
        flip = discretize(add_src, params, d.flip())
        check(f"subsample_remove {tag}", subsample_remove(disc[REMOVE], rate, dual=flip), d, fails)
        check(f"subsample_add {tag}", subsample_add(disc[ADD], rate), d, fails)
        # allocation
        r = check(f"rand_alloc_remove {tag}", rand_alloc_remove(rem_src, t, params, d, dual_source=add_src), d, fails)
        a = check(f"rand_alloc_add {tag}", rand_alloc_add(add_src, t, params, d), d, fails)
        rk, ak = rand_alloc_k(rem_src, add_src, AllocationParams(t, k, params), d, dual_rem=add_src)
        check(f"rand_alloc_k remove {tag}", rk, d, fails)
        check(f"rand_alloc_k add {tag}", ak, d, fails)
        # composition
        for name, L in (("remove", r), ("add", a)):
            L = check(f"resolve {name} {tag}", resolve_infinities(L, d), d, fails)
            check(f"compose {name} {tag}", compose(L, L, alpha, d), d, fails)
            check(f"self_compose {name} {tag}", self_compose(L, 3, alpha, d, trunc_beta=1e-12), d, fails)
            check(f"truncate {name} {tag}", truncate_pld(L, d, 1e-6), d, fails)
    # ordering between the bounds of the same object
    lo = rand_alloc_remove(rem_src, t, params, LOWER, dual_source=add_src)
    up = rand_alloc_remove(rem_src, t, params, UPPER, dual_source=add_src)
    if not check_stoch_dom(lo, up, alpha=0.0, beta=0.0):
        fails.append(f"lower bound not below upper bound (seed {seed})")
    return fails
