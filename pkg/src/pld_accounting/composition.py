"""Composition of PLD bounds on an additive grid.

The loss of a composition is the sum of the losses. Finite sums are snapped
to an arithmetic grid anchored at the smallest possible sum, rounding right
for upper bounds and left for lower bounds. Inputs that already sit on a
common lattice are convolved exactly; an upper bound composed with another
upper bound shifted by at most alpha stays (alpha, 0)-tight.
"""

import math
from typing import Optional, Tuple

import numpy as np
from scipy import signal

from pld_accounting.core import (
    FLOAT_GUARD,
    BoundDirection,
    DiscretePLD,
    IndeterminateSum,
    compensated_sum,
    merge_sorted_atoms,
)

# values within this fraction of a step from a lattice point count as on it
LATTICE_TOL = 1e-6
SNAP_TOL = 1e-9
# pairwise evaluation budget (number of atom pairs)
PAIR_LIMIT = 4_000_000
PAIR_CHUNK = 2_000_000


def lattice_index(values: np.ndarray, step: float) -> Optional[Tuple[np.ndarray, float, float]]:
    """(indices, min deviation, max deviation) of values on values[0] + step * k.

    Deviations are in units of step. Returns None when some value is further
    than LATTICE_TOL from the lattice.
    """
    if values.size == 0:
        return np.zeros(0, dtype=np.int64), 0.0, 0.0
    u = (values - values[0]) / step
    idx = np.rint(u)
    dev = u - idx
    if np.max(np.abs(dev)) > LATTICE_TOL:
        return None
    return idx.astype(np.int64), float(dev.min()), float(dev.max())


def lattice_step(values: np.ndarray) -> Optional[float]:
    """The smallest gap of values if all values lie on a lattice with that step."""
    if values.size < 2:
        return None
    step = float(np.min(np.diff(values)))
    return step if lattice_index(values, step) is not None else None


def _snap(values: np.ndarray, anchor: float, step: float, upper: bool) -> np.ndarray:
    """Grid indices of values rounded right (upper) or left (lower) onto anchor + step * k."""
    u = (values - anchor) / step
    # values already on the grid stay put; the fix-up below restores safety
    k = np.ceil(u - SNAP_TOL) if upper else np.floor(u + SNAP_TOL)
    # float fix-up: the represented point must lie on the correct side
    if upper:
        k += anchor + k * step < values
    else:
        k -= anchor + k * step > values
    return k.astype(np.int64)


def regrid(L: DiscretePLD, step: float, dir: BoundDirection) -> DiscretePLD:
    """Rounds the finite atoms of L onto values[0] + step * k, outward in dir."""
    if step <= 0:
        raise ValueError(f"grid step must be positive, got {step}")
    A = L.compact()
    if A.values.size == 0:
        return A
    anchor = float(A.values[0])
    k = _snap(A.values, anchor, step, dir is BoundDirection.UPPER)
    k, probs = merge_sorted_atoms(k, A.probs)
    # the fix-up in _snap already keeps every float value on the safe side
    values = anchor + k * step
    return DiscretePLD(values, probs, A.p_bottom, A.p_top)


def truncate_pld(L: DiscretePLD, dir: BoundDirection, beta: float) -> DiscretePLD:
    """Clamps the beta tails of L without moving mass against dir.

    upper: finite mass below q(beta) is clamped up onto q(beta) and mass above
    q(1 - beta) goes to +inf. lower: mass below q(beta) goes to -inf and mass
    above q(1 - beta) is clamped down onto it. A tail whose infinite atom
    would sit opposite an existing one is left alone, so later sums never
    meet +inf with -inf.
    """
    if beta <= 0 or L.values.size < 2:
        return L
    probs = np.array(L.probs)
    n = probs.size
    upper = dir is BoundDirection.UPPER
    below = L.p_bottom + np.cumsum(probs)
    lo = min(int(np.searchsorted(below, beta, side="left")), n - 1)
    if not upper and L.p_top > 0:
        lo = 0
    tail = np.append(np.cumsum(probs[::-1])[::-1][1:], 0.0) + L.p_top
    ok = np.flatnonzero(tail <= beta)
    hi = max(int(ok[0]), lo) if ok.size else n - 1
    if upper and L.p_bottom > 0:
        hi = n - 1
    p_bottom, p_top = L.p_bottom, L.p_top
    if dir is BoundDirection.UPPER:
        probs[lo] += probs[:lo].sum()
        p_top += probs[hi + 1:].sum()
    else:
        p_bottom += probs[:lo].sum()
        probs[hi] += probs[hi + 1:].sum()
    probs[:lo] = 0.0
    probs[hi + 1:] = 0.0
    return DiscretePLD(L.values, probs, p_bottom, p_top).compact()


def _shift_guard(values: np.ndarray, dir: BoundDirection) -> np.ndarray:
    """Uniform outward shift covering float rounding of the sums; keeps lattices intact."""
    nudge = FLOAT_GUARD * max(1.0, float(np.max(np.abs(values))))
    return values + nudge if dir is BoundDirection.UPPER else values - nudge


def resolve_infinities(L: DiscretePLD, dir: BoundDirection) -> DiscretePLD:
    """Removes the infinite atom that could meet the opposite one in a sum.

    An upper bound may move its -inf mass up onto the smallest finite value
    (or +inf); a lower bound may move its +inf mass down onto the largest.
    """
    if L.p_top == 0 or L.p_bottom == 0:
        return L
    if dir is BoundDirection.UPPER:
        if L.values.size == 0:
            return DiscretePLD([], [], 0.0, 1.0)
        probs = np.array(L.probs)
        probs[0] += L.p_bottom
        return DiscretePLD(L.values, probs, 0.0, L.p_top)
    if L.values.size == 0:
        return DiscretePLD([], [], 1.0, 0.0)
    probs = np.array(L.probs)
    probs[-1] += L.p_top
    return DiscretePLD(L.values, probs, L.p_bottom, 0.0)


def compose_calls(k: int) -> int:
    """Number of compose calls (and truncations) self_compose makes for k copies."""
    return max(int(k).bit_length() - 1 + bin(int(k)).count("1") - 1, 0)


def _infinite_atoms(L1: DiscretePLD, L2: DiscretePLD) -> Tuple[float, float]:
    if (L1.p_top > 0 and L2.p_bottom > 0) or (L1.p_bottom > 0 and L2.p_top > 0):
        raise IndeterminateSum("a +inf atom meets a -inf atom")
    p_top = L1.p_top + L2.p_top - L1.p_top * L2.p_top
    p_bottom = L1.p_bottom + L2.p_bottom - L1.p_bottom * L2.p_bottom
    return p_bottom, p_top


def _lattice_conv(x: np.ndarray, y: np.ndarray, method: str, upper: bool) -> Tuple[np.ndarray, float]:
    """Convolution of two mass vectors; returns (masses, spill).

    FFT round-off obeys the normwise bound |e|_2 <= c eps log2(N) |x|_2 |y|_2,
    hence |e|_1 <= sqrt(N) times that. Bins at noise level are zeroed. With D
    the l1 bound plus the zeroed positive mass, every partial sum of the
    result is within D of the truth, so removing D from the low end (upper)
    or high end (lower) keeps the bound valid. The mass difference to the
    exact total is returned as spill for the safe infinite atom.
    """
    if method != "fft":
        return np.convolve(x, y), 0.0
    z = signal.fftconvolve(x, y)
    err = 8.0 * np.finfo(float).eps * math.log2(z.size + 1) * np.linalg.norm(x) * np.linalg.norm(y)
    low = z <= err
    slack = float(z[low & (z > 0)].sum()) + math.sqrt(z.size) * err
    z[low] = 0.0
    target = compensated_sum(x) * compensated_sum(y)
    total = compensated_sum(z)
    if slack >= total:
        return np.zeros_like(z), target
    # drain slack from the end opposite to the bound direction
    view = z if upper else z[::-1]
    cum = np.cumsum(view)
    i = int(np.searchsorted(cum, slack, side="left"))
    view[i] = cum[i] - slack
    view[:i] = 0.0
    return z, max(target - (total - slack), 0.0)


def _pairwise(a: np.ndarray, pa: np.ndarray, b: np.ndarray, pb: np.ndarray,
              alpha: float, upper: bool) -> Tuple[np.ndarray, np.ndarray]:
    """All pairwise sums snapped to the grid anchored at a[0] + b[0]; returns (k, mass)."""
    s0 = a[0] + b[0]
    rows = max(1, PAIR_CHUNK // b.size)
    ks, ms = [], []
    for r in range(0, a.size, rows):
        s = (a[r:r + rows, None] + b[None, :]).ravel()
        w = (pa[r:r + rows, None] * pb[None, :]).ravel()
        k = _snap(s, s0, alpha, upper)
        uk, inv = np.unique(k, return_inverse=True)
        ks.append(uk)
        ms.append(np.bincount(inv, weights=w))
    k = np.concatenate(ks)
    m = np.concatenate(ms)
    uk, inv = np.unique(k, return_inverse=True)
    return uk, np.bincount(inv, weights=m)


def compose(L1: DiscretePLD, L2: DiscretePLD, alpha: float, dir: BoundDirection,
            method: str = "direct") -> DiscretePLD:
    """Bound on the PLD of the composition, i.e. on the law of L1 + L2.

    Finite sums go to the grid min_sum + alpha * k, rounded right (upper) or
    left (lower). When both inputs lie on lattices with step alpha the sum is
    exact. method = "fft" convolves lattices with FFT instead of directly;
    the provable round-off bound is then moved to the safe infinite atom.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if method not in ("direct", "fft"):
        raise ValueError(f"unknown method {method!r}")
    p_bottom, p_top = _infinite_atoms(L1, L2)
    A, B = L1.compact(), L2.compact()
    if A.values.size == 0 or B.values.size == 0:
        return DiscretePLD([], [], p_bottom, p_top)
    upper = dir is BoundDirection.UPPER
    a, b = A.values, B.values
    pairs = a.size * b.size
    la, lb = lattice_index(a, alpha), lattice_index(b, alpha)
    on_lattice = la is not None and lb is not None
    if on_lattice:
        dense = (int(la[0][-1]) + 1) * (int(lb[0][-1]) + 1)
        on_lattice = method == "fft" or pairs > PAIR_LIMIT or dense <= pairs
    if not on_lattice and pairs > PAIR_LIMIT:
        # two half-step roundings keep the total shift within alpha
        A = regrid(A, alpha / 2, dir)
        B = regrid(B, alpha / 2, dir)
        alpha = alpha / 2
        a, b = A.values, B.values
        la, lb = lattice_index(a, alpha), lattice_index(b, alpha)
        on_lattice = True
    if on_lattice:
        # move each base by its largest deviation so no atom moves against dir
        sa = la[2] if upper else la[1]
        sb = lb[2] if upper else lb[1]
        s0 = a[0] + b[0] + (max(sa, 0.0) + max(sb, 0.0) if upper else min(sa, 0.0) + min(sb, 0.0)) * alpha
        x = np.bincount(la[0], weights=A.probs)
        y = np.bincount(lb[0], weights=B.probs)
        z, spill = _lattice_conv(x, y, method, upper)
        if upper:
            p_top += spill
        else:
            p_bottom += spill
        k = np.flatnonzero(z > 0)
        probs = z[k]
    else:
        s0 = a[0] + b[0]
        k, probs = _pairwise(a, A.probs, b, B.probs, alpha, upper)
        keep = probs > 0
        k, probs = k[keep], probs[keep]
    return DiscretePLD.from_atoms(_shift_guard(s0 + k * alpha, dir), probs, p_bottom, p_top)


def self_compose(L: DiscretePLD, k: int, alpha: float, dir: BoundDirection,
                 trunc_beta: float = 0.0, method: str = "direct") -> DiscretePLD:
    """Bound on the k-fold composition of L, shifted by at most alpha in total.

    A lattice input is composed exactly on its own lattice. Otherwise L is
    rounded once onto a grid of step alpha / k (each of the k copies moves by
    less than one step) and then composed exactly by repeated squaring.
    Intermediate results are truncated with trunc_beta (see truncate_pld).
    """
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    k = int(k)
    if k == 1:
        return regrid(L, alpha, dir)
    L = L.compact()
    step = lattice_step(L.values)
    if step is None:
        step = alpha / k
        L = regrid(L, step, dir)
    acc = None
    base = L
    while True:
        if k & 1:
            acc = base if acc is None else truncate_pld(compose(base, acc, step, dir, method), dir, trunc_beta)
        k >>= 1
        if not k:
            return acc
        base = truncate_pld(compose(base, base, step, dir, method), dir, trunc_beta)
