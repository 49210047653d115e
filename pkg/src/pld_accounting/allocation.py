"""Random-allocation PLD bounds.

For a PLD realization L of (P, Q) with dual L*, the remove-direction PLD of
the t-step random allocation is ln((e^L + sum_{i<t} e^{-L*_i}) / t) and the
add direction is -ln(sum_{i<=t} e^{-L_i} / t) with L the add-direction loss.
Both are computed on exponentiated losses stored on geometric grids, where
convolution with outward rounding keeps the discretization error from
accumulating (the error of a sum of two bounds is the larger of the two
errors, plus one rounding).
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from pld_accounting import _kernels
from pld_accounting.core import (
    MASS_TOL,
    AdjacencyDirection,
    BoundDirection,
    DiscretePLD,
    InvalidDistribution,
    MismatchedGrids,
    NotArithmetic,
    TightnessParams,
    compensated_sum,
    discretize,
    outward_guard,
)

UPPER = BoundDirection.UPPER
LOWER = BoundDirection.LOWER

# pairwise evaluation is used when the number of nonzero pairs is below this
SPARSE_PAIRS = 4_000_000
RATIO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GeometricGridDist:
    """Distribution on the grid base * e^(log_ratio * i), i = 0..n-1.

    p_zero is the mass at value 0 and p_top the mass at +inf.
    """

    base: float
    log_ratio: float
    probs: np.ndarray
    p_zero: float = 0.0
    p_top: float = 0.0

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64).reshape(-1)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "base", float(self.base))
        object.__setattr__(self, "log_ratio", float(self.log_ratio))
        if not (self.base > 0 and math.isfinite(self.base)):
            raise InvalidDistribution(f"grid base must be positive, got {self.base}")
        if not self.log_ratio > 0:
            raise InvalidDistribution("log_ratio must be positive")
        if probs.size == 0:
            raise InvalidDistribution("grid must have at least one point")
        if not (np.all(probs >= 0) and self.p_zero >= 0 and self.p_top >= 0):
            raise InvalidDistribution("masses must be nonnegative")
        total = compensated_sum(probs) + self.p_zero + self.p_top
        if abs(total - 1.0) > MASS_TOL:
            raise InvalidDistribution(f"total mass {total!r} differs from 1")

    @property
    def n(self) -> int:
        return self.probs.size

    @property
    def log_values(self) -> np.ndarray:
        return math.log(self.base) + self.log_ratio * np.arange(self.n)

    @property
    def values(self) -> np.ndarray:
        return self.base * np.exp(self.log_ratio * np.arange(self.n))


@dataclass(frozen=True)
class GridDescriptor:
    base: float
    log_ratio: float
    n: int


@dataclass(frozen=True)
class AllocationParams:
    """k-out-of-t random allocation with an (alpha, beta) budget."""

    t: int
    k: int
    tightness: TightnessParams

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 1:
            raise ValueError(f"t must be a positive integer, got {self.t}")
        if int(self.k) != self.k or not 1 <= self.k <= self.t:
            raise ValueError(f"k must be an integer in [1, t], got {self.k}")


# grid conversion

def to_exp_grid(L: DiscretePLD, negate: bool = False, step: Optional[float] = None) -> GeometricGridDist:
    """Maps an arithmetic-grid PLD to the geometric grid of e^L (or e^-L).

    step is the grid spacing; it is inferred from the values when omitted
    (a single-point PLD needs it explicitly, or gets spacing 1).
    """
    v = L.values
    n = v.size
    if n == 0:
        v = np.zeros(1)
        probs = np.zeros(1)
        n = 1
    else:
        probs = L.probs
    if step is None:
        step = (v[-1] - v[0]) / (n - 1) if n > 1 else 1.0
    if n > 1:
        dev = np.max(np.abs(np.diff(v) - step))
        if not dev <= 1e-9 * step:
            raise NotArithmetic(f"values are not an arithmetic progression with step {step}")
    if not negate:
        return GeometricGridDist(math.exp(v[0]), step, probs, L.p_bottom, L.p_top)
    return GeometricGridDist(math.exp(-v[-1]), step, probs[::-1], L.p_top, L.p_bottom)


def from_exp_grid(G: GeometricGridDist, t: int, negate: bool, dir: BoundDirection) -> DiscretePLD:
    """Log of G / t (negated when negate), as a compact DiscretePLD.

    Values are nudged outward by a relative 1e-12 (see core.FLOAT_GUARD).
    """
    logv = G.log_values - math.log(t)
    if negate:
        values, probs = -logv[::-1], G.probs[::-1]
        p_bottom, p_top = G.p_top, G.p_zero
    else:
        values, probs = logv, G.probs
        p_bottom, p_top = G.p_zero, G.p_top
    keep = probs > 0
    values = outward_guard(values[keep], dir)
    return DiscretePLD(values, probs[keep], p_bottom, p_top)


# convolution

def range_renorm(X: GeometricGridDist, Y: GeometricGridDist) -> GridDescriptor:
    """Output grid of conv for equal-length inputs: base a + b, same ratio."""
    if X.n != Y.n or abs(X.log_ratio - Y.log_ratio) > RATIO_TOL * X.log_ratio:
        raise MismatchedGrids("grids need equal length and equal ratio")
    return GridDescriptor(X.base + Y.base, X.log_ratio, X.n)


def _offsets(lead: float, other: float, c: float, h: float, d: np.ndarray, upper: bool) -> np.ndarray:
    """Bin offsets R((ln(lead/c) + log1p((other/lead) e^{-h d})) / h).

    For a pair where the lead grid index exceeds the other by d, the output
    bin is lead index + offset. d = 0 gives exactly 0 when lead + other = c.
    """
    x = (math.log(lead / c) + np.log1p((other / lead) * np.exp(-h * d))) / h
    off = np.ceil(x) if upper else np.floor(x)
    return off.astype(np.int64)


def _split_point(lead: float, other: float, h: float, size: int) -> int:
    """First index d where the offset for lead/other falls by less than 1/2 per step."""
    if other <= lead:
        return 0
    return int(min(size, max(0, math.ceil(math.log(other / lead) / h))))


def _runs(off: np.ndarray, start: int):
    if off.size == 0:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e
    brk = np.flatnonzero(off[1:] != off[:-1]) + 1
    lo = np.concatenate(([0], brk))
    hi = np.concatenate((brk, [off.size])) - 1
    return lo + start, hi + start, off[lo]


def conv(X: GeometricGridDist, Y: GeometricGridDist, dir: BoundDirection) -> GeometricGridDist:
    """Distribution of X + Y on the geometric grid anchored at X.base + Y.base.

    Every pairwise sum is rounded to the next grid point up (upper) or down
    (lower). Pairs with a +inf term go to p_top; a zero term leaves the other
    value, rounded the same way; (0, 0) stays at 0. With equal lengths and no
    zero mass the output has exactly n points; otherwise the grid extends to
    cover every sum (downward for pairs with a zero term).
    """
    if abs(X.log_ratio - Y.log_ratio) > RATIO_TOL * X.log_ratio:
        raise MismatchedGrids("grids need equal log_ratio")
    upper = dir is UPPER
    h = X.log_ratio
    a, b = X.base, Y.base
    c = a + b
    n, m = X.n, Y.n
    x, y = X.probs, Y.probs
    symmetric = X is Y

    # d = j - i >= 0 : bin j + G[d];  e = i - j >= 1 : bin i + H[e]
    G = _offsets(b, a, c, h, np.arange(m), upper)
    G[0] = 0
    H = _offsets(a, b, c, h, np.arange(n), upper)
    H[0] = 0

    # Near d = 0 the offset G falls steeply, so runs of equal G are short.
    # Below the slope -1/2 point the pairs are grouped by G(d) + d instead,
    # which is the bin relative to the other index (forward windows).
    d_split = 0 if symmetric else _split_point(b, a, h, m)
    e_split = 1 if symmetric else max(1, _split_point(a, b, h, n))
    d = np.arange(m)
    e = np.arange(n)
    groups = []  # (forward, mult is x, lo, hi, off)
    if not symmetric:
        groups.append((True, True) + _runs(G[:d_split] + d[:d_split], 0))
        groups.append((True, False) + _runs(H[1:e_split] + e[1:e_split], 1))
    groups.append((False, False) + _runs(G[max(d_split, 1 if symmetric else 0):], max(d_split, 1 if symmetric else 0)))
    if not symmetric:
        groups.append((False, True) + _runs(H[e_split:], e_split))

    k_lo, k_hi = 0, min(n, m) - 1
    dense_cost = 0
    for fwd, mult_x, lo, hi, off in groups:
        nm, nw = (n, m) if mult_x else (m, n)
        k0, k1 = (np.zeros_like(lo), np.minimum(nm, nw - lo)) if fwd else (lo, np.minimum(nm, nw + hi))
        live = k1 > k0
        if np.any(live):
            k_lo = min(k_lo, int(np.min((k0 + off)[live])))
            k_hi = max(k_hi, int(np.max((k1 - 1 + off)[live])))
        dense_cost += int(np.sum(np.maximum(k1 - k0, 0)))
    z_b = z_a = 0
    if X.p_zero > 0:
        z_b = int(math.ceil(math.log(b / c) / h) if upper else math.floor(math.log(b / c) / h))
        k_lo = min(k_lo, z_b)
        k_hi = max(k_hi, m - 1 + z_b)
    if Y.p_zero > 0:
        z_a = int(math.ceil(math.log(a / c) / h) if upper else math.floor(math.log(a / c) / h))
        k_lo = min(k_lo, z_a)
        k_hi = max(k_hi, n - 1 + z_a)
    size = k_hi - k_lo + 1
    shift = -k_lo

    nzx = np.flatnonzero(x)
    nzy = np.flatnonzero(y)
    if nzx.size * nzy.size <= min(SPARSE_PAIRS, dense_cost):
        ii = np.repeat(nzx, nzy.size)
        jj = np.tile(nzy, nzx.size)
        dd = jj - ii
        k = np.where(dd >= 0, jj + G[np.maximum(dd, 0)], ii + H[np.maximum(-dd, 0)])
        probs = np.bincount(k + shift, weights=x[ii] * y[jj], minlength=size)
    else:
        out = np.zeros(size)
        comp = np.zeros(size)
        width = max([int(np.max(hi - lo)) for _, _, lo, hi, _ in groups if lo.size] + [0])
        pad = width + 2
        px = _kernels.padded_prefix(x, pad, pad)
        py = _kernels.padded_prefix(y, pad, pad)
        for fwd, mult_x, lo, hi, off in groups:
            if not lo.size:
                continue
            mult, (w_hi, w_lo), nw = (x, py, m) if mult_x else (y, px, n)
            _kernels.band_accumulate(out, comp, w_hi, w_lo, nw, pad, mult, lo, hi, off, shift, fwd)
        if symmetric:
            # pairs (i, j) and (j, i) share a bin; the diagonal is exact
            probs = 2.0 * out + 2.0 * comp
            probs[shift:shift + n] += x * x
        else:
            probs = out + comp
    probs = np.maximum(probs, 0.0)
    if X.p_zero > 0:
        probs[z_b + shift:z_b + shift + m] += X.p_zero * y
    if Y.p_zero > 0:
        probs[z_a + shift:z_a + shift + n] += Y.p_zero * x
    p_top = X.p_top + Y.p_top - X.p_top * Y.p_top
    p_zero = X.p_zero * Y.p_zero
    return GeometricGridDist(c * math.exp(h * k_lo), h, probs, p_zero, p_top)


def _trim(G: GeometricGridDist, probs: np.ndarray, lo: int, p_zero: float, p_top: float) -> GeometricGridDist:
    nz = np.flatnonzero(probs)
    if nz.size == 0:
        return GeometricGridDist(G.base * math.exp(G.log_ratio * lo), G.log_ratio, np.zeros(1), p_zero, p_top)
    s, e = nz[0], nz[-1] + 1
    return GeometricGridDist(G.base * math.exp(G.log_ratio * (lo + s)), G.log_ratio, probs[s:e], p_zero, p_top)


def truncate(G: GeometricGridDist, dir: BoundDirection, beta: float) -> GeometricGridDist:
    """Tail truncation at the beta and 1 - beta quantiles, then zero trimming.

    upper: mass below q(beta) (including value 0) is clamped up onto q(beta);
    mass above q(1 - beta) goes to +inf. lower: mass below q(beta) goes to 0;
    mass above q(1 - beta) is clamped down onto it. Mass never moves against
    the bound direction.
    """
    probs = np.array(G.probs)
    p_zero, p_top = G.p_zero, G.p_top
    n = probs.size
    lo, hi = 0, n - 1
    if beta > 0:
        below = p_zero + np.cumsum(probs)
        # smallest index with F >= beta; value 0 itself is the quantile if p_zero >= beta
        if p_zero < beta:
            lo = min(int(np.searchsorted(below, beta, side="left")), n - 1)
        above = np.cumsum(probs[::-1])[::-1]  # above[k] = sum probs[k:]
        tail = np.append(above[1:], 0.0) + p_top  # mass strictly above index k
        ok = np.flatnonzero(tail <= beta)
        if ok.size:
            hi = max(int(ok[0]), lo)
        if dir is UPPER:
            if p_zero < beta and (lo > 0 or p_zero > 0):
                probs[lo] += p_zero + probs[:lo].sum()
                p_zero = 0.0
            if hi < n - 1:
                p_top += probs[hi + 1:].sum()
        else:
            if lo > 0:
                p_zero += probs[:lo].sum()
            if hi < n - 1:
                probs[hi] += probs[hi + 1:].sum()
        probs[:lo] = 0.0
        probs[hi + 1:] = 0.0
    return _trim(G, probs, 0, p_zero, p_top)


def self_conv(X: GeometricGridDist, m: int, dir: BoundDirection, trunc_beta: float = 0.0) -> GeometricGridDist:
    """m-fold sum of independent copies of X by repeated squaring.

    Uses floor(log2 m) squarings and popcount(m) - 1 multiplications; every
    intermediate result is truncated with trunc_beta.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    m = int(m)
    acc = None
    base = X
    while True:
        if m & 1:
            acc = base if acc is None else truncate(conv(base, acc, dir), dir, trunc_beta)
        m >>= 1
        if not m:
            return acc
        base = truncate(conv(base, base, dir), dir, trunc_beta)


# allocation transforms

def rounding_depth(m: int) -> int:
    """Longest chain of roundings in self_conv(X, m), counting X's own rounding.

    A sum of two bounds carries the larger of their errors plus one grid step,
    so the error is the depth of the squaring tree, not the number of calls.
    """
    base, acc = 1, None
    while True:
        if m & 1:
            acc = base if acc is None else max(acc, base) + 1
        m >>= 1
        if not m:
            return acc
        base += 1


def alloc_grid_step(alpha: float, t: int, adj: AdjacencyDirection) -> float:
    """Grid width alpha' such that all roundings together stay within alpha."""
    if t == 1:
        return alpha
    if adj is AdjacencyDirection.REMOVE:
        depth = max(rounding_depth(t - 1), 1) + 1
    else:
        depth = rounding_depth(t)
    return alpha / depth


def _check_t(t):
    if int(t) != t or t < 1:
        raise ValueError(f"t must be a positive integer, got {t}")
    return int(t)


def rand_alloc_remove(source, t: int, params: TightnessParams, dir: BoundDirection,
                      dual_source=None) -> DiscretePLD:
    """Remove-direction PLD bound for t-step random allocation.

    source is (a bound on) the remove-direction loss; dual_source defaults to
    source.dual(). For dir = upper the result stochastically dominates the
    exact allocation PLD, for dir = lower it is dominated.
    """
    t = _check_t(t)
    if t == 1:
        return discretize(source, params, dir)
    if dual_source is None:
        dual_source = source.dual()
    step = alloc_grid_step(params.alpha, t, AdjacencyDirection.REMOVE)
    sub = TightnessParams(step, params.beta / t)
    L = discretize(source, sub, dir)
    D = discretize(dual_source, sub, dir.flip())
    U1 = to_exp_grid(L, negate=False, step=step)
    V1 = to_exp_grid(D, negate=True, step=step)
    S = self_conv(V1, t - 1, dir, sub.beta)
    T = conv(U1, S, dir)
    return from_exp_grid(T, t, negate=False, dir=dir)


def rand_alloc_add(source, t: int, params: TightnessParams, dir: BoundDirection) -> DiscretePLD:
    """Add-direction PLD bound for t-step random allocation.

    source is (a bound on) the add-direction loss L(Q||P). The exp-sum is
    bounded in the opposite direction since -ln is decreasing.
    """
    t = _check_t(t)
    if t == 1:
        return discretize(source, params, dir)
    step = alloc_grid_step(params.alpha, t, AdjacencyDirection.ADD)
    sub = TightnessParams(step, params.beta / t)
    L = discretize(source, sub, dir)
    U = to_exp_grid(L, negate=True, step=step)
    S = self_conv(U, t, dir.flip(), sub.beta)
    return from_exp_grid(S, t, negate=True, dir=dir)


def rand_alloc_k_direction(source, alloc: AllocationParams, dir: BoundDirection,
                           adj: AdjacencyDirection, dual_source=None) -> DiscretePLD:
    """One direction of rand_alloc_k."""
    from pld_accounting.composition import compose_calls, resolve_infinities, self_compose

    t1 = alloc.t // alloc.k
    half = TightnessParams(alloc.tightness.alpha / 2, alloc.tightness.beta / 2)
    if adj is AdjacencyDirection.REMOVE:
        L = rand_alloc_remove(source, t1, half, dir, dual_source)
    else:
        L = rand_alloc_add(source, t1, half, dir)
    if alloc.k == 1:
        return L
    trunc = half.beta / max(compose_calls(alloc.k), 1)
    L = resolve_infinities(L, dir)
    return self_compose(L, alloc.k, half.alpha, dir, trunc_beta=trunc)


def rand_alloc_k(source_rem, source_add, alloc: AllocationParams, dir: BoundDirection,
                 dual_rem=None) -> Tuple[DiscretePLD, DiscretePLD]:
    """(remove, add) bounds for k-out-of-t allocation.

    Uses the floor(t/k)-step allocation with budget (alpha/2, beta/2), then
    composes k copies with the other half of the budget.
    """
    return (rand_alloc_k_direction(source_rem, alloc, dir, AdjacencyDirection.REMOVE, dual_rem),
            rand_alloc_k_direction(source_add, alloc, dir, AdjacencyDirection.ADD))
