"""Compiled inner loops for geometric-grid convolution.

The pairwise sums of two geometric grids are grouped by index difference.
For a pair (i, j) with d = j - i >= 0, the output bin is j + G(d); for d < 0
it is i + H(-d). G and H are monotone step functions, so every run of equal
offsets is a contiguous window of i for each j and the window mass comes
from a prefix sum. Cost is O(number of runs * n) instead of O(n^2).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def compensated_sum(x):
    """Sum with a running TwoSum correction (Neumaier)."""
    s = 0.0
    c = 0.0
    for i in range(x.size):
        v = x[i]
        t = s + v
        bp = t - s
        c += (s - (t - bp)) + (v - bp)
        s = t
    return s + c


@njit(cache=True)
def padded_prefix(x, left, right):
    """Exclusive double-double prefix sums, padded so window sums need no clamping.

    Entry left + i holds the sum of x[:i] for 0 <= i <= n; positions before
    hold 0 and positions after hold the total.
    """
    n = x.size
    hi = np.zeros(left + n + 1 + right)
    lo = np.zeros(left + n + 1 + right)
    s = 0.0
    c = 0.0
    for i in range(n):
        v = x[i]
        t = s + v
        bp = t - s
        c += (s - (t - bp)) + (v - bp)
        s = t
        hi[left + i + 1] = s
        lo[left + i + 1] = c
    for i in range(left + n + 1, left + n + 1 + right):
        hi[i] = s
        lo[i] = c
    return hi, lo


@njit(cache=True)
def _accumulate(o, c, yy, ha, hb, la, lb):
    for q in range(yy.size):
        v = yy[q] * ((ha[q] - hb[q]) + (la[q] - lb[q]))
        s = o[q]
        t = s + v
        bp = t - s
        c[q] += (s - (t - bp)) + (v - bp)
        o[q] = t


@njit(cache=True)
def band_accumulate(out, comp, w_hi, w_lo, nw, pad, mult, r_lo, r_hi, offs, shift, forward):
    """Windowed accumulation for runs of equal bin offset.

    For run r with offsets d in [r_lo[r], r_hi[r]] and bin offset offs[r]:
      backward: out[k + offs[r] + shift] += mult[k] * sum(w[k - d])
      forward:  out[k + offs[r] + shift] += mult[k] * sum(w[k + d])
    where w (length nw) enters through prefix sums padded by pad >= the
    widest run on both sides (see padded_prefix), so out-of-range entries of
    w count as zero. Each bin
    is accumulated with a compensated (TwoSum) update in a fixed order.
    """
    m = mult.size
    for r in range(offs.size):
        dl = r_lo[r]
        dh = r_hi[r]
        if forward:
            # window w[k + dl .. k + dh], nonempty while k + dl < len(w)
            k0 = 0
            k1 = min(m, nw - dl)
            a0 = pad + k0 + dh + 1
            b0 = pad + k0 + dl
        else:
            # window w[k - dh .. k - dl], nonempty while k - dh < len(w)
            k0 = dl
            k1 = min(m, nw + dh)
            a0 = pad + k0 - dl + 1
            b0 = pad + k0 - dh
        n = k1 - k0
        if n <= 0:
            continue
        o0 = k0 + offs[r] + shift
        _accumulate(out[o0:o0 + n], comp[o0:o0 + n], mult[k0:k1],
                    w_hi[a0:a0 + n], w_hi[b0:b0 + n],
                    w_lo[a0:a0 + n], w_lo[b0:b0 + n])
