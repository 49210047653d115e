"""PLD data model and direction-aware primitive operations.

A privacy loss distribution (PLD) is stored as a finite set of atoms plus
point masses at -inf and +inf. Upper bounds round mass toward larger losses,
lower bounds toward smaller losses.
"""

import enum
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from pld_accounting._kernels import compensated_sum

MASS_TOL = 1e-9
CCDF_SLACK = 1e-12
EPS_TOL = 1e-12
# Float noise below this is treated as an exact zero when it appears as a
# mass deficit (1 - E[e^-L] and similar).
NEGLIGIBLE_MASS = 1e-14
# relative nudge applied to computed loss values to cover float rounding in
# grid arithmetic (bases, exp/log round trips), outward in the bound direction
FLOAT_GUARD = 1e-12


class PLDError(ValueError):
    """Base class for numerical-domain errors raised by this package."""


class InvalidDistribution(PLDError):
    pass


class InvalidRealization(PLDError):
    pass


class OutOfRange(PLDError):
    pass


class DegenerateRange(PLDError):
    pass


class NotArithmetic(PLDError):
    pass


class MismatchedGrids(PLDError):
    pass


class IndeterminateSum(PLDError):
    pass


class TooLarge(PLDError):
    pass


class BoundDirection(enum.Enum):
    UPPER = "upper"
    LOWER = "lower"

    def flip(self) -> "BoundDirection":
        return BoundDirection.LOWER if self is BoundDirection.UPPER else BoundDirection.UPPER


class AdjacencyDirection(enum.Enum):
    REMOVE = "remove"
    ADD = "add"


@dataclass(frozen=True)
class TightnessParams:
    """Approximation budget: grid width alpha (nats) and tail mass beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscretePLD:
    """Discrete loss distribution over [-inf, +inf].

    Attributes:
      values: strictly increasing finite loss values.
      probs: nonnegative masses of the values.
      p_bottom: mass at -inf.
      p_top: mass at +inf.
    """

    values: np.ndarray
    probs: np.ndarray
    p_bottom: float = 0.0
    p_top: float = 0.0

    def __post_init__(self):
        values = _readonly(self.values)
        probs = _readonly(self.probs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "p_bottom", float(self.p_bottom))
        object.__setattr__(self, "p_top", float(self.p_top))
        if values.shape != probs.shape:
            raise InvalidDistribution("values and probs must have equal length")
        if not np.all(np.isfinite(values)):
            raise InvalidDistribution("values must be finite")
        if values.size > 1 and not np.all(np.diff(values) > 0):
            raise InvalidDistribution("values must be strictly increasing")
        if not (np.all(np.isfinite(probs)) and np.all(probs >= 0)):
            raise InvalidDistribution("masses must be finite and nonnegative")
        if not (self.p_bottom >= 0 and self.p_top >= 0):
            raise InvalidDistribution("infinite-atom masses must be nonnegative")
        total = self.total_mass()
        if abs(total - 1.0) > MASS_TOL:
            raise InvalidDistribution(f"total mass {total!r} differs from 1")

    # construction helpers

    @classmethod
    def from_atoms(cls, values, probs, p_bottom: float = 0.0, p_top: float = 0.0) -> "DiscretePLD":
        """Builds a PLD from unsorted atoms, merging equal values."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        probs = np.asarray(probs, dtype=np.float64).reshape(-1)
        if values.shape != probs.shape:
            raise InvalidDistribution("values and probs must have equal length")
        p_top = float(p_top) + float(probs[values == np.inf].sum())
        p_bottom = float(p_bottom) + float(probs[values == -np.inf].sum())
        keep = np.isfinite(values)
        values, probs = values[keep], probs[keep]
        if values.size and not np.all(np.diff(values) > 0):
            order = np.argsort(values, kind="stable")
            values, probs = values[order], probs[order]
            uniq, start = np.unique(values, return_index=True)
            probs = np.add.reduceat(probs, start)
            values = uniq
        return cls(values, probs, p_bottom, p_top)

    @classmethod
    def point_mass(cls, value: float) -> "DiscretePLD":
        if value == np.inf:
            return cls([], [], 0.0, 1.0)
        if value == -np.inf:
            return cls([], [], 1.0, 0.0)
        return cls([value], [1.0])

    def compact(self) -> "DiscretePLD":
        """Drops zero-mass atoms."""
        keep = self.probs > 0
        if keep.all():
            return self
        return DiscretePLD(self.values[keep], self.probs[keep], self.p_bottom, self.p_top)

    # queries

    def total_mass(self) -> float:
        return compensated_sum(self.probs) + self.p_bottom + self.p_top

    def __len__(self) -> int:
        return self.values.size

    def is_realization(self) -> bool:
        """Whether p_bottom = 0 and E[e^-L] <= 1 (up to 1e-9)."""
        if self.p_bottom > 0:
            return False
        return neg_exp_moment(self) <= 1 + MASS_TOL

    def exp_moment(self) -> float:
        """E[e^L] over the finite atoms only (the +inf atom is discarded)."""
        pos = self.probs > 0
        with np.errstate(over="ignore"):
            terms = self.probs[pos] * np.exp(self.values[pos])
        return compensated_sum(terms)

    def ccdf(self, x) -> np.ndarray:
        """P(L > x) for an array of x (x may be +-inf)."""
        x = np.asarray(x, dtype=np.float64)
        suffix = _suffix_sums(self.probs)
        idx = np.searchsorted(self.values, x, side="right")
        return suffix[idx] + self.p_top

    def mean_finite(self) -> float:
        return float(np.dot(self.values, self.probs))

    # serialization

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "probs": [float(p) for p in self.probs],
            "p_bottom": self.p_bottom,
            "p_top": self.p_top,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretePLD":
        try:
            return cls(d["values"], d["probs"], d.get("p_bottom", 0.0), d.get("p_top", 0.0))
        except KeyError as e:
            raise InvalidDistribution(f"missing field {e}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DiscretePLD":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (f"DiscretePLD(n={self.values.size}, range=[{self.values[:1]}, {self.values[-1:]}], "
                f"p_bottom={self.p_bottom:.3g}, p_top={self.p_top:.3g})")


def _suffix_sums(probs: np.ndarray) -> np.ndarray:
    """suffix[i] = sum(probs[i:]); suffix[n] = 0. Summed from the small end."""
    out = np.zeros(probs.size + 1)
    out[:-1] = np.cumsum(probs[::-1])[::-1]
    return out


def outward_guard(values: np.ndarray, dir: "BoundDirection") -> np.ndarray:
    """Moves values by FLOAT_GUARD * max(1, |v|), up for upper bounds and down for lower."""
    nudge = FLOAT_GUARD * np.maximum(1.0, np.abs(values))
    return values + nudge if dir is BoundDirection.UPPER else values - nudge


def clean_deficit(x: float) -> float:
    """Clamps a computed mass deficit, treating float noise as zero."""
    return x if x > NEGLIGIBLE_MASS else 0.0


# divergence and conversions

def hockey_stick_delta(L: DiscretePLD, epsilon: float) -> float:
    """delta(eps) = E[(1 - e^{eps - L})_+], with the +inf atom counted fully."""
    if not math.isfinite(epsilon):
        raise ValueError("epsilon must be finite")
    start = np.searchsorted(L.values, epsilon, side="right")
    v = L.values[start:]
    p = L.probs[start:]
    s = float(np.sum(p * -np.expm1(epsilon - v))) + L.p_top
    return min(max(s, L.p_top), 1.0 - L.p_bottom)


def epsilon_for_delta(L: DiscretePLD, delta: float, tol: float = EPS_TOL) -> float:
    """Smallest eps (within tol) with hockey_stick_delta(L, eps) <= delta.

    Raises OutOfRange when delta is below the floor p_top, or when every eps
    satisfies the constraint (delta at or above the supremum 1 - p_bottom).
    """
    if delta < L.p_top:
        raise OutOfRange(f"delta={delta} is below the +inf mass {L.p_top}")
    if delta >= 1.0 - L.p_bottom or L.values.size == 0 or not (L.probs > 0).any():
        raise OutOfRange(f"delta={delta} is attained for every epsilon")
    support = L.values[L.probs > 0]
    hi = float(support[-1])
    if hockey_stick_delta(L, hi) > delta:
        hi = hi + 1.0
    width = max(1.0, float(support[-1] - support[0]))
    lo = float(support[0]) - width
    while hockey_stick_delta(L, lo) <= delta:
        width *= 2
        lo = float(support[0]) - width
        if width > 1e6:
            raise OutOfRange(f"delta={delta} is attained for every epsilon")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if hockey_stick_delta(L, mid) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


def neg_exp_moment(L: DiscretePLD) -> float:
    """E[e^-L] with the +inf atom contributing 0 (compensated sum)."""
    if L.p_bottom > 0:
        raise InvalidRealization("p_bottom > 0: E[e^-L] is infinite")
    pos = L.probs > 0
    with np.errstate(over="ignore"):
        terms = L.probs[pos] * np.exp(-L.values[pos])
    return compensated_sum(terms)


def pld_dual(L: DiscretePLD) -> DiscretePLD:
    """Loss of the swapped pair, f_dual(-l) = f_L(l) e^-l plus an +inf atom."""
    if not L.is_realization():
        raise InvalidRealization("pld_dual requires a PLD realization")
    with np.errstate(over="ignore"):
        probs = L.probs * np.exp(-L.values)
    probs[L.probs == 0] = 0.0
    p_top = clean_deficit(1.0 - neg_exp_moment(L))
    return DiscretePLD(-L.values[::-1], probs[::-1], 0.0, p_top)


# discretization

def _grid(q_lo: float, q_hi: float, alpha: float) -> np.ndarray:
    n = int(math.ceil((q_hi - q_lo) / alpha)) + 1
    grid = q_lo + alpha * np.arange(n)
    # guard against the last point rounding below q_hi
    if grid[-1] < q_hi:
        grid = np.append(grid, q_lo + alpha * n)
    return grid


def discretize(source, params: TightnessParams, dir: BoundDirection) -> DiscretePLD:
    """Rounds a PLD source onto the grid q_beta, q_beta + alpha, ... covering q_{1-beta}.

    dir = upper moves each interval's mass to its right endpoint, clamps the
    lower tail up onto the first point and sends the upper tail to +inf.
    dir = lower mirrors this: left endpoints, top tail clamped down, lower
    tail at -inf. Genuine infinite atoms of the source keep their side.
    """
    alpha, beta = params.alpha, params.beta
    q_lo, q_hi = source.tail_quantiles(beta)
    if not (math.isfinite(q_lo) and math.isfinite(q_hi)):
        raise OutOfRange("source range is unbounded; use beta > 0")
    if q_hi < q_lo:
        q_hi = q_lo
    grid = np.array([q_lo]) if q_hi == q_lo else _grid(q_lo, q_hi, alpha)
    n = grid.size
    upper = dir is BoundDirection.UPPER
    atoms = source.atoms()
    if atoms is not None:
        values, probs = atoms
        probs = np.asarray(probs, dtype=np.float64)
        out = np.zeros(n)
        if upper:
            idx = np.searchsorted(grid, values, side="left")
            top = idx >= n
            np.add.at(out, idx[~top], probs[~top])
            out[0] += source.p_bottom
            return DiscretePLD(grid, out, 0.0, source.p_top + float(probs[top].sum()))
        idx = np.searchsorted(grid, values, side="right") - 1
        bottom = idx < 0
        np.add.at(out, idx[~bottom], probs[~bottom])
        return DiscretePLD(grid, out, source.p_bottom + float(probs[bottom].sum()), source.p_top)

    cdf = source.cdf(grid)
    sf = source.sf(grid)
    # interval masses from whichever tail function is small at both ends
    use_cdf = cdf[1:] <= 0.5
    inner = np.where(use_cdf, cdf[1:] - cdf[:-1], sf[:-1] - sf[1:])
    inner = np.maximum(inner, 0.0)
    out = np.zeros(n)
    if upper:
        out[1:] = inner
        out[0] = cdf[0]
        p_top = float(sf[-1])
        p_bottom = 0.0
    else:
        out[:-1] = inner
        out[-1] = float(sf[-1]) - source.p_top
        p_top = source.p_top
        p_bottom = float(cdf[0])
    out = np.maximum(out, 0.0)
    # absorb float drift so the object is normalized to within 1e-12
    drift = 1.0 - (compensated_sum(out) + p_top + p_bottom)
    k = int(np.argmax(out))
    out[k] = max(out[k] + drift, 0.0)
    return DiscretePLD(grid, out, p_bottom, p_top)


# stochastic domination

def check_stoch_dom(V: DiscretePLD, U: DiscretePLD, params: Optional[TightnessParams] = None,
                    alpha: float = 0.0, beta: float = 0.0) -> bool:
    """Tests CCDF_V(x) <= CCDF_U(x - alpha) + beta for every x in [-inf, inf].

    params may be given as a TightnessParams or as explicit alpha/beta (which
    allows alpha = 0). Both sides are right-continuous step functions, so the
    check at every breakpoint and at the two limits is exact.
    """
    if params is not None:
        alpha, beta = params.alpha, params.beta
    slack = beta + CCDF_SLACK
    # limits at -inf and +inf
    if 1.0 - V.p_bottom > 1.0 - U.p_bottom + slack:
        return False
    if V.p_top > U.p_top + slack:
        return False
    shifted = U.values + alpha
    xs = np.union1d(V.values, shifted)
    if xs.size == 0:
        return True
    ccdf_v = _suffix_sums(V.probs)[np.searchsorted(V.values, xs, side="right")] + V.p_top
    ccdf_u = _suffix_sums(U.probs)[np.searchsorted(shifted, xs, side="right")] + U.p_top
    return bool(np.all(ccdf_v <= ccdf_u + slack))


def combine_bounds(A: DiscretePLD, B: DiscretePLD, dir: BoundDirection) -> DiscretePLD:
    """Pointwise min (upper) or max (lower) of two CCDFs."""
    pick = np.minimum if dir is BoundDirection.UPPER else np.maximum
    xs = np.union1d(A.values, B.values)
    ccdf = pick(A.ccdf(xs), B.ccdf(xs))
    start = pick(1.0 - A.p_bottom, 1.0 - B.p_bottom)
    p_top = float(pick(A.p_top, B.p_top))
    prev = np.concatenate(([start], ccdf[:-1]))
    probs = np.maximum(prev - ccdf, 0.0)
    out = DiscretePLD(xs, probs, 1.0 - float(start), p_top)
    return out.compact()


def merge_sorted_atoms(values: np.ndarray, probs: np.ndarray):
    """Merges equal entries of an already sorted value array."""
    if values.size < 2:
        return values, probs
    new = np.concatenate(([True], values[1:] != values[:-1]))
    if new.all():
        return values, probs
    start = np.flatnonzero(new)
    return values[start], np.add.reduceat(probs, start)
