"""Poisson subsampling applied directly to PLD realizations.

With P_lam = lam P + (1 - lam) Q, the remove-direction loss is
ln(1 + lam (e^l - 1)) drawn from the mixture of the P-law and Q-law of l;
the add direction is -ln(1 + lam (e^-l - 1)) under the Q-law.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, special

from pld_accounting.core import (
    AdjacencyDirection,
    DiscretePLD,
    InvalidRealization,
    clean_deficit,
    neg_exp_moment,
)
from pld_accounting.mechanisms import PLDSource


@dataclass(frozen=True)
class SamplingRate:
    """Sampling probability lam, with 1 - lam carried separately.

    Pass complement directly when lam is close to 1 to avoid cancellation.
    """

    lam: float
    complement: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"sampling rate must lie in [0, 1], got {self.lam}")
        if self.complement is None:
            object.__setattr__(self, "complement", 1.0 - self.lam)
        elif not (0.0 <= self.complement <= 1.0 and abs(self.lam + self.complement - 1.0) < 1e-12):
            raise ValueError("complement must equal 1 - lam")

    @property
    def log_complement(self) -> float:
        """ln(1 - lam), -inf at lam = 1."""
        if self.complement == 0.0:
            return -math.inf
        if self.lam < 0.5:
            return math.log1p(-self.lam)
        return math.log(self.complement)


def _phi_remove(values: np.ndarray, rate: SamplingRate) -> np.ndarray:
    """ln(1 + lam (e^v - 1)), stable for small lam and for large v."""
    lam = rate.lam
    with np.errstate(over="ignore", divide="ignore"):
        small = np.log1p(lam * np.expm1(np.minimum(values, 50.0)))
        large = np.logaddexp(rate.log_complement, math.log(lam) + values)
    return np.where(values <= 50.0, small, large)


def _phi_add(values: np.ndarray, rate: SamplingRate) -> np.ndarray:
    """-ln(1 + lam (e^-v - 1))."""
    return -_phi_remove(-values, rate)


def _snap(x: np.ndarray, grid: np.ndarray, ulps: int = 4) -> np.ndarray:
    """Moves entries of x onto grid points that agree with them to a few ulp.

    The two sides of an exact pair compute the same loss as ln(p/q) and
    -ln(q/p); snapping keeps them one atom instead of two ulp-apart twins.
    """
    if x.size == 0 or grid.size == 0:
        return x
    idx = np.clip(np.searchsorted(grid, x), 1, grid.size - 1) if grid.size > 1 else np.zeros(x.size, int)
    out = x.copy()
    for cand in (idx - 1, idx) if grid.size > 1 else (idx,):
        g = grid[cand]
        close = np.abs(g - out) <= ulps * np.spacing(np.maximum(np.abs(g), np.abs(out)))
        out[close] = g[close]
    return out


def subsample_remove(L: DiscretePLD, rate: SamplingRate, dual: Optional[DiscretePLD] = None) -> DiscretePLD:
    """Remove-direction PLD of (P_lam, Q) from the PLD L of (P, Q).

    Without dual, the Q-law of the loss is recovered from L itself (mass
    f_L(l) e^-l, plus the deficit 1 - E[e^-L] on the Q-only region, which
    lands at ln(1 - lam)); L must be a realization. The result is exact when
    L is exact.

    With dual (a DiscretePLD for the loss of (Q, P) under Q, e.g. a bound of
    the add direction), the Q-law is taken from it instead. Both laws are
    pushed through the same increasing map, so stochastic bounds in, bounds in
    the same direction out; this form also accepts lower-bound objects.
    """
    if rate.lam == 0.0:
        return DiscretePLD.point_mass(0.0)
    if rate.lam == 1.0:
        return L
    lam, comp = rate.lam, rate.complement
    log_comp = rate.log_complement
    if dual is None:
        if L.p_bottom > 0:
            raise InvalidRealization("subsample_remove needs a realization or an explicit dual")
        deficit = clean_deficit(1.0 - neg_exp_moment(L))
        with np.errstate(over="ignore"):
            q_law = L.probs * np.exp(-L.values)
        q_law[L.probs == 0] = 0.0
        values = _phi_remove(L.values, rate)
        probs = lam * L.probs + comp * q_law
        extra_v = [log_comp] if deficit > 0 else []
        extra_p = [comp * deficit] if deficit > 0 else []
        p_top = lam * L.p_top
    else:
        # P-law from L, Q-law of the loss is -dual
        q_vals = _snap(-dual.values[::-1], L.values)
        values = np.concatenate((_phi_remove(q_vals, rate), _phi_remove(L.values, rate)))
        probs = np.concatenate((comp * dual.probs[::-1], lam * L.probs))
        # -inf loss (dual +inf atom, L -inf atom) maps to ln(1 - lam)
        low = comp * dual.p_top + lam * L.p_bottom
        extra_v = [log_comp] if low > 0 else []
        extra_p = [low] if low > 0 else []
        p_top = lam * L.p_top + comp * dual.p_bottom
    if extra_v and math.isinf(log_comp):
        return DiscretePLD.from_atoms(values, probs, float(extra_p[0]), p_top)
    return DiscretePLD.from_atoms(np.concatenate((values, extra_v)),
                                  np.concatenate((probs, extra_p)), 0.0, p_top)


def subsample_add(L: DiscretePLD, rate: SamplingRate) -> DiscretePLD:
    """Add-direction PLD of (Q, P_lam) from the loss L of (Q, P) under Q.

    An increasing map of the values with masses unchanged; the +inf atom lands
    on the largest finite value -ln(1 - lam). Order-preserving, so it applies
    to upper and lower bounds alike (a -inf atom stays at -inf).
    """
    if rate.lam == 0.0:
        return DiscretePLD.point_mass(0.0)
    if rate.lam == 1.0:
        return L
    values = _phi_add(L.values, rate)
    probs = L.probs.copy()
    if L.p_top > 0:
        values = np.append(values, -rate.log_complement)
        probs = np.append(probs, L.p_top)
    # the map is increasing; from_atoms merges collisions at float resolution
    return DiscretePLD.from_atoms(values, probs, L.p_bottom, 0.0)


class SubsampledGaussianSource(PLDSource):
    """Analytic loss of the Poisson-subsampled Gaussian pair.

    remove: ln(1 + lam (e^L - 1)) with L drawn from lam N(m, s^2) + (1 - lam) N(-m, s^2),
    add: -ln(1 + lam (e^-L - 1)) with L ~ N(m, s^2), where m = 1/(2 sigma^2)
    and s = 1/sigma. The two are each other's dual.
    """

    def __init__(self, sigma: float, rate: SamplingRate, adj: AdjacencyDirection = AdjacencyDirection.REMOVE):
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        if not 0.0 < rate.lam < 1.0:
            raise ValueError("the analytic subsampled source needs 0 < lam < 1")
        self.sigma = float(sigma)
        self.rate = rate
        self.adj = adj
        self.mean = 0.5 / sigma**2
        self.scale = 1.0 / sigma
        self.description = f"subsampled gaussian sigma={sigma:g} lam={rate.lam:g} {adj.value}"
        # finite end of the support: ln(1 - lam) (remove) or -ln(1 - lam) (add)
        self.edge = rate.log_complement if adj is AdjacencyDirection.REMOVE else -rate.log_complement

    def _inner(self, y):
        """Base-loss value mapped to y; -inf / +inf outside the support."""
        y = np.asarray(y, dtype=np.float64)
        lam = self.rate.lam
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.adj is AdjacencyDirection.REMOVE:
                x = np.log1p(np.expm1(y) / lam)
                return np.where(y <= self.edge, -np.inf, x)
            x = -np.log1p(np.expm1(-y) / lam)
            return np.where(y >= self.edge, np.inf, x)

    def _base_cdf(self, x, upper_tail: bool):
        x = np.asarray(x, dtype=np.float64)
        m, s, lam = self.mean, self.scale, self.rate.lam
        sign = -1.0 if upper_tail else 1.0
        if self.adj is AdjacencyDirection.REMOVE:
            return (lam * special.ndtr(sign * (x - m) / s)
                    + self.rate.complement * special.ndtr(sign * (x + m) / s))
        return special.ndtr(sign * (x - m) / s)

    def cdf(self, y):
        return self._base_cdf(self._inner(y), upper_tail=False)

    def sf(self, y):
        return self._base_cdf(self._inner(y), upper_tail=True)

    def _solve(self, u: float, upper_tail: bool) -> float:
        """Base-loss point where the lower (or upper) tail mass equals u."""
        m, s = self.mean, self.scale
        lo, hi = -m - 40.0 * s, m + 40.0 * s
        f = lambda x: float(self._base_cdf(x, upper_tail)) - u
        if f(lo) * f(hi) > 0:
            return lo if (f(lo) > 0) != upper_tail else hi
        return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    def _outer(self, x: float) -> float:
        v = np.array([x])
        if self.adj is AdjacencyDirection.REMOVE:
            return float(_phi_remove(v, self.rate)[0])
        return float(_phi_add(v, self.rate)[0])

    def quantile(self, u: float) -> float:
        if u <= 0:
            return -math.inf if self.adj is AdjacencyDirection.ADD else self.edge
        return self._outer(self._solve(u, upper_tail=False))

    def isf(self, u: float) -> float:
        if u <= 0:
            return math.inf if self.adj is AdjacencyDirection.REMOVE else self.edge
        return self._outer(self._solve(u, upper_tail=True))

    def dual(self) -> "SubsampledGaussianSource":
        other = AdjacencyDirection.ADD if self.adj is AdjacencyDirection.REMOVE else AdjacencyDirection.REMOVE
        return SubsampledGaussianSource(self.sigma, self.rate, other)
