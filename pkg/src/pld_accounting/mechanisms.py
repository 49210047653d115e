"""PLD sources for concrete mechanisms.

A PLDSource exposes the CDF, survival function and quantiles of a loss
distribution, plus its dual (the loss of the swapped pair). Discretization
consumes sources; the allocation transform needs both a source and its dual.
"""

import abc
import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import special

from pld_accounting.core import (
    AdjacencyDirection,
    DiscretePLD,
    InvalidDistribution,
    _suffix_sums,
    pld_dual,
)

PAIR_TOL = 1e-12


class PLDSource(abc.ABC):
    """Abstract loss distribution with CDF, quantiles and a dual."""

    description: str = ""
    p_bottom: float = 0.0
    p_top: float = 0.0

    @abc.abstractmethod
    def cdf(self, x):
        """P(L <= x)."""

    @abc.abstractmethod
    def sf(self, x):
        """P(L > x), accurate in the upper tail."""

    @abc.abstractmethod
    def quantile(self, u: float) -> float:
        """Smallest x with cdf(x) >= u."""

    @abc.abstractmethod
    def isf(self, u: float) -> float:
        """Smallest x with sf(x) <= u."""

    @abc.abstractmethod
    def dual(self) -> "PLDSource":
        """Source of the loss of the swapped pair."""

    def tail_quantiles(self, beta: float) -> Tuple[float, float]:
        """(q_beta, q_{1-beta}); infinite for unbounded sources at beta = 0."""
        return self.quantile(beta), self.isf(beta)

    def atoms(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Finite atoms for discrete sources, None for continuous ones."""
        return None

    def __repr__(self):
        return f"{type(self).__name__}({self.description})"


class GaussianPLDSource(PLDSource):
    """Loss of N(1, s^2) vs N(0, s^2), distributed as N(1/(2 s^2), 1/s^2).

    The pair is symmetric, so the source is its own dual.
    """

    def __init__(self, sigma: float):
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)
        self.mean = 0.5 / sigma**2
        self.scale = 1.0 / sigma
        self.description = f"gaussian sigma={sigma:g}"

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=np.float64) - self.mean) / self.scale)

    def sf(self, x):
        return special.ndtr((self.mean - np.asarray(x, dtype=np.float64)) / self.scale)

    def logsf(self, x):
        return special.log_ndtr((self.mean - np.asarray(x, dtype=np.float64)) / self.scale)

    def quantile(self, u: float) -> float:
        return float(self.mean + self.scale * special.ndtri(u))

    def isf(self, u: float) -> float:
        return float(self.mean - self.scale * special.ndtri(u))

    def dual(self) -> "GaussianPLDSource":
        return self


class DiscreteSource(PLDSource):
    """Wraps a DiscretePLD as a source.

    The dual defaults to pld_dual of the wrapped object, which requires a
    realization; pass dual explicitly for lower-bound objects or to pair two
    independently computed directions.
    """

    def __init__(self, pld: DiscretePLD, dual: Optional[PLDSource] = None, description: str = ""):
        self.pld = pld
        self._dual = dual
        self.p_bottom = pld.p_bottom
        self.p_top = pld.p_top
        pos = pld.probs > 0
        self._values = pld.values[pos]
        self._probs = pld.probs[pos]
        self._suffix = _suffix_sums(self._probs)
        self.description = description or f"discrete n={self._values.size}"

    def atoms(self):
        return self._values, self._probs

    def sf(self, x):
        idx = np.searchsorted(self._values, np.asarray(x, dtype=np.float64), side="right")
        return self._suffix[idx] + self.p_top

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def quantile(self, u: float) -> float:
        v = self._values
        if v.size == 0:
            return 0.0
        below = self.p_bottom + np.cumsum(self._probs)
        k = int(np.searchsorted(below, u, side="left"))
        return float(v[min(k, v.size - 1)])

    def isf(self, u: float) -> float:
        v = self._values
        if v.size == 0:
            return 0.0
        tail = self._suffix[1:] + self.p_top
        # tail is nonincreasing; first index with tail <= u
        ok = np.flatnonzero(tail <= u)
        return float(v[ok[0]]) if ok.size else float(v[-1])

    def dual(self) -> PLDSource:
        if self._dual is None:
            self._dual = DiscreteSource(pld_dual(self.pld), dual=self)
        return self._dual


@dataclass(frozen=True)
class GaussianMechanism:
    """Gaussian mechanism with sensitivity 1 and noise scale sigma."""

    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class DiscretePair:
    """Finite dominating pair (P, Q) over a small alphabet."""

    p: np.ndarray
    q: np.ndarray
    outcomes: Optional[Tuple] = None

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64).reshape(-1)
        q = np.array(self.q, dtype=np.float64).reshape(-1)
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if p.shape != q.shape or p.size == 0:
            raise InvalidDistribution("p and q must be nonempty and of equal length")
        for name, v in (("p", p), ("q", q)):
            if not (np.all(np.isfinite(v)) and np.all(v >= 0)):
                raise InvalidDistribution(f"{name} must be nonnegative")
            if abs(math.fsum(v.tolist()) - 1.0) > PAIR_TOL:
                raise InvalidDistribution(f"{name} must sum to 1")
        if self.outcomes is not None:
            if len(self.outcomes) != p.size:
                raise InvalidDistribution("outcome labels must match the vectors")
            object.__setattr__(self, "outcomes", tuple(self.outcomes))

    def swapped(self) -> "DiscretePair":
        return DiscretePair(self.q, self.p, self.outcomes)

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretePair":
        if "p" not in d or "q" not in d:
            raise InvalidDistribution("pair JSON needs 'p' and 'q'")
        return cls(d["p"], d["q"], d.get("outcomes"))

    @classmethod
    def from_json(cls, text: str) -> "DiscretePair":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        d = {"p": self.p.tolist(), "q": self.q.tolist()}
        if self.outcomes is not None:
            d["outcomes"] = list(self.outcomes)
        return d


def randomized_response(p: float) -> DiscretePair:
    """Binary randomized response: P = (p, 1-p), Q = (1-p, p)."""
    return DiscretePair([p, 1.0 - p], [1.0 - p, p])


def gaussian_pld_source(mech: GaussianMechanism, adj: AdjacencyDirection = AdjacencyDirection.REMOVE) -> GaussianPLDSource:
    """Both directions share the same source by symmetry of the Gaussian pair."""
    return GaussianPLDSource(mech.sigma)


def discrete_pair_pld(pair: DiscretePair, adj: AdjacencyDirection) -> DiscretePLD:
    """Exact loss ln(P/Q) under P (remove) or ln(Q/P) under Q (add)."""
    if adj is AdjacencyDirection.REMOVE:
        num, den = pair.p, pair.q
    else:
        num, den = pair.q, pair.p
    live = num > 0
    finite = live & (den > 0)
    p_top = math.fsum(num[live & (den == 0)].tolist())
    values = np.log(num[finite] / den[finite])
    return DiscretePLD.from_atoms(values, num[finite], 0.0, p_top)


def pair_sources(pair: DiscretePair) -> Tuple[DiscreteSource, DiscreteSource]:
    """(remove, add) sources of a pair, each the other's dual."""
    rem = DiscreteSource(discrete_pair_pld(pair, AdjacencyDirection.REMOVE), description="pair remove")
    add = DiscreteSource(discrete_pair_pld(pair, AdjacencyDirection.ADD), dual=rem, description="pair add")
    rem._dual = add
    return rem, add
