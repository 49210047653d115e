"""Exact and analytic reference values for testing.

Everything here is computed independently of the grid machinery: product
space enumeration for random allocation on small alphabets, exact mixture
pairs for Poisson subsampling, and closed forms for Gaussian quantities.
"""

import math

import numpy as np
from scipy import integrate, special

from pld_accounting.core import (
    AdjacencyDirection,
    DiscretePLD,
    TooLarge,
)
from pld_accounting.mechanisms import DiscretePair, discrete_pair_pld

ENUM_LIMIT = 1_000_000
GROUP_RTOL = 1e-12


def _group(values: np.ndarray, probs: np.ndarray):
    """Sorts and merges losses equal up to a relative 1e-12."""
    order = np.argsort(values, kind="stable")
    v, p = values[order], probs[order]
    if v.size < 2:
        return v, p
    tol = GROUP_RTOL * np.maximum(1.0, np.abs(v[1:]))
    new = np.concatenate(([True], np.diff(v) > tol))
    start = np.flatnonzero(new)
    return v[start], np.add.reduceat(p, start)


def alloc_pair_masses(pair: DiscretePair, t: int):
    """(P_bar_t, Q^t) over the full product space, outcomes in row-major order."""
    a = pair.p.size
    if t < 1:
        raise ValueError("t must be positive")
    if a ** t > ENUM_LIMIT:
        raise TooLarge(f"{a}^{t} outcomes exceed the enumeration limit {ENUM_LIMIT}")
    idx = np.indices((a,) * t).reshape(t, -1).T  # shape (a^t, t)
    qv = pair.q[idx]
    pv = pair.p[idx]
    # products of q over all coordinates except i, without dividing by zero
    ones = np.ones((idx.shape[0], 1))
    before = np.cumprod(np.hstack((ones, qv[:, :-1])), axis=1)
    after = np.cumprod(np.hstack((ones, qv[:, :0:-1])), axis=1)[:, ::-1]
    p_bar = (pv * before * after).sum(axis=1) / t
    q_t = np.prod(qv, axis=1)
    return p_bar, q_t


def brute_force_alloc_pld(pair: DiscretePair, t: int, adj: AdjacencyDirection) -> DiscretePLD:
    """Exact PLD of the allocation pair (P_bar_t, Q^t).

    P_bar_t is the uniform mixture over i of Q x .. x P (position i) x .. x Q.
    remove: ln(P_bar / Q^t) under P_bar; add: ln(Q^t / P_bar) under Q^t.
    """
    p_bar, q_t = alloc_pair_masses(pair, t)
    num, den = (p_bar, q_t) if adj is AdjacencyDirection.REMOVE else (q_t, p_bar)
    live = num > 0
    finite = live & (den > 0)
    p_top = float(num[live & (den == 0)].sum())
    values, probs = _group(np.log(num[finite] / den[finite]), num[finite])
    return DiscretePLD(values, probs, 0.0, p_top)


def psi_remove_pld(pair: DiscretePair, t: int) -> DiscretePLD:
    """ln((e^L + sum_{i<t} e^{-L*_i}) / t) evaluated atom by atom from the pair's PLD.

    An independent route to the remove-direction allocation PLD: L is the
    remove loss under P, L* the dual loss under Q (including its +inf atom).
    """
    L = discrete_pair_pld(pair, AdjacencyDirection.REMOVE)
    D = discrete_pair_pld(pair, AdjacencyDirection.ADD)
    # e^{-L*} takes the value 0 on the +inf atom of the dual
    ev = np.exp(-D.values)
    ep = D.probs
    if D.p_top > 0:
        ev = np.append(ev, 0.0)
        ep = np.append(ep, D.p_top)
    if ev.size ** max(t - 1, 0) * L.values.size > ENUM_LIMIT:
        raise TooLarge("psi enumeration too large")
    sums, masses = np.zeros(1), np.ones(1)
    for _ in range(t - 1):
        sums = (sums[:, None] + ev[None, :]).ravel()
        masses = (masses[:, None] * ep[None, :]).ravel()
    total = np.exp(L.values)[:, None] + sums[None, :]
    mass = L.probs[:, None] * masses[None, :]
    values, probs = _group(np.log(total.ravel() / t), mass.ravel())
    return DiscretePLD(values, probs, 0.0, L.p_top)


def exact_subsampled_pair(pair: DiscretePair, lam: float) -> DiscretePair:
    """(lam P + (1 - lam) Q, Q)."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    p = lam * pair.p + (1.0 - lam) * pair.q
    return DiscretePair(p / p.sum(), pair.q, pair.outcomes)


def _log_diff(la: float, lb: float) -> float:
    """e^la - e^lb for la >= lb, computed without cancellation."""
    if la == -math.inf:
        return 0.0
    return math.exp(la) * -math.expm1(min(lb - la, 0.0))


def gaussian_delta_analytic(sigma: float, epsilon: float) -> float:
    """Hockey-stick divergence of N(1, sigma^2) against N(0, sigma^2) at e^epsilon.

    Phi(1/(2 sigma) - eps sigma) - e^eps Phi(-1/(2 sigma) - eps sigma), in log space.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    la = float(special.log_ndtr(0.5 / sigma - epsilon * sigma))
    lb = epsilon + float(special.log_ndtr(-0.5 / sigma - epsilon * sigma))
    return max(_log_diff(la, lb), 0.0)


def gaussian_delta_quad(sigma: float, epsilon: float) -> float:
    """The same divergence by numerical integration of the densities."""
    def integrand(x):
        p = math.exp(-0.5 * ((x - 1.0) / sigma) ** 2)
        q = math.exp(-0.5 * (x / sigma) ** 2)
        return max(p - math.exp(epsilon) * q, 0.0) / (sigma * math.sqrt(2 * math.pi))
    # the integrand is positive exactly above x* = sigma^2 eps + 1/2
    x_star = sigma**2 * epsilon + 0.5
    val, _ = integrate.quad(integrand, x_star, x_star + 40 * sigma, epsabs=1e-15, epsrel=1e-12, limit=200)
    return val


def subsampled_gaussian_delta(sigma: float, lam: float, epsilon: float,
                              adj: AdjacencyDirection = AdjacencyDirection.REMOVE) -> float:
    """Hockey-stick divergence of the Poisson-subsampled Gaussian pair.

    remove: P_lam = lam N(1, s^2) + (1 - lam) N(0, s^2) against Q = N(0, s^2);
    add: Q against P_lam. The likelihood ratio is monotone in x, so the
    positive region is a half line with an explicit endpoint.
    """
    if not (sigma > 0 and 0.0 < lam <= 1.0):
        raise ValueError("need sigma > 0 and 0 < lam <= 1")
    s = sigma
    e = math.exp(epsilon)
    log_lam = math.log(lam)
    log_comp = math.log1p(-lam) if lam < 1 else -math.inf
    if adj is AdjacencyDirection.REMOVE:
        # lam e^{(x - 1/2)/s^2} + 1 - lam > e^eps  <=>  x > x*
        if e - 1.0 + lam <= 0:
            return -math.expm1(epsilon)
        x = s * s * math.log((e - 1.0 + lam) / lam) + 0.5
        la = float(np.logaddexp(log_lam + special.log_ndtr((1.0 - x) / s),
                                log_comp + special.log_ndtr(-x / s)))
        lb = epsilon + float(special.log_ndtr(-x / s))
        return max(_log_diff(la, lb), 0.0)
    # add: 1 > e^eps (lam e^{(x - 1/2)/s^2} + 1 - lam)  <=>  x < x*
    if e * (1.0 - lam) >= 1.0:
        return 0.0
    x = s * s * math.log((math.exp(-epsilon) - 1.0 + lam) / lam) + 0.5
    la = float(special.log_ndtr(x / s))
    lb = epsilon + float(np.logaddexp(log_lam + special.log_ndtr((x - 1.0) / s),
                                      log_comp + special.log_ndtr(x / s)))
    return max(_log_diff(la, lb), 0.0)


def subsampled_gaussian_delta_quad(sigma: float, lam: float, epsilon: float) -> float:
    """Remove-direction divergence of the subsampled Gaussian pair by quadrature."""
    c = 1.0 / (sigma * math.sqrt(2 * math.pi))
    e = math.exp(epsilon)

    def integrand(x):
        q = math.exp(-0.5 * (x / sigma) ** 2)
        p = lam * math.exp(-0.5 * ((x - 1.0) / sigma) ** 2) + (1 - lam) * q
        return max(p - e * q, 0.0) * c
    if e - 1.0 + lam <= 0:
        lo = -40 * sigma
    else:
        lo = sigma**2 * math.log((e - 1.0 + lam) / lam) + 0.5
    val, _ = integrate.quad(integrand, lo, lo + 40 * sigma, epsabs=1e-16, epsrel=1e-12, limit=400)
    return val


def gaussian_alloc_exp_moment(sigma: float, t: int) -> float:
    """E[e^L] of the remove-direction allocation PLD of the Gaussian mechanism.

    Expanding E_{P_bar}[P_bar / Q^t] gives t^2 cross terms; the t diagonal
    terms are E_Q[(P/Q)^2] = e^{1/sigma^2} and the others are 1.
    """
    if not sigma > 0 or t < 1:
        raise ValueError("need sigma > 0 and t >= 1")
    return 1.0 + math.expm1(1.0 / sigma**2) / t


def pair_second_moment(pair: DiscretePair) -> float:
    """E_Q[(P/Q)^2], +inf when P puts mass where Q has none."""
    if np.any((pair.p > 0) & (pair.q == 0)):
        return math.inf
    live = pair.q > 0
    return float(np.sum(pair.p[live] ** 2 / pair.q[live]))
