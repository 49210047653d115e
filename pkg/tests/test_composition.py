import math

import numpy as np
import pytest

from pld_accounting import oracle
from pld_accounting.composition import (
    compose,
    compose_calls,
    lattice_step,
    regrid,
    resolve_infinities,
    self_compose,
    truncate_pld,
)
from pld_accounting.core import (
    BoundDirection,
    DiscretePLD,
    IndeterminateSum,
    TightnessParams,
    check_stoch_dom,
    discretize,
    hockey_stick_delta,
)
from pld_accounting.mechanisms import GaussianPLDSource

UPPER = BoundDirection.UPPER
LOWER = BoundDirection.LOWER
LN3 = math.log(3.0)


def exact_sum(*plds):
    """Exact law of the sum of finite-support PLDs by enumeration."""
    v, p = np.zeros(1), np.ones(1)
    for L in plds:
        v = (v[:, None] + L.values[None, :]).ravel()
        p = (p[:, None] * L.probs[None, :]).ravel()
    v, p = oracle._group(v, p)
    return DiscretePLD(v, p)


@pytest.fixture
def rr():
    return DiscretePLD([-LN3, LN3], [0.25, 0.75])


def test_point_masses():
    Z = compose(DiscretePLD.point_mass(0.3), DiscretePLD.point_mass(0.45), 0.1, UPPER)
    assert Z.values.size == 1 and 0.75 <= Z.values[0] < 0.75 + 0.1
    Z = compose(DiscretePLD.point_mass(0.3), DiscretePLD.point_mass(0.45), 0.1, LOWER)
    assert Z.values[0] <= 0.75


def test_rr_with_itself(rr):
    # the grid is anchored at -2 ln 3, so the other sums move by less than a step
    exact = np.array([-2 * LN3, 0.0, 2 * LN3])
    up = compose(rr, rr, 0.01, UPPER)
    np.testing.assert_allclose(up.probs, [0.0625, 0.375, 0.5625], atol=1e-15)
    assert np.all(up.values >= exact) and np.all(up.values - exact < 0.01)
    lo = compose(rr, rr, 0.01, LOWER)
    np.testing.assert_allclose(lo.probs, [0.0625, 0.375, 0.5625], atol=1e-15)
    assert np.all(lo.values <= exact) and np.all(exact - lo.values < 0.01)


def test_top_atoms_inclusion_exclusion():
    A = DiscretePLD([0.0], [0.9], 0.0, 0.1)
    B = DiscretePLD([1.0], [0.8], 0.0, 0.2)
    assert compose(A, B, 0.1, UPPER).p_top == pytest.approx(0.28, abs=1e-15)


def test_opposite_infinities_are_indeterminate():
    A = DiscretePLD([0.0], [0.9], 0.0, 0.1)
    B = DiscretePLD([0.0], [0.9], 0.1, 0.0)
    with pytest.raises(IndeterminateSum):
        compose(A, B, 0.1, UPPER)


def test_resolve_infinities():
    L = DiscretePLD([0.0, 1.0], [0.4, 0.4], 0.1, 0.1)
    U = resolve_infinities(L, UPPER)
    assert U.p_bottom == 0 and U.probs[0] == pytest.approx(0.5)
    D = resolve_infinities(L, LOWER)
    assert D.p_top == 0 and D.probs[-1] == pytest.approx(0.5)
    assert check_stoch_dom(L, U, alpha=0, beta=0) and check_stoch_dom(D, L, alpha=0, beta=0)


def test_self_compose_examples(rr):
    assert self_compose(rr, 1, 0.01, UPPER).values.size == 2
    Z = self_compose(DiscretePLD.point_mass(0.123), 4, 0.01, UPPER)
    assert Z.values.size == 1 and 0.492 <= Z.values[0] < 0.492 + 0.01
    exact = exact_sum(rr, rr, rr)
    for d in (UPPER, LOWER):
        Z = self_compose(rr, 3, 0.01, d)
        np.testing.assert_allclose(Z.probs, exact.probs, atol=1e-15)
        np.testing.assert_allclose(Z.values, exact.values, atol=0.01)


def test_compose_calls():
    assert [compose_calls(k) for k in (1, 2, 3, 4, 5, 8, 1000)] == [0, 1, 2, 2, 3, 3, 9 + 5]


@pytest.mark.parametrize("seed", range(6))
def test_error_additivity_on_two_atom_inputs(seed):
    rng = np.random.default_rng(seed)
    alphas = rng.uniform(0.01, 0.1, size=3)
    total = 0.0
    exacts, ups, los = [], [], []
    for a in alphas:
        v = np.sort(rng.uniform(-2, 2, size=2))
        p = rng.uniform(0.1, 0.9)
        E = DiscretePLD(v, [p, 1 - p])
        exacts.append(E)
        ups.append(regrid(DiscretePLD(v + rng.uniform(0, a, 2), [p, 1 - p]), a, UPPER))
        los.append(regrid(DiscretePLD(v - rng.uniform(0, a, 2), [p, 1 - p]), a, LOWER))
        total += a
    step = 0.005
    U = compose(compose(ups[0], ups[1], step, UPPER), ups[2], step, UPPER)
    D = compose(compose(los[0], los[1], step, LOWER), los[2], step, LOWER)
    E = exact_sum(*exacts)
    # each input moved by < 2 a (shift + regrid); each composition adds < one step
    budget = TightnessParams(2 * total + 2 * step, 1e-15)
    assert check_stoch_dom(E, U, alpha=0, beta=0) and check_stoch_dom(U, E, budget)
    assert check_stoch_dom(D, E, alpha=0, beta=0) and check_stoch_dom(E, D, budget)


def test_associativity_up_to_grid(rr):
    A = DiscretePLD([-0.3, 0.4, 1.1], [0.2, 0.5, 0.3])
    C = DiscretePLD([0.05, 0.7], [0.6, 0.4])
    step = 0.05
    left = compose(compose(A, rr, step, UPPER), C, step, UPPER)
    right = compose(A, compose(rr, C, step, UPPER), step, UPPER)
    assert check_stoch_dom(left, right, alpha=step, beta=0) and check_stoch_dom(right, left, alpha=step, beta=0)


def test_lattice_inputs_compose_exactly():
    g = GaussianPLDSource(2.0)
    L = discretize(g, TightnessParams(1e-2, 1e-10), UPPER)
    assert lattice_step(L.values) == pytest.approx(1e-2)
    Z = compose(L, L, 1e-2, UPPER)
    # the output lattice is anchored at the minimum sum
    assert Z.values[0] == pytest.approx(2 * L.values[0], abs=1e-9)
    assert Z.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_fft_matches_direct():
    g = GaussianPLDSource(1.0)
    L = resolve_infinities(discretize(g, TightnessParams(1e-3, 1e-10), UPPER), UPPER)
    a = compose(L, L, 1e-3, UPPER)
    b = compose(L, L, 1e-3, UPPER, method="fft")
    xs = np.union1d(a.values, b.values)
    # same CCDF up to float noise (the outward float guard differs by ~1e-12 in value)
    assert np.max(np.abs(a.ccdf(xs - 1e-9) - b.ccdf(xs - 1e-9))) <= 1e-12
    for eps in (0.5, 1.0, 2.0, 4.0):
        da, db = hockey_stick_delta(a, eps), hockey_stick_delta(b, eps)
        assert abs(da - db) <= 1e-9
        assert db >= oracle.gaussian_delta_analytic(1 / math.sqrt(2), eps)
    b = compose(resolve_infinities(discretize(g, TightnessParams(1e-3, 1e-10), LOWER), LOWER),
                resolve_infinities(discretize(g, TightnessParams(1e-3, 1e-10), LOWER), LOWER), 1e-3, LOWER, method="fft")
    assert hockey_stick_delta(b, 1.0) <= oracle.gaussian_delta_analytic(1 / math.sqrt(2), 1.0) + 1e-15


@pytest.mark.parametrize("k", [2, 5, 16])
def test_gaussian_self_composition_sandwich(k):
    sigma = 3.0
    p = TightnessParams(1e-2, 1e-12)
    up = self_compose(discretize(GaussianPLDSource(sigma), TightnessParams(p.alpha / k, p.beta), UPPER),
                      k, p.alpha, UPPER)
    lo = self_compose(discretize(GaussianPLDSource(sigma), TightnessParams(p.alpha / k, p.beta), LOWER),
                      k, p.alpha, LOWER)
    s_k = sigma / math.sqrt(k)
    for eps in (0.0, 0.5, 1.0):
        exact = oracle.gaussian_delta_analytic(s_k, eps)
        assert hockey_stick_delta(lo, eps) <= exact + 1e-12
        assert exact <= hockey_stick_delta(up, eps) + 1e-12
        assert hockey_stick_delta(up, eps) <= oracle.gaussian_delta_analytic(s_k, eps - 2 * p.alpha) + k * p.beta + 1e-12


def test_truncate_pld():
    L = DiscretePLD([0.0, 1.0, 2.0, 3.0], [1e-9, 0.5, 0.5 - 2e-9, 1e-9])
    U = truncate_pld(L, UPPER, 1e-8)
    assert U.p_top == pytest.approx(1e-9) and U.values[0] == 1.0
    D = truncate_pld(L, LOWER, 1e-8)
    assert D.p_bottom == pytest.approx(1e-9) and D.values[-1] == 2.0
    assert check_stoch_dom(L, U, alpha=0, beta=0) and check_stoch_dom(D, L, alpha=0, beta=0)


def test_regrid_moves_outward():
    L = DiscretePLD([0.0, 0.013, 0.05], [0.3, 0.3, 0.4])
    U, D = regrid(L, 0.02, UPPER), regrid(L, 0.02, LOWER)
    assert check_stoch_dom(L, U, alpha=0, beta=0) and check_stoch_dom(U, L, alpha=0.02, beta=0)
    assert check_stoch_dom(D, L, alpha=0, beta=0) and check_stoch_dom(L, D, alpha=0.02, beta=0)


def test_input_validation(rr):
    with pytest.raises(ValueError):
        compose(rr, rr, 0.0, UPPER)
    with pytest.raises(ValueError):
        compose(rr, rr, 0.1, UPPER, method="fast")
    with pytest.raises(ValueError):
        self_compose(rr, 0, 0.1, UPPER)
