import math

import numpy as np
import pytest
from scipy import stats

from pld_accounting.core import AdjacencyDirection, DiscretePLD, InvalidDistribution
from pld_accounting.mechanisms import (
    DiscretePair,
    DiscreteSource,
    GaussianMechanism,
    GaussianPLDSource,
    discrete_pair_pld,
    gaussian_pld_source,
    pair_sources,
    randomized_response,
)

REMOVE = AdjacencyDirection.REMOVE
ADD = AdjacencyDirection.ADD
LN3 = math.log(3.0)


def test_gaussian_source_quantiles():
    g = gaussian_pld_source(GaussianMechanism(1.0))
    assert g.quantile(0.5) == pytest.approx(0.5, abs=1e-15)
    assert g.cdf(0.5) == pytest.approx(0.5, abs=1e-15)
    g2 = GaussianPLDSource(2.0)
    assert g2.quantile(stats.norm.cdf(1.0)) == pytest.approx(0.625, abs=1e-12)


def test_gaussian_source_tails_are_accurate():
    g = GaussianPLDSource(1.0)
    assert g.sf(g.isf(1e-300)) == pytest.approx(1e-300, rel=1e-8)
    assert g.cdf(g.quantile(1e-200)) == pytest.approx(1e-200, rel=1e-8)
    assert g.dual() is g


def test_gaussian_rejects_bad_sigma():
    with pytest.raises(ValueError):
        GaussianMechanism(0.0)
    with pytest.raises(ValueError):
        GaussianPLDSource(-1.0)


def test_pair_pld_examples():
    L = discrete_pair_pld(randomized_response(0.75), REMOVE)
    np.testing.assert_allclose(L.values, [-LN3, LN3], atol=1e-15)
    np.testing.assert_allclose(L.probs, [0.25, 0.75], atol=1e-15)
    same = discrete_pair_pld(DiscretePair([0.3, 0.7], [0.3, 0.7]), REMOVE)
    np.testing.assert_allclose(same.values, [0.0])
    single = discrete_pair_pld(DiscretePair([1.0, 0.0], [0.5, 0.5]), REMOVE)
    np.testing.assert_allclose(single.values, [math.log(2)])
    np.testing.assert_allclose(single.probs, [1.0])


def test_pair_pld_add_has_top_atom_for_q_only_outcomes():
    pair = DiscretePair([1.0, 0.0], [0.5, 0.5])
    A = discrete_pair_pld(pair, ADD)
    assert A.p_top == pytest.approx(0.5)
    np.testing.assert_allclose(A.values, [-math.log(2)])


def test_pair_validation():
    with pytest.raises(InvalidDistribution):
        DiscretePair([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(InvalidDistribution):
        DiscretePair([0.5, 0.5], [1.0])
    with pytest.raises(InvalidDistribution):
        DiscretePair.from_dict({"p": [1.0]})


def test_pair_json_round_trip():
    pair = DiscretePair([0.2, 0.8], [0.6, 0.4], outcomes=("a", "b"))
    back = DiscretePair.from_json('{"p": [0.2, 0.8], "q": [0.6, 0.4], "outcomes": ["a", "b"]}')
    np.testing.assert_array_equal(back.p, pair.p)
    assert back.to_dict() == pair.to_dict()


def test_pair_sources_are_mutual_duals():
    rem, add = pair_sources(DiscretePair([0.6, 0.3, 0.1], [0.2, 0.3, 0.5]))
    assert rem.dual() is add and add.dual() is rem


def test_discrete_source_dual_is_pld_dual():
    src = DiscreteSource(DiscretePLD([0.0, math.log(2)], [0.5, 0.5]))
    D = src.dual().pld
    np.testing.assert_allclose(D.values, [-math.log(2), 0.0])
    np.testing.assert_allclose(D.probs, [0.25, 0.5])
    assert D.p_top == pytest.approx(0.25)


def test_discrete_source_quantiles():
    src = DiscreteSource(DiscretePLD([0.0, 1.0, 2.0], [0.2, 0.5, 0.3]))
    assert src.quantile(0.1) == 0.0
    assert src.quantile(0.2) == 0.0
    assert src.quantile(0.21) == 1.0
    assert src.isf(0.3) == 1.0
    assert src.isf(0.0) == 2.0
    assert src.sf(1.0) == pytest.approx(0.3)
