import json
import math

import numpy as np
import pytest

from pld_accounting import oracle
from pld_accounting.core import (
    AdjacencyDirection,
    BoundDirection,
    OutOfRange,
    TightnessParams,
    discretize,
    epsilon_for_delta,
)
from pld_accounting.mechanisms import GaussianPLDSource, randomized_response
from pld_accounting.pipeline import (
    AllocateStage,
    ComposeStage,
    GaussianStage,
    PairStage,
    PipelineSpec,
    SubsampleStage,
    compare_poisson,
    curve_rows,
    evaluate,
    parse_choice,
    preamble_spec,
    run_pipeline,
    stage_from_dict,
)

UPPER = BoundDirection.UPPER
LOWER = BoundDirection.LOWER
REMOVE = AdjacencyDirection.REMOVE
ADD = AdjacencyDirection.ADD


def test_spec_validation():
    with pytest.raises(ValueError):
        PipelineSpec([])
    with pytest.raises(ValueError):
        PipelineSpec([AllocateStage(2)])
    with pytest.raises(ValueError):
        PipelineSpec([GaussianStage(1.0), GaussianStage(2.0)])
    with pytest.raises(ValueError):
        PipelineSpec([GaussianStage(1.0), AllocateStage(2, 3)])
    with pytest.raises(ValueError):
        PipelineSpec([GaussianStage(1.0), SubsampleStage(1.5)])


def test_budget_shares():
    assert PipelineSpec([GaussianStage(1.0)]).budget_shares == 1
    assert PipelineSpec([GaussianStage(1.0), AllocateStage(4)]).budget_shares == 1
    assert PipelineSpec([GaussianStage(1.0), SubsampleStage(0.1), ComposeStage(3)]).budget_shares == 2
    assert preamble_spec(1.0, 16, 2, 0.5, 2, TightnessParams(1e-2, 1e-10)).budget_shares == 2
    assert PipelineSpec([PairStage(randomized_response(0.7)), SubsampleStage(0.5)]).budget_shares == 1


def test_spec_dict_round_trip():
    spec = preamble_spec(2.0, 16, 2, 0.5, 2, TightnessParams(1e-2, 1e-9), epsilons=[1.0], deltas=[1e-5])
    back = PipelineSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert back.to_dict() == spec.to_dict()
    pair = stage_from_dict({"type": "pair", "p": [0.75, 0.25], "q": [0.25, 0.75]})
    np.testing.assert_allclose(pair.pair.p, [0.75, 0.25])
    with pytest.raises(ValueError):
        stage_from_dict({"type": "shuffle"})
    with pytest.raises(ValueError):
        stage_from_dict({"type": "allocate"})


def test_parse_choice():
    assert parse_choice("both", BoundDirection) == (UPPER, LOWER)
    assert parse_choice(["add"], AdjacencyDirection) == (ADD,)
    with pytest.raises(ValueError):
        parse_choice("sideways", AdjacencyDirection)


def test_identity_allocation_matches_plain_gaussian():
    params = TightnessParams(1e-3, 1e-10)
    spec = PipelineSpec([GaussianStage(1.0), AllocateStage(1)], params, deltas=[1e-6], bounds=(UPPER,))
    eps = run_pipeline(spec)["epsilon_of_delta"][0]["epsilon_upper"]
    plain = epsilon_for_delta(discretize(GaussianPLDSource(1.0), params, UPPER), 1e-6)
    assert eps == pytest.approx(plain, abs=1e-12)
    # the exact Gaussian curve sits within one grid step
    assert oracle.gaussian_delta_analytic(1.0, eps) <= 1e-6 + 1e-12
    assert oracle.gaussian_delta_analytic(1.0, eps - 1e-3) >= 1e-6 - 1e-10


def test_rr_t2_brackets_exact_value():
    spec = PipelineSpec([PairStage(randomized_response(0.75)), AllocateStage(2)],
                        TightnessParams(1e-4, 1e-12), epsilons=[0.0])
    row = run_pipeline(spec)["delta_of_epsilon"][0]
    assert row["delta_lower"] <= 0.375 <= row["delta_upper"]
    assert row["delta_upper"] - row["delta_lower"] < 1e-4
    for a in ("remove", "add"):
        assert row[f"delta_lower_{a}"] <= 0.375 + 1e-15 <= row[f"delta_upper_{a}"] + 2e-15


def test_preamble_smoke_monotone():
    params = TightnessParams(1e-2, 1e-10)
    prev = None
    for sigma in (1.0, 2.0, 4.0):
        report = run_pipeline(preamble_spec(sigma, 16, 2, 0.5, 2, params, epsilons=[0.5, 1.0]))
        d = [r["delta_upper"] for r in report["delta_of_epsilon"]]
        lo = [r["delta_lower"] for r in report["delta_of_epsilon"]]
        assert all(a <= b for a, b in zip(lo, d))
        if prev is not None:
            assert all(a < b for a, b in zip(d, prev))
        prev = d


def test_curve_rows_are_consistent():
    eps = [0.0, 0.25, 0.5, 1.0, 2.0]
    spec = PipelineSpec([GaussianStage(2.0), SubsampleStage(0.2), ComposeStage(5)],
                        TightnessParams(1e-2, 1e-10), epsilons=eps)
    report = run_pipeline(spec)
    rows = curve_rows(report, spec)
    assert len(rows) == len(eps) * 3
    for name in ("remove", "add", "max"):
        sel = [r for r in rows if r["direction"] == name]
        up = [r["delta_upper"] for r in sel]
        lo = [r["delta_lower"] for r in sel]
        assert all(a >= b for a, b in zip(up, up[1:]))
        assert all(a >= b for a, b in zip(lo, lo[1:]))
        assert all(l <= u for l, u in zip(lo, up))


def test_reports_are_reproducible():
    spec = PipelineSpec([GaussianStage(1.5), AllocateStage(8, 2)], TightnessParams(1e-2, 1e-10),
                        epsilons=[0.5], deltas=[1e-5])
    assert json.dumps(run_pipeline(spec)) == json.dumps(run_pipeline(spec))


def test_emitted_plds_round_trip():
    spec = PipelineSpec([PairStage(randomized_response(0.75)), AllocateStage(3)],
                        TightnessParams(1e-3, 0.0), epsilons=[0.1])
    report = run_pipeline(spec, include_plds=True)
    assert set(report["plds"]) == {"upper_remove", "lower_remove", "upper_add", "lower_add"}


def test_stage_errors_carry_the_index():
    spec = PipelineSpec([GaussianStage(1.0), SubsampleStage(0.5), ComposeStage(2)], TightnessParams(1e-2, 0.0),
                        epsilons=[1.0])
    with pytest.raises(OutOfRange, match="stage 1"):
        evaluate(spec)


def test_only_requested_bounds_are_computed():
    spec = PipelineSpec([GaussianStage(1.0), AllocateStage(4)], TightnessParams(1e-2, 1e-10),
                        bounds=(UPPER,), directions=(ADD,), epsilons=[1.0])
    assert set(evaluate(spec)) == {(ADD, UPPER)}


def test_compare_poisson_without_sampling():
    params = TightnessParams(1e-3, 1e-10)
    r = compare_poisson(1.0, 1, 1, params, 1e-6)
    plain = epsilon_for_delta(discretize(GaussianPLDSource(1.0), params, UPPER), 1e-6)
    assert r["epsilon_alloc_upper"] == pytest.approx(plain, abs=1e-12)
    assert r["epsilon_poisson_upper"] == pytest.approx(plain, abs=1e-3)
    assert r["epsilon_alloc_lower"] <= r["epsilon_alloc_upper"]


def test_compare_poisson_small_t():
    r = compare_poisson(1.0, 4, 1, TightnessParams(1e-3, 1e-10), 1e-5)
    for name in ("alloc", "poisson"):
        assert r[f"epsilon_{name}_lower"] <= r[f"epsilon_{name}_upper"] <= r[f"epsilon_{name}_lower"] + 5e-3
    assert math.isfinite(r["epsilon_poisson_upper_add"])
