"""Upper and lower bounds on privacy loss distributions.

Discretized PLD bounds for the Gaussian mechanism and finite dominating
pairs, random allocation (k out of t steps), Poisson subsampling and
composition, together with delta(epsilon) and epsilon(delta) queries.
"""

from pld_accounting.core import (
    AdjacencyDirection,
    BoundDirection,
    DegenerateRange,
    DiscretePLD,
    IndeterminateSum,
    InvalidDistribution,
    InvalidRealization,
    MismatchedGrids,
    NotArithmetic,
    OutOfRange,
    PLDError,
    TightnessParams,
    TooLarge,
    check_stoch_dom,
    combine_bounds,
    discretize,
    epsilon_for_delta,
    hockey_stick_delta,
    pld_dual,
)
from pld_accounting.mechanisms import (
    DiscretePair,
    GaussianMechanism,
    GaussianPLDSource,
    discrete_pair_pld,
    gaussian_pld_source,
    randomized_response,
)
from pld_accounting.allocation import (
    AllocationParams,
    rand_alloc_add,
    rand_alloc_k,
    rand_alloc_remove,
)
from pld_accounting.subsampling import (
    SamplingRate,
    SubsampledGaussianSource,
    subsample_add,
    subsample_remove,
)
from pld_accounting.composition import compose, self_compose
from pld_accounting.pipeline import PipelineSpec, compare_poisson, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "AdjacencyDirection",
    "BoundDirection",
    "DegenerateRange",
    "DiscretePLD",
    "IndeterminateSum",
    "InvalidDistribution",
    "InvalidRealization",
    "MismatchedGrids",
    "NotArithmetic",
    "OutOfRange",
    "PLDError",
    "TightnessParams",
    "TooLarge",
    "check_stoch_dom",
    "combine_bounds",
    "discretize",
    "epsilon_for_delta",
    "hockey_stick_delta",
    "pld_dual",
    "DiscretePair",
    "GaussianMechanism",
    "GaussianPLDSource",
    "discrete_pair_pld",
    "gaussian_pld_source",
    "randomized_response",
    "AllocationParams",
    "rand_alloc_add",
    "rand_alloc_k",
    "rand_alloc_remove",
    "SamplingRate",
    "SubsampledGaussianSource",
    "subsample_add",
    "subsample_remove",
    "compose",
    "self_compose",
    "PipelineSpec",
    "compare_poisson",
    "run_pipeline",
]
