"""Accounting pipelines: a mechanism followed by allocation, subsampling and
composition stages, evaluated in both adjacency directions and both bound
directions.

The remove and add states of a pipeline are always each other's dual, so
the remove-direction transforms take their dual from the add state of the
opposite bound direction (a lower bound on the dual keeps an upper bound on
the remove loss valid, and vice versa).
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple, Union

from pld_accounting.allocation import (
    AllocationParams,
    rand_alloc_add,
    rand_alloc_k,
    rand_alloc_k_direction,
    rand_alloc_remove,
)
from pld_accounting.composition import compose_calls, resolve_infinities, self_compose
from pld_accounting.core import (
    AdjacencyDirection,
    BoundDirection,
    DiscretePLD,
    PLDError,
    TightnessParams,
    discretize,
    epsilon_for_delta,
    hockey_stick_delta,
)
from pld_accounting.mechanisms import (
    DiscretePair,
    DiscreteSource,
    GaussianPLDSource,
    PLDSource,
    pair_sources,
)
from pld_accounting.subsampling import (
    SamplingRate,
    SubsampledGaussianSource,
    subsample_add,
    subsample_remove,
)

UPPER, LOWER = BoundDirection.UPPER, BoundDirection.LOWER
REMOVE, ADD = AdjacencyDirection.REMOVE, AdjacencyDirection.ADD


# stages

@dataclass(frozen=True)
class GaussianStage:
    sigma: float
    kind = "gaussian"

    def to_dict(self):
        return {"type": self.kind, "sigma": self.sigma}


@dataclass(frozen=True)
class PairStage:
    pair: DiscretePair
    kind = "pair"

    def to_dict(self):
        return {"type": self.kind, **self.pair.to_dict()}


@dataclass(frozen=True)
class AllocateStage:
    t: int
    k: int = 1
    kind = "allocate"

    def to_dict(self):
        return {"type": self.kind, "t": self.t, "k": self.k}


@dataclass(frozen=True)
class SubsampleStage:
    rate: float
    kind = "subsample"

    def to_dict(self):
        return {"type": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class ComposeStage:
    m: int
    kind = "compose"

    def to_dict(self):
        return {"type": self.kind, "m": self.m}


Stage = Union[GaussianStage, PairStage, AllocateStage, SubsampleStage, ComposeStage]
MECHANISMS = (GaussianStage, PairStage)


def stage_from_dict(d: dict) -> Stage:
    kind = d.get("type")
    try:
        if kind == "gaussian":
            return GaussianStage(float(d["sigma"]))
        if kind == "pair":
            if "file" in d:
                with open(d["file"]) as f:
                    return PairStage(DiscretePair.from_json(f.read()))
            return PairStage(DiscretePair.from_dict(d))
        if kind == "allocate":
            return AllocateStage(int(d["t"]), int(d.get("k", 1)))
        if kind == "subsample":
            return SubsampleStage(float(d["rate"]))
        if kind == "compose":
            return ComposeStage(int(d["m"]))
    except KeyError as e:
        raise ValueError(f"stage {kind!r} is missing field {e}") from None
    raise ValueError(f"unknown stage type {kind!r}")


@dataclass
class PipelineSpec:
    """A mechanism stage followed by transform stages, plus queries."""

    stages: List[Stage]
    tightness: TightnessParams = field(default_factory=lambda: TightnessParams(1e-3, 1e-10))
    epsilons: Sequence[float] = ()
    deltas: Sequence[float] = ()
    bounds: Tuple[BoundDirection, ...] = (UPPER, LOWER)
    directions: Tuple[AdjacencyDirection, ...] = (REMOVE, ADD)

    def __post_init__(self):
        if not self.stages:
            raise ValueError("a pipeline needs at least one stage")
        if not isinstance(self.stages[0], MECHANISMS):
            raise ValueError("the first stage must be a mechanism (gaussian or pair)")
        for i, s in enumerate(self.stages[1:], 1):
            if isinstance(s, MECHANISMS):
                raise ValueError(f"stage {i}: only the first stage may be a mechanism")
            if isinstance(s, AllocateStage) and not (1 <= s.k <= s.t):
                raise ValueError(f"stage {i}: allocation needs 1 <= k <= t")
            if isinstance(s, SubsampleStage) and not 0.0 <= s.rate <= 1.0:
                raise ValueError(f"stage {i}: sampling rate must lie in [0, 1]")
            if isinstance(s, ComposeStage) and s.m < 1:
                raise ValueError(f"stage {i}: compositions must be positive")

    @property
    def budget_shares(self) -> int:
        """Number of stages that consume (alpha, beta) budget."""
        n = sum(isinstance(s, (AllocateStage, ComposeStage)) for s in self.stages)
        if isinstance(self.stages[0], GaussianStage) and not (
                len(self.stages) > 1 and isinstance(self.stages[1], AllocateStage)):
            n += 1  # the analytic source is discretized on its own
        return max(n, 1)

    def to_dict(self) -> dict:
        return {
            "stages": [s.to_dict() for s in self.stages],
            "alpha": self.tightness.alpha,
            "beta": self.tightness.beta,
            "epsilon": list(self.epsilons),
            "delta": list(self.deltas),
            "bound": [b.value for b in self.bounds],
            "direction": [d.value for d in self.directions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSpec":
        def as_list(x):
            return list(x) if isinstance(x, (list, tuple)) else [x]
        bounds = d.get("bound", ["upper", "lower"])
        dirs = d.get("direction", ["remove", "add"])
        return cls(
            stages=[stage_from_dict(s) for s in d.get("stages", [])],
            tightness=TightnessParams(float(d.get("alpha", 1e-3)), float(d.get("beta", 1e-10))),
            epsilons=[float(e) for e in as_list(d.get("epsilon", []))],
            deltas=[float(x) for x in as_list(d.get("delta", []))],
            bounds=parse_choice(bounds, BoundDirection),
            directions=parse_choice(dirs, AdjacencyDirection),
        )


def parse_choice(value, enum_cls) -> tuple:
    """'both', a single name, or a list of names -> tuple of enum members."""
    names = value if isinstance(value, (list, tuple)) else [value]
    out = []
    for n in names:
        if n == "both":
            out.extend(enum_cls)
        else:
            out.append(enum_cls(n))
    return tuple(dict.fromkeys(out))


# evaluation

State = Dict[Tuple[AdjacencyDirection, BoundDirection], Union[PLDSource, DiscretePLD]]


def _as_pld(x, params: TightnessParams, dir: BoundDirection) -> DiscretePLD:
    return x if isinstance(x, DiscretePLD) else discretize(x, params, dir)


def _as_source(x) -> PLDSource:
    return DiscreteSource(x) if isinstance(x, DiscretePLD) else x


def _initial_state(stage: Stage) -> State:
    if isinstance(stage, GaussianStage):
        g = GaussianPLDSource(stage.sigma)
        return {(a, b): g for a in (REMOVE, ADD) for b in (UPPER, LOWER)}
    rem, add = pair_sources(stage.pair)
    return {(REMOVE, b): rem.pld for b in (UPPER, LOWER)} | {(ADD, b): add.pld for b in (UPPER, LOWER)}


def _allocate(state: State, stage: AllocateStage, budget: TightnessParams, keys) -> State:
    out = {}
    for a, b in keys:
        if a is REMOVE:
            rem = _as_source(state[(REMOVE, b)])
            dual = _as_source(state[(ADD, b.flip())])
            if stage.k == 1:
                out[(a, b)] = rand_alloc_remove(rem, stage.t, budget, b, dual_source=dual)
            else:
                alloc = AllocationParams(stage.t, stage.k, budget)
                out[(a, b)] = rand_alloc_k_direction(rem, alloc, b, REMOVE, dual)
        else:
            add = _as_source(state[(ADD, b)])
            if stage.k == 1:
                out[(a, b)] = rand_alloc_add(add, stage.t, budget, b)
            else:
                alloc = AllocationParams(stage.t, stage.k, budget)
                out[(a, b)] = rand_alloc_k_direction(add, alloc, b, ADD)
    return out


def _subsample(state: State, stage: SubsampleStage, budget: TightnessParams, keys) -> State:
    rate = SamplingRate(stage.rate)
    plds = {key: _as_pld(v, budget, key[1]) for key, v in state.items()}
    out = {}
    for a, b in keys:
        if a is REMOVE:
            # the Q-law of the remove loss is the negated dual; bound it the same way
            out[(a, b)] = subsample_remove(plds[(REMOVE, b)], rate, dual=plds[(ADD, b.flip())])
        else:
            out[(a, b)] = subsample_add(plds[(ADD, b)], rate)
    return out


def _compose(state: State, stage: ComposeStage, budget: TightnessParams, keys) -> State:
    trunc = budget.beta / max(compose_calls(stage.m), 1)
    out = {}
    for key in keys:
        L = resolve_infinities(_as_pld(state[key], budget, key[1]), key[1])
        out[key] = self_compose(L, stage.m, budget.alpha, key[1], trunc_beta=trunc)
    return out


def evaluate(spec: PipelineSpec) -> Dict[Tuple[AdjacencyDirection, BoundDirection], DiscretePLD]:
    """Runs the stages; returns bounds keyed by (adjacency, bound direction).

    With a single transform stage only the requested bounds are computed;
    longer pipelines need every state as a dual for the next stage.
    """
    shares = spec.budget_shares
    budget = TightnessParams(spec.tightness.alpha / shares, spec.tightness.beta / shares)
    state = _initial_state(spec.stages[0])
    every = [(a, b) for a in (REMOVE, ADD) for b in (UPPER, LOWER)]
    wanted = [(a, b) for a in spec.directions for b in spec.bounds]
    last = len(spec.stages) - 1
    for i, stage in enumerate(spec.stages[1:], 1):
        keys = wanted if last == 1 else every
        try:
            if isinstance(stage, AllocateStage):
                state = _allocate(state, stage, budget, keys)
            elif isinstance(stage, SubsampleStage):
                state = _subsample(state, stage, budget, keys)
            else:
                state = _compose(state, stage, budget, keys)
        except PLDError as e:
            raise type(e)(f"stage {i} ({stage.kind}): {e}") from e
    return {key: _as_pld(state[key], budget, key[1]) for key in wanted}


def _max_over(values):
    vals = [v for v in values if v is not None]
    return max(vals) if vals else None


def build_report(spec: PipelineSpec, plds, include_plds: bool = False) -> dict:
    """delta(epsilon) and epsilon(delta) per direction plus the max over directions."""
    curve = []
    for eps in spec.epsilons:
        row = {"epsilon": eps}
        for b in spec.bounds:
            per = {a: hockey_stick_delta(plds[(a, b)], eps) for a in spec.directions}
            for a, v in per.items():
                row[f"delta_{b.value}_{a.value}"] = v
            row[f"delta_{b.value}"] = _max_over(per.values())
        curve.append(row)
    eps_rows = []
    for delta in spec.deltas:
        row = {"delta": delta}
        for b in spec.bounds:
            per = {a: epsilon_for_delta(plds[(a, b)], delta) for a in spec.directions}
            for a, v in per.items():
                row[f"epsilon_{b.value}_{a.value}"] = v
            row[f"epsilon_{b.value}"] = _max_over(per.values())
        eps_rows.append(row)
    report = {"spec": spec.to_dict(), "delta_of_epsilon": curve, "epsilon_of_delta": eps_rows}
    if include_plds:
        report["plds"] = {f"{b.value}_{a.value}": plds[(a, b)].to_dict()
                          for a in spec.directions for b in spec.bounds}
    return report


def run_pipeline(spec: PipelineSpec, include_plds: bool = False) -> dict:
    return build_report(spec, evaluate(spec), include_plds)


def curve_rows(report: dict, spec: PipelineSpec) -> List[dict]:
    """CSV rows: epsilon, delta_upper, delta_lower, direction (remove, add or max)."""
    rows = []
    names = [a.value for a in spec.directions] + ["max"]
    for r in report["delta_of_epsilon"]:
        for name in names:
            suffix = "" if name == "max" else f"_{name}"
            rows.append({
                "epsilon": r["epsilon"],
                "delta_upper": r.get(f"delta_upper{suffix}", ""),
                "delta_lower": r.get(f"delta_lower{suffix}", ""),
                "direction": name,
            })
    return rows


# allocation against Poisson subsampling

def allocation_bounds(sigma: float, t: int, k: int, params: TightnessParams,
                      bounds=(UPPER, LOWER)) -> Dict[Tuple[AdjacencyDirection, BoundDirection], DiscretePLD]:
    """k-out-of-t random allocation of the Gaussian mechanism, both directions."""
    g = GaussianPLDSource(sigma)
    out = {}
    for b in bounds:
        if k == 1:
            out[(REMOVE, b)] = rand_alloc_remove(g, t, params, b)
            out[(ADD, b)] = rand_alloc_add(g, t, params, b)
        else:
            out[(REMOVE, b)], out[(ADD, b)] = rand_alloc_k(g, g, AllocationParams(t, k, params), b)
    return out


def poisson_bounds(sigma: float, t: int, k: int, params: TightnessParams,
                   bounds=(UPPER, LOWER)) -> Dict[Tuple[AdjacencyDirection, BoundDirection], DiscretePLD]:
    """t-fold composition of the Gaussian mechanism Poisson-subsampled at rate k/t.

    Each step's loss is discretized from its analytic distribution with step
    alpha / t, so the t-fold composition is off by at most alpha; half of
    beta covers the per-step tails and half the truncations between squarings.
    """
    lam = k / t
    h = params.alpha / t
    disc = TightnessParams(h, params.beta / (2 * t))
    trunc = params.beta / (2 * max(compose_calls(t), 1))
    out = {}
    for a in (REMOVE, ADD):
        src = GaussianPLDSource(sigma) if lam >= 1 else SubsampledGaussianSource(sigma, SamplingRate(lam), a)
        for b in bounds:
            L = resolve_infinities(discretize(src, disc, b), b)
            out[(a, b)] = self_compose(L, t, params.alpha, b, trunc_beta=trunc, method="fft") if t > 1 else L
    return out


def compare_poisson(sigma: float, t: int, k: int, params: TightnessParams, delta: float,
                    bounds=(UPPER, LOWER)) -> dict:
    """epsilon(delta) of random allocation and of Poisson subsampling, per direction."""
    alloc = allocation_bounds(sigma, t, k, params, bounds)
    pois = poisson_bounds(sigma, t, k, params, bounds)
    report = {"sigma": sigma, "t": t, "k": k, "alpha": params.alpha, "beta": params.beta, "delta": delta}
    for name, plds in (("alloc", alloc), ("poisson", pois)):
        for b in bounds:
            per = {a: epsilon_for_delta(plds[(a, b)], delta) for a in (REMOVE, ADD)}
            for a, v in per.items():
                report[f"epsilon_{name}_{b.value}_{a.value}"] = v
            report[f"epsilon_{name}_{b.value}"] = max(per.values())
    return report


def preamble_spec(sigma: float, t: int, k: int, rate: float, compositions: int,
                  params: TightnessParams, epsilons=(), deltas=()) -> PipelineSpec:
    """Random allocation inside Poisson subsampling inside composition."""
    return PipelineSpec(
        [GaussianStage(sigma), AllocateStage(t, k), SubsampleStage(rate), ComposeStage(compositions)],
        params, list(epsilons), list(deltas))


def load_spec_file(path: str) -> dict:
    with open(path) as f:
        return json.load(f)
