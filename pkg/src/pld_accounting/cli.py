"""Command-line front end.

Every subcommand builds a pipeline (mechanism plus transforms), evaluates
upper and/or lower bounds in the requested directions and prints a report
as JSON or CSV. Exit codes: 0 success, 2 invalid arguments, 3 numerical
domain errors such as an unreachable delta.
"""

import argparse
import csv
import io
import json
import sys
from typing import List, Optional

import numpy as np

from pld_accounting import oracle
from pld_accounting.core import (
    AdjacencyDirection,
    BoundDirection,
    DegenerateRange,
    IndeterminateSum,
    InvalidRealization,
    MismatchedGrids,
    NotArithmetic,
    OutOfRange,
    TightnessParams,
    TooLarge,
)
from pld_accounting.mechanisms import DiscretePair
from pld_accounting.pipeline import (
    AllocateStage,
    ComposeStage,
    GaussianStage,
    PairStage,
    PipelineSpec,
    SubsampleStage,
    compare_poisson,
    curve_rows,
    parse_choice,
    run_pipeline,
    stage_from_dict,
)

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 2, 3
DOMAIN_ERRORS = (OutOfRange, DegenerateRange, NotArithmetic, IndeterminateSum,
                 MismatchedGrids, TooLarge, InvalidRealization)
DEFAULT_EPSILONS = [float(e) for e in np.round(np.linspace(0.0, 5.0, 21), 10)]

# flag name -> config key; flags given on the command line override the file
FLAG_KEYS = ["sigma", "pair_file", "t", "k", "sampling_rate", "compositions", "epochs",
             "alpha", "beta", "epsilon", "delta", "direction", "bound", "out", "output_file",
             "emit_pld", "stages"]


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, mechanism: bool = True):
    if mechanism:
        p.add_argument("--sigma", type=float, help="Gaussian noise scale (sensitivity 1)")
        p.add_argument("--pair-file", help='JSON file {"p": [...], "q": [...]} of a dominating pair')
    p.add_argument("--alpha", type=float, help="grid width budget in nats (default 1e-3)")
    p.add_argument("--beta", type=float, help="tail mass budget (default 1e-10)")
    p.add_argument("--epsilon", type=float, nargs="+", help="epsilon values for delta(epsilon)")
    p.add_argument("--delta", type=float, nargs="+", help="delta values for epsilon(delta)")
    p.add_argument("--direction", choices=["add", "remove", "both"], help="adjacency direction (default both)")
    p.add_argument("--bound", choices=["upper", "lower", "both"], help="bound direction (default upper)")
    p.add_argument("--out", choices=["json", "csv"], help="output format (default json)")
    p.add_argument("--output-file", help="write the report here instead of stdout")
    p.add_argument("--config", help="JSON file with any of the above settings")
    p.add_argument("--emit-pld", action="store_true", default=None, help="include the PLDs in the JSON report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pld-accounting",
        description="Upper and lower PLD bounds for random allocation, Poisson subsampling and composition.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gaussian", help="PLD bounds of the Gaussian mechanism")
    _common(p)
    p = sub.add_parser("pair", help="PLD of a finite dominating pair")
    _common(p)
    p = sub.add_parser("allocate", help="k-out-of-t random allocation")
    _common(p)
    p.add_argument("--t", type=int, help="number of steps")
    p.add_argument("--k", type=int, help="steps each element takes part in (default 1)")
    p = sub.add_parser("subsample", help="Poisson subsampling")
    _common(p)
    p.add_argument("--sampling-rate", type=float, help="inclusion probability")
    p = sub.add_parser("compose", help="self-composition")
    _common(p)
    p.add_argument("--compositions", type=int, help="number of compositions")
    p = sub.add_parser("curve", help="delta(epsilon) curve of a general pipeline")
    _common(p)
    p.add_argument("--t", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--sampling-rate", type=float)
    p.add_argument("--compositions", type=int)
    p = sub.add_parser("preamble", help="allocation inside Poisson subsampling inside composition")
    _common(p)
    p.add_argument("--t", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--sampling-rate", type=float)
    p.add_argument("--compositions", type=int, help="rounds (default round(epochs / rate))")
    p.add_argument("--epochs", type=float, help="epochs E; rounds = E / sampling rate")
    p = sub.add_parser("compare-poisson", help="random allocation against Poisson subsampling with rate k/t")
    _common(p, mechanism=False)
    p.add_argument("--sigma", type=float)
    p.add_argument("--t", type=int)
    p.add_argument("--k", type=int)
    p = sub.add_parser("oracle")  # hidden debugging aid: exact and analytic reference values
    _common(p)
    p.add_argument("--t", type=int)
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "oracle"]
    return parser


def _settings(args: argparse.Namespace) -> dict:
    """Config file values overridden by explicitly given flags."""
    conf = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                conf = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}")
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
    for key in FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            conf[key] = v
    return conf


def _need(conf: dict, key: str, command: str):
    if conf.get(key) is None:
        raise UsageError(f"{command} needs --{key.replace('_', '-')}")
    return conf[key]


def _mechanism(conf: dict, command: str):
    if conf.get("sigma") is not None and conf.get("pair_file") is not None:
        raise UsageError("give either --sigma or --pair-file, not both")
    if conf.get("sigma") is not None:
        return GaussianStage(float(conf["sigma"]))
    if conf.get("pair_file") is not None:
        try:
            with open(conf["pair_file"]) as f:
                return PairStage(DiscretePair.from_json(f.read()))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read pair file: {e}")
    raise UsageError(f"{command} needs --sigma or --pair-file")


def _get(conf: dict, key: str, default):
    """conf[key] unless missing or None (an explicit 0 is kept)."""
    v = conf.get(key)
    return default if v is None else v


def _params(conf: dict) -> TightnessParams:
    return TightnessParams(float(_get(conf, "alpha", 1e-3)), float(_get(conf, "beta", 1e-10)))


def _as_list(x):
    if x is None:
        return []
    return list(x) if isinstance(x, (list, tuple)) else [x]


def build_spec(command: str, conf: dict) -> PipelineSpec:
    if command == "curve" and conf.get("stages"):
        stages = [stage_from_dict(s) for s in conf["stages"]]
    else:
        stages = [_mechanism(conf, command)]
        if command == "allocate":
            stages.append(AllocateStage(int(_need(conf, "t", command)), int(_get(conf, "k", 1))))
        elif command == "subsample":
            stages.append(SubsampleStage(float(_need(conf, "sampling_rate", command))))
        elif command == "compose":
            stages.append(ComposeStage(int(_need(conf, "compositions", command))))
        elif command in ("curve", "preamble"):
            if command == "preamble":
                for key in ("t", "sampling_rate"):
                    _need(conf, key, command)
                if conf.get("compositions") is None:
                    epochs = float(_need(conf, "epochs", command))
                    conf["compositions"] = max(1, int(round(epochs / float(conf["sampling_rate"]))))
            if conf.get("t") is not None:
                stages.append(AllocateStage(int(conf["t"]), int(_get(conf, "k", 1))))
            if conf.get("sampling_rate") is not None:
                stages.append(SubsampleStage(float(conf["sampling_rate"])))
            if conf.get("compositions") is not None:
                stages.append(ComposeStage(int(conf["compositions"])))
    epsilons = [float(e) for e in _as_list(conf.get("epsilon"))]
    deltas = [float(d) for d in _as_list(conf.get("delta"))]
    if command == "curve" and not epsilons:
        epsilons = list(DEFAULT_EPSILONS)
    if not epsilons and not deltas:
        epsilons = list(DEFAULT_EPSILONS)
    return PipelineSpec(
        stages,
        _params(conf),
        epsilons,
        deltas,
        bounds=parse_choice(conf.get("bound") or "upper", BoundDirection),
        directions=parse_choice(conf.get("direction") or "both", AdjacencyDirection),
    )


def _csv(rows: List[dict], columns: List[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: ("" if r.get(c) is None else r.get(c)) for c in columns})
    return buf.getvalue()


def _eps_rows(report: dict, spec: PipelineSpec) -> List[dict]:
    rows = []
    names = [a.value for a in spec.directions] + ["max"]
    for r in report["epsilon_of_delta"]:
        for name in names:
            suffix = "" if name == "max" else f"_{name}"
            rows.append({"delta": r["delta"], "epsilon_upper": r.get(f"epsilon_upper{suffix}"),
                         "epsilon_lower": r.get(f"epsilon_lower{suffix}"), "direction": name})
    return rows


def _emit(text: str, conf: dict):
    path = conf.get("output_file")
    if path:
        with open(path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False, default=float) + "\n"


def _run_oracle(conf: dict) -> dict:
    t = int(_get(conf, "t", 1))
    if conf.get("pair_file") is not None:
        stage = _mechanism(conf, "oracle")
        dirs = parse_choice(conf.get("direction") or "both", AdjacencyDirection)
        return {a.value: oracle.brute_force_alloc_pld(stage.pair, t, a).to_dict() for a in dirs}
    sigma = float(_need(conf, "sigma", "oracle"))
    out = {"sigma": sigma, "t": t, "alloc_exp_moment": oracle.gaussian_alloc_exp_moment(sigma, t)}
    out["delta"] = [{"epsilon": e, "delta": oracle.gaussian_delta_analytic(sigma, e)}
                    for e in _as_list(conf.get("epsilon"))]
    return out


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        conf = _settings(args)
        fmt = conf.get("out") or "json"
        if args.command == "oracle":
            _emit(_dumps(_run_oracle(conf)), conf)
            return EXIT_OK
        if args.command == "compare-poisson":
            deltas = _as_list(conf.get("delta")) or [1e-6]
            params = _params(conf)
            bounds = parse_choice(conf.get("bound") or "both", BoundDirection)
            sigma = float(_need(conf, "sigma", args.command))
            t = int(_need(conf, "t", args.command))
            k = int(_get(conf, "k", 1))
            if not 1 <= k <= t:
                raise UsageError("need 1 <= k <= t")
            rows = [compare_poisson(sigma, t, k, params, float(d), bounds) for d in deltas]
            if fmt == "csv":
                _emit(_csv(rows, list(rows[0].keys())), conf)
            else:
                _emit(_dumps(rows), conf)
            return EXIT_OK
        spec = build_spec(args.command, conf)
        report = run_pipeline(spec, include_plds=bool(conf.get("emit_pld")) and fmt == "json")
        if fmt == "csv":
            if spec.epsilons:
                text = _csv(curve_rows(report, spec), ["epsilon", "delta_upper", "delta_lower", "direction"])
            else:
                text = ""
            if spec.deltas:
                text += _csv(_eps_rows(report, spec), ["delta", "epsilon_upper", "epsilon_lower", "direction"])
            _emit(text, conf)
        else:
            _emit(_dumps(report), conf)
        return EXIT_OK
    except DOMAIN_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UsageError, ValueError, TypeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
