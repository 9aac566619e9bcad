"""Command-line interface.

Subcommands:
  bounds      run the tasks configured in a JSON file (flags override fields)
  verify      run one named identity/consistency check against a model
  experiment  canned sweeps (currently: be-sweep over a list of n)

Exit codes: 0 success, 1 a verification check failed, 2 config error,
3 a domination check failed in exact mode.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from . import bounds as bnd
from . import distances as dst
from . import exchangeable as ex
from . import harness
from .distributions import iid_model, rademacher, standardize, sum_law, StateCapError
from .harness import ConfigError, ExperimentConfig

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DOMINATION = 3

VERIFY_CHECKS = ("characterization", "discrepancy", "regression", "antisymmetry",
                 "zero_bias_identity", "generator")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="64-bit RNG seed (required somewhere)")
    parser.add_argument("--reps", type=int, default=None, help="Monte Carlo repetitions")
    parser.add_argument("--out", type=str, default=None, help="output path (default: stdout)")
    parser.add_argument("--format", choices=("json", "csv"), default=None)
    parser.add_argument("--threads", type=int, default=None, help="worker cap, recorded in reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stein-bounds",
                                     description="Normal-approximation bounds and checks")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_bounds = sub.add_parser("bounds", help="run configured bound/check tasks")
    p_bounds.add_argument("--config", type=str, default=None, help="JSON config path")
    p_bounds.add_argument("--model", type=str, default=None,
                          help="model shorthand, e.g. iid-rademacher")
    p_bounds.add_argument("--n", type=int, default=None)
    p_bounds.add_argument("--tasks", type=str, default=None, help="comma-separated task names")
    _add_common(p_bounds)

    p_verify = sub.add_parser("verify", help="run one named identity check")
    p_verify.add_argument("check", choices=VERIFY_CHECKS)
    p_verify.add_argument("--model", type=str, default="iid-rademacher")
    p_verify.add_argument("--n", type=int, default=10)
    _add_common(p_verify)

    p_exp = sub.add_parser("experiment", help="canned sweeps")
    p_exp.add_argument("name", choices=("be-sweep",))
    p_exp.add_argument("--n", type=str, required=True, help="comma-separated list, e.g. 10,100,1000")
    _add_common(p_exp)
    return parser


def _model_spec(args) -> dict:
    if args.model in ("iid-rademacher", None):
        return {"kind": "iid-rademacher", "n": args.n or 10}
    if args.model.startswith("combinatorial-random"):
        return {"kind": "combinatorial-random", "n": args.n or 5, "seed": args.seed or 0}
    if args.model in ("gaussian-linear", "gaussian-quadratic"):
        return {"kind": args.model, "n": args.n or 8}
    raise ConfigError(f"unknown model shorthand {args.model!r}")


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _cmd_bounds(args) -> int:
    overrides = {
        "seed": args.seed,
        "reps": args.reps,
        "out": args.out,
        "format": args.format,
        "threads": args.threads,
    }
    if args.tasks:
        overrides["tasks"] = [t.strip() for t in args.tasks.split(",") if t.strip()]
    if args.model or args.n:
        overrides["model"] = _model_spec(args)
    if args.config:
        config = ExperimentConfig.from_json(args.config, overrides)
    else:
        data = {k: v for k, v in overrides.items() if v is not None}
        if "model" not in data or "tasks" not in data or "seed" not in data:
            raise ConfigError("without --config, provide --model/--n, --tasks and --seed")
        config = ExperimentConfig.from_dict(data)
    report = harness.run(config)
    text = report.to_csv() if config.format == "csv" else report.to_json()
    _emit(text, config.out)
    if report.any_exact_domination_failure():
        return EXIT_DOMINATION
    return EXIT_OK


def _cmd_verify(args) -> int:
    if args.seed is None:
        raise ConfigError("verify needs an explicit --seed")
    config = ExperimentConfig(
        model=_model_spec(args),
        tasks=(args.check,),
        seed=args.seed,
        reps=args.reps or 100_000,
        threads=args.threads or 1,
    )
    report = harness.run(config)
    _emit(report.to_json(), args.out)
    if report.errors:
        return EXIT_CHECK_FAILED
    failed = [r for r in report.residuals if r.get("pass") is False]
    failed += [r for r in report.residuals
               if "within_dw_bound" in r and not r["within_dw_bound"]]
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _cmd_experiment(args) -> int:
    if args.name != "be-sweep":
        raise ConfigError(f"unknown experiment {args.name!r}")
    if args.seed is None:
        raise ConfigError("experiment needs an explicit --seed")
    try:
        sizes = [int(tok) for tok in args.n.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse --n list {args.n!r}") from None
    if not sizes:
        raise ConfigError("empty --n list")
    reps = args.reps or 100_000
    reports = []
    streams = np.random.SeedSequence(args.seed).spawn(len(sizes))
    for n, stream in zip(sizes, streams):
        rng = np.random.Generator(np.random.PCG64(stream))
        model = standardize(iid_model(rademacher(1.0), n))
        report = bnd.be_iid(1.0, 1.0, n)
        try:
            law = sum_law(model)
        except StateCapError:
            law = None
        if law is not None and n <= 4096:
            report = bnd.attach_empirical(report, dst.kolmogorov_exact(law), "exact")
        else:
            total = np.zeros(reps)
            for comp in model.components:
                total += comp.sample(rng, reps)
            est = dst.distances_mc(dst.EmpiricalSample(total, seed=args.seed))
            report = bnd.attach_empirical(report, est.d_k, "monte_carlo",
                                          std_err=est.dkw_width / 3.0)
        reports.append(report)
    if (args.format or "json") == "csv":
        _emit(bnd.reports_to_csv(reports), args.out)
    else:
        _emit(json.dumps([bnd.report_to_json(r) for r in reports], indent=2), args.out)
    if any(r.dominates is False and r.distance_mode == "exact" for r in reports):
        return EXIT_DOMINATION
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "bounds":
            return _cmd_bounds(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_experiment(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
