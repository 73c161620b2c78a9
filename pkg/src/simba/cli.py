"""Command-line front end: analyze / interim / simulate / oc-report.

Exit codes: 0 success, 2 usage error, 3 data or config error,
4 numerical failure.  Progress goes to stderr; results go to stdout and,
with --out, to files.  The only environment dependence is the optional
SIMBA_SEED variable, used when neither --seed nor the config file sets a
seed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .io import (
    ConfigError,
    DataError,
    RunConfig,
    build_run_config,
    parse_config_values,
    parse_dataset,
    write_oc_tables,
    write_report,
)
from .rng import substream
from .simulate import (
    analyze_data,
    builtin_scenario,
    builtin_scenarios,
    interim_analyze_data,
    operating_characteristics,
    two_step_analysis,
)

USAGE_ERROR, DATA_ERROR, NUMERIC_ERROR = 2, 3, 4

_VARIANT_ORDER = ("simba", "nb", "two-step")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _add_common(parser: argparse.ArgumentParser, with_data: bool) -> None:
    parser.add_argument("--config", type=Path, help="flat key=value config file")
    if with_data:
        parser.add_argument("--data", type=Path, required=True,
                            help="patient CSV (indication,biomarker,response)")
    parser.add_argument("--out", type=Path, help="output directory for report files")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--variant", choices=_VARIANT_ORDER,
                        help="simba (hierarchical), nb (no borrowing) or two-step")
    parser.add_argument("--gamma", type=float,
                        help="half-Cauchy scale of the split-point prior")
    parser.add_argument("--w1", type=float, help="negative-subgroup size penalty weight")
    parser.add_argument("--w2", type=float, help="positive-rate shortfall penalty weight")
    parser.add_argument("--threads", type=int, help="replicate parallelism cap")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simba",
        description="Basket-trial subgroup analysis and simulation.",
        epilog="Environment: SIMBA_SEED supplies a default seed when no "
               "--seed flag or config seed is given.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="final analysis of a dataset")
    _add_common(p_analyze, with_data=True)

    p_interim = sub.add_parser("interim", help="interim stop/continue analysis")
    _add_common(p_interim, with_data=True)

    p_sim = sub.add_parser("simulate", help="operating characteristics by simulation")
    _add_common(p_sim, with_data=False)
    p_sim.add_argument("--scenario", help="builtin scenario name or 'all'")
    p_sim.add_argument("--reps", type=int, help="replicates per scenario")

    p_report = sub.add_parser("oc-report", help="merge simulate output tables")
    p_report.add_argument("--input", type=Path, nargs="+", required=True,
                          help="directories containing oc_summary.csv")
    p_report.add_argument("--out", type=Path, help="directory for the merged table")
    return parser


def _resolve(args: argparse.Namespace) -> tuple[RunConfig, dict, dict]:
    values, rules = {}, {}
    if args.config is not None:
        values, rules = parse_config_values(args.config)
    overrides = {
        "seed": args.seed,
        "variant": args.variant,
        "split_scale": args.gamma,
        "w1": args.w1,
        "w2": args.w2,
        "threads": args.threads,
        "scenario": getattr(args, "scenario", None),
        "reps": getattr(args, "reps", None),
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if "seed" not in values and "SIMBA_SEED" in os.environ:
        try:
            values["seed"] = int(os.environ["SIMBA_SEED"])
        except ValueError:
            raise ConfigError(f"SIMBA_SEED must be an integer, "
                              f"got {os.environ['SIMBA_SEED']!r}") from None
    try:
        return build_run_config(values, rules), values, rules
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _cmd_analyze(args: argparse.Namespace, interim: bool) -> int:
    run, _, _ = _resolve(args)
    data = parse_dataset(args.data)
    _log(f"{'interim' if interim else 'final'} analysis of {args.data} "
         f"({data.n_indications} indications, variant {run.variant})")
    if interim:
        report = interim_analyze_data(data, run.priors, run.sampler, run.decision)
    elif run.variant == "two-step":
        report = two_step_analysis(data, run.priors, run.sampler, run.decision)
    else:
        report = analyze_data(data, run.priors, run.sampler, run.decision)
    for ind in report.indications:
        selection = ind.final_selection or ind.interim_selection
        action = ind.interim_action if interim else ind.final_action
        threshold = ind.interim_threshold if interim else ind.threshold
        parts = [
            f"{ind.label}: {action.value}",
            f"intervals=({selection.a_all},{selection.a_pos},{selection.a_neg})",
            f"model={selection.model}",
            f"threshold={'none' if threshold is None else f'{threshold:.4f}'}",
            f"P(split)={ind.prob_split:.3f}",
        ]
        if not interim and ind.obs_size is not None:
            parts.append(f"obs_size={ind.obs_size}")
        print("  ".join(parts))
    if args.out is not None:
        paths = write_report(report, args.out, run)
        _log("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    run, values, rules = _resolve(args)
    if run.scenario is None:
        raise ConfigError("simulate needs --scenario (a builtin name or 'all')")
    if run.scenario == "all":
        scenarios = list(builtin_scenarios())
    else:
        try:
            scenarios = [builtin_scenario(name.strip())
                         for name in run.scenario.split(",")]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    # default: both the hierarchical and no-borrowing variants, side by side
    variants = [run.variant] if "variant" in values else ["simba", "nb"]

    all_names = [s.name for s in builtin_scenarios()]
    base_seed = run.sampler.seed
    results = []
    for scenario in scenarios:
        for variant in variants:
            variant_run = build_run_config({**values, "variant": variant}, rules)
            tag = (all_names.index(scenario.name), _VARIANT_ORDER.index(variant))
            _log(f"scenario {scenario.name} variant {variant}: {run.reps} reps "
                 f"on {run.threads} worker(s)")
            oc = operating_characteristics(
                scenario, run.reps, variant_run.priors, variant_run.sampler,
                variant_run.decision, substream(base_seed, *tag),
                n_jobs=run.threads, two_step_final=(variant == "two-step"),
            )
            results.append((variant, oc))
    for variant, oc in results:
        for i, label in enumerate(oc.labels):
            best = oc.reference[i]
            print(f"scenario {oc.scenario} {variant} {label}: "
                  + "  ".join(f"{a.value}={oc.final_pct[i][a]:.1f}%"
                              for a in oc.final_pct[i])
                  + f"  flag={oc.flag_rate[i]:.1f}%  optimal={best.value}")
    if args.out is not None:
        paths = write_oc_tables(results, args.out, run)
        _log("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_oc_report(args: argparse.Namespace) -> int:
    rows = []
    header: Optional[list[str]] = None
    for directory in args.input:
        path = Path(directory) / "oc_summary.csv"
        if not path.exists():
            raise DataError(f"no oc_summary.csv in {directory}")
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            this_header = next(reader, None)
            if this_header is None:
                raise DataError(f"{path}: empty file")
            if header is None:
                header = this_header
            elif this_header != header:
                raise DataError(f"{path}: header differs from {args.input[0]}")
            rows.extend(reader)
    assert header is not None
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        merged = args.out / "oc_summary.csv"
        with open(merged, "w", newline="") as handle:
            out = csv.writer(handle, lineterminator="\n")
            out.writerow(header)
            out.writerows(rows)
        _log(f"wrote {merged}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            return _cmd_analyze(args, interim=False)
        if args.command == "interim":
            return _cmd_analyze(args, interim=True)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "oc-report":
            return _cmd_oc_report(args)
        parser.error(f"unknown command {args.command}")
    except (DataError, ConfigError) as exc:
        _log(f"error: {exc}")
        return DATA_ERROR
    except (ArithmeticError, RuntimeError) as exc:
        _log(f"numerical failure: {exc}")
        return NUMERIC_ERROR
    return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
