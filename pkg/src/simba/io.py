"""Dataset ingestion, flat config files, and report serialization.

Formats are versioned (``format_version`` = 1) and deterministic: the
same inputs and seed always produce byte-identical files.

Dataset CSV: header ``indication,biomarker,response``; one patient per
row, grouped by first appearance of the indication label, file order
preserved.

Config files are flat ``key = value`` text (``#`` comments allowed).
Unknown keys are rejected rather than silently ignored.  Per-indication
decision overrides use ``key.LABEL``, e.g. ``lrv.pancreatic = 0.03``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .decision import (
    DecisionConfig,
    FinalAction,
    IndicationRule,
    InterimAction,
    IntervalSelection,
)
from .model import (
    FixedSplitPrior,
    HalfCauchyPrior,
    Indication,
    InverseGammaPrior,
    Patient,
    PriorConfig,
    TrialData,
)
from .sampler import PosteriorSamples, SamplerConfig
from .simulate import IndicationReport, OperatingCharacteristics, TrialReport

__all__ = [
    "FORMAT_VERSION",
    "DataError",
    "ConfigError",
    "RunConfig",
    "parse_dataset",
    "parse_config",
    "parse_config_values",
    "build_run_config",
    "effective_config_lines",
    "write_report",
    "read_report",
    "write_oc_tables",
    "write_samples",
    "read_samples",
]

FORMAT_VERSION = 1

DATASET_HEADER = ("indication", "biomarker", "response")

MODES = ("analyze", "interim", "simulate", "two-step", "oc-report")
VARIANTS = ("simba", "nb", "two-step")
SPLIT_PRIOR_KINDS = ("half_cauchy", "inverse_gamma", "fixed")


class DataError(ValueError):
    """Malformed or missing input data."""


class ConfigError(ValueError):
    """Malformed configuration."""


def parse_dataset(path: Union[str, Path]) -> TrialData:
    """Read patient records from CSV into trial data.

    Raises DataError naming the offending line for malformed rows.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    groups: dict[str, list[Patient]] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if tuple(h.strip().lower() for h in header) != DATASET_HEADER:
            raise DataError(
                f"{path}:1: expected header {','.join(DATASET_HEADER)}, "
                f"got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            label = row[0].strip()
            if not label:
                raise DataError(f"{path}:{lineno}: empty indication label")
            try:
                biomarker = float(row[1])
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: biomarker {row[1]!r} is not a number"
                ) from None
            if row[2].strip() not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: response {row[2]!r} must be 0 or 1")
            try:
                patient = Patient(biomarker, int(row[2]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            groups.setdefault(label, []).append(patient)
    if not groups:
        raise DataError(f"{path}: no patient rows")
    return TrialData(tuple(
        Indication(label, tuple(patients), n_interim=len(patients), n_max=len(patients))
        for label, patients in groups.items()
    ))


# key -> (type tag, default); per-indication keys marked with "rule".
_PRIOR_KEYS = {
    "beta_a": 1.0, "beta_b": 1.0,
    "theta_pool_mean": -2.3, "theta_pool_sd": 10.0,
    "theta_neg_mean": -2.3, "theta_neg_sd": 2.0,
    "gap_shape": 30.0, "gap_rate": 21.5,
    "split_mean_sd": 2.0,
    "split_scale": 2.5,
    "split_ig_shape": 1.0, "split_ig_scale": 1.0,
    "split_fixed_mean": 0.0, "split_fixed_sd": 3.0,
}
_SAMPLER_FLOAT_KEYS = {
    "step_theta_pool": 0.5, "step_theta_neg": 0.5, "step_gap": 0.5,
    "step_shift": 0.5, "step_split_point": 0.5, "step_split_sd": 0.5,
}
_SAMPLER_INT_KEYS = {"iterations": 4000, "burn_in": 2000, "thin": 1, "seed": 0}
_DECISION_KEYS = {"lrv": 0.1, "tv": 0.3, "w1": 0.2, "w2": 0.5, "flag_level": 0.98}
_RULE_KEYS = ("lrv", "tv", "width")
_STR_KEYS = {
    "split_prior": SPLIT_PRIOR_KINDS,
    "variant": VARIANTS,
    "mode": MODES,
}
_FREE_STR_KEYS = ("data", "out", "scenario")
_INT_KEYS = {"reps": 200, "threads": 1}
_BOOL_KEYS = {"adapt": True}
_OPTIONAL_FLOAT_KEYS = ("width",)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run settings: model, sampler, decisions, and mode."""

    priors: PriorConfig
    sampler: SamplerConfig
    decision: DecisionConfig
    variant: str = "simba"
    mode: Optional[str] = None
    data: Optional[str] = None
    scenario: Optional[str] = None
    reps: int = 200
    out: Optional[str] = None
    threads: int = 1


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _STR_KEYS:
        allowed = _STR_KEYS[key]
        if raw not in allowed:
            raise ConfigError(f"{key}: expected one of {allowed}, got {raw!r}")
        return raw
    if key in _FREE_STR_KEYS:
        return raw
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key in _SAMPLER_INT_KEYS or key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def parse_config_values(path: Union[str, Path]
                        ) -> tuple[dict[str, object], dict[str, dict[str, float]]]:
    """Read a flat config file into (values, per-indication rule overrides)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, object] = {}
    rules: dict[str, dict[str, float]] = {}
    known = (set(_PRIOR_KEYS) | set(_SAMPLER_FLOAT_KEYS) | set(_SAMPLER_INT_KEYS)
             | set(_DECISION_KEYS) | set(_STR_KEYS) | set(_FREE_STR_KEYS)
             | set(_INT_KEYS) | set(_BOOL_KEYS) | set(_OPTIONAL_FLOAT_KEYS))
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in text.split("=", 1))
            if not raw:
                continue  # blank value means "leave at default"
            base, _, label = key.partition(".")
            if label:
                if base not in _RULE_KEYS:
                    raise ConfigError(
                        f"{path}:{lineno}: unknown per-indication key {base!r}"
                    )
                rules.setdefault(label, {})[base] = _parse_value(base, raw)
                continue
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, raw)
    return values, rules


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Parse a flat config file; unset keys take the documented defaults."""
    values, rules = parse_config_values(path)
    try:
        return build_run_config(values, rules)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_run_config(values: Mapping[str, object],
                     rule_overrides: Optional[Mapping[str, Mapping[str, float]]] = None
                     ) -> RunConfig:
    """Assemble a RunConfig from flat key/value settings plus defaults."""
    def get(key, default):
        return values.get(key, default)

    variant = str(get("variant", "simba"))
    kind = str(get("split_prior", "half_cauchy"))
    if variant == "nb":
        kind = "fixed"
    if kind == "half_cauchy":
        split_prior = HalfCauchyPrior(scale=float(get("split_scale", 2.5)))
    elif kind == "inverse_gamma":
        split_prior = InverseGammaPrior(shape=float(get("split_ig_shape", 1.0)),
                                        scale=float(get("split_ig_scale", 1.0)))
    else:
        split_prior = FixedSplitPrior(mean=float(get("split_fixed_mean", 0.0)),
                                      sd=float(get("split_fixed_sd", 3.0)))
    priors = PriorConfig(
        beta_a=float(get("beta_a", 1.0)),
        beta_b=float(get("beta_b", 1.0)),
        theta_pool_mean=float(get("theta_pool_mean", -2.3)),
        theta_pool_sd=float(get("theta_pool_sd", 10.0)),
        theta_neg_mean=float(get("theta_neg_mean", -2.3)),
        theta_neg_sd=float(get("theta_neg_sd", 2.0)),
        gap_shape=float(get("gap_shape", 30.0)),
        gap_rate=float(get("gap_rate", 21.5)),
        split_mean_sd=float(get("split_mean_sd", 2.0)),
        split_prior=split_prior,
    )
    sampler = SamplerConfig(
        iterations=int(get("iterations", 4000)),
        burn_in=int(get("burn_in", 2000)),
        thin=int(get("thin", 1)),
        seed=int(get("seed", 0)),
        step_theta_pool=float(get("step_theta_pool", 0.5)),
        step_theta_neg=float(get("step_theta_neg", 0.5)),
        step_gap=float(get("step_gap", 0.5)),
        step_shift=float(get("step_shift", 0.5)),
        step_split_point=float(get("step_split_point", 0.5)),
        step_split_sd=float(get("step_split_sd", 0.5)),
        adapt=bool(get("adapt", True)),
    )
    default_rule = IndicationRule(
        lrv=float(get("lrv", 0.1)),
        tv=float(get("tv", 0.3)),
        width=float(values["width"]) if "width" in values else None,
    )
    default_rule.partition()  # validate eagerly
    rules = {}
    for label, fields in (rule_overrides or {}).items():
        rule = IndicationRule(
            lrv=float(fields.get("lrv", default_rule.lrv)),
            tv=float(fields.get("tv", default_rule.tv)),
            width=float(fields["width"]) if "width" in fields else default_rule.width,
        )
        rule.partition()
        rules[label] = rule
    decision = DecisionConfig(
        default_rule=default_rule,
        rules=rules,
        w1=float(get("w1", 0.2)),
        w2=float(get("w2", 0.5)),
        flag_level=float(get("flag_level", 0.98)),
    )
    mode = get("mode", None)
    return RunConfig(
        priors=priors,
        sampler=sampler,
        decision=decision,
        variant=variant,
        mode=str(mode) if mode is not None else None,
        data=str(values["data"]) if "data" in values else None,
        scenario=str(values["scenario"]) if "scenario" in values else None,
        reps=int(get("reps", 200)),
        out=str(values["out"]) if "out" in values else None,
        threads=int(get("threads", 1)),
    )


def _split_prior_dict(priors: PriorConfig) -> dict:
    sp = priors.split_prior
    if isinstance(sp, HalfCauchyPrior):
        return {"split_prior": "half_cauchy", "split_scale": sp.scale}
    if isinstance(sp, InverseGammaPrior):
        return {"split_prior": "inverse_gamma", "split_ig_shape": sp.shape,
                "split_ig_scale": sp.scale}
    return {"split_prior": "fixed", "split_fixed_mean": sp.mean,
            "split_fixed_sd": sp.sd}


def _priors_dict(priors: PriorConfig) -> dict:
    out = {
        "beta_a": priors.beta_a, "beta_b": priors.beta_b,
        "theta_pool_mean": priors.theta_pool_mean,
        "theta_pool_sd": priors.theta_pool_sd,
        "theta_neg_mean": priors.theta_neg_mean,
        "theta_neg_sd": priors.theta_neg_sd,
        "gap_shape": priors.gap_shape, "gap_rate": priors.gap_rate,
        "split_mean_sd": priors.split_mean_sd,
    }
    out.update(_split_prior_dict(priors))
    return out


def _sampler_dict(config: SamplerConfig) -> dict:
    return {
        "iterations": config.iterations, "burn_in": config.burn_in,
        "thin": config.thin,
        "seed": config.seed if isinstance(config.seed, int) else None,
        "step_theta_pool": config.step_theta_pool,
        "step_theta_neg": config.step_theta_neg,
        "step_gap": config.step_gap,
        "step_shift": config.step_shift,
        "step_split_point": config.step_split_point,
        "step_split_sd": config.step_split_sd,
        "adapt": config.adapt,
    }


def _decision_dict(config: DecisionConfig) -> dict:
    out = {
        "lrv": config.default_rule.lrv, "tv": config.default_rule.tv,
        "width": config.default_rule.width,
        "w1": config.w1, "w2": config.w2, "flag_level": config.flag_level,
        "rules": {label: {"lrv": rule.lrv, "tv": rule.tv, "width": rule.width}
                  for label, rule in sorted(config.rules.items())},
    }
    return out


def effective_config_lines(run: RunConfig) -> list[str]:
    """Every resolved model/sampler/decision value as 'key = value' lines.

    Execution-only knobs (threads, output paths) are excluded so outputs
    stay byte-identical across worker counts.
    """
    lines = [f"format_version = {FORMAT_VERSION}", f"variant = {run.variant}"]
    if run.scenario is not None:
        lines.append(f"scenario = {run.scenario}")
    if run.data is not None:
        lines.append(f"data = {run.data}")
    lines.append(f"reps = {run.reps}")
    for key, value in _priors_dict(run.priors).items():
        lines.append(f"{key} = {value}")
    for key, value in _sampler_dict(run.sampler).items():
        lines.append(f"{key} = {value}")
    decision = _decision_dict(run.decision)
    rules = decision.pop("rules")
    for key, value in decision.items():
        if value is not None:
            lines.append(f"{key} = {value}")
    for label, rule in rules.items():
        for key, value in rule.items():
            if value is not None:
                lines.append(f"{key}.{label} = {value}")
    return lines


def _selection_dict(selection: Optional[IntervalSelection]) -> Optional[dict]:
    if selection is None:
        return None
    return {
        "a_all": selection.a_all, "a_pos": selection.a_pos, "a_neg": selection.a_neg,
        "model": selection.model,
        "pooled_fill": selection.pooled_fill, "split_fill": selection.split_fill,
    }


def _selection_from(data: Optional[dict]) -> Optional[IntervalSelection]:
    if data is None:
        return None
    return IntervalSelection(**data)


def report_to_dict(report: TrialReport) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "trial_report",
        "mode": report.mode,
        "scenario": report.scenario,
        "seed_id": report.seed_id,
        "indications": [
            {
                "label": ind.label,
                "n_enrolled": ind.n_enrolled,
                "prob_split": ind.prob_split,
                "final_action": ind.final_action.value if ind.final_action else None,
                "final_selection": _selection_dict(ind.final_selection),
                "threshold": ind.threshold,
                "obs_size": ind.obs_size,
                "subgroup_flag": ind.subgroup_flag,
                "interim_action": ind.interim_action.value if ind.interim_action else None,
                "interim_selection": _selection_dict(ind.interim_selection),
                "interim_threshold": ind.interim_threshold,
                "stopped_at_interim": ind.stopped_at_interim,
                "enrichment_fallback": ind.enrichment_fallback,
                "free_split_in_rerun": ind.free_split_in_rerun,
            }
            for ind in report.indications
        ],
    }


def report_from_dict(data: Mapping) -> TrialReport:
    if data.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported report format_version {data.get('format_version')}")
    indications = []
    for ind in data["indications"]:
        indications.append(IndicationReport(
            label=ind["label"],
            n_enrolled=ind["n_enrolled"],
            prob_split=ind["prob_split"],
            final_action=FinalAction(ind["final_action"]) if ind["final_action"] else None,
            final_selection=_selection_from(ind["final_selection"]),
            threshold=ind["threshold"],
            obs_size=ind["obs_size"],
            subgroup_flag=ind["subgroup_flag"],
            interim_action=(InterimAction(ind["interim_action"])
                            if ind["interim_action"] else None),
            interim_selection=_selection_from(ind["interim_selection"]),
            interim_threshold=ind["interim_threshold"],
            stopped_at_interim=ind["stopped_at_interim"],
            enrichment_fallback=ind["enrichment_fallback"],
            free_split_in_rerun=ind["free_split_in_rerun"],
        ))
    return TrialReport(
        mode=data["mode"],
        indications=tuple(indications),
        seed_id=data["seed_id"],
        scenario=data["scenario"],
    )


def write_report(report: TrialReport, outdir: Union[str, Path],
                 run: Optional[RunConfig] = None) -> list[Path]:
    """Write report.json, summary.csv and (when given) the effective config."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    json_path = outdir / "report.json"
    payload = report_to_dict(report)
    if run is not None:
        payload["effective_config"] = effective_config_lines(run)
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    paths.append(json_path)

    csv_path = outdir / "summary.csv"
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([
            "label", "n_enrolled", "interim_action", "final_action",
            "a_all", "a_pos", "a_neg", "model", "threshold", "obs_size",
            "prob_split", "subgroup_flag", "stopped_at_interim",
        ])
        for ind in report.indications:
            selection = ind.final_selection or ind.interim_selection
            writer.writerow([
                ind.label, ind.n_enrolled,
                ind.interim_action.value if ind.interim_action else "",
                ind.final_action.value if ind.final_action else "",
                selection.a_all if selection else "",
                selection.a_pos if selection else "",
                selection.a_neg if selection else "",
                selection.model if selection else "",
                _fmt(ind.threshold), ind.obs_size if ind.obs_size is not None else "",
                _fmt(ind.prob_split),
                int(ind.subgroup_flag) if ind.subgroup_flag is not None else "",
                int(ind.stopped_at_interim),
            ])
    paths.append(csv_path)
    if run is not None:
        cfg_path = outdir / "effective_config.txt"
        cfg_path.write_text("\n".join(effective_config_lines(run)) + "\n")
        paths.append(cfg_path)
    return paths


def read_report(path: Union[str, Path]) -> TrialReport:
    with open(path) as handle:
        return report_from_dict(json.load(handle))


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_oc_tables(results: Sequence[tuple[str, OperatingCharacteristics]],
                    outdir: Union[str, Path],
                    run: Optional[RunConfig] = None) -> list[Path]:
    """Write the aggregated decision table and the threshold samples.

    ``results`` pairs a variant label (e.g. "simba", "nb") with the
    aggregated operating characteristics of one scenario.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary_path = outdir / "oc_summary.csv"
    with open(summary_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["scenario", "variant", "indication", "n_reps", "reference"]
            + [f"pct_{a.value}" for a in FinalAction]
            + [f"pct_interim_{a.value}" for a in InterimAction]
            + ["flag_rate", "n_thresholds"]
        )
        for variant, oc in results:
            for i, label in enumerate(oc.labels):
                writer.writerow(
                    [oc.scenario, variant, label, oc.n_reps, oc.reference[i].value]
                    + [_fmt(oc.final_pct[i][a]) for a in FinalAction]
                    + [_fmt(oc.interim_pct[i][a]) for a in InterimAction]
                    + [_fmt(oc.flag_rate[i]), len(oc.thresholds[i])]
                )
    thresholds_path = outdir / "oc_thresholds.csv"
    with open(thresholds_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["scenario", "variant", "indication", "threshold"])
        for variant, oc in results:
            for i, label in enumerate(oc.labels):
                for value in oc.thresholds[i]:
                    writer.writerow([oc.scenario, variant, label, _fmt(value)])
    paths = [summary_path, thresholds_path]
    if run is not None:
        cfg_path = outdir / "effective_config.txt"
        cfg_path.write_text("\n".join(effective_config_lines(run)) + "\n")
        paths.append(cfg_path)
    return paths


def samples_to_dict(samples: PosteriorSamples) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "posterior_samples",
        "labels": list(samples.labels),
        "seed_id": samples.seed_id,
        "acceptance_rates": {k: (None if np.isnan(v) else v)
                             for k, v in samples.acceptance_rates.items()},
        "config": _sampler_dict(samples.config),
        "priors": _priors_dict(samples.priors),
        "draws": {
            "prob_pooled": samples.prob_pooled.tolist(),
            "pooled": samples.pooled.astype(int).tolist(),
            "theta_pool": samples.theta_pool.tolist(),
            "theta_neg": samples.theta_neg.tolist(),
            "gap": samples.gap.tolist(),
            "split_point": samples.split_point.tolist(),
            "split_mean": samples.split_mean.tolist(),
            "split_sd": samples.split_sd.tolist(),
        },
    }


def samples_from_dict(data: Mapping) -> PosteriorSamples:
    if data.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported samples format_version {data.get('format_version')}")
    cfg = dict(data["config"])
    if cfg.get("seed") is None:
        cfg["seed"] = 0
    run = build_run_config({**data["priors"], **cfg})
    draws = data["draws"]
    return PosteriorSamples(
        labels=tuple(data["labels"]),
        prob_pooled=np.asarray(draws["prob_pooled"], dtype=float),
        pooled=np.asarray(draws["pooled"], dtype=bool),
        theta_pool=np.asarray(draws["theta_pool"], dtype=float),
        theta_neg=np.asarray(draws["theta_neg"], dtype=float),
        gap=np.asarray(draws["gap"], dtype=float),
        split_point=np.asarray(draws["split_point"], dtype=float),
        split_mean=np.asarray(draws["split_mean"], dtype=float),
        split_sd=np.asarray(draws["split_sd"], dtype=float),
        acceptance_rates={k: (float("nan") if v is None else v)
                          for k, v in data["acceptance_rates"].items()},
        config=run.sampler,
        priors=run.priors,
        seed_id=data["seed_id"],
    )


def write_samples(samples: PosteriorSamples, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(samples_to_dict(samples), sort_keys=True) + "\n")
    return path


def read_samples(path: Union[str, Path]) -> PosteriorSamples:
    with open(path) as handle:
        return samples_from_dict(json.load(handle))
