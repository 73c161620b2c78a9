"""Scenario definitions, the three-step trial protocol, and operating
characteristics over simulated replicates.

A simulated trial enrolls an interim cohort per indication, fits the
model, maps the posterior to interim actions (stop / enroll all-comers /
enroll biomarker-positives only), enrolls the remainder accordingly
(enrichment uses rejection sampling above the interim threshold
estimate), then refits on all data for the final actions, threshold
estimates and subgroup flags.  Indications stopped at interim keep
contributing their interim data to the final joint fit.

Replicates derive per-replicate seed streams from the base seed and
replicate index, so aggregated results do not depend on worker count or
execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.special import ndtr

from .decision import (
    DecisionConfig,
    FinalAction,
    InterimAction,
    IntervalSelection,
    estimate_threshold,
    identify_subgroup,
    map_final,
    map_interim,
    optimal_intervals,
)
from .model import Indication, Patient, PriorConfig, TrialData, overall_rate
from .rng import SeedLike, generator, seed_fingerprint, substream
from .sampler import PosteriorSamples, SamplerConfig, run_chain

__all__ = [
    "GaussianBiomarker",
    "IndicationScenario",
    "Scenario",
    "builtin_scenarios",
    "simulate_patients",
    "IndicationReport",
    "TrialReport",
    "analyze_data",
    "final_report_from_samples",
    "interim_analyze_data",
    "two_step_analysis",
    "run_trial",
    "OperatingCharacteristics",
    "operating_characteristics",
    "reference_actions",
]

# Rejection sampling gives up after this many proposals per indication.
_ENRICH_DRAW_CAP = 2_000_000


@dataclass(frozen=True)
class GaussianBiomarker:
    """Normal biomarker expression distribution (standard normal by default)."""

    mean: float = 0.0
    sd: float = 1.0

    def cdf(self, x: float) -> float:
        return float(ndtr((x - self.mean) / self.sd))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + self.sd * rng.standard_normal(size)


@dataclass(frozen=True)
class IndicationScenario:
    """Ground truth for one indication: split point and subgroup rates."""

    split_point: float
    rate_neg: float
    rate_pos: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.rate_neg <= self.rate_pos <= 1.0):
            raise ValueError("need 0 <= rate_neg <= rate_pos <= 1")


@dataclass(frozen=True)
class Scenario:
    """A simulation truth: per-indication rates, sizes and biomarker law."""

    name: str
    indications: tuple[IndicationScenario, ...]
    n_max: int = 50
    n_interim: int = 40
    biomarker: GaussianBiomarker = field(default_factory=GaussianBiomarker)

    def __post_init__(self) -> None:
        object.__setattr__(self, "indications", tuple(self.indications))
        if not self.indications:
            raise ValueError("scenario needs at least one indication")
        if not (0 < self.n_interim <= self.n_max):
            raise ValueError("need 0 < n_interim <= n_max")

    @property
    def n_indications(self) -> int:
        return len(self.indications)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f"ind{i + 1}" for i in range(self.n_indications))

    def overall_rate_for(self, index: int) -> float:
        ind = self.indications[index]
        return overall_rate(ind.rate_neg, ind.rate_pos, ind.split_point, self.biomarker.cdf)


def reference_actions(scenario: Scenario, config: DecisionConfig) -> tuple[FinalAction, ...]:
    """Final actions implied by the true rates (the zero-loss report)."""
    actions = []
    for i, ind in enumerate(scenario.indications):
        partition = config.partition_for(scenario.labels[i])
        actions.append(map_final(
            partition.interval_of(scenario.overall_rate_for(i)),
            partition.interval_of(ind.rate_pos),
            partition.interval_of(ind.rate_neg),
            partition,
        ))
    return tuple(actions)


# True split points per scenario-family suffix; scenario 4's second
# indication has a different positive rate under the alternative settings.
_SPLIT_SETS: dict[str, tuple[float, float, float]] = {
    "": (-0.1, 0.0, 0.1),
    "b": (0.0, 0.0, 0.0),
    "c": (-0.5, 0.0, 0.5),
}


def _scenario_rates(number: int, suffix: str) -> tuple[tuple[float, float], ...]:
    if number == 1:
        return ((0.05, 0.05),) * 3
    if number == 2:
        return ((0.2, 0.2),) * 3
    if number == 3:
        return ((0.1, 0.4),) * 3
    if number == 4:
        mid = (0.1, 0.4) if suffix == "" else (0.1, 0.5)
        return ((0.1, 0.4), mid, (0.1, 0.3))
    if number == 5:
        return ((0.4, 0.4), (0.4, 0.4), (0.1, 0.4))
    if number == 6:
        return ((0.2, 0.2), (0.1, 0.4), (0.1, 0.4))
    raise ValueError(f"no builtin scenario number {number}")


def builtin_scenarios() -> tuple[Scenario, ...]:
    """All 18 builtin scenarios: six rate patterns under three true
    split-point settings ("" = (-0.1, 0, 0.1), "b" = (0, 0, 0),
    "c" = (-0.5, 0, 0.5)), each with 3 indications, 50 patients maximum
    and an interim look after 40."""
    scenarios = []
    for suffix, split_points in _SPLIT_SETS.items():
        for number in range(1, 7):
            rates = _scenario_rates(number, suffix)
            scenarios.append(Scenario(
                name=f"{number}{suffix}",
                indications=tuple(
                    IndicationScenario(split_point=sp, rate_neg=neg, rate_pos=pos)
                    for sp, (neg, pos) in zip(split_points, rates)
                ),
            ))
    return tuple(scenarios)


def builtin_scenario(name: str) -> Scenario:
    for scenario in builtin_scenarios():
        if scenario.name == name:
            return scenario
    raise ValueError(f"unknown scenario {name!r}; known: "
                     f"{', '.join(s.name for s in builtin_scenarios())}")


def simulate_patients(scenario: Scenario, index: int, count: int,
                      rng: np.random.Generator) -> tuple[Patient, ...]:
    """Draw biomarkers from the scenario's law and responses from the
    subgroup the true split point assigns each patient to."""
    if count < 0:
        raise ValueError("count must be >= 0")
    ind = scenario.indications[index]
    xs = scenario.biomarker.sample(rng, count)
    probs = np.where(xs > ind.split_point, ind.rate_pos, ind.rate_neg)
    ys = rng.random(count) < probs
    return tuple(Patient(float(x), int(y)) for x, y in zip(xs, ys))


def _enrich_patients(scenario: Scenario, index: int, count: int, threshold: float,
                     rng: np.random.Generator) -> tuple[Patient, ...]:
    """Enroll `count` biomarker-positive patients by rejection sampling."""
    ind = scenario.indications[index]
    kept: list[float] = []
    drawn = 0
    while len(kept) < count:
        if drawn >= _ENRICH_DRAW_CAP:
            raise RuntimeError(
                f"enrichment sampling above threshold {threshold:.4g} for "
                f"{scenario.labels[index]} exceeded {_ENRICH_DRAW_CAP} proposals"
            )
        batch = max(count * 4, 64)
        xs = scenario.biomarker.sample(rng, batch)
        drawn += batch
        kept.extend(float(x) for x in xs if x > threshold)
    xs = np.array(kept[:count])
    probs = np.where(xs > ind.split_point, ind.rate_pos, ind.rate_neg)
    ys = rng.random(count) < probs
    return tuple(Patient(float(x), int(y)) for x, y in zip(xs, ys))


@dataclass(frozen=True)
class IndicationReport:
    """Everything reported for one indication; interim fields are None for
    final-only analyses and vice versa."""

    label: str
    n_enrolled: int
    prob_split: float
    final_action: Optional[FinalAction] = None
    final_selection: Optional[IntervalSelection] = None
    threshold: Optional[float] = None
    obs_size: Optional[int] = None
    subgroup_flag: Optional[bool] = None
    interim_action: Optional[InterimAction] = None
    interim_selection: Optional[IntervalSelection] = None
    interim_threshold: Optional[float] = None
    stopped_at_interim: bool = False
    enrichment_fallback: bool = False
    free_split_in_rerun: bool = False


@dataclass(frozen=True)
class TrialReport:
    """Per-indication decisions for one analyzed or simulated trial."""

    mode: str  # "final", "interim", "trial" or "two-step"
    indications: tuple[IndicationReport, ...]
    seed_id: str
    scenario: Optional[str] = None

    def indication(self, label: str) -> IndicationReport:
        for report in self.indications:
            if report.label == label:
                return report
        raise KeyError(label)


def _final_fields(samples: PosteriorSamples, data: TrialData,
                  config: DecisionConfig) -> list[dict]:
    rows = []
    for i, ind in enumerate(data.indications):
        partition = config.partition_for(ind.label)
        selection = optimal_intervals(samples, i, partition)
        action = map_final(selection.a_all, selection.a_pos, selection.a_neg, partition)
        threshold = estimate_threshold(samples, i, ind.patients, config, label=ind.label)
        obs_size = None
        if threshold is not None:
            obs_size = int(sum(1 for p in ind.patients if p.biomarker > threshold))
        rows.append(dict(
            label=ind.label,
            n_enrolled=ind.n_enrolled,
            prob_split=samples.prob_split(i),
            final_action=action,
            final_selection=selection,
            threshold=threshold,
            obs_size=obs_size,
            subgroup_flag=identify_subgroup(samples, i, config.flag_level),
        ))
    return rows


def final_report_from_samples(samples: PosteriorSamples, data: TrialData,
                              decision_config: DecisionConfig) -> TrialReport:
    """Derive the final decision report from an existing posterior sample."""
    rows = _final_fields(samples, data, decision_config)
    return TrialReport(
        mode="final",
        indications=tuple(IndicationReport(**row) for row in rows),
        seed_id=samples.seed_id,
    )


def analyze_data(data: TrialData, priors: PriorConfig, sampler_config: SamplerConfig,
                 decision_config: DecisionConfig, *,
                 seed: Optional[SeedLike] = None) -> TrialReport:
    """Fit the model on the full data and report final decisions."""
    samples = run_chain(data, priors, sampler_config, seed=seed)
    return final_report_from_samples(samples, data, decision_config)


def interim_analyze_data(data: TrialData, priors: PriorConfig,
                         sampler_config: SamplerConfig,
                         decision_config: DecisionConfig, *,
                         seed: Optional[SeedLike] = None) -> TrialReport:
    """Fit the model on interim data and report stop/continue actions."""
    samples = run_chain(data, priors, sampler_config, seed=seed)
    reports = []
    for i, ind in enumerate(data.indications):
        partition = decision_config.partition_for(ind.label)
        selection = optimal_intervals(samples, i, partition)
        action = map_interim(selection.a_all, selection.a_pos, selection.a_neg, partition)
        threshold = estimate_threshold(samples, i, ind.patients, decision_config,
                                       label=ind.label)
        reports.append(IndicationReport(
            label=ind.label,
            n_enrolled=ind.n_enrolled,
            prob_split=samples.prob_split(i),
            interim_action=action,
            interim_selection=selection,
            interim_threshold=threshold,
        ))
    return TrialReport(mode="interim", indications=tuple(reports),
                       seed_id=samples.seed_id)


def two_step_analysis(data: TrialData, priors: PriorConfig,
                      sampler_config: SamplerConfig, decision_config: DecisionConfig,
                      *, seed: Optional[SeedLike] = None) -> TrialReport:
    """Final analysis that reruns the chain conditional on the estimated
    thresholds.

    Step one is the standard fit, from which thresholds are estimated;
    step two refits with each indication's split point frozen at its
    estimate (hierarchical mean/scale updates disabled) and the decisions
    are recomputed from the second run.  Indications without split draws
    in step one keep a free split point and are flagged.
    """
    base = substream(sampler_config.seed if seed is None else seed)
    first = run_chain(data, priors, sampler_config, seed=substream(base, 0))
    fixed: list[Optional[float]] = []
    for i, ind in enumerate(data.indications):
        fixed.append(estimate_threshold(first, i, ind.patients, decision_config,
                                        label=ind.label))
    second = run_chain(data, priors, sampler_config, fixed_split=fixed,
                       seed=substream(base, 1))
    rows = _final_fields(second, data, decision_config)
    reports = []
    for i, row in enumerate(rows):
        if fixed[i] is not None:
            # decisions condition on the step-one threshold; report it
            row["threshold"] = fixed[i]
            row["obs_size"] = int(sum(
                1 for p in data.indications[i].patients if p.biomarker > fixed[i]))
        else:
            row["free_split_in_rerun"] = True
        reports.append(IndicationReport(**row))
    return TrialReport(mode="two-step", indications=tuple(reports),
                       seed_id=first.seed_id)


def run_trial(scenario: Scenario, priors: PriorConfig, sampler_config: SamplerConfig,
              decision_config: DecisionConfig, seed: SeedLike,
              *, two_step_final: bool = False) -> TrialReport:
    """Simulate one trial end to end: interim look, adaptive enrollment,
    final analysis.

    Stopped indications enroll no further patients but stay in the final
    joint fit with their interim data.  Enrichment (EP) enrolls only
    patients whose biomarker exceeds the interim threshold estimate; if
    that estimate is undefined the indication falls back to all-comers
    enrollment and is flagged.
    """
    base = substream(seed)
    enroll_rng = generator(base, 0)
    labels = scenario.labels

    interim_patients = [
        simulate_patients(scenario, i, scenario.n_interim, enroll_rng)
        for i in range(scenario.n_indications)
    ]
    interim_data = TrialData(tuple(
        Indication(labels[i], interim_patients[i], scenario.n_interim, scenario.n_max)
        for i in range(scenario.n_indications)
    ))
    interim_samples = run_chain(interim_data, priors, sampler_config,
                                seed=substream(base, 1))

    interim_rows = []
    for i, ind in enumerate(interim_data.indications):
        partition = decision_config.partition_for(ind.label)
        selection = optimal_intervals(interim_samples, i, partition)
        action = map_interim(selection.a_all, selection.a_pos, selection.a_neg, partition)
        threshold = estimate_threshold(interim_samples, i, ind.patients,
                                       decision_config, label=ind.label)
        interim_rows.append((action, selection, threshold))

    grow_rng = generator(base, 2)
    final_patients = []
    fallbacks = []
    for i in range(scenario.n_indications):
        action, _, threshold = interim_rows[i]
        extra: tuple[Patient, ...] = ()
        fallback = False
        n_extra = scenario.n_max - scenario.n_interim
        if action is InterimAction.ENROLL_ALL and n_extra > 0:
            extra = simulate_patients(scenario, i, n_extra, grow_rng)
        elif action is InterimAction.ENROLL_POSITIVE and n_extra > 0:
            if threshold is None:
                extra = simulate_patients(scenario, i, n_extra, grow_rng)
                fallback = True
            else:
                extra = _enrich_patients(scenario, i, n_extra, threshold, grow_rng)
        final_patients.append(interim_patients[i] + extra)
        fallbacks.append(fallback)

    final_data = TrialData(tuple(
        Indication(labels[i], final_patients[i], scenario.n_interim, scenario.n_max)
        for i in range(scenario.n_indications)
    ))
    if two_step_final:
        final_report = two_step_analysis(final_data, priors, sampler_config,
                                         decision_config, seed=substream(base, 3))
    else:
        final_report = analyze_data(final_data, priors, sampler_config,
                                    decision_config, seed=substream(base, 3))

    reports = []
    for i, report in enumerate(final_report.indications):
        action, selection, threshold = interim_rows[i]
        reports.append(IndicationReport(
            label=report.label,
            n_enrolled=report.n_enrolled,
            prob_split=report.prob_split,
            final_action=report.final_action,
            final_selection=report.final_selection,
            threshold=report.threshold,
            obs_size=report.obs_size,
            subgroup_flag=report.subgroup_flag,
            interim_action=action,
            interim_selection=selection,
            interim_threshold=threshold,
            stopped_at_interim=action is InterimAction.STOP,
            enrichment_fallback=fallbacks[i],
            free_split_in_rerun=report.free_split_in_rerun,
        ))
    return TrialReport(
        mode="two-step" if two_step_final else "trial",
        indications=tuple(reports),
        seed_id=seed_fingerprint(base),
        scenario=scenario.name,
    )


@dataclass(frozen=True)
class OperatingCharacteristics:
    """Replicate-aggregated decision frequencies for one scenario."""

    scenario: str
    n_reps: int
    labels: tuple[str, ...]
    final_pct: tuple[dict[FinalAction, float], ...]
    interim_pct: tuple[dict[InterimAction, float], ...]
    flag_rate: tuple[float, ...]
    thresholds: tuple[tuple[float, ...], ...]
    reference: tuple[FinalAction, ...]

    def final_rate(self, index: int, action: FinalAction) -> float:
        return self.final_pct[index][action]


def operating_characteristics(scenario: Scenario, n_reps: int, priors: PriorConfig,
                              sampler_config: SamplerConfig,
                              decision_config: DecisionConfig,
                              base_seed: SeedLike, *, n_jobs: int = 1,
                              two_step_final: bool = False) -> OperatingCharacteristics:
    """Aggregate `run_trial` over replicates.

    Replicate ``r`` runs on the seed stream derived from ``(base_seed,
    r)``, so results are identical for any ``n_jobs``.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    seeds = [substream(base_seed, rep) for rep in range(n_reps)]
    if n_jobs == 1:
        reports = [run_trial(scenario, priors, sampler_config, decision_config, s,
                             two_step_final=two_step_final) for s in seeds]
    else:
        reports = Parallel(n_jobs=n_jobs)(
            delayed(run_trial)(scenario, priors, sampler_config, decision_config, s,
                               two_step_final=two_step_final)
            for s in seeds
        )

    n_ind = scenario.n_indications
    final_pct = []
    interim_pct = []
    flag_rate = []
    thresholds = []
    for i in range(n_ind):
        final_counts = {action: 0 for action in FinalAction}
        interim_counts = {action: 0 for action in InterimAction}
        flags = 0
        t_values = []
        for report in reports:
            ind = report.indications[i]
            final_counts[ind.final_action] += 1
            interim_counts[ind.interim_action] += 1
            flags += int(bool(ind.subgroup_flag))
            if ind.threshold is not None:
                t_values.append(ind.threshold)
        final_pct.append({a: 100.0 * c / n_reps for a, c in final_counts.items()})
        interim_pct.append({a: 100.0 * c / n_reps for a, c in interim_counts.items()})
        flag_rate.append(100.0 * flags / n_reps)
        thresholds.append(tuple(t_values))
    return OperatingCharacteristics(
        scenario=scenario.name,
        n_reps=n_reps,
        labels=scenario.labels,
        final_pct=tuple(final_pct),
        interim_pct=tuple(interim_pct),
        flag_rate=tuple(flag_rate),
        thresholds=tuple(thresholds),
        reference=reference_actions(scenario, decision_config),
    )
