"""Bayesian basket-trial design with per-indication biomarker threshold
subgroups: hierarchical model, MCMC, decision rules, and trial simulator."""

from .decision import (
    DecisionConfig,
    FinalAction,
    IndicationRule,
    InfeasibleActionError,
    InterimAction,
    IntervalSelection,
    RatePartition,
    build_partition,
    estimate_threshold,
    identify_subgroup,
    map_final,
    map_interim,
    optimal_intervals,
    threshold_expected_loss,
)
from .estimator import SimbaAnalysis
from .model import (
    FixedSplitPrior,
    HalfCauchyPrior,
    Indication,
    InverseGammaPrior,
    ModelState,
    Patient,
    PriorConfig,
    TrialData,
    log_lik_pooled,
    log_lik_split,
    log_prior,
    overall_rate,
)
from .sampler import PosteriorSamples, SamplerConfig, run_chain
from .simulate import (
    OperatingCharacteristics,
    Scenario,
    TrialReport,
    analyze_data,
    builtin_scenario,
    builtin_scenarios,
    final_report_from_samples,
    interim_analyze_data,
    operating_characteristics,
    run_trial,
    simulate_patients,
    two_step_analysis,
)

__version__ = "0.1.0"

__all__ = [
    "DecisionConfig", "FinalAction", "IndicationRule", "InfeasibleActionError",
    "InterimAction", "IntervalSelection", "RatePartition", "build_partition",
    "estimate_threshold", "identify_subgroup", "map_final", "map_interim",
    "optimal_intervals", "threshold_expected_loss",
    "SimbaAnalysis",
    "FixedSplitPrior", "HalfCauchyPrior", "Indication", "InverseGammaPrior",
    "ModelState", "Patient", "PriorConfig", "TrialData",
    "log_lik_pooled", "log_lik_split", "log_prior", "overall_rate",
    "PosteriorSamples", "SamplerConfig", "run_chain",
    "OperatingCharacteristics", "Scenario", "TrialReport", "analyze_data",
    "builtin_scenario", "builtin_scenarios", "final_report_from_samples",
    "interim_analyze_data", "operating_characteristics", "run_trial",
    "simulate_patients", "two_step_analysis",
    "__version__",
]
