"""Scikit-learn style front end for the basket-trial subgroup analysis.

`SimbaAnalysis` wraps the sampler and decision layers behind the familiar
``fit`` / ``predict`` / ``get_params`` surface so the analysis composes
with the wider ecosystem (cloning, pipelines, parameter sweeps).  ``fit``
takes per-patient biomarkers ``X`` and binary responses ``y`` plus an
optional per-patient indication label array; ``predict`` returns optimal
biomarker subgroup membership (biomarker above the indication's
estimated threshold).
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .decision import DecisionConfig, IndicationRule
from .model import (
    FixedSplitPrior,
    HalfCauchyPrior,
    Indication,
    InverseGammaPrior,
    Patient,
    PriorConfig,
    TrialData,
)
from .sampler import SamplerConfig, run_chain
from .simulate import final_report_from_samples

__all__ = ["SimbaAnalysis"]


class SimbaAnalysis(BaseEstimator):
    """Bayesian subgroup identification across basket-trial indications.

    Parameters
    ----------
    lrv, tv : float
        Lower reference value and target value for the response rate,
        shared by all indications unless ``rules`` overrides them.
    interval_width : float or None
        Optional rate-partition width override.
    rules : dict or None
        Optional per-indication ``{label: (lrv, tv)}`` or
        ``{label: (lrv, tv, width)}`` overrides.
    w1, w2 : float
        Threshold-loss weights: negative-subgroup size penalty and
        positive-rate shortfall penalty.
    flag_level : float
        Posterior split-model probability above which the subgroup flag
        is raised.
    variant : {"simba", "nb"}
        Hierarchical split-point prior with borrowing, or fixed
        independent priors (no borrowing).
    split_prior : {"half_cauchy", "inverse_gamma"}
        Hierarchical scale prior family (ignored under variant="nb").
    gamma : float
        Half-Cauchy scale of the split-point prior.
    priors : PriorConfig or None
        Full prior override; when given, the prior-related parameters
        above are ignored.
    iterations, burn_in, thin : int
        Chain schedule.
    random_state : int
        Chain seed.

    Attributes
    ----------
    labels_ : tuple of str
        Indication labels in order of first appearance.
    samples_ : PosteriorSamples
        Retained posterior draws.
    report_ : TrialReport
        Per-indication actions, thresholds and flags.
    thresholds_ : dict
        Estimated biomarker threshold per label (None when no subgroup).
    """

    def __init__(self, lrv: float = 0.1, tv: float = 0.3,
                 interval_width: Optional[float] = None,
                 rules: Optional[dict] = None,
                 w1: float = 0.2, w2: float = 0.5, flag_level: float = 0.98,
                 variant: str = "simba", split_prior: str = "half_cauchy",
                 gamma: float = 2.5, priors: Optional[PriorConfig] = None,
                 iterations: int = 4000, burn_in: int = 2000, thin: int = 1,
                 random_state: int = 0):
        self.lrv = lrv
        self.tv = tv
        self.interval_width = interval_width
        self.rules = rules
        self.w1 = w1
        self.w2 = w2
        self.flag_level = flag_level
        self.variant = variant
        self.split_prior = split_prior
        self.gamma = gamma
        self.priors = priors
        self.iterations = iterations
        self.burn_in = burn_in
        self.thin = thin
        self.random_state = random_state

    def _prior_config(self) -> PriorConfig:
        if self.priors is not None:
            return self.priors
        if self.variant == "nb":
            return PriorConfig(split_prior=FixedSplitPrior())
        if self.variant != "simba":
            raise ValueError(f"variant must be 'simba' or 'nb', got {self.variant!r}")
        if self.split_prior == "half_cauchy":
            return PriorConfig(split_prior=HalfCauchyPrior(scale=self.gamma))
        if self.split_prior == "inverse_gamma":
            return PriorConfig(split_prior=InverseGammaPrior())
        raise ValueError(f"unknown split_prior {self.split_prior!r}")

    def _decision_config(self) -> DecisionConfig:
        rules = {}
        for label, spec in (self.rules or {}).items():
            rules[label] = IndicationRule(*spec)
        return DecisionConfig(
            default_rule=IndicationRule(self.lrv, self.tv, self.interval_width),
            rules=rules,
            w1=self.w1, w2=self.w2, flag_level=self.flag_level,
        )

    def _groups(self, X, indications, n) -> np.ndarray:
        if indications is None:
            return np.array(["all"] * n, dtype=object)
        groups = np.asarray(indications, dtype=object).ravel()
        if groups.shape[0] != n:
            raise ValueError(
                f"indications has {groups.shape[0]} entries for {n} patients")
        return groups

    def fit(self, X, y, indications=None):
        """Run the chain on patient data and derive all decisions.

        Parameters
        ----------
        X : array-like of shape (n_patients,) or (n_patients, 1)
            Biomarker expression levels.
        y : array-like of shape (n_patients,)
            Binary responses.
        indications : array-like of str, optional
            Per-patient indication labels; a single shared indication is
            assumed when omitted.
        """
        X, y = check_X_y(self._column(X), y)
        y = np.asarray(y)
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("y must be binary (0/1)")
        biomarkers = X[:, 0]
        groups = self._groups(X, indications, biomarkers.shape[0])

        seen: dict[str, list[Patient]] = {}
        for marker, response, label in zip(biomarkers, y, groups):
            seen.setdefault(str(label), []).append(Patient(float(marker), int(response)))
        data = TrialData(tuple(
            Indication(label, tuple(patients), n_interim=len(patients),
                       n_max=len(patients))
            for label, patients in seen.items()
        ))
        priors = self._prior_config()
        sampler_config = SamplerConfig(iterations=self.iterations,
                                       burn_in=self.burn_in, thin=self.thin,
                                       seed=self.random_state)
        decision_config = self._decision_config()
        self.samples_ = run_chain(data, priors, sampler_config)
        self.report_ = final_report_from_samples(self.samples_, data, decision_config)
        self.labels_ = data.labels
        self.thresholds_ = {ind.label: ind.threshold
                            for ind in self.report_.indications}
        self.n_features_in_ = 1
        return self

    def predict(self, X, indications=None):
        """Optimal-biomarker-subgroup membership of new patients.

        A patient is in the subgroup when their biomarker exceeds their
        indication's estimated threshold; indications without an
        identified subgroup include everyone.
        """
        check_is_fitted(self, "thresholds_")
        X = check_array(self._column(X))
        biomarkers = X[:, 0]
        groups = self._groups(X, indications, biomarkers.shape[0])
        if indications is None and len(self.labels_) > 1:
            raise ValueError("fitted on several indications; pass `indications`")
        out = np.empty(biomarkers.shape[0], dtype=bool)
        for j, (marker, label) in enumerate(zip(biomarkers, groups)):
            label = str(label) if indications is not None else self.labels_[0]
            if label not in self.thresholds_:
                raise ValueError(f"unknown indication {label!r}; "
                                 f"fitted on {list(self.thresholds_)}")
            threshold = self.thresholds_[label]
            out[j] = True if threshold is None else marker > threshold
        return out

    def decision_for(self, label: Optional[str] = None):
        """The fitted per-indication report (first indication by default)."""
        check_is_fitted(self, "report_")
        if label is None:
            label = self.labels_[0]
        return self.report_.indication(label)

    @staticmethod
    def _column(X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[1] != 1:
            raise ValueError(f"X must be a single biomarker column, got shape {X.shape}")
        return X
