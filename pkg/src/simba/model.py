"""Probability model for threshold-defined biomarker subgroups in a basket trial.

Conventions used throughout the package:

* Response rates live on the logit scale: ``rate = expit(theta)``.
* Each indication follows one of two sub-models.  Under the *pooled*
  sub-model every patient shares one response rate.  Under the *split*
  sub-model, patients whose biomarker exceeds a latent per-indication
  split point respond at rate ``expit(theta_neg + gap)`` and the rest at
  ``expit(theta_neg)``; ``gap > 0`` so the positive subgroup always does
  at least as well.
* A biomarker exactly equal to the split point belongs to the negative
  subgroup (inclusive ``<=``), making boundary ties deterministic.
* The gap prior is a Gamma in shape/rate form (mean ``shape / rate``).
* Both sub-models' parameter blocks exist for every indication at all
  times; the per-indication model indicator selects which block enters
  the likelihood.  ``log_prior`` therefore always sums the prior terms of
  both blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "Patient",
    "Indication",
    "TrialData",
    "HalfCauchyPrior",
    "InverseGammaPrior",
    "FixedSplitPrior",
    "SplitScalePrior",
    "PriorConfig",
    "ModelState",
    "log_lik_pooled",
    "log_lik_split",
    "log_prior",
    "overall_rate",
]

LOG_2PI = math.log(2.0 * math.pi)


def expit(t: float) -> float:
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def log1pexp(t: float) -> float:
    """log(1 + e^t), stable for |t| well beyond 30."""
    if t > 0.0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


@dataclass(frozen=True)
class Patient:
    """One enrolled patient: biomarker expression level and binary response."""

    biomarker: float
    response: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.biomarker):
            raise ValueError(f"biomarker must be finite, got {self.biomarker!r}")
        if self.response not in (0, 1):
            raise ValueError(f"response must be 0 or 1, got {self.response!r}")


@dataclass(frozen=True)
class Indication:
    """One basket arm: its patients plus the planned interim and maximum sizes."""

    label: str
    patients: tuple[Patient, ...]
    n_interim: int
    n_max: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "patients", tuple(self.patients))
        if not (0 < self.n_interim <= self.n_max):
            raise ValueError(
                f"{self.label}: need 0 < n_interim <= n_max, "
                f"got n_interim={self.n_interim}, n_max={self.n_max}"
            )
        if len(self.patients) > self.n_max:
            raise ValueError(
                f"{self.label}: {len(self.patients)} patients exceed n_max={self.n_max}"
            )

    @property
    def n_enrolled(self) -> int:
        return len(self.patients)

    def biomarkers(self) -> np.ndarray:
        return np.array([p.biomarker for p in self.patients], dtype=float)

    def responses(self) -> np.ndarray:
        return np.array([p.response for p in self.patients], dtype=float)


@dataclass(frozen=True)
class TrialData:
    """Patient records for every indication in the basket."""

    indications: tuple[Indication, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "indications", tuple(self.indications))
        if not self.indications:
            raise ValueError("TrialData needs at least one indication")
        labels = [ind.label for ind in self.indications]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate indication labels: {labels}")

    @property
    def n_indications(self) -> int:
        return len(self.indications)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(ind.label for ind in self.indications)


@dataclass(frozen=True)
class HalfCauchyPrior:
    """Half-Cauchy prior on the split-point scale (weakly informative default)."""

    scale: float = 2.5

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ValueError("half-Cauchy scale must be > 0")


@dataclass(frozen=True)
class InverseGammaPrior:
    """Inverse-gamma prior on the split-point *variance* (conjugate variant).

    The density is evaluated at ``split_sd ** 2``; placing the prior on the
    variance is what makes the scale update an exact Gibbs draw.
    """

    shape: float = 1.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("inverse-gamma shape and scale must be > 0")


@dataclass(frozen=True)
class FixedSplitPrior:
    """Independent N(mean, sd^2) split-point priors: no borrowing across arms."""

    mean: float = 0.0
    sd: float = 3.0

    def __post_init__(self) -> None:
        if self.sd <= 0:
            raise ValueError("fixed split prior sd must be > 0")


SplitScalePrior = Union[HalfCauchyPrior, InverseGammaPrior, FixedSplitPrior]


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of every prior in the model.

    Defaults give vague priors over the unit interval for all response
    rates (rate priors centred near 0.09 with heavy spread) and a gap
    prior with mean ``gap_shape / gap_rate`` ~= 1.40 on the log-odds
    scale.  ``split_prior`` selects how split points are tied together:
    hierarchical with a half-Cauchy or inverse-gamma scale prior, or
    fixed independent normals (no borrowing).
    """

    beta_a: float = 1.0
    beta_b: float = 1.0
    theta_pool_mean: float = -2.3
    theta_pool_sd: float = 10.0
    theta_neg_mean: float = -2.3
    theta_neg_sd: float = 2.0
    gap_shape: float = 30.0
    gap_rate: float = 21.5
    split_mean_sd: float = 2.0
    split_prior: SplitScalePrior = field(default_factory=HalfCauchyPrior)

    def __post_init__(self) -> None:
        for name in ("beta_a", "beta_b", "theta_pool_sd", "theta_neg_sd",
                     "gap_shape", "gap_rate", "split_mean_sd"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def borrows(self) -> bool:
        """True when split points share an estimated hierarchical prior."""
        return not isinstance(self.split_prior, FixedSplitPrior)

    def split_point_prior_params(self, split_mean: float, split_sd: float) -> tuple[float, float]:
        """(mean, sd) of the split-point prior given current hyper values."""
        if isinstance(self.split_prior, FixedSplitPrior):
            return self.split_prior.mean, self.split_prior.sd
        return split_mean, split_sd


@dataclass
class ModelState:
    """One point in the product-space parameter vector.

    ``pooled[i]`` is True when indication ``i`` currently sits in the
    single-rate sub-model.  Both parameter blocks are always populated.
    """

    prob_pooled: float
    pooled: np.ndarray       # bool (I,)
    theta_pool: np.ndarray   # float (I,) logit of the pooled rate
    theta_neg: np.ndarray    # float (I,) logit of the negative-subgroup rate
    gap: np.ndarray          # float (I,) positive logit gap
    split_point: np.ndarray  # float (I,) latent biomarker threshold
    split_mean: float
    split_sd: float

    def __post_init__(self) -> None:
        self.pooled = np.asarray(self.pooled, dtype=bool).copy()
        for name in ("theta_pool", "theta_neg", "gap", "split_point"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).copy())
        self.validate()

    def validate(self) -> None:
        n = self.pooled.shape[0]
        for name in ("theta_pool", "theta_neg", "gap", "split_point"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if not (0.0 < self.prob_pooled < 1.0):
            raise ValueError(f"prob_pooled must be in (0, 1), got {self.prob_pooled}")
        if np.any(self.gap <= 0.0):
            raise ValueError("gap must be strictly positive")
        if self.split_sd <= 0.0:
            raise ValueError("split_sd must be strictly positive")
        if not math.isfinite(self.split_mean):
            raise ValueError("split_mean must be finite")

    @property
    def n_indications(self) -> int:
        return self.pooled.shape[0]

    def copy(self) -> "ModelState":
        return ModelState(
            prob_pooled=self.prob_pooled,
            pooled=self.pooled.copy(),
            theta_pool=self.theta_pool.copy(),
            theta_neg=self.theta_neg.copy(),
            gap=self.gap.copy(),
            split_point=self.split_point.copy(),
            split_mean=self.split_mean,
            split_sd=self.split_sd,
        )


def bernoulli_logit_loglik(successes: float, total: float, theta: float) -> float:
    """Log-likelihood of `successes` out of `total` Bernoulli trials at logit `theta`."""
    if total == 0:
        return 0.0
    return successes * theta - total * log1pexp(theta)


def log_lik_pooled(theta: float, patients: Sequence[Patient]) -> float:
    """Log-likelihood of the single-rate sub-model at logit ``theta``."""
    if not math.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta!r}")
    successes = sum(p.response for p in patients)
    return bernoulli_logit_loglik(float(successes), float(len(patients)), theta)


def log_lik_split(theta_neg: float, gap: float, split_point: float,
                  patients: Sequence[Patient]) -> float:
    """Log-likelihood of the two-rate sub-model.

    Patients with biomarker at or below ``split_point`` contribute at
    logit ``theta_neg``; the rest at ``theta_neg + gap``.
    """
    if not (math.isfinite(theta_neg) and math.isfinite(gap) and math.isfinite(split_point)):
        raise ValueError("theta_neg, gap and split_point must be finite")
    if gap <= 0.0:
        raise ValueError(f"gap must be > 0, got {gap!r}")
    n_neg = s_neg = n_pos = s_pos = 0
    for p in patients:
        if p.biomarker <= split_point:
            n_neg += 1
            s_neg += p.response
        else:
            n_pos += 1
            s_pos += p.response
    return (bernoulli_logit_loglik(float(s_neg), float(n_neg), theta_neg)
            + bernoulli_logit_loglik(float(s_pos), float(n_pos), theta_neg + gap))


def _log_normal_pdf(value: float, mean: float, sd: float) -> float:
    z = (value - mean) / sd
    return -0.5 * LOG_2PI - math.log(sd) - 0.5 * z * z


def _log_beta_pdf(value: float, a: float, b: float) -> float:
    log_beta_fn = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return (a - 1.0) * math.log(value) + (b - 1.0) * math.log1p(-value) - log_beta_fn


def _log_gamma_pdf(value: float, shape: float, rate: float) -> float:
    return (shape * math.log(rate) - math.lgamma(shape)
            + (shape - 1.0) * math.log(value) - rate * value)


def log_half_cauchy_pdf(value: float, scale: float) -> float:
    if value <= 0.0:
        return -math.inf
    z = value / scale
    return math.log(2.0) - math.log(math.pi) - math.log(scale) - math.log1p(z * z)


def log_inverse_gamma_pdf(value: float, shape: float, scale: float) -> float:
    if value <= 0.0:
        return -math.inf
    return (shape * math.log(scale) - math.lgamma(shape)
            - (shape + 1.0) * math.log(value) - scale / value)


def log_prior(state: ModelState, priors: PriorConfig) -> float:
    """Joint log prior density of the full product-space state.

    Sums, with their normalizing constants: the Beta prior on the pooled
    probability, the Bernoulli model indicators, both sub-models' block
    priors for every indication, and (hierarchical variants only) the
    hyperpriors on the split-point mean and scale.  Under the fixed
    variant the hyper terms are omitted and split points use the fixed
    normal prior.
    """
    state.validate()
    total = _log_beta_pdf(state.prob_pooled, priors.beta_a, priors.beta_b)
    log_pm = math.log(state.prob_pooled)
    log_qm = math.log1p(-state.prob_pooled)
    sp_mean, sp_sd = priors.split_point_prior_params(state.split_mean, state.split_sd)
    for i in range(state.n_indications):
        total += log_pm if state.pooled[i] else log_qm
        total += _log_normal_pdf(state.theta_pool[i], priors.theta_pool_mean, priors.theta_pool_sd)
        total += _log_normal_pdf(state.theta_neg[i], priors.theta_neg_mean, priors.theta_neg_sd)
        total += _log_gamma_pdf(state.gap[i], priors.gap_shape, priors.gap_rate)
        total += _log_normal_pdf(state.split_point[i], sp_mean, sp_sd)
    if priors.borrows:
        total += _log_normal_pdf(state.split_mean, 0.0, priors.split_mean_sd)
        if isinstance(priors.split_prior, HalfCauchyPrior):
            total += log_half_cauchy_pdf(state.split_sd, priors.split_prior.scale)
        else:
            total += log_inverse_gamma_pdf(
                state.split_sd ** 2, priors.split_prior.shape, priors.split_prior.scale
            )
    return total


def overall_rate(p_neg: float, p_pos: float, split_point: float, biomarker_cdf) -> float:
    """All-comers response rate implied by subgroup rates and a split point.

    ``biomarker_cdf`` is the CDF of the biomarker distribution; the result
    is the mixture ``cdf(split) * p_neg + (1 - cdf(split)) * p_pos``.
    """
    if p_neg > p_pos:
        raise ValueError(f"need p_neg <= p_pos, got {p_neg} > {p_pos}")
    w = float(biomarker_cdf(split_point))
    return w * p_neg + (1.0 - w) * p_pos
