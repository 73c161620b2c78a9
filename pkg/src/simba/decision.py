"""Decision layer: interval reporting, trial-action mapping, threshold choice.

Two decision problems sit on top of the posterior sample:

1. Report, per indication, the equal-width rate sub-intervals that the
   all-comers / positive / negative response rates fall in, by maximizing
   posterior probability under a 0/1 loss, then map the three reported
   indices to a trial action (final: S / INC / RA / RP, interim: S / EA /
   EP).
2. Choose a usable biomarker threshold by minimizing a posterior expected
   composite loss that trades off closeness to the latent split point, the
   size of the excluded (negative) group, and the positive subgroup's
   empirical response rate against the target value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

from .model import Patient

if TYPE_CHECKING:  # pragma: no cover
    from .sampler import PosteriorSamples

__all__ = [
    "FinalAction",
    "InterimAction",
    "InfeasibleActionError",
    "RatePartition",
    "build_partition",
    "IndicationRule",
    "DecisionConfig",
    "IntervalSelection",
    "optimal_intervals",
    "map_final",
    "map_interim",
    "threshold_candidates",
    "threshold_expected_loss",
    "estimate_threshold",
    "identify_subgroup",
]

# Slack when bucketing rates into intervals; rates within this of a
# cutpoint count as at-or-below it, so logit round trips stay stable.
RATE_TOL = 1e-9

# Grid is built in thousandths so two-decimal reference values and
# overrides like 0.05 / 0.03 are exact integers.
_SCALE = 1000


class FinalAction(str, Enum):
    """End-of-trial recommendation for one indication."""

    STOP = "S"
    INCONCLUSIVE = "INC"
    RECOMMEND_ALL = "RA"
    RECOMMEND_POSITIVE = "RP"

    def __str__(self) -> str:  # pragma: no cover
        return self.value


class InterimAction(str, Enum):
    """Interim recommendation: stop, or keep enrolling (everyone / positives)."""

    STOP = "S"
    ENROLL_ALL = "EA"
    ENROLL_POSITIVE = "EP"

    def __str__(self) -> str:  # pragma: no cover
        return self.value


class InfeasibleActionError(ValueError):
    """Raised for interval-index combinations ruled out by p_pos >= p_neg."""


@dataclass(frozen=True)
class RatePartition:
    """Equal-width partition of (0, 1) with the reference rates as cutpoints.

    ``cutpoints[0] == 0`` and ``cutpoints[-1] == 1``; interval ``k`` is
    ``(cutpoints[k-1], cutpoints[k]]``.  ``k_lrv`` and ``k_tv`` are the
    interval indices whose upper ends equal the lower reference value and
    the target value.  All interior intervals have length ``width``; the
    last interval may be shorter when ``1 / width`` is not an integer.
    """

    cutpoints: tuple[float, ...]
    k_lrv: int
    k_tv: int
    width: float

    @property
    def n_intervals(self) -> int:
        return len(self.cutpoints) - 1

    @property
    def lrv(self) -> float:
        return self.cutpoints[self.k_lrv]

    @property
    def tv(self) -> float:
        return self.cutpoints[self.k_tv]

    def interval_of(self, rate):
        """1-based interval index of each rate (scalar or array)."""
        idx = np.searchsorted(self.cutpoints, np.asarray(rate) - RATE_TOL, side="left")
        idx = np.clip(idx, 1, self.n_intervals)
        return int(idx) if np.ndim(rate) == 0 else idx

    def band(self, index: int) -> int:
        """1 = at/below LRV, 2 = between LRV and TV, 3 = above TV."""
        if not 1 <= index <= self.n_intervals:
            raise ValueError(f"interval index {index} outside 1..{self.n_intervals}")
        if index <= self.k_lrv:
            return 1
        if index <= self.k_tv:
            return 2
        return 3


def build_partition(lrv: float, tv: float, width: Optional[float] = None) -> RatePartition:
    """Partition (0, 1) into equal sub-intervals hitting LRV and TV exactly.

    Without an explicit ``width``, the interval length is the largest
    decimal that divides ``lrv``, ``tv - lrv`` and ``1 - tv``.  An explicit
    ``width`` must divide ``lrv`` and ``tv - lrv`` (it need not divide
    ``1 - tv``; the last interval is then truncated at 1).
    """
    if not (0.0 < lrv < tv < 1.0):
        raise ValueError(f"need 0 < lrv < tv < 1, got lrv={lrv}, tv={tv}")
    lrv_m = _to_grid(lrv, "lrv")
    tv_m = _to_grid(tv, "tv")
    if width is None:
        width_m = math.gcd(lrv_m, tv_m - lrv_m, _SCALE - tv_m)
    else:
        if width <= 0:
            raise ValueError(f"width must be > 0, got {width}")
        width_m = _to_grid(width, "width")
        if lrv_m % width_m or (tv_m - lrv_m) % width_m:
            raise ValueError(
                f"width {width} does not divide lrv={lrv} and tv-lrv={tv - lrv:.6g}"
            )
    cut_m = list(range(0, _SCALE, width_m))
    cut_m.append(_SCALE)
    cutpoints = tuple(m / _SCALE for m in cut_m)
    return RatePartition(
        cutpoints=cutpoints,
        k_lrv=cut_m.index(lrv_m),
        k_tv=cut_m.index(tv_m),
        width=width_m / _SCALE,
    )


def _to_grid(value: float, name: str) -> int:
    scaled = value * _SCALE
    nearest = round(scaled)
    if abs(scaled - nearest) > 1e-6 or nearest <= 0:
        raise ValueError(f"{name}={value} is not representable at 3 decimals")
    return int(nearest)


@dataclass(frozen=True)
class IndicationRule:
    """Reference rates (and optional interval width) for one indication."""

    lrv: float
    tv: float
    width: Optional[float] = None

    def partition(self) -> RatePartition:
        return build_partition(self.lrv, self.tv, self.width)


@dataclass(frozen=True)
class DecisionConfig:
    """Everything the decision layer needs beyond the posterior sample."""

    default_rule: IndicationRule = field(default_factory=lambda: IndicationRule(0.1, 0.3))
    rules: Mapping[str, IndicationRule] = field(default_factory=dict)
    w1: float = 0.2
    w2: float = 0.5
    flag_level: float = 0.98

    def __post_init__(self) -> None:
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError("loss weights w1 and w2 must be >= 0")
        if not (0.0 < self.flag_level < 1.0):
            raise ValueError("flag_level must be in (0, 1)")

    def rule_for(self, label: str) -> IndicationRule:
        return self.rules.get(label, self.default_rule)

    def partition_for(self, label: str) -> RatePartition:
        return self.rule_for(label).partition()


@dataclass(frozen=True)
class IntervalSelection:
    """Jointly most probable (model, intervals) report for one indication.

    The losing sub-model's indices are filled with its own conditional
    argmax so the action mapping always receives all three indices; when a
    sub-model has no draws at all its indices come from the prior central
    rates and the corresponding ``*_fill`` flag is set.
    """

    a_all: int
    a_pos: int
    a_neg: int
    model: str  # "pooled" or "split"
    pooled_fill: bool = False
    split_fill: bool = False


def optimal_intervals(samples: "PosteriorSamples", index: int,
                      partition: RatePartition) -> IntervalSelection:
    """Bayes-rule interval report under the 0/1 interval-plus-model loss.

    The pooled side scores each all-comers interval by the fraction of all
    draws that are pooled and land in it; the split side scores each
    (positive, negative) interval *pair* jointly.  The report is the argmax
    over the union of both action sets, ties going to the lower index (and
    to the pooled model on an exact cross-model tie).
    """
    n_draws = samples.n_draws
    if n_draws == 0:
        raise ValueError("posterior sample is empty")
    k_count = partition.n_intervals
    pooled_mask = samples.pooled[:, index]

    pool_best = pool_count = None
    if pooled_mask.any():
        k_all = partition.interval_of(expit(samples.theta_pool[pooled_mask, index]))
        counts = np.bincount(k_all, minlength=k_count + 1)
        pool_best = int(np.argmax(counts))
        pool_count = int(counts[pool_best])

    split_best = split_count = None
    split_mask = ~pooled_mask
    if split_mask.any():
        theta_neg = samples.theta_neg[split_mask, index]
        k_pos = partition.interval_of(expit(theta_neg + samples.gap[split_mask, index]))
        k_neg = partition.interval_of(expit(theta_neg))
        joint = np.bincount(k_pos * (k_count + 1) + k_neg,
                            minlength=(k_count + 1) ** 2)
        flat = int(np.argmax(joint))
        split_best = (flat // (k_count + 1), flat % (k_count + 1))
        split_count = int(joint[flat])

    pooled_fill = pool_best is None
    split_fill = split_best is None
    if pooled_fill:
        pool_best = partition.interval_of(expit(samples.priors.theta_pool_mean))
    if split_fill:
        neg_rate = expit(samples.priors.theta_neg_mean)
        pos_rate = expit(samples.priors.theta_neg_mean
                         + samples.priors.gap_shape / samples.priors.gap_rate)
        split_best = (partition.interval_of(pos_rate), partition.interval_of(neg_rate))

    if split_count is None or (pool_count is not None and pool_count >= split_count):
        model = "pooled"
    else:
        model = "split"
    return IntervalSelection(
        a_all=pool_best,
        a_pos=split_best[0],
        a_neg=split_best[1],
        model=model,
        pooled_fill=pooled_fill,
        split_fill=split_fill,
    )


def map_final(a_all: int, a_pos: int, a_neg: int, partition: RatePartition) -> FinalAction:
    """Map reported interval indices to the final trial action.

    Working on bands (at/below LRV, between LRV and TV, above TV): a
    positive rate at/below LRV is S; a positive rate between LRV and TV is
    INC unless everything sits at/below LRV (S); a positive rate above TV
    recommends the positive subgroup (RP) unless the all-comers or
    negative rate also clears TV, which upgrades to RA.  Combinations
    implying p_pos < p_neg at the band level are infeasible.
    """
    g_all = partition.band(a_all)
    g_pos = partition.band(a_pos)
    g_neg = partition.band(a_neg)
    if g_pos < g_neg:
        raise InfeasibleActionError(
            f"positive band {g_pos} below negative band {g_neg} "
            f"(indices {a_pos} vs {a_neg})"
        )
    if g_pos == 1:
        return FinalAction.STOP
    if g_pos == 2:
        if g_neg == 1 and g_all == 1:
            return FinalAction.STOP
        return FinalAction.INCONCLUSIVE
    # g_pos == 3
    if g_neg == 3 or g_all == 3:
        return FinalAction.RECOMMEND_ALL
    return FinalAction.RECOMMEND_POSITIVE


def map_interim(a_all: int, a_pos: int, a_neg: int, partition: RatePartition) -> InterimAction:
    """Map reported interval indices to the interim action (futility view).

    Everything at/below LRV stops; a clear positive subgroup with a weak
    negative one enriches (EP) provided the all-comers rate clears LRV,
    otherwise stops; both subgroups above LRV keep enrolling everyone.
    """
    pos_low = partition.band(a_pos) == 1
    neg_low = partition.band(a_neg) == 1
    if pos_low and not neg_low:
        raise InfeasibleActionError(
            f"positive index {a_pos} at/below LRV with negative index {a_neg} above it"
        )
    if not pos_low and not neg_low:
        return InterimAction.ENROLL_ALL
    if not pos_low and neg_low:
        if partition.band(a_all) == 1:
            return InterimAction.STOP
        return InterimAction.ENROLL_POSITIVE
    return InterimAction.STOP


def threshold_candidates(biomarkers: Sequence[float], margin: float = 0.01) -> np.ndarray:
    """Candidate thresholds: midpoints between distinct sorted biomarker
    values, plus sentinels just outside the observed range."""
    values = np.unique(np.asarray(biomarkers, dtype=float))
    if values.size == 0:
        return np.array([], dtype=float)
    mids = (values[:-1] + values[1:]) / 2.0
    return np.concatenate(([values[0] - margin], mids, [values[-1] + margin]))


def threshold_expected_loss(threshold: float, split_draws: np.ndarray,
                            patients: Sequence[Patient],
                            w1: float, w2: float, tv: float) -> float:
    """Posterior expected composite loss of declaring ``threshold``.

    Components: mean of ``1 - exp(-|t - split|)`` over the split-point
    draws; ``w1`` times the fraction of patients at/below ``t``; ``w2``
    times the shortfall of the positive subgroup's empirical response rate
    below ``tv`` (with an empty positive subgroup counting as rate 0).
    """
    draws = np.asarray(split_draws, dtype=float)
    if draws.size == 0:
        raise ValueError("need at least one split-point draw")
    miss = float(np.mean(1.0 - np.exp(-np.abs(threshold - draws))))
    if not patients:
        return miss
    xs = np.array([p.biomarker for p in patients], dtype=float)
    ys = np.array([p.response for p in patients], dtype=float)
    neg = xs <= threshold
    excluded = float(np.mean(neg))
    n_pos = int((~neg).sum())
    pos_rate = float(ys[~neg].sum() / n_pos) if n_pos else 0.0
    shortfall = (1.0 - pos_rate / tv) if pos_rate < tv else 0.0
    return miss + w1 * excluded + w2 * shortfall


def estimate_threshold(samples: "PosteriorSamples", index: int,
                       patients: Sequence[Patient],
                       config: DecisionConfig,
                       label: Optional[str] = None) -> Optional[float]:
    """Loss-minimizing biomarker threshold for one indication.

    Minimizes :func:`threshold_expected_loss` over the candidate grid,
    using the split-model draws of the latent split point; ties go to the
    smaller threshold (the larger positive subgroup).  Returns None when
    the posterior contains no split draws or the indication has no
    patients, i.e. no usable subgroup.
    """
    draws = samples.split_draws(index)
    if draws.size == 0 or not patients:
        return None
    rule = config.rule_for(label if label is not None else samples.labels[index])
    grid = threshold_candidates([p.biomarker for p in patients])
    losses = [threshold_expected_loss(t, draws, patients, config.w1, config.w2, rule.tv)
              for t in grid]
    return float(grid[int(np.argmin(losses))])


def identify_subgroup(samples: "PosteriorSamples", index: int, flag_level: float) -> bool:
    """True when the posterior probability of the split sub-model strictly
    exceeds ``flag_level``."""
    return samples.prob_split(index) > flag_level
