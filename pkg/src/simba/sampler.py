"""Metropolis-within-Gibbs sampler over the product-space joint posterior.

The model indicator of each indication is updated by ordinary Gibbs inside
a product space: both sub-models' parameter blocks are kept alive at all
times, the likelihood only sees the active block, and inactive blocks are
refreshed by exact draws from their priors (pseudo-prior equal to the
prior), which preserves the joint stationary distribution.

Per iteration the sweep is: exact Beta draw for the pooled-model
probability; then per indication the model indicator (Gibbs), the pooled
logit (random-walk MH), the split block's negative logit, log gap and a
positive-logit-preserving shift (three MH steps), and the split point
(MH mixing a random walk with prior independence proposals); finally,
under hierarchical priors, the split-point mean (exact normal-normal
Gibbs) and scale (mixed MH for half-Cauchy, exact inverse-gamma Gibbs
for that variant).

Proposal step sizes are adapted toward a target acceptance rate during
burn-in only and frozen afterwards, so the retained draws come from a
fixed-kernel chain.  Runs are deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import (
    FixedSplitPrior,
    HalfCauchyPrior,
    InverseGammaPrior,
    ModelState,
    Patient,
    PriorConfig,
    TrialData,
    bernoulli_logit_loglik,
)
from .rng import SeedLike, generator, seed_fingerprint

__all__ = [
    "SamplerConfig",
    "IndicationStats",
    "PosteriorSamples",
    "run_chain",
    "initial_state",
    "update_prob_pooled",
    "update_model_choice",
    "update_theta_pool",
    "update_split_rates",
    "update_split_point",
    "update_split_mean",
    "update_split_sd",
]

MH_BLOCKS = ("theta_pool", "theta_neg", "gap", "shift", "split_point", "split_sd")


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length, seed and proposal settings.

    ``step_gap`` and ``step_split_sd`` are random-walk scales on the log
    of the parameter; the others act on the parameter directly.  With
    ``adapt`` on, steps are tuned toward ``target_accept`` in batches of
    ``adapt_batch`` iterations during burn-in and frozen afterwards.
    """

    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 1
    seed: SeedLike = 0
    step_theta_pool: float = 0.5
    step_theta_neg: float = 0.5
    step_gap: float = 0.5
    step_shift: float = 0.5
    step_split_point: float = 0.5
    step_split_sd: float = 0.5
    adapt: bool = True
    target_accept: float = 0.3
    adapt_batch: int = 50

    def __post_init__(self) -> None:
        if self.iterations <= 0:
            raise ValueError("iterations must be > 0")
        if not (0 <= self.burn_in < self.iterations):
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin <= 0:
            raise ValueError("thin must be > 0")
        for name in ("step_theta_pool", "step_theta_neg", "step_gap",
                     "step_shift", "step_split_point", "step_split_sd"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not (0.0 < self.target_accept < 1.0):
            raise ValueError("target_accept must be in (0, 1)")
        if self.adapt_batch <= 0:
            raise ValueError("adapt_batch must be > 0")

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


class IndicationStats:
    """Sufficient statistics of one indication for fast likelihood sweeps.

    Biomarkers are kept sorted with a prefix-sum of responses, so the
    split-model likelihood at any split point needs one binary search.
    """

    __slots__ = ("n", "total_resp", "sorted_x", "cum_resp")

    def __init__(self, patients: Sequence[Patient]):
        xs = np.array([p.biomarker for p in patients], dtype=float)
        ys = np.array([p.response for p in patients], dtype=float)
        order = np.argsort(xs, kind="stable")
        self.sorted_x = xs[order]
        self.cum_resp = np.concatenate(([0.0], np.cumsum(ys[order])))
        self.n = int(xs.size)
        self.total_resp = float(ys.sum())

    def loglik_pooled(self, theta: float) -> float:
        return bernoulli_logit_loglik(self.total_resp, float(self.n), theta)

    def loglik_split(self, theta_neg: float, gap: float, split_point: float) -> float:
        n_neg = int(np.searchsorted(self.sorted_x, split_point, side="right"))
        s_neg = float(self.cum_resp[n_neg])
        return (bernoulli_logit_loglik(s_neg, float(n_neg), theta_neg)
                + bernoulli_logit_loglik(self.total_resp - s_neg, float(self.n - n_neg),
                                         theta_neg + gap))


@dataclass
class PosteriorSamples:
    """Retained draws (post burn-in, thinned) plus run metadata.

    Arrays are indexed ``[draw, indication]`` for per-indication
    parameters and ``[draw]`` for shared ones.  ``acceptance_rates`` holds
    post-burn-in MH acceptance fractions per proposal block (NaN when a
    block was never proposed, e.g. the split scale under fixed priors).
    """

    labels: tuple[str, ...]
    prob_pooled: np.ndarray
    pooled: np.ndarray
    theta_pool: np.ndarray
    theta_neg: np.ndarray
    gap: np.ndarray
    split_point: np.ndarray
    split_mean: np.ndarray
    split_sd: np.ndarray
    acceptance_rates: dict[str, float]
    config: SamplerConfig
    priors: PriorConfig
    seed_id: str

    @property
    def n_draws(self) -> int:
        return self.prob_pooled.shape[0]

    @property
    def n_indications(self) -> int:
        return len(self.labels)

    def prob_split(self, index: int) -> float:
        """Posterior probability that the indication has subgroups."""
        return float(1.0 - self.pooled[:, index].mean())

    def split_draws(self, index: int) -> np.ndarray:
        """Split-point draws conditional on the split sub-model being active."""
        mask = ~self.pooled[:, index]
        return self.split_point[mask, index]

    def state_at(self, t: int) -> ModelState:
        return ModelState(
            prob_pooled=float(self.prob_pooled[t]),
            pooled=self.pooled[t],
            theta_pool=self.theta_pool[t],
            theta_neg=self.theta_neg[t],
            gap=self.gap[t],
            split_point=self.split_point[t],
            split_mean=float(self.split_mean[t]),
            split_sd=float(self.split_sd[t]),
        )


def initial_state(n_indications: int, priors: PriorConfig) -> ModelState:
    """Deterministic starting point at the prior central values."""
    sd0 = priors.split_prior.scale if isinstance(priors.split_prior, HalfCauchyPrior) else 1.0
    mean0 = 0.0
    if isinstance(priors.split_prior, FixedSplitPrior):
        mean0, sd0 = priors.split_prior.mean, priors.split_prior.sd
    return ModelState(
        prob_pooled=priors.beta_a / (priors.beta_a + priors.beta_b),
        pooled=np.zeros(n_indications, dtype=bool),
        theta_pool=np.full(n_indications, priors.theta_pool_mean),
        theta_neg=np.full(n_indications, priors.theta_neg_mean),
        gap=np.full(n_indications, priors.gap_shape / priors.gap_rate),
        split_point=np.full(n_indications, mean0),
        split_mean=mean0,
        split_sd=sd0,
    )


def update_prob_pooled(state: ModelState, priors: PriorConfig,
                       rng: np.random.Generator) -> None:
    """Exact conjugate Beta draw given the current model indicators."""
    n_pooled = int(state.pooled.sum())
    state.prob_pooled = float(rng.beta(priors.beta_a + n_pooled,
                                       priors.beta_b + state.n_indications - n_pooled))


def update_model_choice(state: ModelState, index: int, stats: IndicationStats,
                        rng: np.random.Generator) -> None:
    """Gibbs draw of the sub-model indicator from its full conditional.

    With pseudo-priors equal to the priors, every block-prior factor
    cancels and the conditional odds reduce to prior odds times the
    likelihood ratio of the two sub-models.
    """
    if state.prob_pooled >= 1.0:
        state.pooled[index] = True
        return
    if state.prob_pooled <= 0.0:
        state.pooled[index] = False
        return
    log_pooled = math.log(state.prob_pooled) + stats.loglik_pooled(state.theta_pool[index])
    log_split = math.log1p(-state.prob_pooled) + stats.loglik_split(
        state.theta_neg[index], state.gap[index], state.split_point[index])
    # P(pooled | rest) through the stable logistic of the log-odds
    diff = log_split - log_pooled
    if diff >= 0:
        p_pooled = math.exp(-diff) / (1.0 + math.exp(-diff))
    else:
        p_pooled = 1.0 / (1.0 + math.exp(diff))
    state.pooled[index] = rng.random() < p_pooled


def update_theta_pool(state: ModelState, index: int, stats: IndicationStats,
                      priors: PriorConfig, rng: np.random.Generator,
                      step: float) -> Optional[bool]:
    """MH update of the pooled logit; prior refresh when the block is inactive.

    Returns True/False for an MH accept/reject, None for a refresh.
    """
    if not state.pooled[index]:
        state.theta_pool[index] = rng.normal(priors.theta_pool_mean, priors.theta_pool_sd)
        return None
    cur = state.theta_pool[index]
    prop = cur + step * rng.standard_normal()
    log_ratio = (stats.loglik_pooled(prop) - stats.loglik_pooled(cur)
                 + _normal_quad_diff(prop, cur, priors.theta_pool_mean, priors.theta_pool_sd))
    if _mh_accept(log_ratio, rng):
        state.theta_pool[index] = prop
        return True
    return False


def update_split_rates(state: ModelState, index: int, stats: IndicationStats,
                       priors: PriorConfig, rng: np.random.Generator,
                       step_neg: float, step_gap: float, step_shift: float
                       ) -> tuple[Optional[bool], Optional[bool], Optional[bool]]:
    """Three MH steps on the split block: negative logit, log gap, shift.

    The gap proposal walks on ``log(gap)``; its acceptance ratio carries
    the Jacobian of the transform, i.e. the target in ``u = log(gap)`` is
    ``shape * u - rate * e^u`` plus the likelihood.  The shift move adds
    the same offset to the negative logit that it removes from the gap,
    holding the positive logit fixed: informative positive-subgroup data
    pins ``theta_neg + gap``, so coordinate-wise walks crawl along that
    ridge while the shift move slides freely (unit Jacobian; only the
    negative-subgroup likelihood and the priors resist).  Inactive blocks
    are refreshed from their priors instead (returns (None, None, None)).
    """
    if state.pooled[index]:
        state.theta_neg[index] = rng.normal(priors.theta_neg_mean, priors.theta_neg_sd)
        state.gap[index] = rng.gamma(priors.gap_shape, 1.0 / priors.gap_rate)
        return None, None, None
    split_point = state.split_point[index]
    gap = state.gap[index]

    cur = state.theta_neg[index]
    prop = cur + step_neg * rng.standard_normal()
    log_ratio = (stats.loglik_split(prop, gap, split_point)
                 - stats.loglik_split(cur, gap, split_point)
                 + _normal_quad_diff(prop, cur, priors.theta_neg_mean, priors.theta_neg_sd))
    accept_neg = _mh_accept(log_ratio, rng)
    if accept_neg:
        state.theta_neg[index] = cur = prop

    log_gap = math.log(gap)
    log_gap_prop = log_gap + step_gap * rng.standard_normal()
    gap_prop = math.exp(log_gap_prop)
    log_ratio = (stats.loglik_split(cur, gap_prop, split_point)
                 - stats.loglik_split(cur, gap, split_point)
                 + priors.gap_shape * (log_gap_prop - log_gap)
                 - priors.gap_rate * (gap_prop - gap))
    accept_gap = _mh_accept(log_ratio, rng)
    if accept_gap:
        gap = gap_prop
        state.gap[index] = gap

    offset = step_shift * rng.standard_normal()
    neg_prop = cur + offset
    gap_shift = gap - offset
    accept_shift = False
    if gap_shift > 0.0:
        log_ratio = (stats.loglik_split(neg_prop, gap_shift, split_point)
                     - stats.loglik_split(cur, gap, split_point)
                     + _normal_quad_diff(neg_prop, cur,
                                         priors.theta_neg_mean, priors.theta_neg_sd)
                     + (priors.gap_shape - 1.0) * (math.log(gap_shift) - math.log(gap))
                     - priors.gap_rate * (gap_shift - gap))
        accept_shift = _mh_accept(log_ratio, rng)
        if accept_shift:
            state.theta_neg[index] = neg_prop
            state.gap[index] = gap_shift
    return accept_neg, accept_gap, accept_shift


def update_split_point(state: ModelState, index: int, stats: IndicationStats,
                       priors: PriorConfig, rng: np.random.Generator,
                       step: float) -> Optional[bool]:
    """Update the latent split point; prior refresh when inactive.

    Active updates mix a random walk with an independence proposal from
    the split-point prior (even/odd by a uniform draw).  The likelihood
    is flat outside the biomarker range, so the prior move is what
    carries the chain across wide posteriors when the hierarchical scale
    is large; the random walk resolves the detail between data points.
    Only random-walk proposals count toward the returned accept flag
    (and hence step adaptation).
    """
    mean, sd = priors.split_point_prior_params(state.split_mean, state.split_sd)
    if state.pooled[index]:
        state.split_point[index] = rng.normal(mean, sd)
        return None
    cur = state.split_point[index]
    theta_neg = state.theta_neg[index]
    gap = state.gap[index]
    if rng.random() < 0.5:
        # independence proposal from the prior: prior terms cancel
        prop = rng.normal(mean, sd)
        log_ratio = (stats.loglik_split(theta_neg, gap, prop)
                     - stats.loglik_split(theta_neg, gap, cur))
        if _mh_accept(log_ratio, rng):
            state.split_point[index] = prop
        return None
    prop = cur + step * rng.standard_normal()
    log_ratio = (stats.loglik_split(theta_neg, gap, prop)
                 - stats.loglik_split(theta_neg, gap, cur)
                 + _normal_quad_diff(prop, cur, mean, sd))
    if _mh_accept(log_ratio, rng):
        state.split_point[index] = prop
        return True
    return False


def update_split_mean(state: ModelState, priors: PriorConfig,
                      rng: np.random.Generator) -> None:
    """Exact normal-normal Gibbs draw of the split-point mean.

    Conditions on every indication's split point (active or not): in the
    product space all split points always exist with the hierarchical
    prior.  No-op under fixed split priors.
    """
    if not priors.borrows:
        return
    I = state.n_indications
    var = state.split_sd ** 2
    precision = 1.0 / priors.split_mean_sd ** 2 + I / var
    mean = (float(state.split_point.sum()) / var) / precision
    state.split_mean = rng.normal(mean, math.sqrt(1.0 / precision))


def update_split_sd(state: ModelState, priors: PriorConfig,
                    rng: np.random.Generator, step: float) -> Optional[bool]:
    """Update the split-point scale.

    Half-Cauchy variant: MH mixing a random walk on ``log(sd)`` (with the
    transform Jacobian folded in) and an independence proposal from the
    half-Cauchy prior, which keeps the heavy tail reachable; only the
    random-walk proposals count toward the accept flag.  Inverse-gamma
    variant: exact Gibbs on the variance, IG(shape + I/2, scale + SS/2).
    No-op under fixed priors.
    """
    if not priors.borrows:
        return None
    residuals = state.split_point - state.split_mean
    ss = float(residuals @ residuals)
    I = state.n_indications
    if isinstance(priors.split_prior, InverseGammaPrior):
        shape = priors.split_prior.shape + 0.5 * I
        scale = priors.split_prior.scale + 0.5 * ss
        # If V ~ IG(shape, scale) then 1/V ~ Gamma(shape, rate=scale).
        state.split_sd = math.sqrt(1.0 / rng.gamma(shape, 1.0 / scale))
        return None
    gamma_scale = priors.split_prior.scale

    def log_normal_lik(sd: float) -> float:
        return -I * math.log(sd) - 0.5 * ss / (sd * sd)

    cur = state.split_sd
    if rng.random() < 0.5:
        # half-Cauchy draw via |Cauchy|; prior and proposal terms cancel
        prop = gamma_scale * abs(rng.standard_cauchy())
        if _mh_accept(log_normal_lik(prop) - log_normal_lik(cur), rng):
            state.split_sd = prop
        return None

    def log_target(log_sd: float, sd: float) -> float:
        z = sd / gamma_scale
        return -(I - 1) * log_sd - 0.5 * ss / (sd * sd) - math.log1p(z * z)

    cur_log = math.log(cur)
    prop_log = cur_log + step * rng.standard_normal()
    prop = math.exp(prop_log)
    if _mh_accept(log_target(prop_log, prop) - log_target(cur_log, cur), rng):
        state.split_sd = prop
        return True
    return False


def _normal_quad_diff(prop: float, cur: float, mean: float, sd: float) -> float:
    zp = (prop - mean) / sd
    zc = (cur - mean) / sd
    return 0.5 * (zc * zc - zp * zp)


def _mh_accept(log_ratio: float, rng: np.random.Generator) -> bool:
    if log_ratio >= 0.0:
        return True
    return rng.random() < math.exp(log_ratio)


class _StepAdapter:
    """Robbins-Monro scaling of one proposal step toward a target rate."""

    __slots__ = ("log_step", "target", "accepted", "proposed", "rounds")

    def __init__(self, step: float, target: float):
        self.log_step = math.log(step)
        self.target = target
        self.accepted = 0
        self.proposed = 0
        self.rounds = 0

    def record(self, accepted: bool) -> None:
        self.proposed += 1
        self.accepted += int(accepted)

    def adapt(self) -> None:
        if self.proposed == 0:
            return
        self.rounds += 1
        rate = self.accepted / self.proposed
        self.log_step += (rate - self.target) / math.sqrt(self.rounds)
        self.accepted = 0
        self.proposed = 0

    @property
    def step(self) -> float:
        return math.exp(self.log_step)


def run_chain(data: TrialData, priors: PriorConfig, config: SamplerConfig,
              *, fixed_split: Optional[Sequence[Optional[float]]] = None,
              seed: Optional[SeedLike] = None) -> PosteriorSamples:
    """Run one chain and return the retained draws.

    ``fixed_split`` freezes the given indications' split points at the
    supplied values (entries may be None to leave an indication free) and
    disables the hierarchical mean/scale updates; this is the conditional
    rerun used by the two-step analysis.  ``seed`` overrides
    ``config.seed``, e.g. with a derived per-replicate stream.
    """
    if fixed_split is not None and len(fixed_split) != data.n_indications:
        raise ValueError("fixed_split must have one entry per indication")
    chain_seed = config.seed if seed is None else seed
    rng = generator(chain_seed)
    stats = [IndicationStats(ind.patients) for ind in data.indications]
    n_ind = data.n_indications

    state = initial_state(n_ind, priors)
    frozen = [None] * n_ind if fixed_split is None else list(fixed_split)
    hypers_on = priors.borrows and fixed_split is None
    for i, value in enumerate(frozen):
        if value is not None:
            state.split_point[i] = float(value)

    adapters = {
        "theta_pool": [_StepAdapter(config.step_theta_pool, config.target_accept)
                       for _ in range(n_ind)],
        "theta_neg": [_StepAdapter(config.step_theta_neg, config.target_accept)
                      for _ in range(n_ind)],
        "gap": [_StepAdapter(config.step_gap, config.target_accept) for _ in range(n_ind)],
        "shift": [_StepAdapter(config.step_shift, config.target_accept)
                  for _ in range(n_ind)],
        "split_point": [_StepAdapter(config.step_split_point, config.target_accept)
                        for _ in range(n_ind)],
        "split_sd": [_StepAdapter(config.step_split_sd, config.target_accept)],
    }
    tally = {name: [0, 0] for name in MH_BLOCKS}  # post-burn-in [accepted, proposed]

    n_draws = config.n_draws
    out_prob_pooled = np.empty(n_draws)
    out_pooled = np.empty((n_draws, n_ind), dtype=bool)
    out_theta_pool = np.empty((n_draws, n_ind))
    out_theta_neg = np.empty((n_draws, n_ind))
    out_gap = np.empty((n_draws, n_ind))
    out_split_point = np.empty((n_draws, n_ind))
    out_split_mean = np.empty(n_draws)
    out_split_sd = np.empty(n_draws)

    def note(block: str, slot: int, accepted: Optional[bool], warming: bool) -> None:
        if accepted is None:
            return
        if warming:
            adapters[block][slot].record(accepted)
        else:
            tally[block][0] += int(accepted)
            tally[block][1] += 1

    kept = 0
    for it in range(1, config.iterations + 1):
        warming = it <= config.burn_in
        update_prob_pooled(state, priors, rng)
        for i in range(n_ind):
            update_model_choice(state, i, stats[i], rng)
            note("theta_pool", i,
                 update_theta_pool(state, i, stats[i], priors, rng,
                                   adapters["theta_pool"][i].step), warming)
            acc_neg, acc_gap, acc_shift = update_split_rates(
                state, i, stats[i], priors, rng,
                adapters["theta_neg"][i].step, adapters["gap"][i].step,
                adapters["shift"][i].step)
            note("theta_neg", i, acc_neg, warming)
            note("gap", i, acc_gap, warming)
            note("shift", i, acc_shift, warming)
            if frozen[i] is None:
                note("split_point", i,
                     update_split_point(state, i, stats[i], priors, rng,
                                        adapters["split_point"][i].step), warming)
        if hypers_on:
            update_split_mean(state, priors, rng)
            note("split_sd", 0,
                 update_split_sd(state, priors, rng, adapters["split_sd"][0].step),
                 warming)
        if warming and config.adapt and it % config.adapt_batch == 0:
            for block_adapters in adapters.values():
                for adapter in block_adapters:
                    adapter.adapt()
        if not warming and (it - config.burn_in) % config.thin == 0:
            out_prob_pooled[kept] = state.prob_pooled
            out_pooled[kept] = state.pooled
            out_theta_pool[kept] = state.theta_pool
            out_theta_neg[kept] = state.theta_neg
            out_gap[kept] = state.gap
            out_split_point[kept] = state.split_point
            out_split_mean[kept] = state.split_mean
            out_split_sd[kept] = state.split_sd
            kept += 1
    assert kept == n_draws

    acceptance = {
        name: (acc / prop if prop else math.nan) for name, (acc, prop) in tally.items()
    }
    return PosteriorSamples(
        labels=data.labels,
        prob_pooled=out_prob_pooled,
        pooled=out_pooled,
        theta_pool=out_theta_pool,
        theta_neg=out_theta_neg,
        gap=out_gap,
        split_point=out_split_point,
        split_mean=out_split_mean,
        split_sd=out_split_sd,
        acceptance_rates=acceptance,
        config=config,
        priors=priors,
        seed_id=seed_fingerprint(chain_seed),
    )
