import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import expit

from simba.model import (
    FixedSplitPrior,
    HalfCauchyPrior,
    InverseGammaPrior,
    ModelState,
    Patient,
    PriorConfig,
    log_half_cauchy_pdf,
    log_lik_pooled,
    log_lik_split,
    log_prior,
    overall_rate,
)


def bernoulli_product_loglik(ys, probs):
    """Independent oracle: per-patient Bernoulli log-pmf product via scipy."""
    return float(sum(stats.bernoulli.logpmf(y, p) for y, p in zip(ys, probs)))


class TestLogLikPooled:
    def test_single_patient_at_even_odds(self):
        assert log_lik_pooled(0.0, [Patient(0.3, 1)]) == pytest.approx(math.log(0.5))

    def test_symmetry_at_even_odds(self):
        patients = [Patient(0.0, 1), Patient(1.0, 0)]
        assert log_lik_pooled(0.0, patients) == pytest.approx(2 * math.log(0.5))

    def test_matches_bernoulli_product_oracle(self):
        # 10 patients, 2 responders; frozen value from the oracle below
        ys = [1, 0, 0, 0, 1, 0, 0, 0, 0, 0]
        patients = [Patient(0.1 * j, y) for j, y in enumerate(ys)]
        theta = -2.3
        expected = bernoulli_product_loglik(ys, [expit(theta)] * 10)
        assert log_lik_pooled(theta, patients) == pytest.approx(expected, rel=1e-12)

    def test_empty_patient_list(self):
        assert log_lik_pooled(1.7, []) == 0.0

    def test_stable_for_extreme_logits(self):
        patients = [Patient(0.0, 1), Patient(0.0, 0)]
        for theta in (-800.0, -35.0, 35.0, 800.0):
            value = log_lik_pooled(theta, patients)
            assert math.isfinite(value)
            # one success and one failure: loglik = theta - 2*log(1+e^theta) <= -|theta|
            assert value <= -abs(theta) + 1e-9

    def test_rejects_non_finite_theta(self):
        with pytest.raises(ValueError):
            log_lik_pooled(float("nan"), [Patient(0.0, 1)])
        with pytest.raises(ValueError):
            log_lik_pooled(float("inf"), [Patient(0.0, 1)])


class TestLogLikSplit:
    def test_vanishing_gap_approaches_pooled(self, six_patients):
        pooled = log_lik_pooled(-2.2, six_patients)
        split = log_lik_split(-2.2, 1e-12, 0.1, six_patients)
        assert split == pytest.approx(pooled, abs=1e-6)

    def test_split_below_all_biomarkers_equals_pooled_at_upper_rate(self, six_patients):
        split = log_lik_split(-2.2, 1.4, -5.0, six_patients)
        assert split == log_lik_pooled(-2.2 + 1.4, six_patients)

    def test_split_above_all_biomarkers_equals_pooled_at_lower_rate(self, six_patients):
        split = log_lik_split(-2.2, 1.4, 5.0, six_patients)
        assert split == log_lik_pooled(-2.2, six_patients)

    def test_matches_bernoulli_product_oracle(self, six_patients):
        theta_neg, gap, split_at = -2.2, 1.4, 0.0
        probs = [expit(theta_neg) if p.biomarker <= split_at else expit(theta_neg + gap)
                 for p in six_patients]
        expected = bernoulli_product_loglik([p.response for p in six_patients], probs)
        actual = log_lik_split(theta_neg, gap, split_at, six_patients)
        assert actual == pytest.approx(expected, rel=1e-12)

    def test_boundary_patient_counts_as_negative(self):
        # patient exactly at the split point takes the lower rate
        boundary = [Patient(0.0, 1)]
        at_split = log_lik_split(-1.0, 2.0, 0.0, boundary)
        assert at_split == pytest.approx(log_lik_pooled(-1.0, boundary))

    def test_rejects_bad_inputs(self, six_patients):
        with pytest.raises(ValueError):
            log_lik_split(0.0, -0.5, 0.0, six_patients)
        with pytest.raises(ValueError):
            log_lik_split(float("nan"), 1.0, 0.0, six_patients)

    @given(
        theta=st.floats(-8, 8),
        gap=st.floats(1e-3, 6),
        split_at=st.floats(-3, 3),
    )
    @settings(max_examples=60, deadline=None)
    def test_loglik_nonpositive_and_finite(self, theta, gap, split_at):
        patients = [Patient(-0.5, 1), Patient(0.2, 0), Patient(1.4, 1)]
        value = log_lik_split(theta, gap, split_at, patients)
        assert math.isfinite(value)
        assert value <= 0.0


def _state(n=3, rng=None):
    rng = rng or np.random.default_rng(0)
    return ModelState(
        prob_pooled=0.4,
        pooled=np.array([True, False, True][:n]),
        theta_pool=rng.normal(-2, 1, n),
        theta_neg=rng.normal(-2, 1, n),
        gap=rng.gamma(30, 1 / 21.5, n),
        split_point=rng.normal(0, 1, n),
        split_mean=0.3,
        split_sd=1.7,
    )


def scipy_log_prior(state, priors):
    """Independent oracle: term-by-term density sum via scipy.stats."""
    total = stats.beta(priors.beta_a, priors.beta_b).logpdf(state.prob_pooled)
    if isinstance(priors.split_prior, FixedSplitPrior):
        sp_mean, sp_sd = priors.split_prior.mean, priors.split_prior.sd
    else:
        sp_mean, sp_sd = state.split_mean, state.split_sd
    for i in range(state.n_indications):
        total += stats.bernoulli(1 - state.prob_pooled).logpmf(0 if state.pooled[i] else 1)
        total += stats.norm(priors.theta_pool_mean, priors.theta_pool_sd).logpdf(
            state.theta_pool[i])
        total += stats.norm(priors.theta_neg_mean, priors.theta_neg_sd).logpdf(
            state.theta_neg[i])
        total += stats.gamma(priors.gap_shape, scale=1 / priors.gap_rate).logpdf(
            state.gap[i])
        total += stats.norm(sp_mean, sp_sd).logpdf(state.split_point[i])
    if not isinstance(priors.split_prior, FixedSplitPrior):
        total += stats.norm(0, priors.split_mean_sd).logpdf(state.split_mean)
        if isinstance(priors.split_prior, HalfCauchyPrior):
            total += stats.halfcauchy(scale=priors.split_prior.scale).logpdf(state.split_sd)
        else:
            total += stats.invgamma(priors.split_prior.shape,
                                    scale=priors.split_prior.scale).logpdf(
                state.split_sd ** 2)
    return float(total)


class TestLogPrior:
    @pytest.mark.parametrize("split_prior", [
        HalfCauchyPrior(2.5),
        InverseGammaPrior(1.0, 1.0),
        FixedSplitPrior(0.0, 3.0),
    ])
    def test_matches_scipy_density_sum(self, split_prior):
        priors = PriorConfig(split_prior=split_prior)
        state = _state()
        assert log_prior(state, priors) == pytest.approx(
            scipy_log_prior(state, priors), rel=1e-10)

    def test_uniform_beta_contributes_zero(self):
        state = _state()
        base = PriorConfig(beta_a=1.0, beta_b=1.0)
        shifted = PriorConfig(beta_a=2.0, beta_b=3.0)
        beta_term = stats.beta(2, 3).logpdf(state.prob_pooled)
        assert log_prior(state, base) == pytest.approx(
            log_prior(state, shifted) - beta_term, rel=1e-10)

    def test_half_cauchy_at_origin(self):
        for scale in (1.0, 2.5, 4.0):
            assert log_half_cauchy_pdf(1e-300, scale) == pytest.approx(
                math.log(2 / (math.pi * scale)))

    def test_invariant_under_indication_permutation(self):
        priors = PriorConfig()
        state = _state()
        perm = np.array([2, 0, 1])
        permuted = ModelState(
            prob_pooled=state.prob_pooled,
            pooled=state.pooled[perm],
            theta_pool=state.theta_pool[perm],
            theta_neg=state.theta_neg[perm],
            gap=state.gap[perm],
            split_point=state.split_point[perm],
            split_mean=state.split_mean,
            split_sd=state.split_sd,
        )
        assert log_prior(state, priors) == pytest.approx(
            log_prior(permuted, priors), rel=1e-12)


class TestOverallRate:
    def test_paper_mixture_examples(self):
        phi = stats.norm().cdf
        assert overall_rate(0.1, 0.4, -0.1, phi) == pytest.approx(0.26, abs=0.005)
        assert overall_rate(0.1, 0.4, 0.5, phi) == pytest.approx(0.19, abs=0.005)

    def test_no_subgroup_difference(self):
        phi = stats.norm().cdf
        for p in (0.05, 0.2, 0.9):
            assert overall_rate(p, p, 1.3, phi) == pytest.approx(p)

    def test_rejects_inverted_rates(self):
        with pytest.raises(ValueError):
            overall_rate(0.5, 0.2, 0.0, stats.norm().cdf)

    @given(
        p_neg=st.floats(0, 1),
        bump=st.floats(0, 1),
        split=st.floats(-3, 3),
    )
    @settings(max_examples=60, deadline=None)
    def test_bounded_by_subgroup_rates(self, p_neg, bump, split):
        p_pos = min(1.0, p_neg + bump)
        value = overall_rate(p_neg, p_pos, split, stats.norm().cdf)
        assert p_neg - 1e-12 <= value <= p_pos + 1e-12

    def test_monotone_in_both_rates(self):
        phi = stats.norm().cdf
        base = overall_rate(0.1, 0.4, 0.2, phi)
        assert overall_rate(0.15, 0.4, 0.2, phi) >= base
        assert overall_rate(0.1, 0.45, 0.2, phi) >= base


class TestTypes:
    def test_patient_validation(self):
        with pytest.raises(ValueError):
            Patient(float("inf"), 1)
        with pytest.raises(ValueError):
            Patient(0.0, 2)

    def test_prior_config_validation(self):
        with pytest.raises(ValueError):
            PriorConfig(gap_rate=0.0)
        with pytest.raises(ValueError):
            HalfCauchyPrior(scale=-1.0)
        with pytest.raises(ValueError):
            InverseGammaPrior(shape=0.0)

    def test_model_state_validation(self):
        with pytest.raises(ValueError):
            _bad = ModelState(
                prob_pooled=0.5,
                pooled=np.array([True]),
                theta_pool=np.array([0.0]),
                theta_neg=np.array([0.0]),
                gap=np.array([-1.0]),
                split_point=np.array([0.0]),
                split_mean=0.0,
                split_sd=1.0,
            )
