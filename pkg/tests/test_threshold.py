import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SIX_BIOMARKERS, SIX_RESPONSES, synthetic_samples
from simba.decision import (
    DecisionConfig,
    IndicationRule,
    estimate_threshold,
    threshold_candidates,
    threshold_expected_loss,
)
from simba.model import Patient


def loss_oracle(t, draws, xs, ys, w1, w2, tv):
    """Direct transcription of the three loss components."""
    miss = sum(1 - math.exp(-abs(t - x)) for x in draws) / len(draws)
    excluded = sum(1 for x in xs if x <= t) / len(xs)
    pos = [(x, y) for x, y in zip(xs, ys) if x > t]
    pos_rate = (sum(y for _, y in pos) / len(pos)) if pos else 0.0
    shortfall = (1 - pos_rate / tv) if pos_rate < tv else 0.0
    return miss + w1 * excluded + w2 * shortfall


class TestThresholdExpectedLoss:
    def test_zero_at_truth_with_zero_weights(self, six_patients):
        assert threshold_expected_loss(0.7, np.array([0.7]), six_patients,
                                       0.0, 0.0, 0.3) == pytest.approx(0.0)

    def test_below_all_biomarkers_all_responders(self):
        patients = [Patient(x, 1) for x in (0.2, 0.5, 1.1)]
        draws = np.array([0.1, 0.4, 0.6])
        t = -1.0
        # everyone is positive with rate 1 > tv: only the miss term remains
        expected = float(np.mean(1 - np.exp(-np.abs(t - draws))))
        actual = threshold_expected_loss(t, draws, patients, 0.2, 0.5, 0.3)
        assert actual == pytest.approx(expected)

    def test_six_patient_fixture_matches_oracle(self, six_patients):
        draws = np.array([-0.8, -0.1, 0.05, 0.3, 1.2])
        for t in (-2.0, -0.4, 0.0, 0.12, 0.9, 2.5):
            expected = loss_oracle(t, draws, SIX_BIOMARKERS, SIX_RESPONSES,
                                   0.2, 0.5, 0.3)
            actual = threshold_expected_loss(t, draws, six_patients, 0.2, 0.5, 0.3)
            assert actual == pytest.approx(expected, rel=1e-12), t

    def test_empty_positive_subgroup_gets_full_shortfall(self, six_patients):
        t = 10.0
        actual = threshold_expected_loss(t, np.array([0.0]), six_patients,
                                         0.0, 0.5, 0.3)
        miss = 1 - math.exp(-10.0)
        assert actual == pytest.approx(miss + 0.5 * 1.0)

    def test_requires_draws(self, six_patients):
        with pytest.raises(ValueError):
            threshold_expected_loss(0.0, np.array([]), six_patients, 0.2, 0.5, 0.3)

    @given(
        t=st.floats(-4, 4),
        w1=st.floats(0, 1),
        w2=st.floats(0, 1),
    )
    @settings(max_examples=80, deadline=None)
    def test_bounded(self, t, w1, w2):
        patients = tuple(Patient(x, y) for x, y in zip(SIX_BIOMARKERS, SIX_RESPONSES))
        draws = np.array([-0.5, 0.1, 0.9])
        value = threshold_expected_loss(t, draws, patients, w1, w2, 0.3)
        assert 0.0 <= value <= 1.0 + w1 + w2 + 1e-12

    def test_excluded_fraction_nondecreasing_in_t(self, six_patients):
        draws = np.array([0.0])
        grid = np.linspace(-3, 3, 121)
        # isolate the size penalty by zeroing the other terms' variation
        excluded = [threshold_expected_loss(t, np.array([t]), six_patients,
                                            1.0, 0.0, 0.3) for t in grid]
        assert all(b >= a - 1e-12 for a, b in zip(excluded, excluded[1:]))

    def test_miss_term_continuous_in_t(self, six_patients):
        draws = np.array([-0.3, 0.4])
        base = threshold_expected_loss(0.1, draws, six_patients, 0.0, 0.0, 0.3)
        nearby = threshold_expected_loss(0.1 + 1e-9, draws, six_patients, 0.0, 0.0, 0.3)
        assert abs(nearby - base) < 1e-8


class TestThresholdCandidates:
    def test_midpoints_plus_sentinels(self):
        grid = threshold_candidates([0.0, 1.0, 2.0])
        assert grid == pytest.approx([-0.01, 0.5, 1.5, 2.01])

    def test_duplicate_values_collapse(self):
        grid = threshold_candidates([1.0, 1.0, 1.0])
        assert grid == pytest.approx([0.99, 1.01])

    def test_empty(self):
        assert threshold_candidates([]).size == 0


class TestEstimateThreshold:
    def test_degenerate_posterior_recovers_grid_point(self, six_patients):
        # midpoint between two central biomarkers is exactly on the grid
        x0 = (SIX_BIOMARKERS[2] + SIX_BIOMARKERS[3]) / 2
        samples = synthetic_samples(
            pooled=np.zeros(200, dtype=bool),
            theta_pool=0.0, theta_neg=-2.0, gap=1.0,
            split_point=x0,
            labels=("only",),
        )
        config = DecisionConfig(w1=0.0, w2=0.0)
        t_hat = estimate_threshold(samples, 0, six_patients, config, label="only")
        assert t_hat == pytest.approx(x0)

    def test_no_split_draws_returns_none(self, six_patients):
        samples = synthetic_samples(
            pooled=np.ones(50, dtype=bool),
            theta_pool=0.0, theta_neg=-2.0, gap=1.0, split_point=0.0,
        )
        config = DecisionConfig()
        assert estimate_threshold(samples, 0, six_patients, config, label="x") is None

    def test_ties_break_toward_smaller_threshold(self):
        # symmetric patients and a symmetric posterior make the pure miss
        # term equal at the two interior candidates
        patients = (Patient(-1.0, 1), Patient(0.0, 1), Patient(1.0, 1))
        samples = synthetic_samples(
            pooled=np.zeros(2, dtype=bool),
            theta_pool=0.0, theta_neg=-2.0, gap=1.0,
            split_point=np.array([-0.5, 0.5]),
        )
        config = DecisionConfig(w1=0.0, w2=0.0)
        t_hat = estimate_threshold(samples, 0, patients, config, label="x")
        assert t_hat == pytest.approx(-0.5)

    def test_raising_w1_never_raises_threshold(self, six_patients):
        rng = np.random.default_rng(31)
        samples = synthetic_samples(
            pooled=np.zeros(400, dtype=bool),
            theta_pool=0.0, theta_neg=-2.2, gap=1.4,
            split_point=rng.normal(0.2, 0.5, 400),
        )
        previous = math.inf
        for w1 in (0.0, 0.1, 0.2, 0.5, 1.0, 2.0):
            config = DecisionConfig(w1=w1, w2=0.5)
            t_hat = estimate_threshold(samples, 0, six_patients, config, label="x")
            assert t_hat <= previous + 1e-12
            previous = t_hat
