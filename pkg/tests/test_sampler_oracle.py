"""Chain output versus an independent quadrature oracle on a tiny instance."""

import numpy as np
import pytest

from conftest import SIX_BIOMARKERS, SIX_RESPONSES
from helpers import grid_tiny_posterior
from simba.model import FixedSplitPrior, Indication, Patient, PriorConfig, TrialData
from simba.sampler import SamplerConfig, run_chain


@pytest.fixture(scope="module")
def oracle():
    return grid_tiny_posterior(SIX_BIOMARKERS, SIX_RESPONSES)


@pytest.fixture(scope="module")
def chain():
    patients = tuple(Patient(x, y) for x, y in zip(SIX_BIOMARKERS, SIX_RESPONSES))
    data = TrialData((Indication("only", patients, 6, 6),))
    priors = PriorConfig(split_prior=FixedSplitPrior(0.0, 3.0))
    # long chain: the split-point posterior is broad at n=6, so its mean
    # carries the largest Monte Carlo error of the compared quantities
    config = SamplerConfig(iterations=162_000, burn_in=2_000, seed=314)
    return run_chain(data, priors, config)


def test_split_probability_matches_grid(chain, oracle):
    assert chain.prob_split(0) == pytest.approx(oracle["prob_split"], abs=0.03)


def test_split_point_marginal_mean_matches_grid(chain, oracle):
    assert float(chain.split_point[:, 0].mean()) == pytest.approx(
        oracle["split_mean_marginal"], abs=0.05)


def test_split_point_conditional_mean_matches_grid(chain, oracle):
    assert float(chain.split_draws(0).mean()) == pytest.approx(
        oracle["split_mean_given_split"], abs=0.05)


def test_oracle_grid_is_converged(oracle):
    # doubling the grid resolution moves the oracle by far less than the
    # tolerances used against the chain
    fine = grid_tiny_posterior(SIX_BIOMARKERS, SIX_RESPONSES,
                               n_theta=4001, n_neg=1201, n_gap=1201)
    assert fine["prob_split"] == pytest.approx(oracle["prob_split"], abs=1e-4)
    assert fine["split_mean_marginal"] == pytest.approx(
        oracle["split_mean_marginal"], abs=1e-4)
