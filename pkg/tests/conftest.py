import numpy as np
import pytest

from simba.model import Indication, Patient, PriorConfig, TrialData
from simba.sampler import PosteriorSamples, SamplerConfig

# Six patients spanning the biomarker range, one exactly at 0 to exercise
# the inclusive-boundary convention.
SIX_BIOMARKERS = (-1.3, -0.4, 0.0, 0.25, 0.9, 1.7)
SIX_RESPONSES = (0, 0, 1, 0, 1, 1)


@pytest.fixture
def six_patients():
    return tuple(Patient(x, y) for x, y in zip(SIX_BIOMARKERS, SIX_RESPONSES))


@pytest.fixture
def tiny_data(six_patients):
    return TrialData((Indication("only", six_patients, n_interim=6, n_max=6),))


@pytest.fixture
def default_priors():
    return PriorConfig()


@pytest.fixture
def fast_config():
    return SamplerConfig(iterations=1200, burn_in=400, seed=123)


def synthetic_samples(pooled, theta_pool, theta_neg, gap, split_point,
                      priors=None, labels=None, split_mean=None, split_sd=None):
    """Assemble a PosteriorSamples object from explicit draw arrays."""
    pooled = np.asarray(pooled, dtype=bool)
    if pooled.ndim == 1:
        pooled = pooled[:, None]
    n_draws, n_ind = pooled.shape

    def shape(arr):
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 0:
            arr = np.full((n_draws, n_ind), float(arr))
        elif arr.ndim == 1:
            arr = np.tile(arr[:, None], (1, n_ind)) if arr.shape[0] == n_draws \
                else np.tile(arr[None, :], (n_draws, 1))
        return arr

    return PosteriorSamples(
        labels=tuple(labels) if labels else tuple(f"ind{i+1}" for i in range(n_ind)),
        prob_pooled=np.full(n_draws, 0.5),
        pooled=pooled,
        theta_pool=shape(theta_pool),
        theta_neg=shape(theta_neg),
        gap=shape(gap),
        split_point=shape(split_point),
        split_mean=np.zeros(n_draws) if split_mean is None else np.asarray(split_mean),
        split_sd=np.ones(n_draws) if split_sd is None else np.asarray(split_sd),
        acceptance_rates={},
        config=SamplerConfig(),
        priors=priors if priors is not None else PriorConfig(),
        seed_id="synthetic",
    )
