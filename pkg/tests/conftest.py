"""Shared fixtures: small synthetic datasets with known structure."""

import numpy as np
import pytest
from numpy.random import Generator, Philox, SeedSequence

from drbands import Dataset, InferencePlan, ResponseThresholds


def rng_for(*key) -> Generator:
    return Generator(Philox(SeedSequence(entropy=tuple(int(k) for k in key))))


def logit_dataset(seed=0, n=120, p_tilde=1, p=6, theta=(-0.8,), beta_scale=0.7):
    """Dataset drawn from an actual logistic threshold model.

    y is latent-linear with logistic noise, so thresholding at any u gives a
    correctly specified logistic regression in (d, x).
    """
    rng = rng_for(seed, 7, 11)
    d = rng.standard_normal((n, p_tilde))
    x = rng.standard_normal((n, p))
    beta = beta_scale / (np.arange(1, p + 1) ** 2)
    y = d @ (-np.asarray(theta[:p_tilde])) + x @ beta + rng.logistic(0.0, 1.0, n)
    return Dataset(d=d, x=x, y=y)


@pytest.fixture
def small_ds():
    return logit_dataset()


@pytest.fixture
def plan_unit():
    # thresholds spanning the bulk of the latent response
    return InferencePlan(thresholds=ResponseThresholds(-1.0, 1.0))
