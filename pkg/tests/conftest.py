"""Session fixtures shared across the suite.

The planted-rule benchmark dataset and the models trained on it are expensive
(seconds each), so they are built once per session and reused by both the
unit tests and the acceptance checks.
"""

from __future__ import annotations

import numpy as np
import pytest

from salient_feedback.gbt import TrainConfig, fit_gbt
from salient_feedback.synthetic import SyntheticSpec, generate_synthetic_dataset


@pytest.fixture(scope="session")
def dataset():
    """Planted-rule benchmark dataset: n=2000 events, noise 0.1, seed 7."""
    return generate_synthetic_dataset(SyntheticSpec())


@pytest.fixture(scope="session")
def fast_model(dataset):
    """Small ensemble on the benchmark dataset, for tests that need a trained
    model without paying full training time."""
    schema = dataset.schema
    return fit_gbt(
        dataset.x,
        dataset.y,
        TrainConfig(n_trees=40, max_depth=3, seed=7),
        mask=dataset.mask,
        feature_names=schema.names,
        schema_fingerprint=schema.fingerprint,
        mode="Auto",
    )


@pytest.fixture(scope="session")
def full_model(dataset):
    """Default-config ensemble on the benchmark dataset."""
    schema = dataset.schema
    return fit_gbt(
        dataset.x,
        dataset.y,
        TrainConfig(seed=7),
        mask=dataset.mask,
        feature_names=schema.names,
        schema_fingerprint=schema.fingerprint,
        mode="Auto",
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
