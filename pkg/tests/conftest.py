import numpy as np
import pytest

from coevo.market_data import RegimeParams, compute_features, segment_timeline, synth_regime_series, synthetic_timeline
from coevo.neural_model import TrainConfig


@pytest.fixture(scope="session")
def regime_series():
    return synth_regime_series(RegimeParams(autocorr=0.6), RegimeParams(autocorr=-0.6), (200, 300), seed=1)


@pytest.fixture(scope="session")
def split(regime_series):
    ds = compute_features(regime_series)
    return segment_timeline(ds, synthetic_timeline(regime_series, 200))


@pytest.fixture
def fresh_split(regime_series):
    """Split with an untouched hold-out read counter."""
    ds = compute_features(regime_series)
    return segment_timeline(ds, synthetic_timeline(regime_series, 200))


@pytest.fixture(scope="session")
def quick_train():
    return TrainConfig(max_epochs=3, patience=2, learning_rate=0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
