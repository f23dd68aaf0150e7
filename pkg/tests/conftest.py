import pytest

from bbdrec.data import build_samples, split_chronological, synth_markov
from bbdrec.trainer import TrainConfig


@pytest.fixture(scope="session")
def tiny_splits():
    log = synth_markov(12, 0.0, 40, (6, 10), seed=0)
    return split_chronological(build_samples(log, L=6))


@pytest.fixture()
def tiny_config():
    return TrainConfig(T=4, m=0.05, d=8, L=6, batch_size=64, max_epochs=3,
                       patience=2, seed=0, dropout=0.0)
