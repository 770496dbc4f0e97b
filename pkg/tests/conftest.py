import numpy as np
import pytest

from triage_cascade import pipeline
from triage_cascade.cascade import CascadePolicy
from triage_cascade.data import SynthConfig, generate_cohort, split_cohort


def small_config(**overrides) -> pipeline.RunConfig:
    cfg = pipeline.RunConfig(test_n=40, synth={"n_total": 320, "advanced_fraction": 0.75, "d_a": 12})
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(SynthConfig(**small_config().synth))


@pytest.fixture(scope="session")
def small_trained(small_cohort):
    cfg = small_config()
    split = split_cohort(small_cohort, cfg.test_n, cfg.split_seed)
    train = pipeline.train_models(small_cohort, split, cfg)
    _, choice = pipeline.choose_threshold(train, cfg.threshold_strategy)
    policy = CascadePolicy(train.basic, train.advanced, train.triage, choice.tau, cfg.delta)
    return cfg, split, train, policy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
