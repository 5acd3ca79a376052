import numpy as np
import pytest

import ctctag as c

# the calendar utterance exercised end to end by the docs and tests, in
# canonical single-space form
LISTING = (
    "@CALENDER_SET@ put !EVENT_NAME! meeting !END! with !PERSON! paul !END! "
    "for !DATE! tomorrow !END! !TIME! ten am !END!"
)


@pytest.fixture(scope="session")
def listing_text() -> str:
    return LISTING


@pytest.fixture(scope="session")
def calendar_registry():
    """Registry over the default grammar; covers every word in LISTING."""
    return c.build_registry(c.default_config(seed=0, n_utterances=1))


@pytest.fixture(scope="session")
def listing_labels(calendar_registry, listing_text):
    return c.encode_tagged_text(calendar_registry, listing_text)


@pytest.fixture(scope="session")
def small_corpus():
    """200 in-memory utterances: (tagged_text, labels, features) triples."""
    cfg = c.SynthConfig(seed=11, n_utterances=200, speaker_change_probability=0.1)
    registry = c.build_registry(cfg)
    table = c.embedding_table(cfg)
    items = [c.sample_utterance(cfg, registry, i, table) for i in range(cfg.n_utterances)]
    return cfg, registry, items


def one_hot_emissions(path, v_total) -> c.EmissionMatrix:
    probs = np.zeros((len(path), v_total))
    probs[np.arange(len(path)), list(path)] = 1.0
    return c.EmissionMatrix(probs)


@pytest.fixture(scope="session")
def make_one_hot():
    return one_hot_emissions
