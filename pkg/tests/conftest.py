from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from bearing_stager.label import LabelConfig, label_run_ae
from bearing_stager.synth import SynthConfig, generate_run

ORACLES = json.loads((Path(__file__).parent / "oracle_values.json").read_text())

# three training runs and two held-out runs with unseen seeds and fault rates
TRAIN_SPECS = [(0, 160.0), (1, 140.0), (2, 180.0)]
TEST_SPECS = [(10, 150.0), (11, 170.0)]

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture(scope="session")
def synth_run():
    """Default 40/40/20/20 synthetic run and its truth labels."""
    return generate_run(SynthConfig(seed=0, bearing_id="s0"))


@pytest.fixture(scope="session")
def train_runs():
    return [generate_run(SynthConfig(seed=s, fault_hz=f, bearing_id=f"s{s}")) for s, f in TRAIN_SPECS]


@pytest.fixture(scope="session")
def test_runs():
    return [generate_run(SynthConfig(seed=s, fault_hz=f, bearing_id=f"t{s}")) for s, f in TEST_SPECS]


@pytest.fixture(scope="session")
def ae_labeled_train(train_runs):
    """AElabels of the training runs with default settings (200 AE epochs)."""
    return [label_run_ae(run, LabelConfig(seed=0)) for run, _ in train_runs]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ae_classifier(ae_labeled_train):
    """Classifier trained with default settings on the AElabels of the training runs."""
    from bearing_stager.classify import build_training_set, train_classifier

    return train_classifier(build_training_set(ae_labeled_train))
