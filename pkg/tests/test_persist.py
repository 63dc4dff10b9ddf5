from __future__ import annotations

import json

import numpy as np
import pytest

from bearing_stager.classify import StageClassifier
from bearing_stager.dsp import spectra_matrix
from bearing_stager.embed import AEConfig, EmbeddingModel, PCAModel, fit_autoencoder, fit_pca
from bearing_stager.errors import CorruptFile, WrongKind
from bearing_stager.persist import dumps_model, load_model, loads_model, save_model


@pytest.fixture(scope="module")
def ae_model(synth_run):
    run, _ = synth_run
    return fit_autoencoder(spectra_matrix(run, "horizontal", 2), AEConfig(epochs=3, seed=4))


def arrays_equal(a, b):
    return a.dtype == b.dtype and a.shape == b.shape and np.array_equal(a, b)


def test_autoencoder_round_trip(tmp_path, ae_model):
    back = load_model(save_model(ae_model, tmp_path / "ae.json"), kind="ae")
    assert isinstance(back, EmbeddingModel)
    assert back.layer_shapes == ae_model.layer_shapes
    for a, b in zip(ae_model.weights + ae_model.biases, back.weights + back.biases):
        assert arrays_equal(a, b)
    assert arrays_equal(back.bin_mean, ae_model.bin_mean)
    assert arrays_equal(back.bin_std, ae_model.bin_std)
    assert back.residual_mean == ae_model.residual_mean
    assert back.residual_std == ae_model.residual_std
    assert back.seed == 4 and back.latent_dim == 8
    assert back.loss_history == ae_model.loss_history


def test_pca_round_trip(synth_run):
    run, _ = synth_run
    model = fit_pca(spectra_matrix(run, "vertical", 2), 40)
    back = loads_model(dumps_model(model), kind="pca")
    assert isinstance(back, PCAModel)
    for name in ("component_matrix", "bin_mean", "explained_variance_ratio", "explained_variance"):
        assert arrays_equal(getattr(back, name), getattr(model, name))


def test_classifier_round_trip(ae_classifier):
    text = dumps_model(ae_classifier)
    back = loads_model(text, kind="classifier")
    assert isinstance(back, StageClassifier)
    for (Wa, ba), (Wb, bb) in zip(
        ae_classifier.freq_layers + ae_classifier.fusion_layers,
        back.freq_layers + back.fusion_layers,
    ):
        assert arrays_equal(Wa, Wb) and arrays_equal(ba, bb)
    for name in ("freq_mean", "freq_std", "time_mean", "time_std", "class_weights"):
        assert arrays_equal(getattr(back, name), getattr(ae_classifier, name))
    assert back.sample_rate == ae_classifier.sample_rate
    assert back.n_samples == ae_classifier.n_samples
    assert back.history == ae_classifier.history
    # serialisation is itself deterministic
    assert dumps_model(back) == text


def test_truncated_file_is_corrupt(tmp_path, ae_model):
    p = save_model(ae_model, tmp_path / "ae.json")
    data = p.read_bytes()
    p.write_bytes(data[: len(data) // 2])
    with pytest.raises(CorruptFile) as info:
        load_model(p)
    assert info.value.reason == "syntax"


def test_checksum_and_version_detected(ae_model):
    doc = json.loads(dumps_model(ae_model))
    doc["residual_mean"] = doc["residual_mean"] + 1.0
    with pytest.raises(CorruptFile) as info:
        loads_model(json.dumps(doc))
    assert info.value.reason == "checksum"
    doc = json.loads(dumps_model(ae_model))
    doc["format_version"] = 99
    with pytest.raises(CorruptFile) as info:
        loads_model(json.dumps(doc))
    assert info.value.reason == "version"


def test_binary_garbage_is_corrupt(tmp_path):
    p = tmp_path / "bad.json"
    p.write_bytes(b"\xff\xfe\x00garbage")
    with pytest.raises(CorruptFile):
        load_model(p)


def test_wrong_kind(ae_classifier, ae_model):
    with pytest.raises(WrongKind):
        loads_model(dumps_model(ae_classifier), kind="ae")
    with pytest.raises(WrongKind):
        loads_model(dumps_model(ae_model), kind="classifier")


def test_unknown_object_rejected():
    with pytest.raises(TypeError):
        dumps_model(object())
