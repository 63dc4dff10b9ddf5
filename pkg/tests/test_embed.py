from __future__ import annotations

import numpy as np
import pytest

from bearing_stager import nn
from bearing_stager.dsp import Spectrum, spectra_matrix
from bearing_stager.embed import (
    AEConfig,
    EmbeddingModel,
    autoencoder_loss_and_grads,
    encode,
    fit_autoencoder,
    fit_pca,
    init_autoencoder,
    project_pca,
    reconstruct,
    reconstruction_residual,
    standardize,
)
from bearing_stager.errors import ModelNotTrained, ShapeMismatch, TooFewSpectra
from bearing_stager.synth import SynthConfig, generate_run


def numeric_grad(f, params, h=1e-6):
    out = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            down = f()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-8))


def test_mae_autoencoder_gradient_check():
    # 3 -> 2 -> 1 -> 2 -> 3: five hidden/latent units
    model = init_autoencoder(3, AEConfig(hidden=(2,), latent_dim=1, seed=3))
    rng = np.random.default_rng(0)
    for W in model.weights:
        W[...] = rng.normal(size=W.shape)
    for b in model.biases:
        b[...] = rng.normal(scale=0.5, size=b.shape)
    x = rng.normal(size=(6, 3))
    _, grads = autoencoder_loss_and_grads(model, x)
    params = model.weights + model.biases
    analytic = [g[0] for g in grads] + [g[1] for g in grads]
    numeric = numeric_grad(lambda: autoencoder_loss_and_grads(model, x)[0], params)
    for a, n in zip(analytic, numeric):
        assert rel_err(a, n) <= 1e-4


def test_mae_subgradient_at_zero_is_zero():
    model = init_autoencoder(4, AEConfig(hidden=(3,), latent_dim=2))
    for W in model.weights:
        W[...] = 0.0
    _, grads = autoencoder_loss_and_grads(model, np.zeros((2, 4)))
    assert all(not g[0].any() and not g[1].any() for g in grads)


def test_architecture_shapes():
    model = init_autoencoder(641, AEConfig())
    assert model.layer_shapes == [(641, 256), (256, 64), (64, 8), (8, 64), (64, 256), (256, 641)]
    assert model.activations == ["relu", "relu", "linear", "relu", "relu", "linear"]
    assert model.latent_dim == 8


def test_identical_spectra_memorised():
    x = np.tile(np.linspace(1.0, 5.0, 641), (60, 1))
    model = fit_autoencoder(x, AEConfig(epochs=200, seed=0))
    assert model.loss_history[-1] <= 1e-3
    assert np.all(model.bin_std >= 1e-8)
    assert reconstruction_residual(model, x[0]) <= 1e-3


@pytest.fixture(scope="module")
def healthy_spectra():
    cfg = SynthConfig(snapshots_per_stage=(120, 0, 0, 0), seed=4)
    run, _ = generate_run(cfg)
    return spectra_matrix(run, "horizontal", 2)


def test_healthy_training_halves_mae(healthy_spectra):
    model = fit_autoencoder(healthy_spectra, AEConfig(epochs=200, seed=0))
    assert model.loss_history[-1] <= 0.5 * model.loss_history[0]


def test_fit_is_bit_reproducible(healthy_spectra):
    a = fit_autoencoder(healthy_spectra, AEConfig(epochs=5, seed=7))
    b = fit_autoencoder(healthy_spectra, AEConfig(epochs=5, seed=7))
    for x, y in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(x, y)
    assert a.residual_mean == b.residual_mean


def test_trained_beats_untrained(healthy_spectra):
    untrained = fit_autoencoder(healthy_spectra, AEConfig(epochs=0, seed=1))
    trained = fit_autoencoder(healthy_spectra, AEConfig(epochs=30, seed=1))
    assert trained.residual_mean < untrained.residual_mean


def test_zero_epochs_keeps_initial_weights(healthy_spectra):
    model = fit_autoencoder(healthy_spectra, AEConfig(epochs=0, seed=2))
    fresh = init_autoencoder(641, AEConfig(seed=2))
    for a, b in zip(model.weights, fresh.weights):
        assert np.array_equal(a, b)
    assert model.residual_mean is not None and model.residual_std is not None
    assert model.loss_history == []


def test_out_of_distribution_residual_exceeds_threshold(healthy_spectra):
    model = fit_autoencoder(healthy_spectra, AEConfig(epochs=100, seed=0))
    loud = 10.0 * healthy_spectra[:10]
    res = reconstruction_residual(model, loud)
    assert np.all(res > model.residual_mean + 3 * model.residual_std)


def test_encode_and_residual_shapes(healthy_spectra):
    model = fit_autoencoder(healthy_spectra, AEConfig(epochs=2, seed=0))
    z = encode(model, healthy_spectra[0])
    assert z.shape == (8,)
    assert np.array_equal(z, encode(model, healthy_spectra[0]))
    assert encode(model, healthy_spectra[:4]).shape == (4, 8)
    spec = Spectrum(healthy_spectra[1], 10.0)
    assert encode(model, spec).shape == (8,)
    assert isinstance(reconstruction_residual(model, spec), float)
    assert reconstruct(model, healthy_spectra[:3]).shape == (3, 641)
    # two spectra that standardise identically give identical latents
    shifted = healthy_spectra[0] + 0.0
    assert np.array_equal(standardize(model, shifted), standardize(model, healthy_spectra[0]))
    with pytest.raises(ShapeMismatch):
        encode(model, np.zeros(640))


def test_zero_network_zero_residual():
    model = init_autoencoder(5, AEConfig(hidden=(4,), latent_dim=2))
    for W in model.weights:
        W[...] = 0.0
    assert reconstruction_residual(model, model.bin_mean.copy()) == 0.0


def test_fit_errors():
    with pytest.raises(TooFewSpectra):
        fit_autoencoder(np.ones((49, 641)))
    model = init_autoencoder(4, AEConfig(hidden=(3,), latent_dim=2))
    with pytest.raises(ModelNotTrained):
        model.threshold


# --- PCA -------------------------------------------------------------------------------


def test_pca_rank_two_plane():
    rng = np.random.default_rng(0)
    coeffs = rng.normal(size=(30, 2))
    basis = rng.normal(size=(2, 20))
    x = 3.0 + coeffs @ basis
    model = fit_pca(x, n_components=2)
    assert model.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-9)


def test_pca_isotropic_ratios():
    # sampling spread inflates the top eigenvalues by about (1 + sqrt(L / n))^2,
    # so n must be large for the +-20 % band around 1/L to hold
    x = np.random.default_rng(1).standard_normal((100_000, 641))
    model = fit_pca(x, 40)
    r = model.explained_variance_ratio
    assert np.all(np.abs(r - 1 / 641) <= 0.2 / 641)
    assert r.sum() == pytest.approx(40 / 641, rel=0.2)


def test_pca_invariants(synth_run):
    run, _ = synth_run
    x = spectra_matrix(run, "horizontal", 2)
    model = fit_pca(x, 40)
    c = model.component_matrix
    assert np.max(np.abs(c.T @ c - np.eye(40))) <= 1e-8
    r = model.explained_variance_ratio
    assert np.all(np.diff(r) <= 1e-15) and np.all((0 <= r) & (r <= 1))
    for j in range(40):
        nz = np.flatnonzero(np.abs(c[:, j]) > 1e-12)
        assert c[nz[0], j] > 0
    proj = project_pca(model, x)
    cov = np.cov(proj, rowvar=False)
    off = cov - np.diag(np.diag(cov))
    assert np.max(np.abs(off)) <= 1e-6 * np.max(np.diag(cov))


def test_pca_projection_examples(synth_run):
    run, _ = synth_run
    x = spectra_matrix(run, "vertical", 2)
    model = fit_pca(x, 40)
    assert np.allclose(project_pca(model, model.bin_mean), 0.0)
    p = project_pca(model, model.bin_mean + 2.5 * model.component_matrix[:, 0])
    expected = np.zeros(40)
    expected[0] = 2.5
    np.testing.assert_allclose(p, expected, atol=1e-9)


def test_pca_exact_recovery_in_span():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(80, 5)) @ rng.normal(size=(5, 50))
    model = fit_pca(x, 5)
    p = project_pca(model, x)
    back = p @ model.component_matrix.T + model.bin_mean
    np.testing.assert_allclose(back, x, atol=1e-9)


def test_pca_errors():
    with pytest.raises(TooFewSpectra):
        fit_pca(np.ones((40, 641)), 40)
    with pytest.raises(ShapeMismatch):
        fit_pca(np.ones((100, 10)), 40)
