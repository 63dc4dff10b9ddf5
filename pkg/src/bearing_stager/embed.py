"""Per-bearing embedding of magnitude spectra: AutoEncoder and PCA baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dsp import Spectrum
from .errors import DivergedLoss, ModelNotTrained, ShapeMismatch, TooFewSpectra

STD_FLOOR = 1e-8
MIN_AE_SPECTRA = 50


@dataclass(frozen=True)
class AEConfig:
    epochs: int = 200
    batch: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] = (256, 64)
    latent_dim: int = 8


@dataclass
class EmbeddingModel:
    """Trained AutoEncoder plus the input scaling it was trained under.

    Layers run encoder then mirrored decoder. Hidden layers use ReLU; the
    latent layer and the output layer are linear.
    """

    layer_shapes: list[tuple[int, int]]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    bin_mean: np.ndarray
    bin_std: np.ndarray
    latent_dim: int
    residual_mean: float | None = None
    residual_std: float | None = None
    seed: int = 0
    loss_history: list[float] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.layer_shapes[0][0]

    @property
    def n_encoder_layers(self) -> int:
        return len(self.layer_shapes) // 2

    @property
    def activations(self) -> list[str]:
        return _ae_activations(len(self.layer_shapes))

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.weights, self.biases))

    @property
    def threshold(self) -> float:
        if self.residual_mean is None or self.residual_std is None:
            raise ModelNotTrained("residual statistics are not populated")
        return self.residual_mean + 3.0 * self.residual_std


def _ae_activations(n_layers: int) -> list[str]:
    latent = n_layers // 2 - 1
    return [
        "linear" if i in (latent, n_layers - 1) else "relu" for i in range(n_layers)
    ]


def _as_matrix(spectra) -> np.ndarray:
    if isinstance(spectra, Spectrum):
        return spectra.bins[None, :]
    if isinstance(spectra, np.ndarray):
        return np.atleast_2d(spectra).astype(float, copy=False)
    return np.vstack([s.bins if isinstance(s, Spectrum) else np.asarray(s, float) for s in spectra])


def _check_width(model_dim: int, x: np.ndarray) -> None:
    if x.shape[1] != model_dim:
        raise ShapeMismatch(f"model expects {model_dim} bins, got {x.shape[1]}")


def standardize(model: EmbeddingModel, spectra) -> np.ndarray:
    x = _as_matrix(spectra)
    _check_width(model.input_dim, x)
    return (x - model.bin_mean) / model.bin_std


def init_autoencoder(input_dim: int, config: AEConfig, bin_mean=None, bin_std=None) -> EmbeddingModel:
    sizes = [input_dim, *config.hidden, config.latent_dim, *reversed(config.hidden), input_dim]
    rng = np.random.default_rng(config.seed)
    layers = nn.init_layers(rng, sizes)
    return EmbeddingModel(
        layer_shapes=[(a, b) for a, b in zip(sizes[:-1], sizes[1:])],
        weights=[W for W, _ in layers],
        biases=[b for _, b in layers],
        bin_mean=np.zeros(input_dim) if bin_mean is None else bin_mean,
        bin_std=np.ones(input_dim) if bin_std is None else bin_std,
        latent_dim=config.latent_dim,
        seed=config.seed,
    )


def autoencoder_loss_and_grads(model: EmbeddingModel, x_std: np.ndarray):
    """Mean absolute reconstruction error of standardised rows and its gradients.

    The subgradient of ``|d|`` at ``d == 0`` is taken as 0.
    """
    out, cache = nn.forward(model.layers, model.activations, x_std)
    diff = out - x_std
    loss = float(np.mean(np.abs(diff)))
    grads, _ = nn.backward(model.layers, model.activations, cache, np.sign(diff) / diff.size)
    return loss, grads


def fit_autoencoder(spectra, config: AEConfig = AEConfig(), min_spectra: int = MIN_AE_SPECTRA) -> EmbeddingModel:
    """Train an AutoEncoder on spectra of one channel of one bearing.

    Inputs are standardised per bin with statistics of ``spectra``; the loss is
    the mean absolute error; updates use Adam on shuffled mini-batches.
    Residual mean/std of the training spectra are stored on the model.
    """
    x = _as_matrix(spectra)
    if x.shape[0] < min_spectra:
        raise TooFewSpectra(f"need at least {min_spectra} spectra, got {x.shape[0]}")
    bin_mean = x.mean(axis=0)
    bin_std = np.maximum(x.std(axis=0), STD_FLOOR)
    model = init_autoencoder(x.shape[1], config, bin_mean, bin_std)
    xs = (x - bin_mean) / bin_std

    # separate stream from the initialiser so shuffling never perturbs weights
    rng = np.random.default_rng([config.seed, 1])
    opt = nn.Adam(model.weights + model.biases, lr=config.learning_rate)
    n = xs.shape[0]
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch):
            xb = xs[order[start:start + config.batch]]
            loss, grads = autoencoder_loss_and_grads(model, xb)
            opt.step([g[0] for g in grads] + [g[1] for g in grads])
            total += loss * xb.shape[0]
        history.append(total / n)
    model.loss_history = history
    if history and not np.isfinite(history[-1]):
        raise DivergedLoss(f"training loss became {history[-1]}")

    res = _residuals_std(model, xs)
    if not np.isfinite(res).all():
        raise DivergedLoss("non-finite reconstruction residuals")
    model.residual_mean = float(res.mean())
    model.residual_std = float(res.std())
    return model


def _encode_std(model: EmbeddingModel, xs: np.ndarray) -> np.ndarray:
    k = model.n_encoder_layers
    z, _ = nn.forward(model.layers[:k], model.activations[:k], xs)
    return z


def _reconstruct_std(model: EmbeddingModel, xs: np.ndarray) -> np.ndarray:
    out, _ = nn.forward(model.layers, model.activations, xs)
    return out


def _residuals_std(model: EmbeddingModel, xs: np.ndarray) -> np.ndarray:
    return np.mean(np.abs(_reconstruct_std(model, xs) - xs), axis=1)


def _squeeze_like(spectra, arr: np.ndarray):
    single = isinstance(spectra, Spectrum) or (isinstance(spectra, np.ndarray) and spectra.ndim == 1)
    return arr[0] if single else arr


def encode(model: EmbeddingModel, spectra) -> np.ndarray:
    """Latent vector(s) of standardised spectra. 1-D in, 1-D out."""
    return _squeeze_like(spectra, _encode_std(model, standardize(model, spectra)))


def reconstruct(model: EmbeddingModel, spectra) -> np.ndarray:
    """Reconstruction in standardised units."""
    return _squeeze_like(spectra, _reconstruct_std(model, standardize(model, spectra)))


def reconstruction_residual(model: EmbeddingModel, spectra):
    """Mean absolute difference between standardised input and reconstruction."""
    res = _residuals_std(model, standardize(model, spectra))
    out = _squeeze_like(spectra, res)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------------
# PCA
# --------------------------------------------------------------------------------


@dataclass
class PCAModel:
    component_matrix: np.ndarray  # (L, n_components), orthonormal columns
    bin_mean: np.ndarray
    explained_variance_ratio: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.component_matrix.shape[1]


def fit_pca(spectra, n_components: int = 40) -> PCAModel:
    """Top eigenvectors of the centred covariance, largest eigenvalue first.

    Each component is sign-fixed so that its first non-zero entry is positive.
    """
    x = _as_matrix(spectra)
    n, dim = x.shape
    if n < n_components + 1:
        raise TooFewSpectra(f"PCA with {n_components} components needs > {n_components} spectra, got {n}")
    if n_components > dim:
        raise ShapeMismatch(f"cannot keep {n_components} components of {dim}-dim data")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n_components]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order]
    for j in range(comps.shape[1]):
        col = comps[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            comps[:, j] = -col
    total = float(np.trace(cov))
    ratio = evals / total if total > 0 else np.zeros_like(evals)
    return PCAModel(comps, mean, ratio, evals)


def project_pca(model: PCAModel, spectra) -> np.ndarray:
    x = _as_matrix(spectra)
    _check_width(model.component_matrix.shape[0], x)
    return _squeeze_like(spectra, (x - model.bin_mean) @ model.component_matrix)
