"""Multi-input stage classifier and smoothed sequential inference.

The frequency branch turns both channel spectra into a compact feature
vector; those features are concatenated with the scaled time-domain features
and mapped to four stage logits.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .dsp import decimate, spectra_matrix
from .errors import DivergedLoss, MissingStageWarning, ShapeMismatch
from .features import run_feature_matrix, time_features
from .ingest import CHANNELS, BearingRun, VibrationSnapshot
from .label import N_STAGES, STAGE_NAMES, LabeledRun

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class ClassifierConfig:
    epochs: int = 50
    batch: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    freq_hidden: tuple[int, ...] = (256, 64)
    fusion_hidden: tuple[int, ...] = (32,)
    class_weighting: bool = True


@dataclass
class TrainingSet:
    freq: np.ndarray  # (n, 2 * bins), raw magnitudes
    time: np.ndarray  # (n, 26), raw features
    labels: np.ndarray
    class_weights: np.ndarray
    freq_mean: np.ndarray
    freq_std: np.ndarray
    time_mean: np.ndarray
    time_std: np.ndarray
    sample_rate: float
    n_samples: int
    downsample: int
    source: list[tuple[str, int]] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def freq_scaled(self) -> np.ndarray:
        return (self.freq - self.freq_mean) / self.freq_std

    @property
    def time_scaled(self) -> np.ndarray:
        return (self.time - self.time_mean) / self.time_std


@dataclass
class StageClassifier:
    freq_layers: list[tuple[np.ndarray, np.ndarray]]
    fusion_layers: list[tuple[np.ndarray, np.ndarray]]
    freq_mean: np.ndarray
    freq_std: np.ndarray
    time_mean: np.ndarray
    time_std: np.ndarray
    class_weights: np.ndarray
    sample_rate: float
    n_samples: int
    downsample: int = 2
    seed: int = 0
    stage_names: tuple[str, ...] = STAGE_NAMES
    history: dict[str, list[float]] = field(default_factory=dict)

    @property
    def freq_activations(self) -> list[str]:
        return ["relu"] * len(self.freq_layers)

    @property
    def fusion_activations(self) -> list[str]:
        return ["relu"] * (len(self.fusion_layers) - 1) + ["linear"]


@dataclass
class PosteriorSequence:
    time_index: np.ndarray
    raw: np.ndarray
    smoothed: np.ndarray
    stages: np.ndarray


def class_weights_for(labels: np.ndarray, n_classes: int = N_STAGES) -> np.ndarray:
    """Inverse-frequency weights normalised so that a balanced set gets all ones.

    Classes with no rows get weight 1 (they never contribute to the loss).
    """
    counts = np.bincount(labels, minlength=n_classes).astype(float)
    present = counts > 0
    w = np.ones(n_classes)
    w[present] = labels.size / (present.sum() * counts[present])
    return w


def _snapshot_inputs(snapshots, factor):
    freq = []
    for c in CHANNELS:
        x = np.stack([s.channel(c)[::factor] for s in snapshots])
        freq.append(np.abs(np.fft.rfft(x, axis=1)))
    return np.hstack(freq)


def run_inputs(run: BearingRun, factor: int) -> tuple[np.ndarray, np.ndarray]:
    """Raw classifier inputs of every snapshot: ``(spectra, time features)``."""
    freq = np.hstack([spectra_matrix(run, c, factor) for c in CHANNELS])
    return freq, run_feature_matrix(run, factor)


def build_training_set(labeled_runs, downsample: int = 2, seed: int = 0) -> TrainingSet:
    """Pool labelled runs into shuffled rows and fit input scaling on them."""
    labeled_runs = list(labeled_runs)
    if not labeled_runs:
        raise ValueError("need at least one labelled run")
    freq, time_, labels, source = [], [], [], []
    for lr in labeled_runs:
        f, t = run_inputs(lr.run, downsample)
        freq.append(f)
        time_.append(t)
        labels.append(lr.labels)
        source.extend((lr.run.bearing_id, int(ti)) for ti in lr.run.time_indices)
    freq = np.vstack(freq)
    time_ = np.vstack(time_)
    labels = np.concatenate(labels).astype(np.int64)

    counts = np.bincount(labels, minlength=N_STAGES)
    missing = [STAGE_NAMES[s] for s in range(N_STAGES) if counts[s] == 0]
    if missing:
        warnings.warn(f"no training rows for stages {missing}", MissingStageWarning, stacklevel=2)

    order = np.random.default_rng(seed).permutation(labels.size)
    first = labeled_runs[0].run
    return TrainingSet(
        freq=freq[order],
        time=time_[order],
        labels=labels[order],
        class_weights=class_weights_for(labels),
        freq_mean=freq.mean(axis=0),
        freq_std=np.maximum(freq.std(axis=0), STD_FLOOR),
        time_mean=time_.mean(axis=0),
        time_std=np.maximum(time_.std(axis=0), STD_FLOOR),
        sample_rate=first.sample_rate / downsample,
        n_samples=first.n_samples // downsample,
        downsample=downsample,
        source=[source[i] for i in order],
    )


def _forward(clf: StageClassifier, xf, xt):
    h, freq_cache = nn.forward(clf.freq_layers, clf.freq_activations, xf)
    z = np.hstack([h, xt])
    logits, fusion_cache = nn.forward(clf.fusion_layers, clf.fusion_activations, z)
    return logits, (freq_cache, fusion_cache, h.shape[1])


def classifier_loss_and_grads(clf: StageClassifier, xf, xt, y, weights=None):
    """Class-weighted mean categorical cross-entropy on scaled inputs, with gradients.

    Returns ``(loss, freq_grads, fusion_grads)``.
    """
    logits, (freq_cache, fusion_cache, n_freq) = _forward(clf, xf, xt)
    p = nn.softmax(logits)
    b = y.size
    w = np.ones(b) if weights is None else weights[y]
    picked = p[np.arange(b), y]
    loss = float(np.sum(w * -np.log(np.maximum(picked, 1e-300))) / b)
    g = p.copy()
    g[np.arange(b), y] -= 1.0
    g *= (w / b)[:, None]
    fusion_grads, gz = nn.backward(clf.fusion_layers, clf.fusion_activations, fusion_cache, g)
    freq_grads, _ = nn.backward(clf.freq_layers, clf.freq_activations, freq_cache, gz[:, :n_freq])
    return loss, freq_grads, fusion_grads


def init_classifier(freq_dim: int, time_dim: int, config: ClassifierConfig, stats: dict | None = None) -> StageClassifier:
    rng = np.random.default_rng(config.seed)
    freq_sizes = [freq_dim, *config.freq_hidden]
    freq_layers = nn.init_layers(rng, freq_sizes)
    fusion_sizes = [freq_sizes[-1] + time_dim, *config.fusion_hidden, N_STAGES]
    fusion_layers = nn.init_layers(rng, fusion_sizes)
    stats = stats or {}
    return StageClassifier(
        freq_layers=freq_layers,
        fusion_layers=fusion_layers,
        freq_mean=stats.get("freq_mean", np.zeros(freq_dim)),
        freq_std=stats.get("freq_std", np.ones(freq_dim)),
        time_mean=stats.get("time_mean", np.zeros(time_dim)),
        time_std=stats.get("time_std", np.ones(time_dim)),
        class_weights=stats.get("class_weights", np.ones(N_STAGES)),
        sample_rate=stats.get("sample_rate", 0.0),
        n_samples=stats.get("n_samples", 0),
        downsample=stats.get("downsample", 1),
        seed=config.seed,
    )


def train_classifier(dataset: TrainingSet, config: ClassifierConfig = ClassifierConfig()) -> StageClassifier:
    """Minimise class-weighted cross-entropy with Adam.

    ``history["loss"]`` and ``history["accuracy"]`` hold the full training-set
    loss and accuracy measured after each epoch.
    """
    if len(dataset) == 0:
        raise ValueError("empty training set")
    if np.unique(dataset.labels).size < 2:
        raise ValueError("training needs at least two classes")
    weights = dataset.class_weights if config.class_weighting else np.ones(N_STAGES)
    clf = init_classifier(
        dataset.freq.shape[1],
        dataset.time.shape[1],
        config,
        dict(
            freq_mean=dataset.freq_mean, freq_std=dataset.freq_std,
            time_mean=dataset.time_mean, time_std=dataset.time_std,
            class_weights=weights, sample_rate=dataset.sample_rate,
            n_samples=dataset.n_samples, downsample=dataset.downsample,
        ),
    )
    xf, xt, y = dataset.freq_scaled, dataset.time_scaled, dataset.labels
    params = nn.flat_params(clf.freq_layers) + nn.flat_params(clf.fusion_layers)
    opt = nn.Adam(params, lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])
    n = y.size
    hist = {"loss": [], "accuracy": []}
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch):
            idx = order[start:start + config.batch]
            _, fg, ug = classifier_loss_and_grads(clf, xf[idx], xt[idx], y[idx], weights)
            opt.step(nn.flat_grads(fg) + nn.flat_grads(ug))
        loss, acc = _evaluate(clf, xf, xt, y, weights)
        hist["loss"].append(loss)
        hist["accuracy"].append(acc)
        if not np.isfinite(loss):
            raise DivergedLoss(f"classifier loss became {loss}")
    clf.history = hist
    return clf


def _evaluate(clf, xf, xt, y, weights):
    logits, _ = _forward(clf, xf, xt)
    p = nn.softmax(logits)
    w = weights[y]
    loss = float(np.sum(w * -np.log(np.maximum(p[np.arange(y.size), y], 1e-300))) / y.size)
    return loss, float(np.mean(np.argmax(p, axis=1) == y))


def _posteriors(clf: StageClassifier, freq: np.ndarray, time_: np.ndarray) -> np.ndarray:
    xf = (freq - clf.freq_mean) / clf.freq_std
    xt = (time_ - clf.time_mean) / clf.time_std
    logits, _ = _forward(clf, xf, xt)
    return nn.softmax(logits)


def _input_factor(clf: StageClassifier, sample_rate: float, n_samples: int) -> int:
    if sample_rate == clf.sample_rate and n_samples == clf.n_samples:
        return 1
    f = clf.downsample
    if f > 1 and sample_rate == clf.sample_rate * f and n_samples == clf.n_samples * f:
        return f
    raise ShapeMismatch(
        f"classifier expects {clf.n_samples} samples at {clf.sample_rate} Hz "
        f"(or {clf.n_samples * f} at {clf.sample_rate * f} Hz), "
        f"got {n_samples} at {sample_rate} Hz"
    )


def predict(clf: StageClassifier, snapshot: VibrationSnapshot) -> np.ndarray:
    """Stage posterior of a single snapshot."""
    factor = _input_factor(clf, snapshot.sample_rate, snapshot.n_samples)
    snap = decimate(snapshot, factor)
    freq = _snapshot_inputs([snap], 1)
    time_ = np.concatenate([time_features(snap.channel(c)).as_array() for c in CHANNELS])
    return _posteriors(clf, freq, time_[None, :])[0]


def predict_run(clf: StageClassifier, run: BearingRun) -> np.ndarray:
    """Raw posteriors for every snapshot of a run, shape ``(M, 4)``."""
    factor = _input_factor(clf, run.sample_rate, run.n_samples)
    freq, time_ = run_inputs(run, factor)
    return _posteriors(clf, freq, time_)


def smooth_posteriors(raw: np.ndarray, window: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Causal moving average over the last ``window`` posteriors, and its argmax."""
    if window < 1:
        raise ValueError("window must be >= 1")
    raw = np.asarray(raw, dtype=float)
    smoothed = np.empty_like(raw)
    for i in range(raw.shape[0]):
        smoothed[i] = raw[max(0, i - window + 1): i + 1].mean(axis=0)
    # np.argmax returns the first maximum, i.e. ties go to the lower stage
    return smoothed, np.argmax(smoothed, axis=1)


def predict_smoothed(clf: StageClassifier, run: BearingRun, window: int = 5) -> PosteriorSequence:
    raw = predict_run(clf, run)
    smoothed, stages = smooth_posteriors(raw, window)
    return PosteriorSequence(run.time_indices, raw, smoothed, stages)


def write_posteriors_csv(seq: PosteriorSequence, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_index", "p_healthy", "p_s1", "p_s2", "p_s3", "stage"])
        for ti, p, s in zip(seq.time_index, seq.smoothed, seq.stages):
            w.writerow([int(ti), *(repr(float(v)) for v in p), int(s)])


def labeled_from_predictions(run: BearingRun, seq: PosteriorSequence, method: str = "predicted") -> LabeledRun:
    return LabeledRun(run, seq.stages, method)
