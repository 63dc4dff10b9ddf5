"""Automatic lifetime segmentation of a single bearing into degradation stages."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .dsp import spectra_matrix
from .embed import AEConfig, EmbeddingModel, encode, fit_autoencoder, fit_pca, project_pca, reconstruction_residual
from .errors import DegeneratePoints, LengthMismatch, ModelNotTrained
from .ingest import BearingRun


class StageLabel(IntEnum):
    HEALTHY = 0
    STAGE1 = 1
    STAGE2 = 2
    STAGE3 = 3


STAGE_NAMES = ("healthy", "stage1", "stage2", "stage3")
N_STAGES = 4

METHOD_AE = "AElabels"
METHOD_PCA = "PCAlabels"
METHOD_TRUTH = "synthetic-truth"
METHOD_MANUAL = "manual"


@dataclass
class LabeledRun:
    run: BearingRun
    labels: np.ndarray
    method: str
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (len(self.run),):
            raise LengthMismatch(
                f"{self.labels.size} labels for a run of {len(self.run)} snapshots"
            )


# --------------------------------------------------------------------------------
# k-means
# --------------------------------------------------------------------------------


@dataclass(frozen=True)
class KMeansConfig:
    restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-4
    seed: int = 0


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    inertia_history: list[float] = field(default_factory=list, repr=False)


def count_distinct(points: np.ndarray) -> int:
    """Distinct rows, treating rows equal to ~12 significant digits as one."""
    scale = float(np.max(np.abs(points))) if points.size else 0.0
    if scale == 0.0:
        return 1 if len(points) else 0
    return int(np.unique(np.round(points / scale, 12), axis=0).shape[0])


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    closest = _sq_dists(points, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(points[idx])
        closest = np.minimum(closest, _sq_dists(points, points[idx][None, :])[:, 0])
    return np.array(centers, dtype=float)


def _lloyd(points, centroids, max_iter, tol):
    k = centroids.shape[0]
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(points, centroids)
        assign = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(points)), assign].sum()))
        new = centroids.copy()
        point_cost = d[np.arange(len(points)), assign]
        for j in range(k):
            members = assign == j
            if members.any():
                new[j] = points[members].mean(axis=0)
        for j in range(k):
            if not (assign == j).any():
                # empty cluster: take over the point that is currently worst served
                far = int(np.argmax(point_cost))
                new[j] = points[far]
                assign[far] = j
                point_cost[far] = 0.0
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        if shift < tol:
            break
    d = _sq_dists(points, centroids)
    assign = np.argmin(d, axis=1)
    history.append(float(d[np.arange(len(points)), assign].sum()))
    assign, centroids = _transfer_refine(points, assign, k)
    d = _sq_dists(points, centroids)
    inertia = float(d[np.arange(len(points)), assign].sum())
    history.append(inertia)
    return assign, centroids, inertia, it, history


def _transfer_refine(points, assign, k):
    """Single-point transfers that lower the inertia (Hartigan's rule).

    Lloyd's fixed points include poor local optima on small sets; a transfer
    is taken when moving one point to another cluster lowers the total
    squared error, with centroids updated exactly. The result is still a
    Lloyd fixed point, so every point keeps its nearest centroid.
    """
    assign = assign.copy()
    counts = np.bincount(assign, minlength=k).astype(float)
    cents = np.array([
        points[assign == j].mean(axis=0) if counts[j] else points[0] for j in range(k)
    ])
    moved = True
    while moved:
        moved = False
        for i in range(points.shape[0]):
            a = assign[i]
            if counts[a] <= 1:
                continue
            d = np.sum((cents - points[i]) ** 2, axis=1)
            removal_gain = counts[a] / (counts[a] - 1) * d[a]
            add_cost = counts / (counts + 1) * d
            add_cost[a] = np.inf
            b = int(np.argmin(add_cost))
            if add_cost[b] < removal_gain * (1 - 1e-12):
                cents[a] = (cents[a] * counts[a] - points[i]) / (counts[a] - 1)
                cents[b] = (cents[b] * counts[b] + points[i]) / (counts[b] + 1)
                counts[a] -= 1
                counts[b] += 1
                assign[i] = b
                moved = True
    # recompute exactly to drop drift from the incremental updates
    for j in range(k):
        if counts[j]:
            cents[j] = points[assign == j].mean(axis=0)
    return assign, cents


def kmeans(points, k: int, config: KMeansConfig = KMeansConfig()) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds, then transfer refinement.

    The best of ``config.restarts`` runs by inertia is returned.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if not 1 <= k <= x.shape[0]:
        raise ValueError(f"need 1 <= k <= #points, got k={k} for {x.shape[0]} points")
    if count_distinct(x) < k:
        raise DegeneratePoints(f"fewer than {k} distinct points")
    rng = np.random.default_rng(config.seed)
    best = None
    for _ in range(max(1, config.restarts)):
        init = kmeans_plusplus(x, k, rng)
        assign, cents, inertia, iters, hist = _lloyd(x, init, config.max_iter, config.tol)
        if best is None or inertia < best.inertia:
            best = KMeansResult(assign, cents, inertia, iters, hist)
    return best


def order_clusters_by_time(assignments: np.ndarray, positions: np.ndarray, k: int) -> np.ndarray:
    """Stage index for each cluster id: ascending mean position of its members."""
    means = np.array([
        positions[assignments == j].mean() if (assignments == j).any() else np.inf
        for j in range(k)
    ])
    stage_of_cluster = np.empty(k, dtype=np.int64)
    stage_of_cluster[np.argsort(means, kind="stable")] = np.arange(k)
    return stage_of_cluster


# --------------------------------------------------------------------------------
# labeling pipelines
# --------------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelConfig:
    downsample: int = 2
    holdout: float = 0.2
    ae: AEConfig = AEConfig()
    kmeans: KMeansConfig = KMeansConfig()
    pca_components: int = 40
    n_sigma: float = 3.0
    known_stage3: bool = True
    anomaly_channel: str = "horizontal"
    seed: int = 0


def detect_stage3(
    model: EmbeddingModel,
    run: BearingRun,
    channel: str = "horizontal",
    factor: int = 2,
    n_sigma: float = 3.0,
    spectra: np.ndarray | None = None,
) -> np.ndarray:
    """Flag snapshots whose residual exceeds ``mean + n_sigma * std`` of training residuals."""
    if model.residual_mean is None or model.residual_std is None:
        raise ModelNotTrained("AutoEncoder residual statistics are missing")
    if spectra is None:
        spectra = spectra_matrix(run, channel, factor)
    res = np.atleast_1d(reconstruction_residual(model, spectra))
    return res > model.residual_mean + n_sigma * model.residual_std


def training_cut(n: int, holdout: float) -> int:
    """Number of leading snapshots used for AutoEncoder training."""
    if not 0.0 <= holdout < 1.0:
        raise ValueError("holdout must lie in [0, 1)")
    return max(1, int(np.floor(n * (1.0 - holdout) + 1e-9)))


def label_run_ae(run: BearingRun, config: LabelConfig = LabelConfig()) -> LabeledRun:
    """``AElabels``: AutoEncoder residual anomaly split for stage 3, k-means for the rest.

    With ``known_stage3`` false the AutoEncoders see the whole run and the
    latents are split by 4-means with no anomaly step.
    """
    spectra = {c: spectra_matrix(run, c, config.downsample) for c in ("horizontal", "vertical")}
    n = len(run)
    cut = training_cut(n, config.holdout) if config.known_stage3 else n
    models = {
        c: fit_autoencoder(spectra[c][:cut], replace(config.ae, seed=config.seed + i))
        for i, c in enumerate(("horizontal", "vertical"))
    }
    latents = np.hstack([encode(models[c], spectra[c]) for c in ("horizontal", "vertical")])

    a_ch = config.anomaly_channel
    residuals = np.atleast_1d(reconstruction_residual(models[a_ch], spectra[a_ch]))
    if config.known_stage3:
        flags = detect_stage3(models[a_ch], run, n_sigma=config.n_sigma, spectra=spectra[a_ch])
        k = 3
    else:
        flags = np.zeros(n, dtype=bool)
        k = 4

    keep = np.flatnonzero(~flags)
    if keep.size < k:
        raise DegeneratePoints(f"only {keep.size} snapshots left for {k}-means")
    km = kmeans(latents[keep], k, replace(config.kmeans, seed=config.seed + 2))
    stage_of_cluster = order_clusters_by_time(km.assignments, keep.astype(float), k)
    labels = np.full(n, int(StageLabel.STAGE3), dtype=np.int64)
    labels[keep] = stage_of_cluster[km.assignments]
    info = {
        "stage3_flags": flags,
        "residuals": residuals,
        "latents": latents,
        "models": models,
        "kmeans": km,
        "train_cut": cut,
    }
    return LabeledRun(run, labels, METHOD_AE, info)


def label_run_pca(run: BearingRun, config: LabelConfig = LabelConfig()) -> LabeledRun:
    """``PCAlabels``: per-channel PCA of all spectra, concatenated, 4-means."""
    models = {}
    parts = []
    for c in ("horizontal", "vertical"):
        s = spectra_matrix(run, c, config.downsample)
        models[c] = fit_pca(s, config.pca_components)
        parts.append(project_pca(models[c], s))
    points = np.hstack(parts)
    km = kmeans(points, N_STAGES, replace(config.kmeans, seed=config.seed + 2))
    stage_of_cluster = order_clusters_by_time(km.assignments, np.arange(len(run), dtype=float), N_STAGES)
    labels = stage_of_cluster[km.assignments]
    info = {"models": models, "points": points, "kmeans": km}
    return LabeledRun(run, labels, METHOD_PCA, info)


# --------------------------------------------------------------------------------
# agreement
# --------------------------------------------------------------------------------


@dataclass
class Agreement:
    per_stage: dict[int, float | None]
    overall: float
    support: dict[int, int]


def label_agreement(labels, reference) -> Agreement:
    """Per-stage recall of ``labels`` against ``reference`` plus overall accuracy.

    Stages absent from the reference are reported as ``None``.
    """
    got = np.asarray(labels.labels if isinstance(labels, LabeledRun) else labels)
    ref = np.asarray(reference.labels if isinstance(reference, LabeledRun) else reference)
    if got.shape != ref.shape:
        raise LengthMismatch(f"{got.size} labels vs {ref.size} reference labels")
    if ref.size == 0:
        raise LengthMismatch("empty labelings")
    per_stage: dict[int, float | None] = {}
    support = {}
    for s in range(N_STAGES):
        mask = ref == s
        support[s] = int(mask.sum())
        per_stage[s] = float(np.mean(got[mask] == s)) if mask.any() else None
    return Agreement(per_stage, float(np.mean(got == ref)), support)


# --------------------------------------------------------------------------------
# label files
# --------------------------------------------------------------------------------


def write_labels_csv(labeled: LabeledRun, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_index", "stage", "method"])
        for t, s in zip(labeled.run.time_indices, labeled.labels):
            w.writerow([int(t), int(s), labeled.method])


def read_labels_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, str]:
    """Return ``(time_indices, stages, method)`` from a label file."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), ""
    ti = np.array([int(r["time_index"]) for r in rows], dtype=np.int64)
    st = np.array([int(r["stage"]) for r in rows], dtype=np.int64)
    if st.min() < 0 or st.max() >= N_STAGES:
        raise ValueError(f"{path}: stage values must lie in 0..3")
    return ti, st, rows[0]["method"]


def attach_labels(run: BearingRun, path: str | Path) -> LabeledRun:
    """Align a label file to ``run`` by time index."""
    ti, st, method = read_labels_csv(path)
    lookup = dict(zip(ti.tolist(), st.tolist()))
    missing = [int(t) for t in run.time_indices if int(t) not in lookup]
    if missing:
        raise LengthMismatch(f"{path}: no label for time indices {missing[:5]}...")
    labels = np.array([lookup[int(t)] for t in run.time_indices], dtype=np.int64)
    return LabeledRun(run, labels, method)
