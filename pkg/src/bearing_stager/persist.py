"""Versioned text serialisation for trained models.

A model file is a JSON document. Arrays are stored as base64 of their
little-endian float64 (or int64) bytes, so a load reproduces every weight bit
for bit. A SHA-256 of the canonical body guards against truncation and edits.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path

import numpy as np

from .classify import StageClassifier
from .embed import EmbeddingModel, PCAModel
from .errors import CorruptFile, WrongKind

FORMAT_VERSION = 1
KIND_AE = "ae"
KIND_PCA = "pca"
KIND_CLASSIFIER = "classifier"
KINDS = (KIND_AE, KIND_PCA, KIND_CLASSIFIER)


def _enc(a) -> dict:
    a = np.asarray(a)
    dtype = "<i8" if np.issubdtype(a.dtype, np.integer) else "<f8"
    data = np.ascontiguousarray(a, dtype=dtype).tobytes()
    return {"dtype": dtype, "shape": list(a.shape), "data": base64.b64encode(data).decode("ascii")}


def _dec(d: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(d["data"], validate=True)
        arr = np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile("array", str(exc)) from exc
    return arr.astype(arr.dtype.newbyteorder("="), copy=True)


def _layers_out(layers) -> list:
    return [{"W": _enc(W), "b": _enc(b)} for W, b in layers]


def _layers_in(items) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(_dec(it["W"]), _dec(it["b"])) for it in items]


def _body(model) -> dict:
    if isinstance(model, EmbeddingModel):
        return {
            "kind": KIND_AE,
            "layer_shapes": [list(s) for s in model.layer_shapes],
            "layers": _layers_out(model.layers),
            "bin_mean": _enc(model.bin_mean),
            "bin_std": _enc(model.bin_std),
            "latent_dim": model.latent_dim,
            "residual_mean": model.residual_mean,
            "residual_std": model.residual_std,
            "seed": model.seed,
            "loss_history": _enc(np.asarray(model.loss_history, dtype=float)),
        }
    if isinstance(model, PCAModel):
        return {
            "kind": KIND_PCA,
            "component_matrix": _enc(model.component_matrix),
            "bin_mean": _enc(model.bin_mean),
            "explained_variance_ratio": _enc(model.explained_variance_ratio),
            "explained_variance": _enc(model.explained_variance),
        }
    if isinstance(model, StageClassifier):
        return {
            "kind": KIND_CLASSIFIER,
            "freq_layers": _layers_out(model.freq_layers),
            "fusion_layers": _layers_out(model.fusion_layers),
            "freq_mean": _enc(model.freq_mean),
            "freq_std": _enc(model.freq_std),
            "time_mean": _enc(model.time_mean),
            "time_std": _enc(model.time_std),
            "class_weights": _enc(model.class_weights),
            "sample_rate": model.sample_rate,
            "n_samples": model.n_samples,
            "downsample": model.downsample,
            "seed": model.seed,
            "stage_names": list(model.stage_names),
            "history": {k: _enc(np.asarray(v, dtype=float)) for k, v in sorted(model.history.items())},
        }
    raise TypeError(f"cannot serialise {type(model).__name__}")


def _canonical(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def dumps_model(model) -> str:
    body = _body(model)
    body["format_version"] = FORMAT_VERSION
    doc = dict(body, checksum=hashlib.sha256(_canonical(body)).hexdigest())
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def save_model(model, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_model(model), encoding="utf-8")
    return path


def _build(body: dict):
    kind = body["kind"]
    if kind == KIND_AE:
        layers = _layers_in(body["layers"])
        return EmbeddingModel(
            layer_shapes=[tuple(s) for s in body["layer_shapes"]],
            weights=[W for W, _ in layers],
            biases=[b for _, b in layers],
            bin_mean=_dec(body["bin_mean"]),
            bin_std=_dec(body["bin_std"]),
            latent_dim=int(body["latent_dim"]),
            residual_mean=body["residual_mean"],
            residual_std=body["residual_std"],
            seed=int(body["seed"]),
            loss_history=_dec(body["loss_history"]).tolist(),
        )
    if kind == KIND_PCA:
        return PCAModel(
            component_matrix=_dec(body["component_matrix"]),
            bin_mean=_dec(body["bin_mean"]),
            explained_variance_ratio=_dec(body["explained_variance_ratio"]),
            explained_variance=_dec(body["explained_variance"]),
        )
    return StageClassifier(
        freq_layers=_layers_in(body["freq_layers"]),
        fusion_layers=_layers_in(body["fusion_layers"]),
        freq_mean=_dec(body["freq_mean"]),
        freq_std=_dec(body["freq_std"]),
        time_mean=_dec(body["time_mean"]),
        time_std=_dec(body["time_std"]),
        class_weights=_dec(body["class_weights"]),
        sample_rate=float(body["sample_rate"]),
        n_samples=int(body["n_samples"]),
        downsample=int(body["downsample"]),
        seed=int(body["seed"]),
        stage_names=tuple(body["stage_names"]),
        history={k: _dec(v).tolist() for k, v in body["history"].items()},
    )


def loads_model(text: str, kind: str | None = None):
    """Parse a model document; ``kind`` (ae, pca or classifier) is enforced when given."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFile("syntax", str(exc)) from exc
    if not isinstance(doc, dict):
        raise CorruptFile("syntax", "top level is not an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise CorruptFile("version", f"unsupported format_version {doc.get('format_version')!r}")
    checksum = doc.pop("checksum", None)
    if checksum != hashlib.sha256(_canonical(doc)).hexdigest():
        raise CorruptFile("checksum")
    got = doc.get("kind")
    if got not in KINDS:
        raise CorruptFile("kind", f"unknown kind {got!r}")
    if kind is not None and got != kind:
        raise WrongKind(kind, got)
    try:
        return _build(doc)
    except KeyError as exc:
        raise CorruptFile("field", f"missing {exc}") from exc


def load_model(path: str | Path, kind: str | None = None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptFile("encoding", str(exc)) from exc
    return loads_model(text, kind)
