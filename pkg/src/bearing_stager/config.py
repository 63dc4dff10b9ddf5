"""Pipeline configuration: INI-style ``key = value`` sections with typed defaults.

Sections and keys mirror the dataclass configs of the individual modules.
Every key can be overridden from the command line; see ``override_flags``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .classify import ClassifierConfig
from .embed import AEConfig
from .errors import ConfigError, InvalidConfig
from .label import KMeansConfig, LabelConfig
from .synth import SynthConfig

SEED_ENV = "BEARING_STAGER_SEED"


@dataclass(frozen=True)
class PipelineSection:
    root: str = ""
    downsample: int = 2
    holdout: float = 0.2
    pca_components: int = 40
    n_sigma: float = 3.0
    known_stage3: bool = True
    anomaly_channel: str = "horizontal"
    window: int = 5
    seed: int = 0


@dataclass(frozen=True)
class AESection:
    epochs: int = 200
    batch: int = 32
    learning_rate: float = 1e-3
    latent_dim: int = 8


@dataclass(frozen=True)
class KMeansSection:
    restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-4


@dataclass(frozen=True)
class ClassifierSection:
    epochs: int = 50
    batch: int = 64
    learning_rate: float = 1e-3
    class_weighting: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    pipeline: PipelineSection = PipelineSection()
    ae: AESection = AESection()
    kmeans: KMeansSection = KMeansSection()
    classifier: ClassifierSection = ClassifierSection()
    synth: SynthConfig = SynthConfig()
    seed_source: str = field(default="default", compare=False)

    def validate(self) -> None:
        p = self.pipeline
        if not 0.0 <= p.holdout < 1.0:
            raise ConfigError(f"pipeline.holdout must lie in [0, 1), got {p.holdout}")
        if p.window < 1:
            raise ConfigError(f"pipeline.window must be >= 1, got {p.window}")
        if p.downsample < 1:
            raise ConfigError(f"pipeline.downsample must be >= 1, got {p.downsample}")
        if p.anomaly_channel not in ("horizontal", "vertical"):
            raise ConfigError("pipeline.anomaly_channel must be horizontal or vertical")
        for name in ("ae", "classifier"):
            sec = getattr(self, name)
            if sec.epochs < 0 or sec.batch < 1 or sec.learning_rate <= 0:
                raise ConfigError(f"{name}: epochs >= 0, batch >= 1 and learning_rate > 0 required")
        if self.kmeans.restarts < 1 or self.kmeans.max_iter < 1:
            raise ConfigError("kmeans: restarts and max_iter must be >= 1")
        try:
            self.synth.validate()
        except InvalidConfig as exc:
            raise ConfigError(f"synth: {exc}") from exc

    # --- derived module configs ---------------------------------------------------

    def label_config(self) -> LabelConfig:
        p = self.pipeline
        return LabelConfig(
            downsample=p.downsample,
            holdout=p.holdout,
            ae=AEConfig(
                epochs=self.ae.epochs,
                batch=self.ae.batch,
                learning_rate=self.ae.learning_rate,
                latent_dim=self.ae.latent_dim,
            ),
            kmeans=KMeansConfig(self.kmeans.restarts, self.kmeans.max_iter, self.kmeans.tol),
            pca_components=p.pca_components,
            n_sigma=p.n_sigma,
            known_stage3=p.known_stage3,
            anomaly_channel=p.anomaly_channel,
            seed=p.seed,
        )

    def classifier_config(self) -> ClassifierConfig:
        c = self.classifier
        return ClassifierConfig(
            epochs=c.epochs,
            batch=c.batch,
            learning_rate=c.learning_rate,
            seed=self.pipeline.seed,
            class_weighting=c.class_weighting,
        )

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


SECTIONS = {
    "pipeline": PipelineSection,
    "ae": AESection,
    "kmeans": KMeansSection,
    "classifier": ClassifierSection,
    "synth": SynthConfig,
}


def _field_types(cls) -> dict[str, object]:
    defaults = cls()
    return {f.name: getattr(defaults, f.name) for f in fields(cls)}


def _parse_value(section: str, key: str, text: str, default):
    text = text.strip()
    where = f"{section}.{key}"
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            parts = [p for p in text.replace(",", " ").split() if p]
            kind = type(default[0]) if default else float
            if len(parts) != len(default):
                raise ValueError(f"expected {len(default)} values")
            return tuple(kind(p) for p in parts)
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} ({exc})") from exc


def _apply(config: PipelineConfig, values: dict[str, dict[str, str]]) -> PipelineConfig:
    updates = {}
    for section, items in values.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        types = _field_types(SECTIONS[section])
        current = getattr(config, section)
        changes = {}
        for key, text in items.items():
            if key not in types:
                raise ConfigError(f"unknown config key {section}.{key}")
            changes[key] = _parse_value(section, key, text, types[key])
        updates[section] = replace(current, **changes)
    return replace(config, **updates)


def read_ini(path: str | Path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc.message.splitlines()[0]}") from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, dict[str, str]] | None = None,
    env: dict[str, str] | None = None,
) -> PipelineConfig:
    """Defaults, then the config file, then command-line overrides.

    ``pipeline.seed`` falls back to ``$BEARING_STAGER_SEED`` when neither the
    file nor the overrides set it.
    """
    env = os.environ if env is None else env
    config = PipelineConfig()
    file_values = read_ini(path) if path is not None else {}
    overrides = overrides or {}
    config = _apply(config, file_values)
    config = _apply(config, overrides)
    seed_set = "seed" in file_values.get("pipeline", {}) or "seed" in overrides.get("pipeline", {})
    source = "config" if seed_set else "default"
    if not seed_set and env.get(SEED_ENV, "").strip():
        seed = _parse_value("pipeline", "seed", env[SEED_ENV], 0)
        config = replace(config, pipeline=replace(config.pipeline, seed=seed))
        source = "env"
    config = replace(config, seed_source=source)
    config.validate()
    return config


def override_flags() -> list[tuple[str, str, str]]:
    """``(flag, section, key)`` for every configurable key.

    Pipeline keys are bare (``--holdout``); others carry the section
    (``--ae-epochs``, ``--synth-fault-hz``).
    """
    out = []
    for section, cls in SECTIONS.items():
        for f in fields(cls):
            stem = f.name.replace("_", "-")
            flag = f"--{stem}" if section == "pipeline" else f"--{section}-{stem}"
            out.append((flag, section, f.name))
    return out


def write_ini(config: PipelineConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    for section in SECTIONS:
        parser[section] = {}
        for key, value in asdict(getattr(config, section)).items():
            if isinstance(value, (tuple, list)):
                value = ", ".join(repr(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            parser[section][key] = str(value)
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
