"""Synthetic run-to-failure bearing records with ground-truth stages.

Each stage adds one signature on top of the previous ones:

* healthy: shaft-rate sinusoid plus sensor noise
* stage 1: band-limited noise in the natural-frequency band, ramping up
* stage 2: decaying ring-downs at the band centre, repeated at the fault rate
* stage 3: strong broadband noise

Shaft, band and impulse components are shared by both channels (vertical
scaled by ``vertical_gain``); sensor and broadband noise are independent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidConfig
from .ingest import BearingRun, format_snapshot_file, make_run
from .label import METHOD_TRUTH, LabeledRun


@dataclass(frozen=True)
class SynthConfig:
    sample_rate: float = 25_600.0
    snapshot_len: int = 2560
    snapshots_per_stage: tuple[int, int, int, int] = (40, 40, 20, 20)
    shaft_hz: float = 30.0
    natural_band: tuple[float, float] = (2000.0, 4000.0)
    fault_hz: float = 160.0
    noise_sigma: float = 0.05
    shaft_amplitude: float = 0.5
    # (start, end) amplitude of each stage's new component, linear over the stage
    stage1_amplitude: tuple[float, float] = (0.4, 0.5)
    stage2_amplitude: tuple[float, float] = (1.5, 1.8)
    stage3_amplitude: tuple[float, float] = (2.0, 2.0)
    ring_decay_s: float = 1e-3
    # relative spread of the per-snapshot fault rate, mimicking rolling-element slip
    fault_jitter: float = 0.02
    vertical_gain: float = 0.7
    seed: int = 0
    bearing_id: str = "synth"

    @property
    def healthy_rms(self) -> float:
        return float(np.sqrt(self.shaft_amplitude**2 / 2 + self.noise_sigma**2))

    @property
    def n_snapshots(self) -> int:
        return int(sum(self.snapshots_per_stage))

    def validate(self) -> None:
        lo, hi = self.natural_band
        if len(self.snapshots_per_stage) != 4 or min(self.snapshots_per_stage) < 0:
            raise InvalidConfig("snapshots_per_stage needs four non-negative counts")
        if self.n_snapshots < 1:
            raise InvalidConfig("run must contain at least one snapshot")
        if not (0 < self.shaft_hz < self.fault_hz < lo < hi < self.sample_rate / 2):
            raise InvalidConfig(
                "need 0 < shaft_hz < fault_hz < natural_band low < high < sample_rate / 2"
            )
        if self.snapshot_len < 8:
            raise InvalidConfig("snapshot_len must be at least 8")
        if self.noise_sigma < 0 or self.shaft_amplitude <= 0 or self.ring_decay_s <= 0:
            raise InvalidConfig("amplitudes and decay must be positive")
        if not 0 <= self.fault_jitter < 0.5:
            raise InvalidConfig("fault_jitter must be in [0, 0.5)")
        for name in ("stage1_amplitude", "stage2_amplitude", "stage3_amplitude"):
            a, b = getattr(self, name)
            if a < 0 or b < 0:
                raise InvalidConfig(f"{name} must be non-negative")
        if min(self.stage3_amplitude) < 5 * self.healthy_rms:
            raise InvalidConfig("stage-3 noise RMS must be at least 5x the healthy RMS")


def _ramp(levels: tuple[float, float], count: int) -> np.ndarray:
    if count == 1:
        return np.array([levels[0]])
    return np.linspace(levels[0], levels[1], count)


def _band_noise(rng, n, fs, band) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0.0
    x = np.fft.irfft(spec, n)
    return x / np.sqrt(np.mean(x * x))


def _impulse_train(rng, t, fault_hz, ring_hz, decay) -> np.ndarray:
    period = 1.0 / fault_hz
    start = rng.uniform(0.0, period)
    out = np.zeros_like(t)
    for t0 in np.arange(start, t[-1] + period, period):
        dt = t - t0
        live = dt >= 0
        out[live] += np.exp(-dt[live] / decay) * np.sin(2 * np.pi * ring_hz * dt[live])
    return out


def generate_run(config: SynthConfig = SynthConfig()) -> tuple[BearingRun, LabeledRun]:
    """One synthetic run plus its ground-truth labelling."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, fs = config.snapshot_len, config.sample_rate
    t = np.arange(n) / fs
    ring_hz = 0.5 * (config.natural_band[0] + config.natural_band[1])

    counts = config.snapshots_per_stage
    stages = np.repeat(np.arange(4), counts)
    levels = [np.zeros(config.n_snapshots) for _ in range(3)]
    ramps = (config.stage1_amplitude, config.stage2_amplitude, config.stage3_amplitude)
    offset = np.cumsum((0,) + tuple(counts))
    for comp in range(3):
        stage = comp + 1
        a, b = offset[stage], offset[stage + 1]
        if b > a:
            levels[comp][a:b] = _ramp(ramps[comp], b - a)
        # a component keeps its final level through later stages
        levels[comp][b:] = ramps[comp][1] if b > a else ramps[comp][0]
        levels[comp][stages < stage] = 0.0

    horizontal, vertical = [], []
    for i in range(config.n_snapshots):
        phase = rng.uniform(0, 2 * np.pi)
        shared = config.shaft_amplitude * np.sin(2 * np.pi * config.shaft_hz * t + phase)
        if levels[0][i] > 0:
            shared = shared + levels[0][i] * _band_noise(rng, n, fs, config.natural_band)
        if levels[1][i] > 0:
            rate = config.fault_hz * (1.0 + config.fault_jitter * rng.uniform(-1.0, 1.0))
            shared = shared + levels[1][i] * _impulse_train(rng, t, rate, ring_hz, config.ring_decay_s)
        h = shared + config.noise_sigma * rng.standard_normal(n)
        v = config.vertical_gain * shared + config.noise_sigma * rng.standard_normal(n)
        if levels[2][i] > 0:
            h = h + levels[2][i] * rng.standard_normal(n)
            v = v + levels[2][i] * rng.standard_normal(n)
        horizontal.append(h)
        vertical.append(v)

    run = make_run(config.bearing_id, horizontal, vertical, fs)
    run.labels = stages.copy()
    return run, LabeledRun(run, stages, METHOD_TRUTH)


def write_dataset(run: BearingRun, truth: LabeledRun | None, out_dir: str | Path) -> Path:
    """Write ``<out_dir>/<bearing_id>/acc_XXXXX.csv`` and ``truth_labels.csv``."""
    target = Path(out_dir) / run.bearing_id
    target.mkdir(parents=True, exist_ok=True)
    for snap in run.snapshots:
        (target / f"acc_{snap.time_index:05d}.csv").write_text(format_snapshot_file(snap))
    if truth is not None:
        with open(target / "truth_labels.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_index", "stage", "method"])
            for ti, s in zip(run.time_indices, truth.labels):
                w.writerow([int(ti), int(s), truth.method])
    return target
