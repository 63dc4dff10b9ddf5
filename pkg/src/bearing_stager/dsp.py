"""Decimation, magnitude spectra and the two diagnostic scalars."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IndivisibleLength, NonFiniteInput, TooShort
from .ingest import BearingRun, VibrationSnapshot


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided FFT magnitude of a single channel.

    ``bins[k]`` is the magnitude at ``k * bin_width`` Hz, k = 0..N/2.
    """

    bins: np.ndarray
    bin_width: float
    channel: str = "horizontal"

    def __len__(self) -> int:
        return self.bins.size

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.bins.size) * self.bin_width


def decimate(snapshot: VibrationSnapshot, factor: int) -> VibrationSnapshot:
    """Keep every ``factor``-th sample starting at index 0 (no anti-alias filter)."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"decimation factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return snapshot
    if snapshot.n_samples % factor:
        raise IndivisibleLength(
            f"{snapshot.n_samples} samples not divisible by factor {factor}"
        )
    return VibrationSnapshot(
        snapshot.time_index,
        snapshot.sample_rate / factor,
        snapshot.horizontal[::factor],
        snapshot.vertical[::factor],
    )


def decimate_run(run: BearingRun, factor: int) -> BearingRun:
    if factor == 1:
        return run
    return BearingRun(
        run.bearing_id,
        [decimate(s, factor) for s in run.snapshots],
        condition=run.condition,
        labels=run.labels,
    )


def magnitude_spectrum(
    samples: np.ndarray, sample_rate: float, channel: str = "horizontal"
) -> Spectrum:
    """Unnormalised one-sided DFT magnitude, rectangular window."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 2 or x.size % 2:
        raise ValueError(f"need an even-length 1-D signal with N >= 2, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise NonFiniteInput("samples contain NaN or inf")
    return Spectrum(np.abs(np.fft.rfft(x)), sample_rate / x.size, channel)


def spectra_matrix(run: BearingRun, channel: str, factor: int = 1) -> np.ndarray:
    """Magnitude spectra of one channel for every snapshot, shape ``(M, N/factor/2 + 1)``.

    Row ``i`` equals ``magnitude_spectrum`` of decimated snapshot ``i``.
    """
    x = run.channel_matrix(channel)
    if factor > 1:
        if x.shape[1] % factor:
            raise IndivisibleLength(f"{x.shape[1]} samples not divisible by factor {factor}")
        x = x[:, ::factor]
    if x.shape[1] % 2:
        raise ValueError("spectra need an even number of samples")
    if not np.isfinite(x).all():
        raise NonFiniteInput("run contains NaN or inf samples")
    return np.abs(np.fft.rfft(x, axis=1))


def dominant_frequency(spectrum: Spectrum, exclude_dc: bool = True) -> float:
    """Frequency of the largest bin; ties go to the lower frequency."""
    start = 1 if exclude_dc and spectrum.bins.size > 1 else 0
    return float((start + int(np.argmax(spectrum.bins[start:]))) * spectrum.bin_width)


def smoothed_max_acceleration(samples: np.ndarray, count: int = 5) -> float:
    """Mean of the ``count`` largest absolute samples."""
    a = np.abs(np.asarray(samples, dtype=float))
    if a.size < count:
        raise TooShort(f"need at least {count} samples, got {a.size}")
    return float(np.mean(np.sort(a)[-count:]))


def write_spectrum_csv(spectrum: Spectrum, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_hz", "magnitude"])
        for f, m in zip(spectrum.frequencies, spectrum.bins):
            w.writerow([repr(float(f)), repr(float(m))])
