from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bearing_stager.dsp import (
    decimate,
    decimate_run,
    dominant_frequency,
    magnitude_spectrum,
    smoothed_max_acceleration,
    spectra_matrix,
    write_spectrum_csv,
)
from bearing_stager.errors import IndivisibleLength, NonFiniteInput, TooShort
from bearing_stager.ingest import VibrationSnapshot


def direct_dft_magnitude(x):
    """O(N^2) one-sided DFT magnitude, written out term by term."""
    n = len(x)
    out = []
    for k in range(n // 2 + 1):
        acc = 0j
        for t in range(n):
            acc += x[t] * cmath.exp(-2j * math.pi * k * t / n)
        out.append(abs(acc))
    return np.array(out)


def snapshot(n=2560, fs=25600.0, seed=0):
    rng = np.random.default_rng(seed)
    return VibrationSnapshot(1, fs, rng.standard_normal(n), rng.standard_normal(n))


def test_decimated_snapshot_has_641_bins_at_10hz():
    snap = decimate(snapshot(), 2)
    assert snap.n_samples == 1280
    assert snap.sample_rate == 12800.0
    spec = magnitude_spectrum(snap.horizontal, snap.sample_rate)
    assert len(spec) == 641
    assert spec.bin_width == 10.0
    assert spec.frequencies[-1] == 6400.0


def test_decimate_keeps_every_second_sample():
    snap = snapshot(n=8)
    d = decimate(snap, 2)
    np.testing.assert_array_equal(d.horizontal, snap.horizontal[::2])
    assert decimate(snap, 1) is snap


def test_decimate_rejects_indivisible_length():
    with pytest.raises(IndivisibleLength):
        decimate(snapshot(n=2561), 2)
    with pytest.raises(ValueError):
        decimate(snapshot(n=8), 0)


@pytest.mark.parametrize("n", [16, 64, 256])
def test_magnitude_matches_direct_dft(n):
    x = np.random.default_rng(n).standard_normal(n)
    got = magnitude_spectrum(x, 1000.0).bins
    want = direct_dft_magnitude(x.tolist())
    np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 128).map(lambda h: 2 * h), st.integers(0, 2**32 - 1))
def test_parseval(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    mag = magnitude_spectrum(x, 1.0).bins
    # one-sided spectrum: interior bins count twice, DC and Nyquist once
    energy = (mag[0] ** 2 + 2 * np.sum(mag[1:-1] ** 2) + mag[-1] ** 2) / n
    assert energy == pytest.approx(float(np.sum(x * x)), rel=1e-6)


def test_magnitude_input_checks():
    with pytest.raises(ValueError):
        magnitude_spectrum(np.zeros(7), 1.0)
    with pytest.raises(ValueError):
        magnitude_spectrum(np.zeros(1), 1.0)
    with pytest.raises(NonFiniteInput):
        magnitude_spectrum(np.array([0.0, np.inf]), 1.0)


def test_spectra_matrix_rows_equal_single_spectra(synth_run):
    run, _ = synth_run
    m = spectra_matrix(run, "vertical", 2)
    assert m.shape == (len(run), 641)
    for i in (0, 57, len(run) - 1):
        snap = decimate(run.snapshots[i], 2)
        np.testing.assert_array_equal(m[i], magnitude_spectrum(snap.vertical, snap.sample_rate).bins)
    assert len(decimate_run(run, 2)) == len(run)


def test_dominant_frequency_of_sinusoid():
    fs, n = 12800.0, 1280
    t = np.arange(n) / fs
    spec = magnitude_spectrum(3.0 + np.sin(2 * np.pi * 440.0 * t), fs)
    assert dominant_frequency(spec) == 440.0
    # DC excluded by default; included on request
    assert dominant_frequency(spec, exclude_dc=False) == 0.0


def test_smoothed_max_acceleration():
    x = np.array([0.0, -9.0, 1.0, 2.0, 8.0, -3.0, 4.0, 0.5])
    assert smoothed_max_acceleration(x, 5) == pytest.approx((9 + 8 + 4 + 3 + 2) / 5)
    with pytest.raises(TooShort):
        smoothed_max_acceleration(x[:3], 5)


def test_write_spectrum_csv(tmp_path):
    spec = magnitude_spectrum(np.arange(8.0), 8.0)
    p = tmp_path / "s.csv"
    write_spectrum_csv(spec, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "bin_hz,magnitude"
    assert len(lines) == 1 + 5
