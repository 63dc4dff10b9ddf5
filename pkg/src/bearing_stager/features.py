"""Thirteen time-domain features per channel.

All moments are population moments (divide by n). Order of ``FEATURE_NAMES``
is the column order used everywhere downstream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass
from functools import lru_cache
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .errors import NonFiniteInput, OutOfRangeN, TooShort, ZeroVariance
from .ingest import CHANNELS, BearingRun

FEATURE_NAMES = (
    "mean",
    "abs_median",
    "std_dev",
    "skewness",
    "kurtosis",
    "crest_factor",
    "energy",
    "rms",
    "peak_count",
    "zero_crossings",
    "shapiro_w",
    "kl_emp_to_normal",
    "kl_normal_to_emp",
)

KL_BINS = 100
KL_HALF_WIDTH = 5.0  # in standard deviations
KL_EPS = 1e-10
PEAK_RMS_FACTOR = 2.0


@dataclass(frozen=True)
class TimeFeatures:
    mean: float
    abs_median: float
    std_dev: float
    skewness: float
    kurtosis: float
    crest_factor: float
    energy: float
    rms: float
    peak_count: int
    zero_crossings: int
    shapiro_w: float
    kl_emp_to_normal: float
    kl_normal_to_emp: float
    degenerate: bool = False

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self)[: len(FEATURE_NAMES)], dtype=float)


def count_zero_crossings(samples) -> int:
    """Adjacent pairs with strictly opposite signs. Exact zeros never count."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise TooShort("need at least 2 samples")
    return int(np.count_nonzero(x[:-1] * x[1:] < 0))


def count_peaks(samples) -> int:
    """Strict local maxima that exceed twice the signal RMS."""
    x = np.asarray(samples, dtype=float)
    if x.size < 3:
        raise TooShort("need at least 3 samples")
    threshold = PEAK_RMS_FACTOR * math.sqrt(float(np.mean(x * x)))
    mid = x[1:-1]
    is_peak = (x[:-2] < mid) & (mid > x[2:]) & (mid > threshold)
    return int(np.count_nonzero(is_peak))


# Royston (1995) polynomial corrections for the two most extreme coefficients.
_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)


@lru_cache(maxsize=16)
def _shapiro_coefficients(n: int) -> np.ndarray:
    inv = NormalDist().inv_cdf
    m = np.array([inv((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    mm = float(m @ m)
    u = 1.0 / math.sqrt(n)
    poly1 = sum(c * u**k for k, c in enumerate(_SW_C1))
    poly2 = sum(c * u**k for k, c in enumerate(_SW_C2))
    a_n = m[-1] / math.sqrt(mm) + poly1
    a_n1 = m[-2] / math.sqrt(mm) + poly2
    phi = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * a_n**2 - 2 * a_n1**2)
    a = m / math.sqrt(phi)
    a[-1], a[-2] = a_n, a_n1
    a[0], a[1] = -a_n, -a_n1
    a.setflags(write=False)
    return a


def shapiro_w(samples) -> float:
    """Shapiro-Wilk W statistic using Royston's coefficient approximation."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if not 8 <= n <= 5000:
        raise OutOfRangeN(f"Shapiro-Wilk W needs 8 <= N <= 5000, got {n}")
    ss = float(np.sum((x - x.mean()) ** 2))
    if ss == 0.0:
        return 1.0
    a = _shapiro_coefficients(n)
    w = float(a @ x) ** 2 / ss
    return min(w, 1.0)


@lru_cache(maxsize=4)
def _normal_bin_masses(n_bins: int, half_width: float) -> np.ndarray:
    edges = np.linspace(-half_width, half_width, n_bins + 1)
    cdf = np.array([NormalDist().cdf(float(e)) for e in edges])
    q = np.diff(cdf)
    q.setflags(write=False)
    return q


def _smooth(p: np.ndarray, eps: float) -> np.ndarray:
    p = p + eps
    return p / p.sum()


def binned_kl(p, q, eps: float = KL_EPS) -> tuple[float, float]:
    """``(KL(p||q), KL(q||p))`` after additive smoothing and renormalisation."""
    p = _smooth(np.asarray(p, dtype=float), eps)
    q = _smooth(np.asarray(q, dtype=float), eps)
    forward = float(np.sum(p * np.log(p / q)))
    backward = float(np.sum(q * np.log(q / p)))
    # Gibbs: exact zero is the floor, rounding can dip below it
    return max(forward, 0.0), max(backward, 0.0)


def empirical_histogram(samples, n_bins: int = KL_BINS, half_width: float = KL_HALF_WIDTH):
    """Relative frequencies over equal bins on ``mean +- half_width * s``.

    Samples beyond the window fall into the edge bins.
    """
    x = np.asarray(samples, dtype=float)
    s = float(np.std(x))
    if s == 0.0:
        raise ZeroVariance("KL divergence needs a non-constant signal")
    z = (x - x.mean()) / s
    idx = np.floor((z + half_width) * (n_bins / (2 * half_width))).astype(np.int64)
    counts = np.bincount(np.clip(idx, 0, n_bins - 1), minlength=n_bins)
    return counts / x.size


def kl_divergences(samples) -> tuple[float, float]:
    """KL from the empirical distribution to N(mean, s^2) and back, in nats."""
    x = np.asarray(samples, dtype=float)
    if x.size < 8:
        raise TooShort("KL divergence needs at least 8 samples")
    p = empirical_histogram(x)
    q = _normal_bin_masses(KL_BINS, KL_HALF_WIDTH)
    return binned_kl(p, q)


def time_features(samples) -> TimeFeatures:
    """Compute every feature in ``FEATURE_NAMES`` for one channel.

    A constant signal does not raise: skewness, kurtosis and both KL values
    are reported as 0, Shapiro W as 1, and ``degenerate`` is set.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 8:
        raise TooShort(f"time features need N >= 8, got {n}")
    if not np.isfinite(x).all():
        raise NonFiniteInput("samples contain NaN or inf")

    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d * d))
    energy = float(np.sum(x * x))
    rms = math.sqrt(energy / n)
    peak = float(np.max(np.abs(x)))
    crest = peak / rms if rms > 0 else 0.0
    degenerate = bool(np.ptp(x) == 0.0)

    if degenerate:
        skew = kurt = kl_fwd = kl_bwd = 0.0
        w = 1.0
    else:
        skew = float(np.mean(d**3)) / m2**1.5
        kurt = float(np.mean(d**4)) / m2**2
        w = shapiro_w(x)
        kl_fwd, kl_bwd = kl_divergences(x)

    return TimeFeatures(
        mean=mean,
        abs_median=float(np.median(np.abs(x))),
        std_dev=math.sqrt(m2),
        skewness=skew,
        kurtosis=kurt,
        crest_factor=crest,
        energy=energy,
        rms=rms,
        peak_count=count_peaks(x),
        zero_crossings=count_zero_crossings(x),
        shapiro_w=w,
        kl_emp_to_normal=kl_fwd,
        kl_normal_to_emp=kl_bwd,
        degenerate=degenerate,
    )


def feature_names(channels=CHANNELS) -> list[str]:
    return [f"{c}_{name}" for c in channels for name in FEATURE_NAMES]


def run_feature_matrix(run: BearingRun, factor: int = 1) -> np.ndarray:
    """Per-snapshot features, horizontal block then vertical: shape ``(M, 26)``."""
    rows = []
    for snap in run.snapshots:
        row = []
        for c in CHANNELS:
            x = snap.channel(c)
            if factor > 1:
                x = x[::factor]
            row.append(time_features(x).as_array())
        rows.append(np.concatenate(row))
    return np.vstack(rows)


def write_feature_csv(
    matrix: np.ndarray, path: str | Path, time_indices=None, names=None
) -> None:
    names = list(names) if names is not None else feature_names()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((["time_index"] if time_indices is not None else []) + names)
        for i, row in enumerate(np.asarray(matrix)):
            prefix = [int(time_indices[i])] if time_indices is not None else []
            w.writerow(prefix + [repr(float(v)) for v in row])
