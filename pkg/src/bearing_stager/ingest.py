"""Loading and validation of FEMTO/PRONOSTIA-style vibration records.

On-disk layout::

    <root>/<bearing_id>/acc_00001.csv
    <root>/<bearing_id>/acc_00002.csv
    ...

Each ``acc_*.csv`` holds one snapshot, one row per sample:
``hour, minute, second, microsecond, horizontal_g, vertical_g`` with no header.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyFile,
    InconsistentLength,
    IngestError,
    MalformedRow,
    NonFiniteSample,
    NoSnapshots,
)

FEMTO_SAMPLE_RATE = 25_600.0
SNAPSHOT_SECONDS = 0.1
SNAPSHOT_PATTERN = "acc_*.csv"

CHANNELS = ("horizontal", "vertical")


@dataclass(frozen=True)
class OperatingCondition:
    speed_rpm: float
    load_n: float


FEMTO_CONDITIONS = {
    1: OperatingCondition(1800.0, 4000.0),
    2: OperatingCondition(1650.0, 4200.0),
    3: OperatingCondition(1500.0, 5000.0),
}

FEMTO_TRAIN_BEARINGS = ("1_1", "1_2", "2_1", "2_2", "3_1", "3_2")
FEMTO_TEST_BEARINGS = (
    "1_3", "1_4", "1_5", "1_6", "1_7",
    "2_3", "2_4", "2_5", "2_6", "2_7",
    "3_3",
)


def femto_condition(bearing_id: str) -> OperatingCondition | None:
    """Operating condition implied by a FEMTO bearing id such as ``"1_3"``."""
    m = re.search(r"(\d+)_\d+$", bearing_id)
    if m is None:
        return None
    return FEMTO_CONDITIONS.get(int(m.group(1)))


@dataclass(frozen=True, eq=False)
class VibrationSnapshot:
    """One two-channel acceleration recording (in g)."""

    time_index: int
    sample_rate: float
    horizontal: np.ndarray
    vertical: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.horizontal, dtype=float)
        v = np.asarray(self.vertical, dtype=float)
        if h.ndim != 1 or v.ndim != 1 or h.shape != v.shape:
            raise ValueError("horizontal and vertical must be 1-D with equal length")
        if h.size < 2:
            raise ValueError("a snapshot needs at least two samples")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "horizontal", h)
        object.__setattr__(self, "vertical", v)

    @property
    def n_samples(self) -> int:
        return self.horizontal.size

    def channel(self, name: str) -> np.ndarray:
        if name == "horizontal":
            return self.horizontal
        if name == "vertical":
            return self.vertical
        raise ValueError(f"unknown channel {name!r}")


@dataclass
class BearingRun:
    """Time-ordered snapshots of one bearing, healthy to failure."""

    bearing_id: str
    snapshots: list[VibrationSnapshot]
    condition: OperatingCondition | None = None
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def sample_rate(self) -> float:
        return self.snapshots[0].sample_rate

    @property
    def n_samples(self) -> int:
        return self.snapshots[0].n_samples

    @property
    def time_indices(self) -> np.ndarray:
        return np.array([s.time_index for s in self.snapshots], dtype=np.int64)

    def channel_matrix(self, name: str) -> np.ndarray:
        """Stack one channel of every snapshot into an ``(n_snapshots, N)`` array."""
        return np.stack([s.channel(name) for s in self.snapshots])


@dataclass
class ValidationReport:
    """Problems found in a run. Empty when the run satisfies every invariant.

    ``gaps`` lists missing time indices; gaps are legal and do not make the
    report non-empty.
    """

    bearing_id: str
    n_snapshots: int = 0
    duplicate_indices: list[int] = field(default_factory=list)
    out_of_order: list[int] = field(default_factory=list)
    length_mismatches: list[tuple[int, int]] = field(default_factory=list)
    rate_mismatches: list[tuple[int, float]] = field(default_factory=list)
    duration_mismatches: list[int] = field(default_factory=list)
    non_finite: list[int] = field(default_factory=list)
    constant_signals: list[tuple[int, str]] = field(default_factory=list)
    label_count_mismatch: tuple[int, int] | None = None
    empty: bool = False
    gaps: list[int] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (
            self.empty
            or self.duplicate_indices
            or self.out_of_order
            or self.length_mismatches
            or self.rate_mismatches
            or self.duration_mismatches
            or self.non_finite
            or self.constant_signals
            or self.label_count_mismatch is not None
        )

    def to_dict(self) -> dict:
        return {
            "bearing_id": self.bearing_id,
            "n_snapshots": self.n_snapshots,
            "ok": self.is_empty(),
            "empty": self.empty,
            "duplicate_indices": self.duplicate_indices,
            "out_of_order": self.out_of_order,
            "length_mismatches": [list(x) for x in self.length_mismatches],
            "rate_mismatches": [list(x) for x in self.rate_mismatches],
            "duration_mismatches": self.duration_mismatches,
            "non_finite": self.non_finite,
            "constant_signals": [list(x) for x in self.constant_signals],
            "label_count_mismatch": (
                list(self.label_count_mismatch) if self.label_count_mismatch else None
            ),
            "gaps": self.gaps,
        }


# --------------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------------


def parse_snapshot_file(
    text: str, time_index: int, sample_rate: float = FEMTO_SAMPLE_RATE
) -> VibrationSnapshot:
    """Parse the text of one FEMTO ``acc_*.csv`` file.

    Columns 5 and 6 (1-based) are the horizontal and vertical accelerations.
    The four timestamp columns must be numeric but are otherwise ignored.
    Both ``,`` and ``;`` separators are accepted (some archive copies use the
    latter).
    """
    lines = [ln for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise EmptyFile("snapshot file is empty")

    sep = ";" if ";" in lines[0] and "," not in lines[0] else ","
    horizontal = np.empty(len(lines))
    vertical = np.empty(len(lines))
    for i, line in enumerate(lines):
        lineno = i + 1
        fields = line.split(sep)
        if len(fields) < 6:
            raise MalformedRow(lineno, f"expected >= 6 fields, got {len(fields)}")
        try:
            stamp = [float(f) for f in fields[:4]]
            h = float(fields[4])
            v = float(fields[5])
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from None
        if not all(math.isfinite(t) and t >= 0 for t in stamp):
            raise MalformedRow(lineno, "bad timestamp")
        if not (math.isfinite(h) and math.isfinite(v)):
            raise NonFiniteSample(lineno)
        horizontal[i] = h
        vertical[i] = v
    if len(lines) < 2:
        raise MalformedRow(1, "a snapshot needs at least two rows")
    return VibrationSnapshot(time_index, float(sample_rate), horizontal, vertical)


def format_snapshot_file(snapshot: VibrationSnapshot) -> str:
    """Render a snapshot in the FEMTO text layout.

    Sample values are written with ``repr`` so that parsing the output gives
    back identical floats. Timestamps are synthesised from the sample rate.
    """
    out = []
    dt_us = 1e6 / snapshot.sample_rate
    for i, (h, v) in enumerate(zip(snapshot.horizontal, snapshot.vertical)):
        us_total = int(round(i * dt_us))
        sec, us = divmod(us_total, 1_000_000)
        out.append(f"0,0,{sec},{us},{float(h)!r},{float(v)!r}")
    return "\n".join(out) + "\n"


_INDEX_RE = re.compile(r"(\d+)(?!.*\d)")


def snapshot_index_from_name(name: str) -> int:
    """Numeric suffix of a snapshot filename, e.g. ``acc_00042.csv`` -> 42."""
    stem = Path(name).stem
    m = _INDEX_RE.search(stem)
    if m is None:
        raise IngestError(f"no numeric index in snapshot filename {name!r}")
    return int(m.group(1))


def load_run(
    directory: str | Path,
    bearing_id: str | None = None,
    sample_rate: float = FEMTO_SAMPLE_RATE,
    pattern: str = SNAPSHOT_PATTERN,
) -> BearingRun:
    """Load every snapshot file of one bearing, ordered by filename index."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NoSnapshots(f"{directory} is not a directory")
    files = sorted(directory.glob(pattern), key=lambda p: (snapshot_index_from_name(p.name), p.name))
    if not files:
        raise NoSnapshots(f"no files matching {pattern!r} in {directory}")
    if bearing_id is None:
        bearing_id = directory.name.removeprefix("Bearing")

    snapshots = []
    expected = None
    for path in files:
        idx = snapshot_index_from_name(path.name)
        try:
            snap = parse_snapshot_file(path.read_text(), idx, sample_rate)
        except IngestError as exc:
            exc.file = str(path)
            exc.args = (f"{path}: {exc}",)
            raise
        if expected is None:
            expected = snap.n_samples
        elif snap.n_samples != expected:
            raise InconsistentLength(str(path), expected, snap.n_samples)
        snapshots.append(snap)

    indices = [s.time_index for s in snapshots]
    if len(set(indices)) != len(indices):
        dup = sorted({i for i in indices if indices.count(i) > 1})
        raise IngestError(f"duplicate snapshot indices {dup} in {directory}")
    return BearingRun(bearing_id, snapshots, condition=femto_condition(bearing_id))


# --------------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------------


def validate_run(
    run: BearingRun, expected_duration: float | None = SNAPSHOT_SECONDS
) -> ValidationReport:
    """Report every invariant violation of ``run`` without modifying it."""
    report = ValidationReport(run.bearing_id, n_snapshots=len(run.snapshots))
    if not run.snapshots:
        report.empty = True
        return report

    first = run.snapshots[0]
    seen: set[int] = set()
    prev = None
    for snap in run.snapshots:
        ti = snap.time_index
        if ti in seen and ti not in report.duplicate_indices:
            report.duplicate_indices.append(ti)
        seen.add(ti)
        if prev is not None and ti < prev:
            report.out_of_order.append(ti)
        prev = ti
        if snap.n_samples != first.n_samples:
            report.length_mismatches.append((ti, snap.n_samples))
        if snap.sample_rate != first.sample_rate:
            report.rate_mismatches.append((ti, snap.sample_rate))
        if expected_duration is not None:
            if abs(snap.n_samples - snap.sample_rate * expected_duration) > 0.5:
                report.duration_mismatches.append(ti)
        if not (np.isfinite(snap.horizontal).all() and np.isfinite(snap.vertical).all()):
            report.non_finite.append(ti)
            continue
        for name in CHANNELS:
            x = snap.channel(name)
            if np.ptp(x) == 0.0:
                report.constant_signals.append((ti, name))

    if run.labels is not None and len(run.labels) != len(run.snapshots):
        report.label_count_mismatch = (len(run.labels), len(run.snapshots))

    ordered = sorted(seen)
    if ordered:
        full = set(range(ordered[0], ordered[-1] + 1))
        report.gaps = sorted(full - seen)
    return report


# --------------------------------------------------------------------------------
# columnar container
# --------------------------------------------------------------------------------

RUN_MAGIC = b"BSR1"
_HEADER = struct.Struct("<4sId")


def write_run_container(run: BearingRun, path: str | Path) -> None:
    """Write a run as ``BSR1`` binary: header then float32 channel blocks.

    Header: magic ``b"BSR1"``, uint32 samples per snapshot, float64 sample
    rate (little-endian). Each snapshot follows as N horizontal then N vertical
    little-endian float32 values. Snapshot count is implied by the file size.
    """
    if not run.snapshots:
        raise NoSnapshots("cannot serialise an empty run")
    n = run.n_samples
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(RUN_MAGIC, n, float(run.sample_rate)))
        for snap in run.snapshots:
            fh.write(snap.horizontal.astype("<f4").tobytes())
            fh.write(snap.vertical.astype("<f4").tobytes())


def read_run_container(path: str | Path, bearing_id: str = "") -> BearingRun:
    """Read a ``BSR1`` file. Time indices are assigned as 1..M in file order."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise IngestError(f"{path}: truncated header")
    magic, n, rate = _HEADER.unpack_from(data)
    if magic != RUN_MAGIC:
        raise IngestError(f"{path}: bad magic {magic!r}")
    body = memoryview(data)[_HEADER.size:]
    block = 2 * n * 4
    if n < 2 or len(body) % block:
        raise IngestError(f"{path}: body length {len(body)} is not a multiple of {block}")
    arr = np.frombuffer(body, dtype="<f4").reshape(-1, 2, n).astype(float)
    snaps = [
        VibrationSnapshot(i + 1, rate, arr[i, 0], arr[i, 1]) for i in range(arr.shape[0])
    ]
    return BearingRun(bearing_id, snaps, condition=femto_condition(bearing_id))


def make_run(
    bearing_id: str,
    horizontal: Sequence[np.ndarray] | np.ndarray,
    vertical: Sequence[np.ndarray] | np.ndarray,
    sample_rate: float,
    time_indices: Iterable[int] | None = None,
) -> BearingRun:
    """Build a run from per-snapshot channel arrays (indices default to 1..M)."""
    horizontal = list(horizontal)
    vertical = list(vertical)
    if time_indices is None:
        time_indices = range(1, len(horizontal) + 1)
    snaps = [
        VibrationSnapshot(int(t), sample_rate, h, v)
        for t, h, v in zip(time_indices, horizontal, vertical)
    ]
    return BearingRun(bearing_id, snaps, condition=femto_condition(bearing_id))
