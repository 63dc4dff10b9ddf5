"""Evaluation of predicted stage sequences: accuracy, stage overlap, fault timing.

Lifetime percentages are computed on snapshot positions (the 10 s grid), not
on wall-clock time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import dominant_frequency, magnitude_spectrum, smoothed_max_acceleration
from .errors import LengthMismatch
from .ingest import CHANNELS, BearingRun
from .label import N_STAGES, LabeledRun, label_agreement

EARLY_PCT = 90.0
LATE_PCT = 10.0

ACCURACY_HEADER = ["bearing_id", "stage", "accuracy", "support"]
OVERLAP_HEADER = ["bearing_id", "stage", "overlap_pct", "span_first", "span_last"]
FAULT_HEADER = [
    "bearing_id",
    "pct_healthy_after_fault",
    "pct_lifetime_left_after_fault",
    "total_length",
    "fault_index",
    "detected",
    "flag_early_late",
]
DIAGNOSTIC_HEADER = [
    "time_index",
    "dominant_hz_horizontal",
    "dominant_hz_vertical",
    "max_accel_horizontal",
    "max_accel_vertical",
    "predicted_stage",
    "reference_stage",
]


@dataclass(frozen=True)
class StageOverlap:
    stage: int
    pct: float | None  # None when the stage never occurs
    first: int | None = None
    last: int | None = None


@dataclass(frozen=True)
class FaultTimingRow:
    bearing_id: str
    pct_healthy_after_fault: float | None
    pct_lifetime_left_after_fault: float | None
    total_length: int
    fault_index: int | None

    @property
    def detected(self) -> bool:
        return self.fault_index is not None

    @property
    def flag_early_late(self) -> bool:
        """Too early (> 90 % life left), too late (< 10 %), or never detected."""
        left = self.pct_lifetime_left_after_fault
        return left is None or left > EARLY_PCT or left < LATE_PCT


@dataclass
class Diagnostics:
    time_index: np.ndarray
    dominant_hz: dict[str, np.ndarray]
    max_accel: dict[str, np.ndarray]


@dataclass
class BearingEvaluation:
    bearing_id: str
    predicted: np.ndarray
    reference: np.ndarray | None
    accuracy: dict[int, float | None]
    support: dict[int, int]
    overall_accuracy: float | None
    overlap: list[StageOverlap]
    timing: FaultTimingRow | None
    diagnostics: Diagnostics | None = None


@dataclass
class EvaluationReport:
    bearings: list[BearingEvaluation] = field(default_factory=list)

    def sorted(self) -> "EvaluationReport":
        return EvaluationReport(sorted(self.bearings, key=lambda b: b.bearing_id))


def _stages(seq) -> np.ndarray:
    if isinstance(seq, LabeledRun):
        return seq.labels
    return np.asarray(getattr(seq, "stages", seq), dtype=np.int64)


def stage_overlap(stages) -> list[StageOverlap]:
    """Share of each stage's first-to-last span taken by other stages, in percent."""
    s = _stages(stages)
    if s.size == 0:
        raise ValueError("stage sequence is empty")
    out = []
    for k in range(N_STAGES):
        idx = np.flatnonzero(s == k)
        if idx.size == 0:
            out.append(StageOverlap(k, None))
            continue
        first, last = int(idx[0]), int(idx[-1])
        foreign = int(np.count_nonzero(s[first:last + 1] != k))
        out.append(StageOverlap(k, 100.0 * foreign / (last - first + 1), first, last))
    return out


def fault_index(stages) -> int | None:
    """First position predicted as stage 2 or later."""
    hits = np.flatnonzero(_stages(stages) >= 2)
    return int(hits[0]) if hits.size else None


def fault_timing(predicted, reference, bearing_id: str | None = None) -> FaultTimingRow:
    p = _stages(predicted)
    r = _stages(reference)
    if p.shape != r.shape:
        raise LengthMismatch(f"{p.size} predictions vs {r.size} reference labels")
    if bearing_id is None:
        bearing_id = reference.run.bearing_id if isinstance(reference, LabeledRun) else ""
    T = p.size
    F = fault_index(p)
    if F is None:
        return FaultTimingRow(bearing_id, None, None, T, None)
    left = 100.0 * (T - 1 - F) / (T - 1) if T > 1 else 0.0
    healthy = r <= 1
    n_healthy = int(healthy.sum())
    after = int(np.count_nonzero(healthy[F + 1:]))
    pct_healthy = 100.0 * after / n_healthy if n_healthy else 0.0
    return FaultTimingRow(bearing_id, pct_healthy, left, T, F)


def run_diagnostics(run: BearingRun, count: int = 5) -> Diagnostics:
    """Dominant frequency and smoothed maximum acceleration per snapshot and channel."""
    dom = {c: np.empty(len(run)) for c in CHANNELS}
    peak = {c: np.empty(len(run)) for c in CHANNELS}
    for i, snap in enumerate(run.snapshots):
        for c in CHANNELS:
            x = snap.channel(c)
            dom[c][i] = dominant_frequency(magnitude_spectrum(x, snap.sample_rate, c))
            peak[c][i] = smoothed_max_acceleration(x, count)
    return Diagnostics(run.time_indices.copy(), dom, peak)


def evaluate_bearing(
    predicted,
    reference: LabeledRun | np.ndarray | None = None,
    bearing_id: str = "",
    run: BearingRun | None = None,
) -> BearingEvaluation:
    """Every metric for one bearing. Without a reference only overlap is computed."""
    p = _stages(predicted)
    if run is not None and not bearing_id:
        bearing_id = run.bearing_id
    overlap = stage_overlap(p)
    diag = run_diagnostics(run) if run is not None else None
    if reference is None:
        empty = {s: None for s in range(N_STAGES)}
        return BearingEvaluation(bearing_id, p, None, empty, {s: 0 for s in range(N_STAGES)}, None, overlap, None, diag)
    r = _stages(reference)
    agree = label_agreement(p, r)
    timing = fault_timing(p, r, bearing_id)
    return BearingEvaluation(bearing_id, p, r, agree.per_stage, agree.support, agree.overall, overlap, timing, diag)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def emit_report(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """Write the report CSVs; rows are ordered by bearing id, so output is deterministic."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bearings = report.sorted().bearings

    acc_rows, ov_rows, ft_rows = [], [], []
    for b in bearings:
        for s in range(N_STAGES):
            acc_rows.append([b.bearing_id, s, b.accuracy.get(s), b.support.get(s, 0)])
        if b.overall_accuracy is not None:
            acc_rows.append([b.bearing_id, "all", b.overall_accuracy, int(b.predicted.size)])
        for o in b.overlap:
            ov_rows.append([b.bearing_id, o.stage, o.pct, o.first, o.last])
        if b.timing is not None:
            t = b.timing
            ft_rows.append([
                t.bearing_id, t.pct_healthy_after_fault, t.pct_lifetime_left_after_fault,
                t.total_length, t.fault_index, t.detected, t.flag_early_late,
            ])

    written = [out / "accuracy.csv", out / "overlap.csv", out / "fault_timing.csv"]
    _write(written[0], ACCURACY_HEADER, acc_rows)
    _write(written[1], OVERLAP_HEADER, ov_rows)
    _write(written[2], FAULT_HEADER, ft_rows)

    for b in bearings:
        if b.diagnostics is None:
            continue
        d = b.diagnostics
        ref = b.reference if b.reference is not None else [None] * b.predicted.size
        rows = zip(
            d.time_index, d.dominant_hz["horizontal"], d.dominant_hz["vertical"],
            d.max_accel["horizontal"], d.max_accel["vertical"], b.predicted, ref,
        )
        path = out / f"diagnostics_{b.bearing_id}.csv"
        _write(path, DIAGNOSTIC_HEADER, rows)
        written.append(path)
    return written
