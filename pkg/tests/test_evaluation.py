from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bearing_stager.errors import LengthMismatch
from bearing_stager.evaluation import (
    ACCURACY_HEADER,
    DIAGNOSTIC_HEADER,
    FAULT_HEADER,
    OVERLAP_HEADER,
    EvaluationReport,
    evaluate_bearing,
    fault_index,
    fault_timing,
    emit_report,
    stage_overlap,
)

stage_lists = st.lists(st.integers(0, 3), min_size=1, max_size=60)


def pcts(seq):
    return [o.pct for o in stage_overlap(seq)]


def test_overlap_examples():
    assert pcts([0, 0, 1, 1, 2, 2, 3, 3]) == [0.0, 0.0, 0.0, 0.0]
    got = pcts([0, 1, 0, 1])
    assert got[0] == pytest.approx(100 / 3) and got[1] == pytest.approx(100 / 3)
    assert got[2] is None and got[3] is None
    last = stage_overlap([0, 0, 1, 2, 3])[3]
    assert last.pct == 0.0 and last.first == last.last == 4
    with pytest.raises(ValueError):
        stage_overlap([])


@settings(max_examples=60, deadline=None)
@given(stage_lists)
def test_overlap_of_sorted_sequence_is_zero(seq):
    for o in stage_overlap(sorted(seq)):
        assert o.pct is None or o.pct == 0.0


@settings(max_examples=60, deadline=None)
@given(stage_lists)
def test_overlap_bounded(seq):
    for o in stage_overlap(seq):
        assert o.pct is None or 0.0 <= o.pct <= 100.0


def test_fault_timing_examples():
    ref = [0, 0, 0, 1, 1, 2, 3, 3]
    row = fault_timing([0, 0, 0, 0, 0, 0, 0, 2], ref)
    assert row.pct_lifetime_left_after_fault == 0.0
    assert row.flag_early_late
    row = fault_timing([2, 0, 0, 0, 0, 0, 0, 0], ref)
    assert row.pct_lifetime_left_after_fault == 100.0
    assert row.pct_healthy_after_fault == pytest.approx(100 * 4 / 5)
    assert row.flag_early_late
    row = fault_timing([0, 0, 0, 1, 1, 3, 3, 3], ref)
    assert row.fault_index == 5
    assert row.pct_lifetime_left_after_fault == pytest.approx(100 * 2 / 7)
    assert row.pct_healthy_after_fault == 0.0 and not row.flag_early_late


def test_fault_timing_no_detection_is_flagged():
    row = fault_timing([0, 1, 1, 0], [0, 0, 1, 2], "b")
    assert not row.detected and row.flag_early_late
    assert row.pct_lifetime_left_after_fault is None and row.total_length == 4


def test_fault_timing_length_mismatch():
    with pytest.raises(LengthMismatch):
        fault_timing([0, 2], [0, 1, 2])


def test_bearing_2_7_analog():
    # 226 snapshots; healthy reference life ends before the detected fault
    T = 226
    ref = np.array([0] * 100 + [1] * 60 + [2] * 30 + [3] * 36)
    pct_target = 27.9
    F = int(round((T - 1) * (1 - pct_target / 100)))
    pred = np.array([0] * F + [2] * (T - F))
    row = fault_timing(pred, ref, "2_7")
    assert row.total_length == 226
    assert row.pct_healthy_after_fault == 0.0
    # the snapshot grid quantises the percentage to steps of 100 / (T - 1)
    assert abs(row.pct_lifetime_left_after_fault - pct_target) <= 100 / (T - 1)
    assert round(row.pct_lifetime_left_after_fault, 0) == round(pct_target, 0)


@settings(max_examples=60, deadline=None)
@given(stage_lists, st.integers(0, 20))
def test_fault_index_shifts_with_healthy_prefix(seq, p):
    f = fault_index(seq)
    g = fault_index([0] * p + seq)
    assert (f is None and g is None) or g == f + p


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
def test_fault_timing_percentages_bounded(pairs):
    row = fault_timing([a for a, _ in pairs], [b for _, b in pairs])
    for v in (row.pct_healthy_after_fault, row.pct_lifetime_left_after_fault):
        assert v is None or 0.0 <= v <= 100.0


def read(p):
    return p.read_text().splitlines()


def test_emit_empty_report_writes_headers(tmp_path):
    files = emit_report(EvaluationReport(), tmp_path)
    assert [f.name for f in files] == ["accuracy.csv", "overlap.csv", "fault_timing.csv"]
    assert read(files[0]) == [",".join(ACCURACY_HEADER)]
    assert read(files[1]) == [",".join(OVERLAP_HEADER)]
    assert read(files[2]) == [",".join(FAULT_HEADER)]


def test_emit_one_bearing(tmp_path, synth_run):
    run, truth = synth_run
    pred = truth.labels.copy()
    pred[75:85] = 2
    ev = evaluate_bearing(pred, truth, run=run)
    assert ev.bearing_id == "s0"
    files = emit_report(EvaluationReport([ev]), tmp_path)
    ft = read(tmp_path / "fault_timing.csv")
    assert len(ft) == 2 and ft[1].startswith("s0,")
    acc = read(tmp_path / "accuracy.csv")
    assert len(acc) == 1 + 4 + 1 and acc[-1].startswith("s0,all,")
    diag = read(tmp_path / "diagnostics_s0.csv")
    assert diag[0] == ",".join(DIAGNOSTIC_HEADER)
    assert len(diag) == 1 + len(run)
    first = diag[1].split(",")
    assert first[0] == "1" and float(first[1]) == pytest.approx(30.0, abs=10.0)
    # byte-identical on a second emission
    before = [f.read_bytes() for f in files]
    again = emit_report(EvaluationReport([ev]), tmp_path)
    assert [f.read_bytes() for f in again] == before


def test_emit_orders_by_bearing_id(tmp_path):
    a = evaluate_bearing([0, 2], [0, 2], bearing_id="b")
    b = evaluate_bearing([0, 3], [0, 3], bearing_id="a")
    emit_report(EvaluationReport([a, b]), tmp_path)
    rows = read(tmp_path / "fault_timing.csv")[1:]
    assert [r.split(",")[0] for r in rows] == ["a", "b"]


def test_evaluate_without_reference():
    ev = evaluate_bearing([0, 0, 1, 2], bearing_id="x")
    assert ev.timing is None and ev.overall_accuracy is None
    assert [o.pct for o in ev.overlap][:3] == [0.0, 0.0, 0.0]
