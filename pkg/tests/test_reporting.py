from __future__ import annotations

import csv
import io
import os
from pathlib import Path

import pytest

from cherrymetrics.annot_io import AbsBox
from cherrymetrics.errors import EmptyInputError, ReferentialError, SchemaError
from cherrymetrics.evaluation import EvaluationReport
from cherrymetrics.imaging import MeanRGB
from cherrymetrics.phenotype import CherryRecord, summarize, top_k_by_size
from cherrymetrics.reporting import (
    SheetSet,
    build_sheets,
    read_records_jsonl,
    read_sheets,
    write_eval_report,
    write_records_jsonl,
    write_sheets,
)

GOLDEN = Path(__file__).parent / "golden"
SHEETS = ("summary", "cherry_size", "cherry_colour", "stem_colour")
TS = "2026-10-18T09:30:00Z"


def make_record(image_id, cherry_id, size_px, conf, rgb, stem=None, mmpp=0.25, x0=10.0, y0=20.0):
    box = AbsBox(x0, y0, x0 + size_px, y0 + size_px * 0.9)
    central = AbsBox(x0 + size_px / 4, y0 + size_px * 0.225, x0 + 3 * size_px / 4, y0 + size_px * 0.675)
    return CherryRecord(
        image_id=image_id, cherry_id=cherry_id, confidence=conf, box=box,
        size_px=size_px, width_px=size_px, height_px=size_px * 0.9,
        size_mm=size_px * mmpp, width_mm=size_px * mmpp, height_mm=size_px * 0.9 * mmpp,
        mean_rgb=MeanRGB(*rgb), color_class=3, stem_rgb=None if stem is None else MeanRGB(*stem),
        central_box=central, mm_per_pixel=mmpp,
    )


def fixture_run(n_images=1):
    records, summaries = [], []
    for k in range(n_images):
        image_id = f"tray_{k:02d}"
        recs = top_k_by_size([
            make_record(image_id, 1, 120.0 + k, 0.98, (190.5, 35.25, 40.0), stem=(60.0, 90.0, 40.0)),
            make_record(image_id, 2, 110.5, 0.91234, (188.0, 33.0, 41.0 + k), x0=200.0),
        ], 50)
        records += recs
        summaries.append(summarize(recs, TS))
    return summaries, records


def test_row_counts():
    summaries, records = fixture_run()
    sheets = build_sheets(summaries, records)
    assert tuple(len(getattr(sheets, s)) for s in SHEETS) == (1, 2, 2, 1)


def test_empty_inputs(tmp_path):
    sheets = build_sheets([], [])
    write_sheets(sheets, tmp_path)
    for name in SHEETS:
        assert (tmp_path / f"{name}.csv").read_bytes() == (GOLDEN / f"{name}_header.csv").read_bytes()


def test_headers_match_golden(tmp_path):
    summaries, records = fixture_run(2)
    write_sheets(build_sheets(summaries, records), tmp_path)
    for name in SHEETS:
        first = (tmp_path / f"{name}.csv").read_bytes().split(b"\n", 1)[0] + b"\n"
        assert first == (GOLDEN / f"{name}_header.csv").read_bytes()


def test_dangling_record():
    summaries, records = fixture_run()
    with pytest.raises(ReferentialError):
        build_sheets(summaries[:0], records)


def test_flat_join_oracle():
    summaries, records = fixture_run(3)
    sheets = build_sheets(summaries, records)
    ts_by_image = {s.image_id: s.timestamp for s in summaries}
    expected_colour = []
    for r in sorted(records, key=lambda r: (r.image_id, r.cherry_id)):
        expected_colour.append((
            r.image_id, str(r.cherry_id),
            "%.4f" % r.mean_rgb.r, "%.4f" % r.mean_rgb.g, "%.4f" % r.mean_rgb.b,
            str(r.color_class), "1" if r.top50 else "0", ts_by_image[r.image_id],
        ))
    assert list(sheets.cherry_colour) == expected_colour
    for row, r in zip(sheets.cherry_size, sorted(records, key=lambda r: (r.image_id, r.cherry_id))):
        assert float(row[6]) == pytest.approx(r.size_mm, abs=5e-5)
        assert float(row[18]) == pytest.approx(r.box.x_min * r.mm_per_pixel, abs=5e-5)
        assert float(row[14]) == pytest.approx(r.central_box.x_min, abs=5e-5)
    for row, s in zip(sheets.summary, summaries):
        assert row[0] == s.image_id and int(row[1]) == s.count
        assert float(row[2]) == pytest.approx(s.avg_size_mm, abs=5e-5)
    assert [r[:2] for r in sheets.stem_colour] == [
        (r.image_id, str(r.cherry_id)) for r in records if r.stem_rgb is not None]


def test_round_trip(tmp_path):
    summaries, records = fixture_run(3)
    sheets = build_sheets(summaries, records)
    write_sheets(sheets, tmp_path)
    assert read_sheets(tmp_path) == sheets


def test_read_rejects_bad_header(tmp_path):
    write_sheets(SheetSet(), tmp_path)
    (tmp_path / "summary.csv").write_text("image_id,count\n")
    with pytest.raises(SchemaError):
        read_sheets(tmp_path)


def test_byte_stable_and_golden(tmp_path):
    summaries, records = fixture_run(2)
    write_sheets(build_sheets(summaries, records), tmp_path / "a")
    write_sheets(build_sheets(summaries, records), tmp_path / "b")
    for name in SHEETS:
        a = (tmp_path / "a" / f"{name}.csv").read_bytes()
        assert a == (tmp_path / "b" / f"{name}.csv").read_bytes()
        assert b"\r" not in a
        golden = GOLDEN / f"fixture_{name}.csv"
        if os.environ.get("UPDATE_GOLDEN"):
            golden.write_bytes(a)
        assert a == golden.read_bytes()


def test_four_decimal_rendering():
    summaries, records = fixture_run()
    row = build_sheets(summaries, records).cherry_size[1]
    assert row[2] == "0.9123"  # confidence 0.91234
    assert row[3] == "110.5000"


def test_missing_stem_is_empty_cells():
    recs = top_k_by_size([make_record("x", 1, 50.0, 0.9, (1, 2, 3))])
    row = build_sheets([summarize(recs, TS)], recs).summary[0]
    assert row[10:13] == ("", "", "")


def perfect_report(label="yolov3"):
    return EvaluationReport(label, "416", 0.5, 100, 100, 100, 0, 0, 1.0, 1.0)


def test_eval_report_perfect(tmp_path):
    path = write_eval_report([perfect_report()], tmp_path / "eval.csv")
    lines = path.read_text().splitlines()
    assert lines[0] + "\n" == (GOLDEN / "eval_report_header.csv").read_text()
    assert lines[1] == "yolov3,416,0.5000,100,100,100,0,0,1.0000,1.0000"


def test_eval_report_order(tmp_path):
    second = EvaluationReport("effnet", "none", 0.5, 103, 100, 98, 3, 2, 0.9876543, 0.93214)
    path = write_eval_report([perfect_report(), second], tmp_path / "eval.csv")
    rows = list(csv.reader(io.StringIO(path.read_text())))
    assert [r[0] for r in rows[1:]] == ["yolov3", "effnet"]
    assert rows[2][-2:] == ["0.9877", "0.9321"]


def test_eval_report_empty(tmp_path):
    with pytest.raises(EmptyInputError):
        write_eval_report([], tmp_path / "eval.csv")


def test_records_store_round_trip(tmp_path):
    summaries, records = fixture_run(2)
    path = write_records_jsonl(records, {s.image_id: s.timestamp for s in summaries}, tmp_path / "r.jsonl")
    back, stamps = read_records_jsonl(path)
    assert back == sorted(records, key=lambda r: (r.image_id, r.cherry_id))
    assert stamps == {"tray_00": TS, "tray_01": TS}
