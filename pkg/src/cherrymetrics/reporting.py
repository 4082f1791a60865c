"""CSV report sheets (summary, cherry size, cherry colour, stem colour) and eval tables.

Cells are pre-formatted strings so that a written sheet read back compares equal
and repeated runs are byte-identical. Reals carry 4 decimals; flags are 1/0; a
missing stem colour is an empty cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .annot_io import AbsBox
from .errors import EmptyInputError, ReferentialError, SchemaError
from .evaluation import EvaluationReport
from .imaging import MeanRGB
from .phenotype import CherryRecord, SummaryRow

SUMMARY_COLUMNS = (
    "image_id", "count", "avg_size_mm", "avg_size_mm_top50",
    "avg_r", "avg_g", "avg_b", "avg_r_top50", "avg_g_top50", "avg_b_top50",
    "stem_avg_r", "stem_avg_g", "stem_avg_b", "timestamp",
)
CHERRY_SIZE_COLUMNS = (
    "image_id", "cherry_id", "confidence", "size_px", "width_px", "height_px",
    "size_mm", "width_mm", "height_mm", "top50",
    "box_xmin", "box_ymin", "box_xmax", "box_ymax",
    "central_xmin", "central_ymin", "central_xmax", "central_ymax",
    "scaled_xmin", "scaled_ymin", "scaled_xmax", "scaled_ymax", "timestamp",
)
CHERRY_COLOUR_COLUMNS = (
    "image_id", "cherry_id", "avg_r", "avg_g", "avg_b", "color_class", "top50", "timestamp",
)
STEM_COLOUR_COLUMNS = (
    "image_id", "cherry_id", "stem_avg_r", "stem_avg_g", "stem_avg_b", "top50", "timestamp",
)
EVAL_COLUMNS = ("model", "resize", "ct", "dc", "tc", "tp", "fp", "fn", "map50", "mean_iou")

SHEET_FILES = {
    "summary": ("summary.csv", SUMMARY_COLUMNS),
    "cherry_size": ("cherry_size.csv", CHERRY_SIZE_COLUMNS),
    "cherry_colour": ("cherry_colour.csv", CHERRY_COLOUR_COLUMNS),
    "stem_colour": ("stem_colour.csv", STEM_COLOUR_COLUMNS),
}

Row = tuple[str, ...]


def fmt(v: float) -> str:
    if math.isnan(v):
        return ""
    s = f"{v:.4f}"
    return "0.0000" if s == "-0.0000" else s


def _flag(b: bool) -> str:
    return "1" if b else "0"


def _rgb(c: MeanRGB | None) -> list[str]:
    return ["", "", ""] if c is None else [fmt(c.r), fmt(c.g), fmt(c.b)]


@dataclass(frozen=True)
class SheetSet:
    summary: tuple[Row, ...] = field(default_factory=tuple)
    cherry_size: tuple[Row, ...] = field(default_factory=tuple)
    cherry_colour: tuple[Row, ...] = field(default_factory=tuple)
    stem_colour: tuple[Row, ...] = field(default_factory=tuple)


def build_sheets(summaries: Sequence[SummaryRow], records: Sequence[CherryRecord]) -> SheetSet:
    by_id = {s.image_id: s for s in summaries}
    for r in records:
        if r.image_id not in by_id:
            raise ReferentialError(f"record {r.image_id}/{r.cherry_id} has no summary row")

    summary = []
    for s in sorted(summaries, key=lambda s: s.image_id):
        summary.append((
            s.image_id, str(s.count), fmt(s.avg_size_mm), fmt(s.avg_size_mm_top50),
            *_rgb(s.avg_rgb), *_rgb(s.avg_rgb_top50), *_rgb(s.stem_avg_rgb), s.timestamp,
        ))

    size, colour, stem = [], [], []
    for r in sorted(records, key=lambda r: (r.image_id, r.cherry_id)):
        ts = by_id[r.image_id].timestamp
        ident = (r.image_id, str(r.cherry_id))
        size.append((
            *ident, fmt(r.confidence),
            fmt(r.size_px), fmt(r.width_px), fmt(r.height_px),
            fmt(r.size_mm), fmt(r.width_mm), fmt(r.height_mm), _flag(r.top50),
            *(fmt(v) for v in r.box.as_tuple()),
            *(fmt(v) for v in r.central_box.as_tuple()),
            *(fmt(v) for v in r.scaled_box),
            ts,
        ))
        colour.append((*ident, *_rgb(r.mean_rgb), str(r.color_class), _flag(r.top50), ts))
        if r.stem_rgb is not None:
            stem.append((*ident, *_rgb(r.stem_rgb), _flag(r.top50), ts))
    return SheetSet(tuple(summary), tuple(size), tuple(colour), tuple(stem))


def _csv_text(columns: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return out.getvalue()


def write_sheets(sheets: SheetSet, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for attr, (name, columns) in SHEET_FILES.items():
        path = out_dir / name
        path.write_bytes(_csv_text(columns, getattr(sheets, attr)).encode("utf-8"))
        paths.append(path)
    return paths


def read_sheets(out_dir: str | Path) -> SheetSet:
    out_dir = Path(out_dir)
    parts = {}
    for attr, (name, columns) in SHEET_FILES.items():
        text = (out_dir / name).read_text("utf-8")
        rows = list(csv.reader(io.StringIO(text, newline="")))
        if not rows or tuple(rows[0]) != columns:
            raise SchemaError(f"{name}: header does not match {','.join(columns)}")
        parts[attr] = tuple(tuple(r) for r in rows[1:])
    return SheetSet(**parts)


def eval_report_rows(reports: Sequence[EvaluationReport]) -> list[Row]:
    return [
        (r.model_label, r.resize_label, fmt(r.ct), str(r.dc), str(r.tc), str(r.tp),
         str(r.fp), str(r.fn), fmt(r.map50), fmt(r.mean_iou))
        for r in reports
    ]


def write_eval_report(reports: Sequence[EvaluationReport], path: str | Path) -> Path:
    if not reports:
        raise EmptyInputError("no evaluation reports to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_csv_text(EVAL_COLUMNS, eval_report_rows(reports)).encode("utf-8"))
    return path


# Full-precision record store, so sheets can be re-emitted without the images.

def _record_to_json(r: CherryRecord, timestamp: str) -> str:
    d = asdict(r)
    d["timestamp"] = timestamp
    return json.dumps(d, sort_keys=True)


def _record_from_json(line: str) -> tuple[CherryRecord, str]:
    d = json.loads(line)
    ts = d.pop("timestamp")
    d["box"] = AbsBox(**d["box"])
    d["central_box"] = AbsBox(**d["central_box"])
    d["mean_rgb"] = MeanRGB(**d["mean_rgb"])
    d["stem_rgb"] = MeanRGB(**d["stem_rgb"]) if d["stem_rgb"] is not None else None
    return CherryRecord(**d), ts


def write_records_jsonl(records: Sequence[CherryRecord], timestamps: dict[str, str], path: str | Path) -> Path:
    path = Path(path)
    lines = [_record_to_json(r, timestamps[r.image_id])
             for r in sorted(records, key=lambda r: (r.image_id, r.cherry_id))]
    path.write_bytes("".join(line + "\n" for line in lines).encode("utf-8"))
    return path


def read_records_jsonl(path: str | Path) -> tuple[list[CherryRecord], dict[str, str]]:
    records = []
    timestamps: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec, ts = _record_from_json(line)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}:{lineno}: bad record ({exc})") from None
        records.append(rec)
        timestamps[rec.image_id] = ts
    return records, timestamps
