"""Per-fruit traits: size, colour class, stem colour, top-50 flags and image summaries."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from importlib import resources
from typing import Sequence

from .annot_io import AbsBox, DetectionSet
from .errors import (
    CherryMetricsError,
    EmptyInputError,
    GeometryError,
    ParseError,
    RangeError,
    SchemaError,
)
from .imaging import ImageRGB, MeanRGB, crop, mean_rgb

PALETTE_CLASSES = tuple(range(1, 8))


@dataclass(frozen=True)
class ScaleCalibration:
    mm_per_pixel: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mm_per_pixel) and self.mm_per_pixel > 0):
            raise RangeError(f"mm_per_pixel must be finite and positive, got {self.mm_per_pixel}")


@dataclass(frozen=True)
class ColorPalette:
    classes: tuple[tuple[int, MeanRGB], ...]

    def __post_init__(self) -> None:
        entries = tuple(self.classes)
        ids = sorted(cid for cid, _ in entries)
        if ids != list(PALETTE_CLASSES):
            raise SchemaError(f"palette must define classes 1..7 exactly once, got {ids}")
        refs = [ref.as_tuple() for _, ref in entries]
        if len(set(refs)) != len(refs):
            raise SchemaError("palette reference colours must be pairwise distinct")
        object.__setattr__(self, "classes", entries)


def parse_palette(text: str) -> ColorPalette:
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 4:
            raise ParseError(f"palette line {lineno}: expected 'class_id r g b'")
        try:
            cid = int(tokens[0])
            r, g, b = (float(t) for t in tokens[1:])
        except ValueError:
            raise ParseError(f"palette line {lineno}: non-numeric field") from None
        if not all(0 <= v <= 255 for v in (r, g, b)):
            raise RangeError(f"palette line {lineno}: channel outside [0, 255]")
        entries.append((cid, MeanRGB(r, g, b)))
    return ColorPalette(tuple(entries))


def default_palette() -> ColorPalette:
    text = resources.files("cherrymetrics").joinpath("data/palette_default.txt").read_text("utf-8")
    return parse_palette(text)


def parse_calibration_csv(text: str) -> dict[str, ScaleCalibration]:
    """Read an ``image_id,mm_per_pixel`` sidecar into per-image calibrations."""
    reader = csv.reader(io.StringIO(text, newline=""))
    header = [h.strip() for h in next(reader, [])]
    if header != ["image_id", "mm_per_pixel"]:
        raise SchemaError(f"calibration header must be 'image_id,mm_per_pixel', got {header}")
    out = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            out[row[0].strip()] = ScaleCalibration(float(row[1]))
        except (IndexError, ValueError):
            raise ParseError(f"calibration row {lineno}: bad value {row}") from None
    return out


def write_calibration_csv(cals: dict[str, ScaleCalibration]) -> str:
    lines = ["image_id,mm_per_pixel"]
    lines += [f"{image_id},{cal.mm_per_pixel!r}" for image_id, cal in cals.items()]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class BoxSize:
    size_px: float
    width_px: float
    height_px: float
    size_mm: float
    width_mm: float
    height_mm: float


def box_size(box: AbsBox, cal: ScaleCalibration) -> BoxSize:
    """Fruit size is the larger box side; mm values scale by the calibration."""
    w, h = box.width, box.height
    if w <= 0 or h <= 0:
        raise GeometryError(f"degenerate box {box.as_tuple()} has no size")
    s = max(w, h)
    k = cal.mm_per_pixel
    return BoxSize(s, w, h, s * k, w * k, h * k)


def central_region(box: AbsBox, shrink: float = 0.5) -> AbsBox:
    if not (0 < shrink <= 1):
        raise RangeError(f"shrink={shrink} outside (0, 1]")
    cx = (box.x_min + box.x_max) / 2
    cy = (box.y_min + box.y_max) / 2
    hw = box.width * shrink / 2
    hh = box.height * shrink / 2
    return AbsBox(cx - hw, cy - hh, cx + hw, cy + hh)


def stem_region(box: AbsBox, image_w: int, image_h: int, rise: float = 0.5) -> AbsBox | None:
    """Strip of the box's width directly above it, ``rise`` box-heights tall.

    Returns None when nothing of it remains inside the image.
    """
    if rise <= 0:
        raise RangeError(f"rise={rise} must be positive")
    x0 = min(max(box.x_min, 0.0), image_w)
    x1 = min(max(box.x_max, 0.0), image_w)
    y1 = min(max(box.y_min, 0.0), image_h)
    y0 = max(box.y_min - rise * box.height, 0.0)
    if x1 <= x0 or y1 <= y0:
        return None
    return AbsBox(x0, y0, x1, y1)


def classify_color(c: MeanRGB, palette: ColorPalette) -> int:
    """Nearest palette class by Euclidean RGB distance; ties go to the lower id."""
    best = None
    for cid, ref in sorted(palette.classes, key=lambda e: e[0]):
        d = (c.r - ref.r) ** 2 + (c.g - ref.g) ** 2 + (c.b - ref.b) ** 2
        if best is None or d < best[0]:
            best = (d, cid)
    return best[1]


@dataclass(frozen=True)
class CherryRecord:
    image_id: str
    cherry_id: int
    confidence: float
    box: AbsBox
    size_px: float
    width_px: float
    height_px: float
    size_mm: float
    width_mm: float
    height_mm: float
    mean_rgb: MeanRGB
    color_class: int
    stem_rgb: MeanRGB | None
    central_box: AbsBox
    top50: bool = False
    mm_per_pixel: float = 1.0

    @property
    def scaled_box(self) -> tuple[float, float, float, float]:
        k = self.mm_per_pixel
        return tuple(v * k for v in self.box.as_tuple())


def top_k_by_size(records: Sequence[CherryRecord], k: int = 50) -> list[CherryRecord]:
    """Flag the ``k`` largest records by size_mm; order of the input is kept."""
    if k < 1:
        raise RangeError(f"k={k} must be at least 1")
    ranked = sorted(range(len(records)),
                    key=lambda i: (-records[i].size_mm, -records[i].confidence, records[i].cherry_id))
    chosen = set(ranked[:k])
    return [replace(r, top50=(i in chosen)) for i, r in enumerate(records)]


@dataclass(frozen=True)
class ExtractConfig:
    shrink: float = 0.5
    rise: float = 0.5
    top_k: int = 50


def extract_records(
    image: ImageRGB,
    dets: DetectionSet,
    cal: ScaleCalibration,
    palette: ColorPalette,
    config: ExtractConfig = ExtractConfig(),
) -> list[CherryRecord]:
    order = sorted(range(len(dets.detections)), key=lambda i: -dets.detections[i].confidence)
    records = []
    for cherry_id, di in enumerate(order, start=1):
        det = dets.detections[di]
        try:
            size = box_size(det.box, cal)
            central = central_region(det.box, config.shrink)
            colour = mean_rgb(crop(image, central))
            stem_box = stem_region(det.box, image.width, image.height, config.rise)
            stem = mean_rgb(crop(image, stem_box)) if stem_box is not None else None
        except CherryMetricsError as exc:
            raise type(exc)(f"{dets.image_id} cherry {cherry_id}: {exc}") from None
        records.append(CherryRecord(
            image_id=dets.image_id,
            cherry_id=cherry_id,
            confidence=det.confidence,
            box=det.box,
            size_px=size.size_px,
            width_px=size.width_px,
            height_px=size.height_px,
            size_mm=size.size_mm,
            width_mm=size.width_mm,
            height_mm=size.height_mm,
            mean_rgb=colour,
            color_class=classify_color(colour, palette),
            stem_rgb=stem,
            central_box=central,
            mm_per_pixel=cal.mm_per_pixel,
        ))
    return top_k_by_size(records, config.top_k) if records else records


@dataclass(frozen=True)
class SummaryRow:
    image_id: str
    count: int
    avg_size_mm: float
    avg_size_mm_top50: float
    avg_rgb: MeanRGB
    avg_rgb_top50: MeanRGB
    stem_avg_rgb: MeanRGB | None
    timestamp: str


def _mean_color(colors: Sequence[MeanRGB]) -> MeanRGB:
    n = len(colors)
    return MeanRGB(math.fsum(c.r for c in colors) / n,
                   math.fsum(c.g for c in colors) / n,
                   math.fsum(c.b for c in colors) / n)


def summarize(records: Sequence[CherryRecord], timestamp: str) -> SummaryRow:
    if not records:
        raise EmptyInputError("cannot summarize an image with no cherry records")
    ids = {r.image_id for r in records}
    if len(ids) != 1:
        raise ValueError(f"records span several images: {sorted(ids)}")
    top = [r for r in records if r.top50] or [r for r in top_k_by_size(records) if r.top50]
    stems = [r.stem_rgb for r in records if r.stem_rgb is not None]
    return SummaryRow(
        image_id=records[0].image_id,
        count=len(records),
        avg_size_mm=math.fsum(r.size_mm for r in records) / len(records),
        avg_size_mm_top50=math.fsum(r.size_mm for r in top) / len(top),
        avg_rgb=_mean_color([r.mean_rgb for r in records]),
        avg_rgb_top50=_mean_color([r.mean_rgb for r in top]),
        stem_avg_rgb=_mean_color(stems) if stems else None,
        timestamp=timestamp,
    )
