"""Bounding-box data formats: PASCAL VOC XML, YOLO label text, detection CSV.

All coordinates handled here are absolute pixels with the origin at the top-left
corner, x to the right and y downward, unless a type says otherwise (``NormBox``).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import PurePath
from typing import Iterable, Sequence

from .errors import GeometryError, ParseError, RangeError, SchemaError, UnknownClassError

logger = logging.getLogger(__name__)

DEFAULT_CLASSES: tuple[str, ...] = ("cherry",)

DETECTION_COLUMNS: tuple[str, ...] = (
    "image_id",
    "x_min",
    "y_min",
    "x_max",
    "y_max",
    "confidence",
    "class_id",
)


@dataclass(frozen=True)
class AbsBox:
    """Axis-aligned box in absolute pixel corner coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise GeometryError(f"non-finite box coordinate in {coords}")
        if min(coords) < 0:
            raise GeometryError(f"negative box coordinate in {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise GeometryError(f"inverted box {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class NormBox:
    """YOLO-style box: centre and extent as fractions of the image size."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise RangeError(f"{name}={v} outside [0, 1]")
        if self.w <= 0 or self.h <= 0:
            raise RangeError(f"zero extent normalized box w={self.w} h={self.h}")


@dataclass(frozen=True)
class GroundTruthBox:
    box: AbsBox
    class_id: int = 0


@dataclass(frozen=True)
class Detection:
    box: AbsBox
    class_id: int
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise RangeError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class LabeledImage:
    image_id: str
    width: int
    height: int
    boxes: tuple[GroundTruthBox, ...] = ()
    filename: str | None = None

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise RangeError(f"image size {self.width}x{self.height} must be positive")
        object.__setattr__(self, "boxes", tuple(self.boxes))


@dataclass(frozen=True)
class DetectionSet:
    image_id: str
    detections: tuple[Detection, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "detections", tuple(self.detections))


def _class_id(name: str, classes: Sequence[str]) -> int:
    try:
        return list(classes).index(name)
    except ValueError:
        raise UnknownClassError(f"unknown class name {name!r}; known: {list(classes)}") from None


def _image_id_from_filename(filename: str) -> str:
    return PurePath(filename).stem


def _required(parent: ET.Element, path: str, context: str) -> ET.Element:
    el = parent.find(path)
    if el is None:
        raise SchemaError(f"missing required element <{context}{path}>")
    return el


def _number(el: ET.Element, what: str) -> float:
    text = (el.text or "").strip()
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r} in <{what}>") from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r} in <{what}>")
    return v


def parse_voc(xml_text: str | bytes, classes: Sequence[str] = DEFAULT_CLASSES) -> LabeledImage:
    """Parse a PASCAL VOC annotation document.

    Coordinates past the image border are clamped to it (with a logged warning);
    annotation tools commonly overshoot by a pixel.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise ParseError(f"malformed XML at line {line}, column {col}: {exc}") from None
    if root.tag != "annotation":
        raise SchemaError(f"root element is <{root.tag}>, expected <annotation>")

    filename = (_required(root, "filename", "annotation/").text or "").strip()
    size = _required(root, "size", "annotation/")
    width_f = _number(_required(size, "width", "size/"), "size/width")
    height_f = _number(_required(size, "height", "size/"), "size/height")
    if width_f != int(width_f) or height_f != int(height_f):
        raise ParseError(f"image size {width_f}x{height_f} is not integral")
    width, height = int(width_f), int(height_f)

    boxes = []
    for k, obj in enumerate(root.findall("object")):
        name = (_required(obj, "name", "object/").text or "").strip()
        class_id = _class_id(name, classes)
        bnd = _required(obj, "bndbox", "object/")
        raw = [_number(_required(bnd, tag, "bndbox/"), f"bndbox/{tag}")
               for tag in ("xmin", "ymin", "xmax", "ymax")]
        clamped = [
            min(max(raw[0], 0.0), width),
            min(max(raw[1], 0.0), height),
            min(max(raw[2], 0.0), width),
            min(max(raw[3], 0.0), height),
        ]
        if clamped != raw:
            logger.warning("%s: object %d clamped from %s to %s", filename, k, raw, clamped)
        if clamped[0] > clamped[2] or clamped[1] > clamped[3]:
            raise GeometryError(f"{filename}: object {k} has inverted box {raw}")
        boxes.append(GroundTruthBox(AbsBox(*clamped), class_id))

    return LabeledImage(
        image_id=_image_id_from_filename(filename),
        width=width,
        height=height,
        boxes=tuple(boxes),
        filename=filename,
    )


def _round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def write_voc(img: LabeledImage, classes: Sequence[str] = DEFAULT_CLASSES) -> str:
    """Serialize to VOC XML; coordinates are rounded half-up to integers."""
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = img.filename or f"{img.image_id}.ppm"
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(img.width)
    ET.SubElement(size, "height").text = str(img.height)
    ET.SubElement(size, "depth").text = "3"
    for gt in img.boxes:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = classes[gt.class_id]
        bnd = ET.SubElement(obj, "bndbox")
        for tag, v in zip(("xmin", "ymin", "xmax", "ymax"), gt.box.as_tuple()):
            ET.SubElement(bnd, tag).text = str(_round_half_up(v))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def yolo_to_absolute(n: NormBox, width: float, height: float) -> AbsBox:
    x_min = (n.cx - n.w / 2) * width
    x_max = (n.cx + n.w / 2) * width
    y_min = (n.cy - n.h / 2) * height
    y_max = (n.cy + n.h / 2) * height
    return AbsBox(
        min(max(x_min, 0.0), width),
        min(max(y_min, 0.0), height),
        min(max(x_max, 0.0), width),
        min(max(y_max, 0.0), height),
    )


def absolute_to_yolo(box: AbsBox, width: float, height: float) -> NormBox:
    return NormBox(
        cx=(box.x_min + box.x_max) / 2 / width,
        cy=(box.y_min + box.y_max) / 2 / height,
        w=box.width / width,
        h=box.height / height,
    )


def parse_yolo_labels(
    text: str,
    width: int,
    height: int,
    class_count: int = 1,
    image_id: str = "",
) -> LabeledImage:
    """Parse YOLO ``class cx cy w h`` lines; ``#`` comment lines are skipped."""
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 5:
            raise ParseError(f"line {lineno}: expected 5 fields, got {len(tokens)}")
        try:
            class_id = int(tokens[0])
            cx, cy, w, h = (float(t) for t in tokens[1:])
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric field in {stripped!r}") from None
        if not (0 <= class_id < class_count):
            raise UnknownClassError(f"line {lineno}: class id {class_id} not in [0, {class_count})")
        try:
            norm = NormBox(cx, cy, w, h)
        except RangeError as exc:
            raise RangeError(f"line {lineno}: {exc}") from None
        boxes.append(GroundTruthBox(yolo_to_absolute(norm, width, height), class_id))
    return LabeledImage(image_id=image_id, width=width, height=height, boxes=tuple(boxes))


def write_yolo_labels(img: LabeledImage) -> str:
    lines = []
    for gt in img.boxes:
        n = absolute_to_yolo(gt.box, img.width, img.height)
        lines.append(f"{gt.class_id} {n.cx:.6f} {n.cy:.6f} {n.w:.6f} {n.h:.6f}")
    return "".join(line + "\n" for line in lines)


def parse_detections_csv(text: str) -> list[DetectionSet]:
    """Read a detection CSV into per-image sets, grouped in first-seen order."""
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None:
        raise SchemaError("empty detection CSV: header row missing")
    header = [h.strip() for h in header]
    if tuple(header) != DETECTION_COLUMNS:
        missing = [c for c in DETECTION_COLUMNS if c not in header]
        detail = f"missing columns {missing}" if missing else f"columns out of order: {header}"
        raise SchemaError(f"detection CSV header mismatch ({detail}); expected {','.join(DETECTION_COLUMNS)}")

    groups: dict[str, list[Detection]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(DETECTION_COLUMNS):
            raise ParseError(f"row {lineno}: expected {len(DETECTION_COLUMNS)} fields, got {len(row)}")
        image_id = row[0].strip()
        try:
            x0, y0, x1, y1, conf = (float(c) for c in row[1:6])
            class_id = int(row[6])
        except ValueError:
            raise ParseError(f"row {lineno}: non-numeric field in {row}") from None
        if not (0.0 <= conf <= 1.0):
            raise RangeError(f"row {lineno}: confidence {conf} outside [0, 1]")
        if x0 > x1 or y0 > y1:
            raise GeometryError(f"row {lineno}: inverted box ({x0}, {y0}, {x1}, {y1})")
        try:
            box = AbsBox(x0, y0, x1, y1)
        except GeometryError as exc:
            raise GeometryError(f"row {lineno}: {exc}") from None
        groups.setdefault(image_id, []).append(Detection(box, class_id, conf))
    return [DetectionSet(image_id, tuple(dets)) for image_id, dets in groups.items()]


def write_detections_csv(det_sets: Iterable[DetectionSet]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(DETECTION_COLUMNS)
    for ds in det_sets:
        for d in ds.detections:
            b = d.box
            writer.writerow([
                ds.image_id,
                repr(b.x_min), repr(b.y_min), repr(b.x_max), repr(b.y_max),
                repr(d.confidence), d.class_id,
            ])
    return out.getvalue()
