"""Detection-quality metrics: IoU, NMS, greedy matching, PR curve, AP and report rows."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

from .annot_io import AbsBox, Detection, DetectionSet, LabeledImage
from .errors import JoinError, NoMatchesError, RangeError, UndefinedRecallError

DC_CONFIDENCE_FLOOR = 0.1


def iou(a: AbsBox, b: AbsBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(inter / union, 1.0)


def _check_ratio(name: str, v: float) -> None:
    if not (0.0 <= v <= 1.0):
        raise RangeError(f"{name}={v} outside [0, 1]")


def _by_confidence(dets: Sequence[Detection]) -> list[int]:
    # sorted() is stable, so equal confidences keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy per-class non-max suppression; survivors in descending confidence."""
    _check_ratio("iou_threshold", iou_threshold)
    remaining = _by_confidence(dets)
    kept: list[Detection] = []
    while remaining:
        best = dets[remaining.pop(0)]
        kept.append(best)
        remaining = [
            i for i in remaining
            if dets[i].class_id != best.class_id or iou(dets[i].box, best.box) <= iou_threshold
        ]
    return kept


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one image's detections against its ground truth.

    ``confidences`` maps every retained detection index to its score so the
    result can be ranked globally for the PR curve without the detections.
    """

    pairs: tuple[tuple[int, int, float], ...]
    false_positive_indices: tuple[int, ...]
    false_negative_indices: tuple[int, ...]
    confidence_threshold: float
    confidences: dict[int, float] = field(default_factory=dict)
    num_truths: int = 0

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.false_positive_indices)

    @property
    def fn(self) -> int:
        return len(self.false_negative_indices)


def match_detections(
    dets: Sequence[Detection],
    truths: LabeledImage | Sequence,
    conf_threshold: float = 0.5,
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Greedy confidence-ordered matching to the best unmatched same-class truth."""
    _check_ratio("conf_threshold", conf_threshold)
    _check_ratio("iou_threshold", iou_threshold)
    gts = truths.boxes if isinstance(truths, LabeledImage) else tuple(truths)

    order = [i for i in _by_confidence(dets) if dets[i].confidence >= conf_threshold]
    matched = [False] * len(gts)
    pairs = []
    fps = []
    for di in order:
        d = dets[di]
        best_j, best_iou = -1, -1.0
        for j, gt in enumerate(gts):
            if matched[j] or gt.class_id != d.class_id:
                continue
            v = iou(d.box, gt.box)
            if v >= iou_threshold and v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            matched[best_j] = True
            pairs.append((di, best_j, best_iou))
        else:
            fps.append(di)
    return MatchResult(
        pairs=tuple(pairs),
        false_positive_indices=tuple(fps),
        false_negative_indices=tuple(j for j, m in enumerate(matched) if not m),
        confidence_threshold=conf_threshold,
        confidences={i: dets[i].confidence for i in order},
        num_truths=len(gts),
    )


@dataclass(frozen=True)
class PRCurve:
    """Cumulative (recall, precision, confidence) points, descending confidence."""

    points: tuple[tuple[float, float, float], ...]
    total_truths: int = 0


def pr_curve(matches: Sequence[MatchResult]) -> PRCurve:
    """Sweep all detections, ranked globally by confidence, into a PR curve.

    Ties keep the order of ``matches`` and then detection order within an image.
    """
    total = sum(m.num_truths for m in matches)
    if total == 0:
        raise UndefinedRecallError("recall is undefined with zero ground-truth boxes")
    scored = []
    for m in matches:
        tp_idx = {p[0] for p in m.pairs}
        for i in sorted(m.confidences):
            scored.append((m.confidences[i], i in tp_idx))
    scored.sort(key=lambda s: -s[0])
    points = []
    tp = fp = 0
    for conf, is_tp in scored:
        if is_tp:
            tp += 1
        else:
            fp += 1
        points.append((tp / total, tp / (tp + fp), conf))
    return PRCurve(tuple(points), total)


def _tie_group_ends(curve: PRCurve) -> list[tuple[float, float]]:
    # Detections sharing a confidence are indistinguishable by thresholding, so
    # only the cumulative point after the last of each tie group is kept.
    pts = curve.points
    return [(r, p) for k, (r, p, c) in enumerate(pts) if k + 1 == len(pts) or pts[k + 1][2] != c]


def average_precision(
    curve: PRCurve,
    interpolation: Literal["all_point", "11_point"] = "all_point",
) -> float:
    """Interpolated area under the PR curve.

    ``all_point`` sums recall increments times the best precision achieved at
    that recall or beyond; ``11_point`` averages that envelope at recall 0, 0.1, ..., 1.
    """
    pts = _tie_group_ends(curve)
    if not pts:
        return 0.0
    recalls = [r for r, _ in pts]
    envelope = [p for _, p in pts]
    for k in range(len(envelope) - 2, -1, -1):
        envelope[k] = max(envelope[k], envelope[k + 1])

    if interpolation == "11_point":
        total = 0.0
        for t in range(11):
            level = t / 10
            total += max((p for r, p in zip(recalls, envelope) if r >= level - 1e-12), default=0.0)
        return total / 11
    if interpolation != "all_point":
        raise ValueError(f"unknown interpolation {interpolation!r}")

    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recalls, envelope):
        ap += (r - prev_r) * p
        prev_r = r
    return ap


def mean_iou(matches: Sequence[MatchResult]) -> float:
    values = [p[2] for m in matches for p in m.pairs]
    if not values:
        raise NoMatchesError("mean IoU needs at least one true-positive pair")
    return sum(values) / len(values)


@dataclass(frozen=True)
class EvalConfig:
    ct: float = 0.5
    iou_threshold: float = 0.5
    model_label: str = ""
    resize_label: str = ""
    interpolation: Literal["all_point", "11_point"] = "all_point"


@dataclass(frozen=True)
class EvaluationReport:
    """One evaluation row: model, resize, CT, DC, TC, TP, FP, FN, mAP@0.5, mean IoU."""

    model_label: str
    resize_label: str
    ct: float
    dc: int
    tc: int
    tp: int
    fp: int
    fn: int
    map50: float
    mean_iou: float

    def __post_init__(self) -> None:
        if self.tp + self.fn != self.tc:
            raise ValueError(f"tp + fn ({self.tp} + {self.fn}) != tc ({self.tc})")
        for name in ("map50", "mean_iou"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")


def evaluate_dataset(
    det_sets: Sequence[DetectionSet],
    labeled_images: Sequence[LabeledImage],
    config: EvalConfig = EvalConfig(),
) -> EvaluationReport:
    """Aggregate per-image matching into a single report row.

    Images without any detection set count as fully missed; a detection set whose
    image_id has no ground truth is a join error. Aggregation runs in image_id order.
    """
    truths = {li.image_id: li for li in labeled_images}
    dets_by_id: dict[str, list[Detection]] = {}
    for ds in det_sets:
        if ds.image_id not in truths:
            raise JoinError(f"detections for image_id {ds.image_id!r} have no ground truth")
        dets_by_id.setdefault(ds.image_id, []).extend(ds.detections)

    at_ct = []
    at_zero = []
    dc = 0
    for image_id in sorted(truths):
        dets = dets_by_id.get(image_id, [])
        dc += sum(1 for d in dets if d.confidence >= DC_CONFIDENCE_FLOOR)
        at_ct.append(match_detections(dets, truths[image_id], config.ct, config.iou_threshold))
        at_zero.append(match_detections(dets, truths[image_id], 0.0, 0.5))

    tc = sum(m.num_truths for m in at_ct)
    tp = sum(m.tp for m in at_ct)
    map50 = average_precision(pr_curve(at_zero), config.interpolation) if tc else 0.0
    m_iou = mean_iou(at_ct) if tp else 0.0
    return EvaluationReport(
        model_label=config.model_label,
        resize_label=config.resize_label,
        ct=config.ct,
        dc=dc,
        tc=tc,
        tp=tp,
        fp=sum(m.fp for m in at_ct),
        fn=sum(m.fn for m in at_ct),
        map50=map50,
        mean_iou=m_iou,
    )
