"""Independent reference implementations used only by the tests.

They favour obviousness over speed and share no code with the package beyond
its data classes.
"""

from __future__ import annotations

import numpy as np


def raster_iou(a, b) -> float:
    """IoU of integer-coordinate boxes by counting unit cells on a grid."""
    grid = int(max(a.x_max, a.y_max, b.x_max, b.y_max)) + 1
    ma = np.zeros((grid, grid), bool)
    mb = np.zeros((grid, grid), bool)
    ma[int(a.y_min):int(a.y_max), int(a.x_min):int(a.x_max)] = True
    mb[int(b.y_min):int(b.y_max), int(b.x_min):int(b.x_max)] = True
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ma & mb) / union


def greedy_match(dets, truths, conf_threshold, iou_threshold, iou_fn=raster_iou):
    """Returns (tp, fp, fn, list of matched ious) for one image."""
    ranked = sorted(
        [(d.confidence, i) for i, d in enumerate(dets) if d.confidence >= conf_threshold],
        key=lambda t: (-t[0], t[1]),
    )
    free = set(range(len(truths)))
    ious = []
    fp = 0
    for _, i in ranked:
        d = dets[i]
        options = [(iou_fn(d.box, truths[j].box), -j) for j in free if truths[j].class_id == d.class_id]
        options = [o for o in options if o[0] >= iou_threshold]
        if options:
            best, neg_j = max(options)
            free.remove(-neg_j)
            ious.append(best)
        else:
            fp += 1
    return len(ious), fp, len(free), ious


def sweep_ap(images, iou_fn=raster_iou) -> float:
    """All-point interpolated AP by brute force over every distinct confidence.

    ``images`` is a list of (detections, truths). At each threshold the whole
    matching is redone from scratch; the interpolated precision at a recall
    level is the best precision over all thresholds reaching that recall.
    """
    total = sum(len(t) for _, t in images)
    thresholds = sorted({d.confidence for dets, _ in images for d in dets}, reverse=True)
    ops = []
    for t in thresholds:
        tp = fp = 0
        for dets, truths in images:
            a, b, _, _ = greedy_match(dets, truths, t, 0.5, iou_fn)
            tp += a
            fp += b
        ops.append((tp / total, tp / (tp + fp)))
    levels = sorted({r for r, _ in ops})
    area = 0.0
    prev = 0.0
    for r in levels:
        best = max(p for rr, p in ops if rr >= r)
        area += (r - prev) * best
        prev = r
    return area


def greedy_nms(dets, threshold, iou_fn):
    ranked = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    kept = []
    for i in ranked:
        if all(dets[k].class_id != dets[i].class_id or iou_fn(dets[k].box, dets[i].box) <= threshold
               for k in kept):
            kept.append(i)
    return [dets[i] for i in kept]
