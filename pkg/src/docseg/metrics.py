"""Intersection-over-union metrics and detection precision/recall."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .postproc import AxisAlignedBox


class MetricError(ValueError):
    pass


@dataclass
class DetectionMatch:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_predictions: list[int] = field(default_factory=list)
    unmatched_ground_truths: list[int] = field(default_factory=list)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """|a & b| / |a | b|; two empty masks count as a perfect match."""
    a = np.asarray(a) != 0
    b = np.asarray(b) != 0
    if a.shape != b.shape:
        raise MetricError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def box_iou(a: AxisAlignedBox, b: AxisAlignedBox) -> float:
    ix = max(0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union else 0.0


def mean_iou(ious) -> float:
    ious = list(ious)
    if not ious:
        raise MetricError("cannot average an empty IoU list")
    return float(np.mean(ious))


def detection_prf(predictions: list, ground_truth: list, iou_threshold: float,
                  iou_fn=box_iou) -> tuple[float, float, float, DetectionMatch]:
    """Greedy one-to-one matching in descending IoU order.

    Returns (precision, recall, f_measure, match). A pair is only eligible
    when its IoU reaches the threshold.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise MetricError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    candidates = []
    for i, p in enumerate(predictions):
        for j, g in enumerate(ground_truth):
            iou = iou_fn(p, g)
            if iou >= iou_threshold:
                candidates.append((iou, i, j))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    match = DetectionMatch()
    used_p, used_g = set(), set()
    for iou, i, j in candidates:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        match.pairs.append((i, j, iou))
    match.unmatched_predictions = [i for i in range(len(predictions))
                                   if i not in used_p]
    match.unmatched_ground_truths = [j for j in range(len(ground_truth))
                                     if j not in used_g]
    matched = len(match.pairs)
    precision = matched / len(predictions) if predictions else 0.0
    recall = matched / len(ground_truth) if ground_truth else 0.0
    if precision + recall == 0:
        f_measure = 0.0
    else:
        f_measure = 2 * precision * recall / (precision + recall)
    return precision, recall, f_measure, match
