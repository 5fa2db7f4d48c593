"""Independent brute-force reference implementations used as test oracles.

Deliberately naive: per-pixel loops, BFS flood fill, exhaustive search.
They stay independent of the library code paths they validate.
"""

from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np


def brute_otsu_threshold(values: np.ndarray) -> float:
    """Exhaustive 256-bin between-class variance maximizer."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    bins = np.clip((flat * 256).astype(np.int64), 0, 255)
    best_sigma, best_k = -np.inf, None
    for k in range(255):
        low = flat[bins <= k]
        high = flat[bins > k]
        if low.size == 0 or high.size == 0:
            continue
        # variance computed on bin indices, matching histogram-space Otsu
        mu0 = bins[bins <= k].mean()
        mu1 = bins[bins > k].mean()
        sigma = low.size * high.size * (mu0 - mu1) ** 2
        if sigma > best_sigma:
            best_sigma, best_k = sigma, k
    assert best_k is not None
    return (best_k + 1) / 256


def bfs_components(mask: np.ndarray, connectivity: int) -> np.ndarray:
    """Flood-fill labeling; label values follow discovery order."""
    mask = np.asarray(mask) != 0
    h, w = mask.shape
    if connectivity == 4:
        neighbors = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        neighbors = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                     if (dy, dx) != (0, 0)]
    labels = np.zeros((h, w), dtype=np.int32)
    next_label = 0
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or labels[sy, sx]:
                continue
            next_label += 1
            queue = deque([(sy, sx)])
            labels[sy, sx] = next_label
            while queue:
                y, x = queue.popleft()
                for dy, dx in neighbors:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] \
                            and not labels[ny, nx]:
                        labels[ny, nx] = next_label
                        queue.append((ny, nx))
    return labels


def same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    """True when two labelings induce the same foreground partition."""
    a, b = np.asarray(a), np.asarray(b)
    if ((a != 0) != (b != 0)).any():
        return False
    pairs = set(zip(a[a != 0].tolist(), b[b != 0].tolist()))
    a_ids = [p[0] for p in pairs]
    b_ids = [p[1] for p in pairs]
    return len(a_ids) == len(set(a_ids)) and len(b_ids) == len(set(b_ids))


def brute_hysteresis(values: np.ndarray, p_low: float,
                     p_high: float) -> np.ndarray:
    """Flood-fill every low component, keep it if its max reaches p_high."""
    values = np.asarray(values)
    low = values >= p_low
    labels = bfs_components(low, connectivity=8)
    out = np.zeros_like(labels, dtype=np.uint8)
    for label in range(1, labels.max() + 1):
        member = labels == label
        if values[member].max() >= p_high:
            out[member] = 1
    return out


def minkowski_dilate(mask: np.ndarray, offsets) -> np.ndarray:
    mask = np.asarray(mask) != 0
    h, w = mask.shape
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for dy, dx in offsets:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w:
                    out[ny, nx] = 1
    return out


def minkowski_erode(mask: np.ndarray, offsets) -> np.ndarray:
    mask = np.asarray(mask) != 0
    h, w = mask.shape
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            ok = True
            for dy, dx in offsets:
                ny, nx = y + dy, x + dx
                if not (0 <= ny < h and 0 <= nx < w and mask[ny, nx]):
                    ok = False
                    break
            out[y, x] = 1 if ok else 0
    return out


def segment_distance_mask(polylines, image_size, radius) -> np.ndarray:
    """Per-pixel Euclidean distance-to-nearest-segment thresholding."""
    h, w = image_size
    out = np.zeros((h, w), dtype=np.uint8)
    segments = []
    for line in polylines:
        pts = [(min(max(x, 0), w - 1), min(max(y, 0), h - 1))
               for x, y in line]
        segments.extend(zip(pts, pts[1:]))
    for y in range(h):
        for x in range(w):
            for (ax, ay), (bx, by) in segments:
                vx, vy = bx - ax, by - ay
                norm = vx * vx + vy * vy
                if norm == 0:
                    d = math.hypot(x - ax, y - ay)
                else:
                    t = max(0.0, min(1.0, ((x - ax) * vx + (y - ay) * vy) / norm))
                    d = math.hypot(x - (ax + t * vx), y - (ay + t * vy))
                if d <= radius:
                    out[y, x] = 1
                    break
    return out


def best_matching_count(predictions, ground_truth, threshold, iou_fn) -> int:
    """Exhaustive optimal one-to-one matching count (small inputs only)."""
    eligible = {}
    for i, p in enumerate(predictions):
        for j, g in enumerate(ground_truth):
            if iou_fn(p, g) >= threshold:
                eligible.setdefault(i, []).append(j)
    best = 0
    preds = list(eligible)
    for assignment in itertools.product(*([[None] + eligible[i]
                                           for i in preds] or [[None]])):
        used = [j for j in assignment if j is not None]
        if len(used) == len(set(used)):
            best = max(best, len(used))
    return best


def naive_cross_entropy(logits, target, ignore=None) -> float:
    """Scalar-by-scalar softmax cross-entropy mean over kept pixels."""
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    h, w, c = logits.shape
    total, count = 0.0, 0
    for y in range(h):
        for x in range(w):
            if ignore is not None and ignore[y, x]:
                continue
            z = logits[y, x]
            z = z - z.max()
            log_probs = z - math.log(np.exp(z).sum())
            total += -(target[y, x] * log_probs).sum()
            count += 1
    return total / count


def max_deviation(dense_points, polyline_vertices) -> float:
    """Largest distance from any dense point to the simplified polyline."""
    worst = 0.0
    for px, py in dense_points:
        best = math.inf
        for (ax, ay), (bx, by) in zip(polyline_vertices,
                                      polyline_vertices[1:]):
            vx, vy = bx - ax, by - ay
            norm = vx * vx + vy * vy
            if norm == 0:
                d = math.hypot(px - ax, py - ay)
            else:
                t = max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / norm))
                d = math.hypot(px - (ax + t * vx), py - (ay + t * vy))
            best = min(best, d)
        worst = max(worst, best)
    return worst
