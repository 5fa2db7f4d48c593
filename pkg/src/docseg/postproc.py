"""Reusable post-processing operators on probability maps and binary masks.

Thresholding, Gaussian smoothing, binary morphology, connected components
and shape vectorization. All operators are pure functions; thresholds
compare with >= (inclusive) throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

OTSU_BINS = 256


class PostprocError(ValueError):
    pass


@dataclass(frozen=True)
class StructuringElement:
    shape: str = "square"  # square | disk
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ("square", "disk"):
            raise PostprocError(f"unknown structuring element {self.shape!r}")
        if self.radius < 1:
            raise PostprocError("structuring element radius must be >= 1")

    def offsets(self) -> np.ndarray:
        """(dy, dx) offsets of the neighborhood, origin-centered."""
        r = self.radius
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        if self.shape == "disk":
            keep = dy ** 2 + dx ** 2 <= r ** 2
            return np.stack([dy[keep], dx[keep]], axis=1)
        return np.stack([dy.ravel(), dx.ravel()], axis=1)


@dataclass(frozen=True)
class AxisAlignedBox:
    """Half-open pixel box: x in [x_min, x_max), y in [y_min, y_max)."""
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise PostprocError(f"degenerate box {self}")

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def to_list(self) -> list[int]:
        return [int(self.x_min), int(self.y_min), int(self.x_max), int(self.y_max)]


@dataclass(frozen=True)
class Quad:
    """Four (x, y) corners, clockwise from top-left."""
    corners: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.corners) != 4:
            raise PostprocError("quad needs exactly 4 corners")
        if abs(_polygon_area(self.corners)) <= 0:
            raise PostprocError("quad has zero area")

    def to_list(self) -> list[list[float]]:
        return [[float(x), float(y)] for x, y in self.corners]


@dataclass(frozen=True)
class PolyLine:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise PostprocError("polyline needs at least 2 vertices")
        for a, b in zip(self.vertices, self.vertices[1:]):
            if a == b:
                raise PostprocError("consecutive polyline vertices coincide")

    def to_list(self) -> list[list[float]]:
        return [[float(x), float(y)] for x, y in self.vertices]


def _polygon_area(points) -> float:
    area = 0.0
    n = len(points)
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        area += x0 * y1 - x1 * y0
    return area / 2.0


# ---------------------------------------------------------------------------
# Thresholding

def threshold_fixed(values: np.ndarray, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise PostprocError(f"threshold must lie in [0, 1], got {t}")
    return (np.asarray(values) >= t).astype(np.uint8)


def threshold_otsu(values: np.ndarray) -> tuple[float, np.ndarray]:
    """Otsu's threshold on probabilities quantized to 256 bins over [0, 1].

    Returns (t, mask) where t is the left edge of the first bin above the
    chosen cut (so mask == threshold_fixed(values, t)).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.max() == values.min():
        raise PostprocError("cannot threshold a constant map")
    bins = np.clip((values * OTSU_BINS).astype(np.int64), 0, OTSU_BINS - 1)
    hist = np.bincount(bins.ravel(), minlength=OTSU_BINS).astype(np.float64)
    total = hist.sum()
    omega = np.cumsum(hist)
    mu = np.cumsum(hist * np.arange(OTSU_BINS))
    mu_total = mu[-1]
    # Between-class variance for a cut after bin k, k = 0..254.
    w0 = omega[:-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    sigma_b = np.full(OTSU_BINS - 1, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = mu[:-1] / w0 - (mu_total - mu[:-1]) / w1
        sigma_b[valid] = (w0 * w1)[valid] * (diff[valid] ** 2)
    k = int(np.argmax(sigma_b))
    t = (k + 1) / OTSU_BINS
    return t, threshold_fixed(values, t)


def hysteresis_threshold(values: np.ndarray, p_low: float,
                         p_high: float) -> np.ndarray:
    """Low-threshold components kept only if they contain a >= p_high pixel."""
    if not 0.0 <= p_low <= p_high <= 1.0:
        raise PostprocError(f"need 0 <= p_low <= p_high <= 1, got "
                            f"({p_low}, {p_high})")
    values = np.asarray(values)
    low = threshold_fixed(values, p_low)
    labels, table = connected_components(low, connectivity=8)
    keep = np.zeros(len(table) + 1, dtype=bool)
    strong = values >= p_high
    for label in np.unique(labels[strong]):
        keep[label] = True
    keep[0] = False
    return keep[labels].astype(np.uint8)


# ---------------------------------------------------------------------------
# Filtering

def gaussian_filter(values: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian, kernel truncated at 4*sigma, reflective border."""
    if sigma <= 0:
        raise PostprocError("sigma must be positive")
    radius = int(math.ceil(4.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    kernel /= kernel.sum()
    values = np.asarray(values, dtype=np.float64)
    padded = np.pad(values, radius, mode="reflect")
    out = np.apply_along_axis(
        lambda row: np.convolve(row, kernel, mode="valid"), 1, padded)
    out = np.apply_along_axis(
        lambda col: np.convolve(col, kernel, mode="valid"), 0, out)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Morphology

def _dilate(mask: np.ndarray, selem: StructuringElement) -> np.ndarray:
    h, w = mask.shape
    out = np.zeros_like(mask)
    for dy, dx in selem.offsets():
        src = mask[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
        out[max(0, dy):h - max(0, -dy), max(0, dx):w - max(0, -dx)] |= src
    return out


def _erode(mask: np.ndarray, selem: StructuringElement) -> np.ndarray:
    # Out-of-image counts as background, so border pixels erode away.
    h, w = mask.shape
    out = np.ones_like(mask)
    for dy, dx in selem.offsets():
        shifted = np.zeros_like(mask)
        src = mask[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
        shifted[max(0, dy):h - max(0, -dy), max(0, dx):w - max(0, -dx)] = src
        out &= shifted
    return out


def morph(mask: np.ndarray, op: str,
          selem: StructuringElement = StructuringElement()) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if op == "erode":
        out = _erode(mask, selem)
    elif op == "dilate":
        out = _dilate(mask, selem)
    elif op == "open":
        out = _dilate(_erode(mask, selem), selem)
    elif op == "close":
        # pad so dilation mass beyond the image border is not lost before
        # the erosion; keeps closing extensive (close(m) contains m)
        r = selem.radius
        padded = np.pad(mask, r)
        out = _erode(_dilate(padded, selem), selem)[r:-r, r:-r]
    else:
        raise PostprocError(f"unknown morphological operation {op!r}")
    return out.astype(np.uint8)


# ---------------------------------------------------------------------------
# Connected components

def connected_components(mask: np.ndarray,
                         connectivity: int = 8) -> tuple[np.ndarray, list[dict]]:
    """Label foreground components 1..K (0 = background).

    Returns (labels, table); table[i] describes label i+1 with keys
    ``size`` and ``box`` (an AxisAlignedBox).
    """
    if connectivity not in (4, 8):
        raise PostprocError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = (np.asarray(mask) != 0).astype(np.uint8)
    count, labels, stats, _ = cv2.connectedComponentsWithStats(
        mask, connectivity=connectivity)
    table = []
    for label in range(1, count):
        x, y, w, h, area = stats[label]
        table.append({
            "label": int(label),
            "size": int(area),
            "box": AxisAlignedBox(int(x), int(y), int(x + w), int(y + h)),
        })
    return labels.astype(np.int32), table


def filter_small_components(labels: np.ndarray, table: list[dict],
                            min_size: int) -> np.ndarray:
    """Binary mask keeping components of size >= min_size."""
    keep = np.zeros(len(table) + 1, dtype=bool)
    for entry in table:
        keep[entry["label"]] = entry["size"] >= min_size
    return keep[labels].astype(np.uint8)


def largest_component(labels: np.ndarray, table: list[dict]) -> np.ndarray:
    """Binary mask of the largest component; empty input gives empty mask."""
    if not table:
        return np.zeros_like(labels, dtype=np.uint8)
    best = max(table, key=lambda e: e["size"])
    return (labels == best["label"]).astype(np.uint8)


# ---------------------------------------------------------------------------
# Shape vectorization

def extract_extreme_quad(mask: np.ndarray) -> Quad:
    """Quad from the four most extreme foreground corner points.

    Corners maximize -x-y, x-y, x+y, -x+y respectively; ties go to the
    smaller y, then smaller x.
    """
    ys, xs = np.nonzero(np.asarray(mask))
    if ys.size == 0:
        raise PostprocError("cannot extract a quad from an empty mask")
    order = np.lexsort((xs, ys))  # row-major: first hit has smallest y then x
    ys, xs = ys[order], xs[order]
    corners = []
    for score in (-xs - ys, xs - ys, xs + ys, -xs + ys):
        i = int(np.argmax(score))  # first maximizer in (y, x) order
        corners.append((float(xs[i]), float(ys[i])))
    return Quad(tuple(corners))


def min_enclosing_box(pixels: np.ndarray) -> AxisAlignedBox:
    """Tight half-open box around an (n, 2) array of (y, x) pixels."""
    pixels = np.asarray(pixels)
    if pixels.size == 0:
        raise PostprocError("cannot box an empty pixel set")
    ys, xs = pixels[:, 0], pixels[:, 1]
    return AxisAlignedBox(int(xs.min()), int(ys.min()),
                          int(xs.max()) + 1, int(ys.max()) + 1)


def mask_enclosing_box(mask: np.ndarray) -> AxisAlignedBox:
    ys, xs = np.nonzero(np.asarray(mask))
    return min_enclosing_box(np.stack([ys, xs], axis=1))


def _point_segment_distance(px, py, ax, ay, bx, by) -> float:
    vx, vy = bx - ax, by - ay
    length_sq = vx * vx + vy * vy
    if length_sq == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / length_sq))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def simplify_path(points: list[tuple[float, float]],
                  epsilon: float) -> list[tuple[float, float]]:
    """Max-deviation path reduction (Ramer-Douglas-Peucker), iterative."""
    if epsilon <= 0 or len(points) < 3:
        return list(points)
    keep = np.zeros(len(points), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(points) - 1)]
    while stack:
        lo, hi = stack.pop()
        ax, ay = points[lo]
        bx, by = points[hi]
        d_max, idx = 0.0, -1
        for i in range(lo + 1, hi):
            d = _point_segment_distance(points[i][0], points[i][1],
                                        ax, ay, bx, by)
            if d > d_max:
                d_max, idx = d, i
        if d_max > epsilon:
            keep[idx] = True
            stack.append((lo, idx))
            stack.append((idx, hi))
    return [p for p, k in zip(points, keep) if k]


def vectorize_polyline(mask: np.ndarray, epsilon: float = 2.0) -> PolyLine:
    """Centerline of a line-like component as a simplified polyline.

    The dense path takes, per column along the longer box axis, the centroid
    of the foreground rows; it is then reduced so no dense point deviates
    from the simplified line by more than epsilon.
    """
    mask = np.asarray(mask) != 0
    if not mask.any():
        raise PostprocError("cannot vectorize an empty component")
    box = mask_enclosing_box(mask)
    transposed = (box.y_max - box.y_min) > (box.x_max - box.x_min)
    work = mask.T if transposed else mask
    dense = []
    for x in range(work.shape[1]):
        rows = np.nonzero(work[:, x])[0]
        if rows.size == 0:
            continue
        y = float(rows.mean())
        dense.append((float(y), float(x)) if transposed else (float(x), y))
    if len(dense) < 2:
        # Degenerate single-column blob: emit its vertical extent.
        ys, xs = np.nonzero(mask)
        if ys.min() == ys.max() and xs.min() == xs.max():
            raise PostprocError("component is a single pixel; no line to trace")
        dense = [(float(xs[ys.argmin()]), float(ys.min())),
                 (float(xs[ys.argmax()]), float(ys.max()))]
    simplified = simplify_path(dense, epsilon)
    deduped = [simplified[0]]
    for p in simplified[1:]:
        if p != deduped[-1]:
            deduped.append(p)
    return PolyLine(tuple(deduped))


# ---------------------------------------------------------------------------
# Box filtering

def filter_small_boxes(boxes: list[AxisAlignedBox],
                       image_size: tuple[int, int],
                       min_area_fraction: float = 0.005) -> list[AxisAlignedBox]:
    """Keep boxes whose area is >= min_area_fraction of the image area."""
    h, w = image_size
    min_area = min_area_fraction * h * w
    return [b for b in boxes if b.area >= min_area]


def enforce_enclosure(inner: AxisAlignedBox,
                      outer: AxisAlignedBox) -> AxisAlignedBox:
    """Clip the inner box to the outer one; disjoint boxes are an error."""
    x_min = max(inner.x_min, outer.x_min)
    y_min = max(inner.y_min, outer.y_min)
    x_max = min(inner.x_max, outer.x_max)
    y_max = min(inner.y_max, outer.y_max)
    if x_min >= x_max or y_min >= y_max:
        raise PostprocError(f"boxes are disjoint: {inner} vs {outer}")
    return AxisAlignedBox(x_min, y_min, x_max, y_max)
