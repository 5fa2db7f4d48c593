"""Dataset handling: label codecs, resizing, patching, augmentation.

Label images are color PNGs whose colors are declared in a ClassMap.
Internally labels travel as integer maps: the class index in exclusive
mode, a class bit mask in multilabel mode, with IGNORE_LABEL marking
pixels excluded from the loss (rotation fill, padding).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

IGNORE_LABEL = 255

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


class DataError(ValueError):
    pass


def _pack(colors: np.ndarray) -> np.ndarray:
    colors = colors.astype(np.int64)
    return (colors[..., 0] << 16) | (colors[..., 1] << 8) | colors[..., 2]


@dataclass(frozen=True)
class ClassMap:
    """Color <-> class-index codec.

    ``entries`` maps each class name to its color. In multilabel mode,
    ``composites`` may register extra colors that encode sets of classes.
    """
    entries: tuple[tuple[str, tuple[int, int, int]], ...]
    multilabel: bool = False
    composites: tuple[tuple[tuple[int, int, int], tuple[str, ...]], ...] = ()

    def __post_init__(self):
        colors = [c for _, c in self.entries] + [c for c, _ in self.composites]
        if len(set(colors)) != len(colors):
            raise DataError("classmap colors must be pairwise distinct")
        if self.composites and not self.multilabel:
            raise DataError("composite colors require multilabel mode")
        object.__setattr__(self, "entries",
                           tuple((n, tuple(c)) for n, c in self.entries))
        object.__setattr__(self, "composites",
                           tuple((tuple(c), tuple(ns))
                                 for c, ns in self.composites))

    @property
    def n_classes(self) -> int:
        return len(self.entries)

    def class_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.entries):
            if n == name:
                return i
        raise DataError(f"unknown class {name!r}")

    def color_codes(self) -> dict[int, int]:
        """Packed color -> label code (index, or bit mask in multilabel mode)."""
        codes = {}
        for i, (_, color) in enumerate(self.entries):
            packed = int(_pack(np.array(color)))
            codes[packed] = (1 << i) if self.multilabel else i
        for color, names in self.composites:
            mask = 0
            for name in names:
                mask |= 1 << self.class_index(name)
            codes[int(_pack(np.array(color)))] = mask
        return codes

    def to_json(self) -> dict:
        return {
            "classes": [{"name": n, "color": list(c)} for n, c in self.entries],
            "multilabel": self.multilabel,
            "composites": [{"color": list(c), "classes": list(ns)}
                           for c, ns in self.composites],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClassMap":
        return cls(
            entries=tuple((e["name"], tuple(e["color"]))
                          for e in obj["classes"]),
            multilabel=bool(obj.get("multilabel", False)),
            composites=tuple((tuple(e["color"]), tuple(e["classes"]))
                             for e in obj.get("composites", [])),
        )


@dataclass(frozen=True)
class AugmentParams:
    rotation_range: tuple[float, float] = (-0.2, 0.2)  # radians
    scale_range: tuple[float, float] = (0.8, 1.2)
    mirror: bool = True
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.rotation_range
        if not (-math.pi <= lo <= hi <= math.pi):
            raise DataError("rotation_range must lie within [-pi, pi]")
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise DataError("scale_range must be positive")


@dataclass(frozen=True)
class PatchSpec:
    size: tuple[int, int] = (300, 300)
    margin: int = 75

    def __post_init__(self):
        if self.margin < 0 or self.margin >= min(self.size) / 2:
            raise DataError(f"margin must satisfy 0 <= margin < min(size)/2, "
                            f"got {self.margin} for size {self.size}")

    @property
    def stride(self) -> tuple[int, int]:
        return (self.size[0] - 2 * self.margin, self.size[1] - 2 * self.margin)


# ---------------------------------------------------------------------------
# Label codecs

def labels_from_colors(label_image: np.ndarray, classmap: ClassMap) -> np.ndarray:
    """Color raster -> integer label codes (index or bit mask)."""
    label_image = np.asarray(label_image)
    if label_image.ndim != 3 or label_image.shape[2] != 3:
        raise DataError("label image must be an (h, w, 3) color raster")
    packed = _pack(label_image)
    codes = classmap.color_codes()
    out = np.full(packed.shape, -1, dtype=np.int64)
    for color, code in codes.items():
        out[packed == color] = code
    if (out < 0).any():
        bad = np.unique(packed[out < 0])
        worst = int(bad[0])
        count = int((packed == worst).sum())
        rgb = ((worst >> 16) & 255, (worst >> 8) & 255, worst & 255)
        raise DataError(f"label image contains {len(bad)} unregistered "
                        f"color(s), e.g. RGB {rgb} on {count} pixel(s)")
    return out


def encode_mask(label_image: np.ndarray, classmap: ClassMap) -> np.ndarray:
    """Color raster -> (h, w, n_classes) one-hot (or multi-hot) tensor."""
    codes = labels_from_colors(label_image, classmap)
    return encode_label_codes(codes, classmap)


def encode_label_codes(codes: np.ndarray, classmap: ClassMap) -> np.ndarray:
    n = classmap.n_classes
    if classmap.multilabel:
        bits = (codes[..., None] >> np.arange(n)) & 1
        return bits.astype(np.float32)
    valid = codes != IGNORE_LABEL
    if valid.any() and codes[valid].max() >= n:
        raise DataError("label code out of range")
    onehot = np.zeros((*codes.shape, n), dtype=np.float32)
    clipped = np.where(valid, codes, 0)
    np.put_along_axis(onehot, clipped[..., None], 1.0, axis=-1)
    onehot[~valid] = 0.0
    return onehot


def decode_mask(class_indices: np.ndarray, classmap: ClassMap) -> np.ndarray:
    """Integer class indices -> color raster (exclusive mode inverse)."""
    class_indices = np.asarray(class_indices)
    if class_indices.min() < 0 or class_indices.max() >= classmap.n_classes:
        raise DataError(f"class index out of range [0, {classmap.n_classes})")
    palette = np.array([c for _, c in classmap.entries], dtype=np.uint8)
    return palette[class_indices]


# ---------------------------------------------------------------------------
# Baseline rendering

def render_baselines(polylines, image_size: tuple[int, int],
                     radius: float = 5.0) -> np.ndarray:
    """Binary mask of pixels within `radius` of any polyline segment.

    Vertices are clamped to the image bounds. A radius of 0 degenerates
    to a rasterized one-pixel line.
    """
    h, w = image_size
    mask = np.zeros((h, w), dtype=np.uint8)
    for line in polylines:
        vertices = getattr(line, "vertices", line)
        pts = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
        pts[:, 0] = np.clip(pts[:, 0], 0, w - 1)
        pts[:, 1] = np.clip(pts[:, 1], 0, h - 1)
        if radius <= 0:
            cv2.polylines(mask, [np.round(pts).astype(np.int32)],
                          isClosed=False, color=1, thickness=1)
            continue
        for (ax, ay), (bx, by) in zip(pts, pts[1:]):
            x0 = max(0, int(math.floor(min(ax, bx) - radius)))
            x1 = min(w - 1, int(math.ceil(max(ax, bx) + radius)))
            y0 = max(0, int(math.floor(min(ay, by) - radius)))
            y1 = min(h - 1, int(math.ceil(max(ay, by) + radius)))
            if x0 > x1 or y0 > y1:
                continue
            ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
            vx, vy = bx - ax, by - ay
            length_sq = vx * vx + vy * vy
            if length_sq == 0:
                d2 = (xs - ax) ** 2 + (ys - ay) ** 2
            else:
                t = ((xs - ax) * vx + (ys - ay) * vy) / length_sq
                t = np.clip(t, 0.0, 1.0)
                d2 = (xs - (ax + t * vx)) ** 2 + (ys - (ay + t * vy)) ** 2
            mask[y0:y1 + 1, x0:x1 + 1] |= (d2 <= radius * radius)
    return mask


# ---------------------------------------------------------------------------
# Resizing

def budget_size(shape: tuple[int, int], budget: int) -> tuple[int, int]:
    """Target (h, w) under the pixel budget, aspect ratio preserved.

    Images already under budget keep their size (never upscaled).
    """
    h, w = shape
    if budget <= 0:
        raise DataError("pixel budget must be positive")
    if h * w <= budget:
        return h, w
    s = math.sqrt(budget / (h * w))
    nh, nw = round(h * s), round(w * s)
    # Rounding may overshoot the budget by a sliver; trim the longer axis.
    while nh * nw > budget:
        if nh >= nw:
            nh -= 1
        else:
            nw -= 1
    return max(nh, 1), max(nw, 1)


def resize_to_pixel_budget(image: np.ndarray, budget: int) -> np.ndarray:
    h, w = image.shape[:2]
    nh, nw = budget_size((h, w), budget)
    if (nh, nw) == (h, w):
        return image
    return cv2.resize(image, (nw, nh), interpolation=cv2.INTER_AREA)


def resize_labels(labels: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    nh, nw = size
    if labels.shape[:2] == (nh, nw):
        return labels
    return cv2.resize(labels.astype(np.int32), (nw, nh),
                      interpolation=cv2.INTER_NEAREST).astype(labels.dtype)


# ---------------------------------------------------------------------------
# Patching

def _origins(dim: int, patch: int, stride: int) -> list[int]:
    if dim <= patch:
        return [0]
    starts = list(range(0, dim - patch + 1, stride))
    if starts[-1] != dim - patch:
        starts.append(dim - patch)
    return starts


def extract_patches(image: np.ndarray, label: np.ndarray | None,
                    spec: PatchSpec) -> list[tuple]:
    """Overlapping patches covering the image; stride = size - 2*margin.

    Returns (patch, label_patch, (y0, x0)) triples. Images smaller than the
    patch are zero-padded at the bottom/right; pad labels so that zero means
    "ignore" there (e.g. stack a validity channel) if that matters.
    """
    ph, pw = spec.size
    h, w = image.shape[:2]
    pad_h, pad_w = max(0, ph - h), max(0, pw - w)
    if pad_h or pad_w:
        image = np.pad(image, ((0, pad_h), (0, pad_w)) +
                       ((0, 0),) * (image.ndim - 2))
        if label is not None:
            label = np.pad(label, ((0, pad_h), (0, pad_w)) +
                           ((0, 0),) * (label.ndim - 2))
        h, w = image.shape[:2]
    sy, sx = spec.stride
    out = []
    for y0 in _origins(h, ph, sy):
        for x0 in _origins(w, pw, sx):
            patch = image[y0:y0 + ph, x0:x0 + pw]
            lpatch = None if label is None else label[y0:y0 + ph, x0:x0 + pw]
            out.append((patch, lpatch, (y0, x0)))
    return out


def stitch_predictions(patches: list[tuple[np.ndarray, tuple[int, int]]],
                       full_size: tuple[int, int],
                       spec: PatchSpec) -> np.ndarray:
    """Reassemble per-patch predictions.

    Each output pixel takes the value from the patch in which it lies
    farthest from the patch border, so margins never dominate interiors.
    """
    h, w = full_size
    first = patches[0][0]
    out = np.zeros((h, w) + first.shape[2:], dtype=first.dtype)
    score = np.full((h, w), -1.0)
    for patch, (y0, x0) in sorted(patches, key=lambda p: p[1]):
        ph, pw = patch.shape[:2]
        eh, ew = min(y0 + ph, h) - y0, min(x0 + pw, w) - x0
        ys = np.minimum(np.arange(ph) + 1, ph - np.arange(ph))[:eh]
        xs = np.minimum(np.arange(pw) + 1, pw - np.arange(pw))[:ew]
        dist = np.minimum(ys[:, None], xs[None, :]).astype(np.float64)
        region = (slice(y0, y0 + eh), slice(x0, x0 + ew))
        better = dist > score[region]
        score[region][better] = dist[better]
        out[region][better] = patch[:eh, :ew][better]
    if (score < 0).any():
        raise DataError("patches do not cover the full image")
    return out


# ---------------------------------------------------------------------------
# Augmentation

def sample_transform(params: AugmentParams) -> tuple[float, float, bool]:
    """Deterministically sample (rotation, scale, mirror) from the seed."""
    rng = np.random.default_rng(params.seed)
    rotation = rng.uniform(*params.rotation_range)
    scale = rng.uniform(*params.scale_range)
    mirror = bool(params.mirror and rng.random() < 0.5)
    return rotation, scale, mirror


def apply_transform(image: np.ndarray, label: np.ndarray | None,
                    rotation: float, scale: float, mirror: bool):
    """Rotate/scale about the center, optionally mirror horizontally.

    The image is interpolated bilinearly, the label with nearest neighbor;
    exposed corners get 0 in the image and IGNORE_LABEL in the label.
    """
    if mirror:
        image = np.ascontiguousarray(image[:, ::-1])
        if label is not None:
            label = np.ascontiguousarray(label[:, ::-1])
    if rotation == 0.0 and scale == 1.0:
        return image, label
    h, w = image.shape[:2]
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    matrix = cv2.getRotationMatrix2D(center, math.degrees(rotation), scale)
    warped = cv2.warpAffine(image.astype(np.float32), matrix, (w, h),
                            flags=cv2.INTER_LINEAR,
                            borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    warped = warped.astype(image.dtype) if np.issubdtype(
        image.dtype, np.integer) else warped
    warped_label = None
    if label is not None:
        warped_label = cv2.warpAffine(
            label.astype(np.float32), matrix, (w, h),
            flags=cv2.INTER_NEAREST, borderMode=cv2.BORDER_CONSTANT,
            borderValue=float(IGNORE_LABEL)).astype(label.dtype)
    return warped, warped_label


def augment(image: np.ndarray, label: np.ndarray | None,
            params: AugmentParams):
    if label is not None and image.shape[:2] != label.shape[:2]:
        raise DataError("image and label sizes differ")
    rotation, scale, mirror = sample_transform(params)
    return apply_transform(image, label, rotation, scale, mirror)


# ---------------------------------------------------------------------------
# Normalization and dataset loading

def normalize_image(image: np.ndarray) -> np.ndarray:
    """uint8 RGB -> float32, ImageNet mean/std standardization."""
    return ((image.astype(np.float32) / 255.0) - IMAGENET_MEAN) / IMAGENET_STD


@dataclass
class Sample:
    stem: str
    image: np.ndarray  # (h, w, 3) uint8 RGB
    label: np.ndarray  # (h, w) integer label codes, IGNORE_LABEL allowed


def read_image(path) -> np.ndarray:
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise DataError(f"unreadable image: {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def write_image(path, image_rgb: np.ndarray) -> None:
    if image_rgb.ndim == 3:
        cv2.imwrite(str(path), cv2.cvtColor(image_rgb, cv2.COLOR_RGB2BGR))
    else:
        cv2.imwrite(str(path), image_rgb)


def load_dataset(root, classmap: ClassMap,
                 baseline_radius: float | None = None) -> list[Sample]:
    """Load paired images/ and labels/ directories with matching stems.

    Labels are color PNGs, or JSON polyline lists (one list of [x, y]
    vertex pairs per line) when baseline_radius is given.
    """
    root = Path(root)
    images_dir, labels_dir = root / "images", root / "labels"
    if not images_dir.is_dir():
        raise DataError(f"missing images directory: {images_dir}")
    if not labels_dir.is_dir():
        raise DataError(f"missing labels directory: {labels_dir}")
    samples = []
    for image_path in sorted(images_dir.iterdir()):
        if image_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        stem = image_path.stem
        image = read_image(image_path)
        json_label = labels_dir / f"{stem}.json"
        if baseline_radius is not None and json_label.exists():
            polylines = json.loads(json_label.read_text())
            label = render_baselines(polylines, image.shape[:2],
                                     radius=baseline_radius).astype(np.int64)
        else:
            matches = [p for p in labels_dir.glob(f"{stem}.*")
                       if p.suffix.lower() in IMAGE_SUFFIXES]
            if not matches:
                raise DataError(f"no label found for image stem {stem!r}")
            label = labels_from_colors(read_image(matches[0]), classmap)
        if label.shape[:2] != image.shape[:2]:
            raise DataError(f"label size differs from image for {stem!r}")
        samples.append(Sample(stem, image, label))
    if not samples:
        raise DataError(f"no images found under {images_dir}")
    return samples
