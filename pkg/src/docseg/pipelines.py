"""Task definitions: wiring network inference to post-processing and metrics.

A task bundles a class map, a resize budget, training settings and an
ordered post-processing chain. Chains are data (lists of operator
invocations) interpreted by :func:`apply_chain`, so a declared chain and
the equivalent manual operator composition are interchangeable.
"""

from __future__ import annotations

import inspect
import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import postproc
from .backend import SegmentationNet
from .data import (AugmentParams, ClassMap, IGNORE_LABEL, PatchSpec, Sample,
                   budget_size, encode_label_codes, extract_patches,
                   load_dataset, normalize_image, read_image,
                   resize_labels, resize_to_pixel_budget, stitch_predictions,
                   write_image, DataError)
from .netgraph import ArchConfig
from .postproc import (AxisAlignedBox, PolyLine, PostprocError, Quad,
                       StructuringElement)
from .train import TrainConfig, fit, save_checkpoint
from .weights import WeightStore

BUILTIN_TASKS = ("page", "baseline", "layout", "ornament", "photo")

BASELINE_RADIUS = 5


class PipelineError(ValueError):
    pass


@dataclass
class TaskConfig:
    name: str
    classmap: ClassMap
    resize_budget: int | None
    patching: PatchSpec | None
    train: TrainConfig
    postprocessing: list[dict]
    augmentation: AugmentParams = field(default_factory=AugmentParams)

    def __post_init__(self):
        for step in self.postprocessing:
            validate_step(step)

    @property
    def n_classes(self) -> int:
        return self.classmap.n_classes

    def arch_config(self, pretrained_encoder: bool = False) -> ArchConfig:
        return ArchConfig(n_classes=self.n_classes,
                          pretrained_encoder=pretrained_encoder)


# ---------------------------------------------------------------------------
# Chain interpreter

@dataclass
class ChainState:
    """Mutable state threaded through a post-processing chain."""
    probs: np.ndarray  # (h, w, n_classes)
    channel: np.ndarray | None = None
    mask: np.ndarray | None = None
    labels: np.ndarray | None = None
    table: list | None = None
    threshold: float | None = None
    quads: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    polylines: list = field(default_factory=list)
    class_masks: dict = field(default_factory=dict)
    class_boxes: dict = field(default_factory=dict)
    page_mask: np.ndarray | None = None  # optional external page mask

    def require_channel(self) -> np.ndarray:
        if self.channel is None:
            if self.probs.shape[-1] < 2:
                raise PipelineError("no working channel selected")
            self.channel = self.probs[..., 1]
        return self.channel

    def require_mask(self) -> np.ndarray:
        if self.mask is None:
            raise PipelineError("chain step needs a binary mask; threshold first")
        return self.mask

    def require_components(self):
        if self.labels is None:
            self.labels, self.table = postproc.connected_components(
                self.require_mask())
        return self.labels, self.table

    def set_mask(self, mask: np.ndarray) -> None:
        self.mask = mask
        self.labels = None
        self.table = None


def _op_select_channel(state: ChainState, index: int) -> None:
    state.channel = state.probs[..., index]


def _op_gaussian_filter(state: ChainState, sigma: float) -> None:
    state.channel = postproc.gaussian_filter(state.require_channel(), sigma)


def _op_threshold_fixed(state: ChainState, t: float) -> None:
    state.set_mask(postproc.threshold_fixed(state.require_channel(), t))


def _op_threshold_otsu(state: ChainState) -> None:
    state.threshold, mask = postproc.threshold_otsu(state.require_channel())
    state.set_mask(mask)


def _op_hysteresis_threshold(state: ChainState, p_high: float,
                             p_low: float) -> None:
    state.set_mask(postproc.hysteresis_threshold(state.require_channel(),
                                                 p_low, p_high))


def _op_morph(state: ChainState, operation: str, shape: str = "square",
              radius: int = 1) -> None:
    selem = StructuringElement(shape=shape, radius=radius)
    state.set_mask(postproc.morph(state.require_mask(), operation, selem))


def _op_connected_components(state: ChainState, connectivity: int = 8) -> None:
    state.labels, state.table = postproc.connected_components(
        state.require_mask(), connectivity=connectivity)


def _op_filter_small_components(state: ChainState, min_size: int) -> None:
    labels, table = state.require_components()
    state.set_mask(postproc.filter_small_components(labels, table, min_size))


def _op_largest_component(state: ChainState) -> None:
    labels, table = state.require_components()
    state.set_mask(postproc.largest_component(labels, table))


def _op_extract_extreme_quad(state: ChainState) -> None:
    state.quads.append(postproc.extract_extreme_quad(state.require_mask()))


def _op_min_enclosing_box(state: ChainState) -> None:
    labels, table = state.require_components()
    if table:
        state.boxes.extend(entry["box"] for entry in table)
    # an empty mask yields no boxes


def _op_filter_small_boxes(state: ChainState,
                           min_area_fraction: float = 0.005) -> None:
    state.boxes = postproc.filter_small_boxes(
        state.boxes, state.probs.shape[:2], min_area_fraction)


def _op_vectorize_polyline(state: ChainState, epsilon: float = 2.0) -> None:
    labels, table = state.require_components()
    for entry in table:
        component = (labels == entry["label"]).astype(np.uint8)
        try:
            state.polylines.append(postproc.vectorize_polyline(
                component, epsilon=epsilon))
        except PostprocError:
            continue  # single-pixel debris has no line to trace


def _op_intersect_page_mask(state: ChainState) -> None:
    if state.page_mask is None:
        return  # no page model supplied; step is a no-op
    state.set_mask((state.require_mask() & (state.page_mask != 0)).astype(np.uint8))


def _op_argmax_classes(state: ChainState, classes: list[int]) -> None:
    winner = np.argmax(state.probs, axis=-1)
    for cls in classes:
        state.class_masks[cls] = (winner == cls).astype(np.uint8)


def _op_per_class(state: ChainState, classes: list[int],
                  steps: list[dict]) -> None:
    for cls in classes:
        sub = ChainState(probs=state.probs, page_mask=state.page_mask)
        sub.channel = state.probs[..., cls]
        if cls in state.class_masks:
            sub.mask = state.class_masks[cls]
        for step in steps:
            apply_step(sub, step)
        if sub.mask is not None:
            state.class_masks[cls] = sub.mask
        if sub.boxes:
            state.class_boxes[cls] = sub.boxes[0]
        state.quads.extend(sub.quads)
        state.polylines.extend(sub.polylines)


def _op_box_from_mask(state: ChainState) -> None:
    mask = state.require_mask()
    if mask.any():
        state.boxes.append(postproc.mask_enclosing_box(mask))


def _op_enforce_enclosure(state: ChainState, inner: int, outer: int) -> None:
    inner_box = state.class_boxes.get(inner)
    outer_box = state.class_boxes.get(outer)
    if inner_box is None or outer_box is None:
        return  # one of the regions was not detected; nothing to clip
    state.class_boxes[inner] = postproc.enforce_enclosure(inner_box, outer_box)


CHAIN_OPS = {
    "select_channel": _op_select_channel,
    "gaussian_filter": _op_gaussian_filter,
    "threshold_fixed": _op_threshold_fixed,
    "threshold_otsu": _op_threshold_otsu,
    "hysteresis_threshold": _op_hysteresis_threshold,
    "morph": _op_morph,
    "connected_components": _op_connected_components,
    "filter_small_components": _op_filter_small_components,
    "largest_component": _op_largest_component,
    "extract_extreme_quad": _op_extract_extreme_quad,
    "min_enclosing_box": _op_min_enclosing_box,
    "box_from_mask": _op_box_from_mask,
    "filter_small_boxes": _op_filter_small_boxes,
    "vectorize_polyline": _op_vectorize_polyline,
    "intersect_page_mask": _op_intersect_page_mask,
    "argmax_classes": _op_argmax_classes,
    "per_class": _op_per_class,
    "enforce_enclosure": _op_enforce_enclosure,
}


def validate_step(step: dict) -> None:
    if "op" not in step:
        raise PipelineError(f"post-processing step has no 'op': {step}")
    name = step["op"]
    if name not in CHAIN_OPS:
        raise PipelineError(f"unknown post-processing operator {name!r}")
    handler = CHAIN_OPS[name]
    signature = inspect.signature(handler)
    params = {k: v for k, v in step.items() if k != "op"}
    try:
        signature.bind(None, **params)
    except TypeError as exc:
        raise PipelineError(f"bad parameters for {name!r}: {exc}") from exc
    if name == "per_class":
        for sub in step["steps"]:
            validate_step(sub)


def apply_step(state: ChainState, step: dict) -> None:
    params = {k: v for k, v in step.items() if k != "op"}
    CHAIN_OPS[step["op"]](state, **params)


def apply_chain(probs: np.ndarray, steps: list[dict],
                page_mask: np.ndarray | None = None) -> ChainState:
    """Run a declared operator chain over a probability map."""
    state = ChainState(probs=np.asarray(probs), page_mask=page_mask)
    for step in steps:
        validate_step(step)
        apply_step(state, step)
    return state


# ---------------------------------------------------------------------------
# Built-in tasks

def _binary_classmap(foreground: str) -> ClassMap:
    return ClassMap(entries=(("background", (0, 0, 0)),
                             (foreground, (255, 255, 255))))


def builtin_task(name: str, high_res: bool = False) -> TaskConfig:
    """The five built-in task configurations with their published constants."""
    if name == "page":
        return TaskConfig(
            name="page",
            classmap=_binary_classmap("page"),
            resize_budget=600_000,
            patching=None,
            train=TrainConfig(epochs=30, batch_size=1),
            postprocessing=[
                {"op": "select_channel", "index": 1},
                {"op": "threshold_otsu"},
                {"op": "morph", "operation": "open"},
                {"op": "morph", "operation": "close"},
                {"op": "extract_extreme_quad"},
            ],
        )
    if name == "baseline":
        return TaskConfig(
            name="baseline",
            classmap=_binary_classmap("baseline"),
            resize_budget=1_000_000,
            patching=PatchSpec(size=(300, 300), margin=75),
            train=TrainConfig(epochs=30, batch_size=4),
            postprocessing=[
                {"op": "select_channel", "index": 1},
                {"op": "gaussian_filter", "sigma": 1.5},
                {"op": "hysteresis_threshold", "p_high": 0.4, "p_low": 0.2},
                {"op": "connected_components"},
                {"op": "vectorize_polyline", "epsilon": 2.0},
            ],
        )
    if name == "layout":
        patch, batch = ((600, 600), 4) if high_res else ((400, 400), 8)
        classmap = ClassMap(
            entries=(("background", (0, 0, 0)),
                     ("text", (255, 0, 0)),
                     ("decoration", (0, 255, 0)),
                     ("comment", (0, 0, 255))),
            multilabel=True,
            composites=(((255, 255, 0), ("text", "decoration")),
                        ((0, 255, 255), ("decoration", "comment")),
                        ((255, 0, 255), ("text", "comment"))),
        )
        return TaskConfig(
            name="layout",
            classmap=classmap,
            resize_budget=None,
            patching=PatchSpec(size=patch, margin=patch[0] // 4),
            train=TrainConfig(epochs=30, batch_size=batch,
                              loss_mode="sigmoid_bce"),
            postprocessing=[
                {"op": "per_class", "classes": [1, 2, 3], "steps": [
                    {"op": "threshold_fixed", "t": 0.5},
                    {"op": "connected_components"},
                    {"op": "filter_small_components", "min_size": 50},
                    {"op": "intersect_page_mask"},
                ]},
            ],
        )
    if name == "ornament":
        return TaskConfig(
            name="ornament",
            classmap=_binary_classmap("ornament"),
            resize_budget=800_000,
            patching=PatchSpec(size=(300, 300), margin=75),
            train=TrainConfig(epochs=30, batch_size=16),
            postprocessing=[
                {"op": "select_channel", "index": 1},
                {"op": "threshold_fixed", "t": 0.6},
                {"op": "morph", "operation": "open"},
                {"op": "morph", "operation": "close"},
                {"op": "connected_components"},
                {"op": "min_enclosing_box"},
                {"op": "filter_small_boxes", "min_area_fraction": 0.005},
            ],
        )
    if name == "photo":
        return TaskConfig(
            name="photo",
            classmap=ClassMap(entries=(("background", (0, 0, 0)),
                                       ("cardboard", (0, 255, 0)),
                                       ("photo", (255, 0, 0)))),
            resize_budget=600_000,
            patching=None,
            train=TrainConfig(epochs=40, batch_size=1),
            postprocessing=[
                {"op": "argmax_classes", "classes": [1, 2]},
                {"op": "per_class", "classes": [1, 2], "steps": [
                    {"op": "morph", "operation": "open"},
                    {"op": "largest_component"},
                    {"op": "box_from_mask"},
                ]},
                {"op": "enforce_enclosure", "inner": 2, "outer": 1},
            ],
        )
    raise PipelineError(
        f"unknown task {name!r}; built-ins are {', '.join(BUILTIN_TASKS)}")


# ---------------------------------------------------------------------------
# Task config files (TOML)

def load_task_config(path) -> TaskConfig:
    """Read a task config file; see README for the grammar.

    A `task = "<builtin>"` line selects a base task whose fields the other
    sections override.
    """
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    base_name = doc.get("task", "custom")
    if base_name in BUILTIN_TASKS:
        task = builtin_task(base_name, high_res=doc.get("high_res", False))
    else:
        task = TaskConfig(name=base_name, classmap=_binary_classmap("foreground"),
                          resize_budget=None, patching=None,
                          train=TrainConfig(), postprocessing=[])
    if "classmap" in doc:
        task.classmap = ClassMap.from_json(doc["classmap"])
    if "resize" in doc:
        budget = doc["resize"].get("budget")
        task.resize_budget = int(budget) if budget else None
    if "patching" in doc:
        p = doc["patching"]
        task.patching = PatchSpec(size=tuple(p.get("size", (300, 300))),
                                  margin=int(p.get("margin", 75)))
    if "train" in doc:
        task.train = replace(task.train, **doc["train"])
    if "augmentation" in doc:
        a = doc["augmentation"]
        task.augmentation = AugmentParams(
            rotation_range=tuple(a.get("rotation_range", (-0.2, 0.2))),
            scale_range=tuple(a.get("scale_range", (0.8, 1.2))),
            mirror=bool(a.get("mirror", True)),
            seed=int(a.get("seed", 0)))
    if "postprocessing" in doc:
        task.postprocessing = list(doc["postprocessing"])
        for step in task.postprocessing:
            validate_step(step)
    return task


# ---------------------------------------------------------------------------
# Training entry point

class TrainingItems:
    """Augmented, patched training samples for the fit loop.

    Augmentation is sampled fresh on every access (deterministically from
    the seed and an access counter), so repeated epochs see new transforms.
    """

    def __init__(self, samples: list[Sample], task: TaskConfig, seed: int):
        self.task = task
        self.seed = seed
        self.samples = []
        for s in samples:
            if task.resize_budget:
                image = resize_to_pixel_budget(s.image, task.resize_budget)
                label = resize_labels(s.label, image.shape[:2])
            else:
                image, label = s.image, s.label
            self.samples.append(Sample(s.stem, image, label))
        self.items = []
        for si, s in enumerate(self.samples):
            if task.patching is None:
                self.items.append((si, None))
            else:
                for _, _, origin in extract_patches(s.image, None,
                                                    task.patching):
                    self.items.append((si, origin))
        self._access = [0] * len(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        si, origin = self.items[i]
        sample = self.samples[si]
        count = self._access[i]
        self._access[i] += 1
        params = replace(self.task.augmentation,
                         seed=(self.seed * 1_000_003 + i * 101 + count))
        image, label = sample.image, sample.label
        from .data import augment  # local import to avoid cycle at load
        image, label = augment(image, label, params)
        if origin is not None:
            ph, pw = self.task.patching.size
            y0, x0 = origin
            pad_h = max(0, y0 + ph - image.shape[0])
            pad_w = max(0, x0 + pw - image.shape[1])
            if pad_h or pad_w:
                image = np.pad(image, ((0, pad_h), (0, pad_w), (0, 0)))
                label = np.pad(label, ((0, pad_h), (0, pad_w)),
                               constant_values=IGNORE_LABEL)
            image = image[y0:y0 + ph, x0:x0 + pw]
            label = label[y0:y0 + ph, x0:x0 + pw]
        ignore = label == IGNORE_LABEL
        codes = np.where(ignore, 0, label)
        target = encode_label_codes(codes, self.task.classmap)
        target[ignore] = 0.0
        return normalize_image(image), target, ignore


def run_train(task: TaskConfig, dataset_dir, output_dir, seed: int = 0,
              pretrained_weights=None):
    """Train a model for the task; writes checkpoints and a CSV log."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    radius = BASELINE_RADIUS if task.name == "baseline" else None
    samples = load_dataset(dataset_dir, task.classmap, baseline_radius=radius)
    config = replace(task.train, seed=seed)
    items = TrainingItems(samples, task, seed=seed)
    store = (WeightStore.load(pretrained_weights)
             if pretrained_weights else None)
    arch = task.arch_config(pretrained_encoder=store is not None)
    net, weights, history = fit(arch, items, config,
                                log_path=output_dir / "training_log.csv",
                                checkpoint_dir=output_dir,
                                pretrained_store=store)
    final = output_dir / "model.weights"
    weights.save(final)
    save_checkpoint(net, config, output_dir, step=len(items) * config.epochs,
                    epoch=config.epochs)
    (output_dir / "history.json").write_text(json.dumps(history))
    return final, history


# ---------------------------------------------------------------------------
# Prediction entry point

def _scale_point(point, sx, sy):
    return [float(point[0]) * sx, float(point[1]) * sy]


def geometry_json(state: ChainState, task: TaskConfig, stem: str,
                  original_size: tuple[int, int],
                  processed_size: tuple[int, int]) -> dict:
    """Serialize chain geometry, mapped back to original image scale."""
    oh, ow = original_size
    ph, pw = processed_size
    sx, sy = ow / pw, oh / ph
    doc = {
        "image": stem,
        "width": int(ow),
        "height": int(oh),
        "quads": [[_scale_point(p, sx, sy) for p in q.to_list()]
                  for q in state.quads],
        "boxes": [[round(b.x_min * sx), round(b.y_min * sy),
                   round(b.x_max * sx), round(b.y_max * sy)]
                  for b in state.boxes],
        "polylines": [[_scale_point(p, sx, sy) for p in line.to_list()]
                      for line in state.polylines],
        "per_class": {},
    }
    for cls, box in state.class_boxes.items():
        name = task.classmap.entries[cls][0]
        doc["per_class"][name] = {
            "boxes": [[round(box.x_min * sx), round(box.y_min * sy),
                       round(box.x_max * sx), round(box.y_max * sy)]],
        }
    return doc


def predict_probabilities(net: SegmentationNet, image: np.ndarray,
                          task: TaskConfig) -> np.ndarray:
    """Resize per budget, run the net (patched if configured), stitch."""
    if task.resize_budget:
        image = resize_to_pixel_budget(image, task.resize_budget)
    normalized = normalize_image(image)
    mode = "sigmoid" if task.classmap.multilabel else "softmax"
    if task.patching is None:
        return net.predict_probabilities(normalized[None], mode=mode)[0]
    pieces = extract_patches(normalized, None, task.patching)
    predicted = []
    for patch, _, origin in pieces:
        probs = net.predict_probabilities(patch[None], mode=mode)[0]
        predicted.append((probs, origin))
    full = stitch_predictions(predicted, normalized.shape[:2], task.patching)
    return full


def _upscale_mask(mask: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    import cv2
    h, w = size
    if mask.shape[:2] == (h, w):
        return mask
    return cv2.resize(mask.astype(np.uint8), (w, h),
                      interpolation=cv2.INTER_NEAREST)


def _write_outputs(state: ChainState, task: TaskConfig, stem: str,
                   original_size: tuple[int, int], output_dir: Path) -> dict:
    processed_size = state.probs.shape[:2]
    if state.class_masks:
        for cls, mask in state.class_masks.items():
            name = task.classmap.entries[cls][0]
            write_image(output_dir / f"{stem}_{name}.png",
                        _upscale_mask(mask, original_size) * 255)
    elif state.mask is not None:
        write_image(output_dir / f"{stem}.png",
                    _upscale_mask(state.mask, original_size) * 255)
    doc = geometry_json(state, task, stem, original_size, processed_size)
    (output_dir / f"{stem}.json").write_text(json.dumps(doc, indent=2))
    return doc


def run_predict(task: TaskConfig, weights, image_paths, output_dir,
                jobs: int = 1, page_masks: dict | None = None) -> list[dict]:
    """Predict and post-process each image; writes PNG masks + JSON geometry."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    store = weights if isinstance(weights, WeightStore) else WeightStore.load(weights)
    net = SegmentationNet(task.arch_config())
    net.load_store(store)
    net.eval()

    def process(path):
        path = Path(path)
        image = read_image(path)
        probs = predict_probabilities(net, image, task)
        page_mask = (page_masks or {}).get(path.stem)
        if page_mask is not None:
            page_mask = _upscale_mask(page_mask, probs.shape[:2])
        state = apply_chain(probs, task.postprocessing, page_mask=page_mask)
        return _write_outputs(state, task, path.stem, image.shape[:2],
                              output_dir)

    paths = [Path(p) for p in image_paths]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(process, paths))
    return [process(p) for p in paths]


# ---------------------------------------------------------------------------
# Evaluation entry point

ORNAMENT_IOU_THRESHOLDS = (0.7, 0.8, 0.9)


def run_evaluate(task: TaskConfig, predictions_dir, ground_truth_dir,
                 output_dir=None) -> dict:
    """Dispatch to the IoU-family metrics appropriate for the task.

    Mask tasks (page, layout, photo, custom) compare PNG masks by stem;
    the ornament task compares geometry boxes at IoU 0.7/0.8/0.9.
    """
    from . import report
    from .metrics import box_iou, detection_prf, mask_iou, mean_iou

    predictions_dir = Path(predictions_dir)
    ground_truth_dir = Path(ground_truth_dir)
    if task.name == "ornament":
        result = _evaluate_boxes(predictions_dir, ground_truth_dir)
    else:
        result = _evaluate_masks(predictions_dir, ground_truth_dir)
    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        (output_dir / "metrics.json").write_text(json.dumps(result, indent=2))
        report.write_metrics_csv(output_dir / "metrics.csv", result)
        report.render_metrics_figure(output_dir / "metrics.png", result,
                                     task.name)
    return result


def _match_stems(pred_dir: Path, gt_dir: Path, suffix: str) -> list[str]:
    pred = {p.stem for p in pred_dir.glob(f"*{suffix}")}
    gt = {p.stem for p in gt_dir.glob(f"*{suffix}")}
    missing = sorted(gt - pred) + sorted(pred - gt)
    if missing:
        raise PipelineError(
            f"unmatched files between {pred_dir} and {gt_dir}: "
            f"{', '.join(missing)}")
    if not gt:
        raise PipelineError(f"no {suffix} files to evaluate in {gt_dir}")
    return sorted(gt)


def _evaluate_masks(pred_dir: Path, gt_dir: Path) -> dict:
    from .metrics import mask_iou, mean_iou
    stems = _match_stems(pred_dir, gt_dir, ".png")
    per_image = {}
    for stem in stems:
        pred = read_image(pred_dir / f"{stem}.png")[..., 0]
        gt = read_image(gt_dir / f"{stem}.png")[..., 0]
        per_image[stem] = mask_iou(pred >= 128, gt >= 128)
    return {
        "kind": "mask_iou",
        "per_image": per_image,
        "aggregate": {"miou": mean_iou(per_image.values())},
    }


def _load_boxes(path: Path) -> list[AxisAlignedBox]:
    doc = json.loads(path.read_text())
    boxes = doc["boxes"] if isinstance(doc, dict) else doc
    return [AxisAlignedBox(*map(int, b)) for b in boxes]


def _evaluate_boxes(pred_dir: Path, gt_dir: Path) -> dict:
    from .metrics import box_iou, detection_prf
    stems = _match_stems(pred_dir, gt_dir, ".json")
    predictions, ground_truth = [], []
    for stem in stems:
        predictions.extend(_load_boxes(pred_dir / f"{stem}.json"))
        ground_truth.extend(_load_boxes(gt_dir / f"{stem}.json"))
    rows = {}
    for threshold in ORNAMENT_IOU_THRESHOLDS:
        p, r, f, _ = detection_prf(predictions, ground_truth, threshold)
        rows[f"{threshold:.1f}"] = {"precision": p, "recall": r, "f_measure": f}
    # mIoU over ground truths: best prediction overlap, unmatched count as 0.
    ious = []
    for g in ground_truth:
        ious.append(max((box_iou(p, g) for p in predictions), default=0.0))
    miou = float(np.mean(ious)) if ious else 1.0
    return {
        "kind": "box_detection",
        "per_threshold": rows,
        "aggregate": {"miou": miou, "n_predictions": len(predictions),
                      "n_ground_truth": len(ground_truth)},
    }
