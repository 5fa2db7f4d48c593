"""Metrics report rendering: CSV summaries and matplotlib figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_metrics_csv(path, result: dict) -> None:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        if result["kind"] == "mask_iou":
            writer.writerow(["image", "iou"])
            for stem, iou in sorted(result["per_image"].items()):
                writer.writerow([stem, f"{iou:.6f}"])
            writer.writerow(["mean", f"{result['aggregate']['miou']:.6f}"])
        else:
            writer.writerow(["iou_threshold", "precision", "recall",
                             "f_measure"])
            for threshold, row in sorted(result["per_threshold"].items()):
                writer.writerow([threshold, f"{row['precision']:.6f}",
                                 f"{row['recall']:.6f}",
                                 f"{row['f_measure']:.6f}"])
            writer.writerow(["miou", f"{result['aggregate']['miou']:.6f}",
                             "", ""])


def render_metrics_figure(path, result: dict, task_name: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    if result["kind"] == "mask_iou":
        stems = sorted(result["per_image"])
        values = [result["per_image"][s] for s in stems]
        ax.bar(range(len(stems)), values, color="#4878cf")
        ax.axhline(result["aggregate"]["miou"], color="#d65f5f", ls="--",
                   label=f"mIoU = {result['aggregate']['miou']:.3f}")
        ax.set_xticks(range(len(stems)))
        ax.set_xticklabels(stems, rotation=45, ha="right", fontsize=8)
        ax.set_ylabel("IoU")
        ax.set_ylim(0, 1.05)
        ax.legend()
        ax.set_title(f"{task_name}: per-image IoU")
    else:
        thresholds = sorted(result["per_threshold"])
        xs = [float(t) for t in thresholds]
        for key, marker in (("precision", "o"), ("recall", "s"),
                            ("f_measure", "^")):
            ax.plot(xs, [result["per_threshold"][t][key] for t in thresholds],
                    marker=marker, label=key)
        ax.set_xlabel("IoU threshold")
        ax.set_ylabel("score")
        ax.set_ylim(0, 1.05)
        ax.legend()
        ax.set_title(f"{task_name}: detection scores "
                     f"(mIoU = {result['aggregate']['miou']:.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
