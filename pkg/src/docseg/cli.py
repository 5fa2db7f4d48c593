"""Command-line interface: train, predict, evaluate, inspect-arch."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .data import IMAGE_SUFFIXES
from .netgraph import ArchConfig, build_graph, format_graph_report
from .pipelines import (BUILTIN_TASKS, builtin_task, load_task_config,
                        run_evaluate, run_predict, run_train)


def _resolve_task(task: str | None, config: str | None):
    if config:
        return load_task_config(config)
    if task:
        return builtin_task(task)
    raise click.UsageError("pass --task <builtin> or --config <file>")


@click.group()
def main():
    """Pixel-wise document segmentation toolkit."""


@main.command()
@click.option("--task", type=click.Choice(BUILTIN_TASKS), default=None)
@click.option("--config", type=click.Path(exists=True), default=None,
              help="Task config file (TOML); overrides --task defaults.")
@click.option("--input", "input_dir", required=True,
              type=click.Path(exists=True),
              help="Dataset directory with images/ and labels/.")
@click.option("--output", "output_dir", required=True, type=click.Path())
@click.option("--weights", type=click.Path(exists=True), default=None,
              help="Pretrained encoder weights to start from.")
@click.option("--seed", type=int, default=0)
def train(task, config, input_dir, output_dir, weights, seed):
    """Train a model for a task."""
    cfg = _resolve_task(task, config)
    final, history = run_train(cfg, input_dir, output_dir, seed=seed,
                               pretrained_weights=weights)
    click.echo(f"weights: {final}")
    click.echo(f"final epoch loss: {history[-1]:.6f}" if history
               else "no epochs ran")


@main.command()
@click.option("--task", type=click.Choice(BUILTIN_TASKS), default=None)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--weights", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True),
              help="Image file or directory of images.")
@click.option("--output", "output_dir", required=True, type=click.Path())
@click.option("--jobs", type=int, default=1)
def predict(task, config, weights, input_path, output_dir, jobs):
    """Run inference + post-processing, writing masks and geometry JSON."""
    cfg = _resolve_task(task, config)
    path = Path(input_path)
    if path.is_dir():
        images = sorted(p for p in path.iterdir()
                        if p.suffix.lower() in IMAGE_SUFFIXES)
    else:
        images = [path]
    if not images:
        raise click.UsageError(f"no images under {path}")
    run_predict(cfg, weights, images, output_dir, jobs=jobs)
    click.echo(f"processed {len(images)} image(s) into {output_dir}")


@main.command()
@click.option("--task", type=click.Choice(BUILTIN_TASKS), default=None)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--input", "predictions_dir", required=True,
              type=click.Path(exists=True),
              help="Directory of predicted masks / geometry JSON.")
@click.option("--ground-truth", required=True, type=click.Path(exists=True))
@click.option("--output", "output_dir", default=None, type=click.Path(),
              help="Where to write metrics.json/csv and figures.")
def evaluate(task, config, predictions_dir, ground_truth, output_dir):
    """Compare predictions against ground truth with IoU-family metrics."""
    cfg = _resolve_task(task, config)
    result = run_evaluate(cfg, predictions_dir, ground_truth, output_dir)
    for key, value in result["aggregate"].items():
        click.echo(f"{key}: {value}")


@main.command("inspect-arch")
@click.option("--classes", type=int, default=2)
@click.option("--input-size", type=(int, int), default=(320, 320))
@click.option("--output", type=click.Path(), default=None,
              help="Write the report to a file instead of stdout.")
def inspect_arch(classes, input_size, output):
    """Print the per-layer architecture table and parameter budget."""
    graph = build_graph(ArchConfig(n_classes=classes))
    text = format_graph_report(graph, input_hw=input_size)
    if output:
        Path(output).write_text(text + "\n")
    else:
        click.echo(text)


if __name__ == "__main__":
    sys.exit(main())
