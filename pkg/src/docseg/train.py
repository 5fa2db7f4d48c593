"""Training harness: loss, L2 penalty, learning-rate schedule, epoch loop.

Optimization uses Adam with Xavier-initialized weights, an exponentially
decaying learning rate (continuous exponent) and batch renormalization
with clamped correction factors. The L2 penalty covers trainable
convolution kernels only and enters through the loss.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backend import SegmentationNet
from .netgraph import ArchConfig
from .weights import WeightStore

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 5e-5
    lr_decay_rate: float = 0.95
    lr_decay_period: int = 200
    weight_decay: float = 1e-6
    batch_renorm: tuple[float, float, float] = (0.1, 100.0, 1.0)  # r_min, r_max, d_max
    epochs: int = 30
    batch_size: int = 1
    loss_mode: str = "softmax_ce"  # softmax_ce | sigmoid_bce
    seed: int = 0

    def __post_init__(self):
        if self.initial_lr <= 0 or self.lr_decay_rate <= 0:
            raise TrainError("learning rates must be positive")
        if self.lr_decay_period < 1:
            raise TrainError("lr_decay_period must be >= 1")
        if self.weight_decay < 0:
            raise TrainError("weight_decay must be non-negative")
        if self.epochs < 0:
            raise TrainError("epochs must be >= 0")
        if self.batch_size < 1:
            raise TrainError("batch_size must be >= 1")
        if self.loss_mode not in ("softmax_ce", "sigmoid_bce"):
            raise TrainError(f"unknown loss mode {self.loss_mode!r}")

    @property
    def output_mode(self) -> str:
        return "softmax" if self.loss_mode == "softmax_ce" else "sigmoid"

    def config_hash(self) -> str:
        blob = json.dumps(self.__dict__, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def lr_schedule(step: int, config: TrainConfig) -> float:
    """initial_lr * rate^(step / period), continuous (non-staircase)."""
    if step < 0:
        raise TrainError("step must be >= 0")
    return config.initial_lr * config.lr_decay_rate ** (
        step / config.lr_decay_period)


def pixel_loss(logits, target, mode: str = "softmax_ce", ignore_mask=None):
    """Mean per-pixel cross-entropy over non-ignored pixels.

    `logits` and `target` are channels-last ((..., h, w, c)); `ignore_mask`
    marks pixels excluded from the mean (padding, rotation fill). Accepts
    torch tensors (differentiable) or numpy arrays.
    """
    logits = torch.as_tensor(logits)
    target = torch.as_tensor(target, dtype=logits.dtype)
    if logits.shape != target.shape:
        raise TrainError(f"logits shape {tuple(logits.shape)} does not match "
                         f"target shape {tuple(target.shape)}")
    if ignore_mask is not None:
        keep = ~torch.as_tensor(np.asarray(ignore_mask), dtype=torch.bool)
        if not keep.any():
            raise TrainError("all pixels are ignored; loss is undefined")
        weight = keep.to(logits.dtype)
    else:
        weight = torch.ones(logits.shape[:-1], dtype=logits.dtype)
    if mode == "softmax_ce":
        log_probs = torch.log_softmax(logits, dim=-1)
        per_pixel = -(target * log_probs).sum(dim=-1)
    elif mode == "sigmoid_bce":
        per_pixel = torch.nn.functional.binary_cross_entropy_with_logits(
            logits, target, reduction="none").mean(dim=-1)
    else:
        raise TrainError(f"unknown loss mode {mode!r}")
    return (per_pixel * weight).sum() / weight.sum()


def l2_penalty(weights, weight_decay: float):
    """weight_decay * sum of squares over convolution kernels.

    Kernels are the 4-d entries; biases and normalization scales are
    excluded. Accepts a WeightStore or an iterable of torch tensors.
    """
    if isinstance(weights, WeightStore):
        total = sum(float(np.sum(weights[n].astype(np.float64) ** 2))
                    for n in weights.kernel_names())
        return weight_decay * total
    total = None
    for p in weights:
        if p.ndim != 4:
            continue
        term = (p ** 2).sum()
        total = term if total is None else total + term
    if total is None:
        return torch.zeros(())
    return weight_decay * total


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n - batch_size + 1, batch_size):
        yield order[start:start + batch_size]


def fit(net_or_config, dataset, config: TrainConfig,
        log_path=None, checkpoint_dir=None,
        pretrained_store: WeightStore | None = None):
    """Run the epoch loop; returns (net, final WeightStore, loss history).

    `dataset` is a sequence of (image, target, ignore) triples: image is a
    normalized float32 (h, w, 3) array, target a (h, w, n_classes) one-hot
    (or multi-hot) array, ignore a boolean (h, w) array. All samples in a
    batch must share one spatial size.
    """
    if len(dataset) == 0:
        raise TrainError("empty dataset")
    torch.manual_seed(config.seed)
    if isinstance(net_or_config, ArchConfig):
        net = SegmentationNet(net_or_config)
        net.init_weights(seed=config.seed)
    else:
        net = net_or_config
    if pretrained_store is not None:
        net.load_encoder_store(pretrained_store)
    net.set_renorm_clamps(*config.batch_renorm)
    net.train()

    optimizer = torch.optim.Adam(net.trainable_parameters(),
                                 lr=config.initial_lr, betas=ADAM_BETAS,
                                 eps=ADAM_EPS)
    rng = np.random.default_rng(config.seed)
    batch_size = min(config.batch_size, len(dataset))
    mode = config.loss_mode
    history: list[float] = []
    log_rows: list[tuple[int, float, float]] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for idx in _batches(len(dataset), batch_size, order):
            images = np.stack([np.asarray(dataset[i][0], dtype=np.float32)
                               for i in idx])
            targets = np.stack([np.asarray(dataset[i][1], dtype=np.float32)
                                for i in idx])
            ignores = np.stack([np.asarray(dataset[i][2], dtype=bool)
                                for i in idx])
            lr = lr_schedule(step, config)
            for group in optimizer.param_groups:
                group["lr"] = lr
            x = torch.from_numpy(images).permute(0, 3, 1, 2)
            logits = net(x).permute(0, 2, 3, 1)
            loss = pixel_loss(logits, torch.from_numpy(targets), mode,
                              ignore_mask=ignores)
            loss = loss + l2_penalty(net.trainable_kernels(),
                                     config.weight_decay)
            value = float(loss.detach())
            if not np.isfinite(value):
                raise TrainError(
                    f"loss became non-finite ({value}) at step {step}, "
                    f"epoch {epoch}; lower the learning rate or check labels")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            log_rows.append((step, lr, value))
            epoch_losses.append(value)
            step += 1
        history.append(float(np.mean(epoch_losses)))
        if checkpoint_dir is not None:
            save_checkpoint(net, config, checkpoint_dir, step=step,
                            epoch=epoch)
    if log_path is not None:
        write_training_log(log_path, log_rows)
    net.eval()
    return net, net.to_store(), history


def write_training_log(path, rows) -> None:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "lr", "loss"])
        writer.writerows(rows)


def save_checkpoint(net: SegmentationNet, config: TrainConfig, out_dir,
                    step: int, epoch: int) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    weights_path = out_dir / f"checkpoint-{epoch:04d}.weights"
    net.to_store().save(weights_path)
    sidecar = {"step": step, "epoch": epoch,
               "config_hash": config.config_hash(),
               "n_classes": net.config.n_classes}
    weights_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return weights_path
