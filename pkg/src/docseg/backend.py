"""Torch execution backend for the symbolic network graph.

Mirrors :mod:`docseg.netgraph` layer for layer: a ResNet-50 contracting path,
1x1 reductions on the two deepest skip maps, and five expanding steps of
bilinear upsample + concat + 3x3 conv + batch renorm + ReLU. Inputs of any
size are accepted: they are symmetrically zero-padded to the next multiple
of 32 and the output is cropped back.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .netgraph import (ArchConfig, DOWNSAMPLE_FACTOR, ENCODER_STAGE_BLOCKS,
                       ENCODER_STAGE_MID)
from .weights import WeightStore


class BatchRenorm2d(nn.Module):
    """Batch normalization with clamped correction factors r and d.

    During training, activations are normalized with batch statistics, then
    corrected towards the running statistics with r = sigma_b/sigma clamped
    to [r_min, r_max] and d = (mu_b - mu)/sigma clamped to [-d_max, d_max].
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.01,
                 r_min: float = 0.1, r_max: float = 100.0, d_max: float = 1.0):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.r_min = r_min
        self.r_max = r_max
        self.d_max = d_max
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.register_buffer("running_mean", torch.zeros(channels))
        self.register_buffer("running_var", torch.ones(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        view = (1, -1, 1, 1)
        if self.training:
            mean = x.mean(dim=(0, 2, 3))
            var = x.var(dim=(0, 2, 3), unbiased=False)
            sigma = torch.sqrt(var + self.eps)
            running_sigma = torch.sqrt(self.running_var + self.eps)
            r = (sigma / running_sigma).detach().clamp(self.r_min, self.r_max)
            d = ((mean - self.running_mean) / running_sigma).detach() \
                .clamp(-self.d_max, self.d_max)
            x_hat = (x - mean.view(view)) / sigma.view(view)
            x_hat = x_hat * r.view(view) + d.view(view)
            with torch.no_grad():
                self.running_mean += self.momentum * (mean - self.running_mean)
                self.running_var += self.momentum * (var - self.running_var)
        else:
            x_hat = (x - self.running_mean.view(view)) / torch.sqrt(
                self.running_var.view(view) + self.eps)
        return self.weight.view(view) * x_hat + self.bias.view(view)

    def set_clamps(self, r_min: float, r_max: float, d_max: float) -> None:
        self.r_min = r_min
        self.r_max = r_max
        self.d_max = d_max


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, in_ch: int, mid: int, stride: int = 1,
                 downsample: nn.Module | None = None):
        super().__init__()
        out = mid * self.expansion
        self.conv1 = nn.Conv2d(in_ch, mid, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(mid)
        self.conv2 = nn.Conv2d(mid, mid, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(mid)
        self.conv3 = nn.Conv2d(mid, out, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = downsample

    def forward(self, x):
        identity = self.downsample(x) if self.downsample is not None else x
        y = self.relu(self.bn1(self.conv1(x)))
        y = self.relu(self.bn2(self.conv2(y)))
        y = self.bn3(self.conv3(y))
        return self.relu(y + identity)


class ResNet50Encoder(nn.Module):
    """ResNet-50 without the classification head, exposing the five skip maps."""

    def __init__(self, input_channels: int = 3):
        super().__init__()
        self.conv1 = nn.Conv2d(input_channels, 64, 7, stride=2, padding=3,
                               bias=False)
        self.bn1 = nn.BatchNorm2d(64)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1)
        in_ch = 64
        for i, (blocks, mid) in enumerate(zip(ENCODER_STAGE_BLOCKS,
                                              ENCODER_STAGE_MID)):
            stride = 1 if i == 0 else 2
            out = mid * Bottleneck.expansion
            downsample = nn.Sequential(
                nn.Conv2d(in_ch, out, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out),
            )
            layers = [Bottleneck(in_ch, mid, stride, downsample)]
            layers += [Bottleneck(out, mid) for _ in range(blocks - 1)]
            setattr(self, f"layer{i + 1}", nn.Sequential(*layers))
            in_ch = out

    def forward(self, x):
        x = self.relu(self.bn1(self.conv1(x)))
        s2 = x                      # 64 @ S/2
        x = self.maxpool(x)
        s4 = self.layer1(x)         # 256 @ S/4
        s8 = self.layer2(s4)        # 512 @ S/8
        s16 = self.layer3(s8)       # 1024 @ S/16
        s32 = self.layer4(s16)      # 2048 @ S/32
        return s2, s4, s8, s16, s32


class SegmentationNet(nn.Module):
    def __init__(self, config: ArchConfig):
        super().__init__()
        self.config = config
        self.encoder = ResNet50Encoder(config.input_channels)
        red = config.reduction_channels
        self.reduce_s32 = nn.Conv2d(2048, red, 1)
        self.reduce_s16 = nn.Conv2d(1024, red, 1)

        skip_channels = [red, 512, 256, 64, config.input_channels]
        carried = red
        convs, norms = [], []
        for skip_ch, out_ch in zip(skip_channels, config.decoder_channels):
            convs.append(nn.Conv2d(carried + skip_ch, out_ch, 3, padding=1))
            norms.append(BatchRenorm2d(out_ch))
            carried = out_ch
        self.decoder_convs = nn.ModuleList(convs)
        self.decoder_norms = nn.ModuleList(norms)
        self.final_conv = nn.Conv2d(carried, config.n_classes, 1)
        self.init_weights()

    def init_weights(self, seed: int | None = None) -> None:
        """Xavier initialization for every convolution kernel."""
        if seed is not None:
            torch.manual_seed(seed)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.xavier_uniform_(m.weight)
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, (nn.BatchNorm2d, BatchRenorm2d)):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def train(self, mode: bool = True):
        super().train(mode)
        # A pretrained encoder keeps its normalization statistics frozen.
        if mode and self.config.pretrained_encoder:
            for m in self.encoder.modules():
                if isinstance(m, nn.BatchNorm2d):
                    m.eval()
        return self

    def set_renorm_clamps(self, r_min: float, r_max: float, d_max: float) -> None:
        for m in self.modules():
            if isinstance(m, BatchRenorm2d):
                m.set_clamps(r_min, r_max, d_max)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Logits for an NCHW batch; any spatial size (padded internally)."""
        h, w = x.shape[2], x.shape[3]
        pad = _symmetric_padding(h, w)
        if any(pad):
            x = F.pad(x, pad)
        s2, s4, s8, s16, s32 = self.encoder(x)
        skips = [self.reduce_s16(s16), s8, s4, s2, x]
        y = self.reduce_s32(s32)
        for conv, norm, skip in zip(self.decoder_convs, self.decoder_norms,
                                    skips):
            y = F.interpolate(y, scale_factor=2, mode="bilinear",
                              align_corners=False)
            y = torch.cat([y, skip], dim=1)
            y = F.relu(norm(conv(y)))
        logits = self.final_conv(y)
        if any(pad):
            left, _, top, _ = pad
            logits = logits[:, :, top:top + h, left:left + w]
        return logits

    @torch.no_grad()
    def predict_probabilities(self, batch: np.ndarray,
                              mode: str = "softmax") -> np.ndarray:
        """Probability maps for an NHWC float batch, back as NHWC numpy."""
        self.eval()
        x = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
        x = x.permute(0, 3, 1, 2)
        logits = self.forward(x)
        probs = activate(logits, mode)
        return probs.permute(0, 2, 3, 1).numpy()

    def to_store(self) -> WeightStore:
        store = WeightStore()
        for name, tensor in self.state_dict().items():
            if name.endswith("num_batches_tracked"):
                continue
            store[name] = tensor.numpy()
        return store

    def load_store(self, store: WeightStore) -> None:
        state = self.state_dict()
        for name, arr in store.items():
            if name not in state:
                raise ValueError(f"unknown weight entry {name!r}")
            if tuple(state[name].shape) != arr.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: graph expects "
                    f"{tuple(state[name].shape)}, file has {arr.shape}")
            state[name] = torch.from_numpy(arr.copy())
        self.load_state_dict(state)

    def load_encoder_store(self, store: WeightStore) -> None:
        """Ingest pretrained encoder weights (entries prefixed 'encoder.')."""
        state = self.state_dict()
        for name, arr in store.items():
            key = name if name.startswith("encoder.") else f"encoder.{name}"
            if key not in state:
                raise ValueError(f"unknown encoder weight entry {name!r}")
            if tuple(state[key].shape) != arr.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: expected "
                    f"{tuple(state[key].shape)}, file has {arr.shape}")
            state[key] = torch.from_numpy(arr.copy())
        self.load_state_dict(state)

    def trainable_parameters(self):
        if self.config.pretrained_encoder:
            encoder_ids = {id(p) for p in self.encoder.parameters()}
            return [p for p in self.parameters() if id(p) not in encoder_ids]
        return list(self.parameters())

    def trainable_kernels(self):
        """Trainable convolution kernels, the scope of the L2 penalty."""
        return [p for p in self.trainable_parameters() if p.ndim == 4]


def activate(logits: torch.Tensor, mode: str) -> torch.Tensor:
    if mode == "softmax":
        return torch.softmax(logits, dim=1)
    if mode == "sigmoid":
        return torch.sigmoid(logits)
    raise ValueError(f"unknown output mode {mode!r}")


def _symmetric_padding(h: int, w: int) -> tuple[int, int, int, int]:
    """(left, right, top, bottom) zero padding up to the next multiple of 32."""
    ph = (-h) % DOWNSAMPLE_FACTOR
    pw = (-w) % DOWNSAMPLE_FACTOR
    return (pw // 2, pw - pw // 2, ph // 2, ph - ph // 2)


def forward(config: ArchConfig, store: WeightStore, batch: np.ndarray,
            mode: str = "softmax") -> np.ndarray:
    """One-shot inference: build the net, load weights, return probabilities."""
    net = SegmentationNet(config)
    net.load_store(store)
    return net.predict_probabilities(batch, mode=mode)
