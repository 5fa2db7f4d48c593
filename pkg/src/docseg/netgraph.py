"""Symbolic layer graph of the segmentation network.

The network is a U-shaped encoder/decoder: a ResNet-50 contracting path
(five downsampling stages) and a five-step expansive path. The two deepest
skip maps (2048 and 1024 channels) are reduced by 1x1 convolutions before
concatenation; the full-resolution step concatenates the raw input image.
This module builds the graph symbolically, infers shapes and counts
parameters; numeric execution lives in :mod:`docseg.backend`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# ResNet-50 stage layout: bottleneck counts and channel plan.
ENCODER_STAGE_BLOCKS = (3, 4, 6, 3)
ENCODER_STAGE_MID = (64, 128, 256, 512)
ENCODER_STAGE_OUT = (256, 512, 1024, 2048)

# Skip map channels, shallowest to deepest: S/2, S/4, S/8, S/16, S/32.
SKIP_CHANNELS = (64, 256, 512, 1024, 2048)

DOWNSAMPLE_FACTOR = 32

DEFAULT_DECODER_CHANNELS = (512, 256, 128, 64, 32)


class GraphError(ValueError):
    """Invalid architecture configuration or input shape."""


@dataclass(frozen=True)
class ArchConfig:
    n_classes: int
    input_channels: int = 3
    reduction_channels: int = 512
    decoder_channels: tuple[int, ...] = DEFAULT_DECODER_CHANNELS
    pretrained_encoder: bool = False

    def __post_init__(self):
        if self.n_classes < 1:
            raise GraphError(f"n_classes must be positive, got {self.n_classes}")
        if self.input_channels < 1:
            raise GraphError("input_channels must be positive")
        if len(self.decoder_channels) != 5:
            raise GraphError(
                f"decoder_channels needs exactly 5 entries (five expanding "
                f"steps), got {len(self.decoder_channels)}"
            )
        if any(c < 1 for c in self.decoder_channels):
            raise GraphError("decoder_channels must all be positive")
        for a, b in zip(self.decoder_channels, self.decoder_channels[1:]):
            if b > a:
                raise GraphError("decoder_channels must be non-increasing")
        if not 1 <= self.reduction_channels <= 1024:
            raise GraphError(
                f"reduction_channels must be in [1, 1024], got "
                f"{self.reduction_channels} (cannot exceed the smallest "
                f"channel count it reduces)"
            )
        object.__setattr__(self, "decoder_channels", tuple(self.decoder_channels))


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # conv | bottleneck_block | downsample_bottleneck | max_pool |
    #            bilinear_upsample | concat | relu | final_conv
    kernel: tuple[int, int]
    in_channels: int
    out_channels: int
    stride: int
    scale: int  # output spatial size is input_size / scale
    section: str  # encoder | reduction | decoder | head
    trainable: bool
    pretrained: bool
    params: int = 0


@dataclass(frozen=True)
class NetworkGraph:
    config: ArchConfig
    layers: tuple[LayerSpec, ...]
    # (source layer name, decoder step it feeds) for every concatenation
    skip_links: tuple[tuple[str, int], ...]

    def layer(self, name: str) -> LayerSpec:
        for spec in self.layers:
            if spec.name == name:
                return spec
        raise KeyError(name)


@dataclass(frozen=True)
class ParamReport:
    total: int
    pretrained: int
    fully_trainable: int
    reduction_block: int
    decoder_only: int
    final_conv: int
    per_layer: tuple[tuple[str, int], ...]


def _bn_params(channels: int) -> int:
    return 2 * channels


def _bottleneck_params(in_ch: int, mid: int, out: int, downsample: bool) -> int:
    # 1x1 -> 3x3 -> 1x1, each followed by batch norm; convs carry no bias.
    n = in_ch * mid + _bn_params(mid)
    n += 9 * mid * mid + _bn_params(mid)
    n += mid * out + _bn_params(out)
    if downsample:
        n += in_ch * out + _bn_params(out)
    return n


def build_graph(config: ArchConfig) -> NetworkGraph:
    """Build the symbolic graph for the given configuration."""
    layers: list[LayerSpec] = []
    skip_links: list[tuple[str, int]] = []
    pre = config.pretrained_encoder

    def enc(name, kind, kernel, in_ch, out_ch, stride, scale, params):
        layers.append(LayerSpec(name, kind, kernel, in_ch, out_ch, stride,
                                scale, "encoder", True, pre, params))

    # Stem: 7x7 stride-2 conv (+ batch norm), ReLU, 3x3 stride-2 max pool.
    enc("encoder.stem", "conv", (7, 7), config.input_channels, 64, 2, 2,
        49 * config.input_channels * 64 + _bn_params(64))
    enc("encoder.maxpool", "max_pool", (3, 3), 64, 64, 2, 4, 0)

    in_ch = 64
    for stage, (blocks, mid, out) in enumerate(
            zip(ENCODER_STAGE_BLOCKS, ENCODER_STAGE_MID, ENCODER_STAGE_OUT)):
        # Stage 1 keeps the post-pool resolution; later stages halve it.
        scale = 4 * (2 ** max(stage, 1)) if stage else 4
        stride = 1 if stage == 0 else 2
        enc(f"encoder.stage{stage + 1}.block1", "downsample_bottleneck",
            (3, 3), in_ch, out, stride, scale,
            _bottleneck_params(in_ch, mid, out, downsample=True))
        for b in range(1, blocks):
            enc(f"encoder.stage{stage + 1}.block{b + 1}", "bottleneck_block",
                (3, 3), out, out, 1, scale,
                _bottleneck_params(out, mid, out, downsample=False))
        in_ch = out

    # Skip sources, deepest decoder step first. The two deepest skips pass
    # through 1x1 reductions; the shallowest step takes the raw input image.
    red = config.reduction_channels
    layers.append(LayerSpec("reduce.stage4", "conv", (1, 1), 2048, red, 1, 32,
                            "reduction", True, False, 2048 * red + red))
    layers.append(LayerSpec("reduce.stage3", "conv", (1, 1), 1024, red, 1, 16,
                            "reduction", True, False, 1024 * red + red))

    skip_sources = [
        ("reduce.stage3", red),
        ("encoder.stage2.block4", SKIP_CHANNELS[2]),
        ("encoder.stage1.block3", SKIP_CHANNELS[1]),
        ("encoder.stem", SKIP_CHANNELS[0]),
        ("input", config.input_channels),
    ]

    carried = red  # the reduced deepest map feeds the first upsample
    for step, ((skip_name, skip_ch), out_ch) in enumerate(
            zip(skip_sources, config.decoder_channels)):
        scale = DOWNSAMPLE_FACTOR >> (step + 1)
        layers.append(LayerSpec(f"decoder.step{step}.upsample",
                                "bilinear_upsample", (2, 2), carried, carried,
                                1, scale, "decoder", False, False, 0))
        layers.append(LayerSpec(f"decoder.step{step}.concat", "concat", (1, 1),
                                carried + skip_ch, carried + skip_ch, 1, scale,
                                "decoder", False, False, 0))
        layers.append(LayerSpec(f"decoder.step{step}.conv", "conv", (3, 3),
                                carried + skip_ch, out_ch, 1, scale,
                                "decoder", True, False,
                                9 * (carried + skip_ch) * out_ch + out_ch))
        layers.append(LayerSpec(f"decoder.step{step}.relu", "relu", (1, 1),
                                out_ch, out_ch, 1, scale,
                                "decoder", False, False, 0))
        skip_links.append((skip_name, step))
        carried = out_ch

    layers.append(LayerSpec("head.final_conv", "final_conv", (1, 1), carried,
                            config.n_classes, 1, 1, "head", True, False,
                            carried * config.n_classes + config.n_classes))

    return NetworkGraph(config, tuple(layers), tuple(skip_links))


def count_parameters(graph: NetworkGraph) -> ParamReport:
    """Account for every weight and bias in the graph, by section."""
    per_layer = tuple((l.name, l.params) for l in graph.layers if l.params)
    by_section = {"encoder": 0, "reduction": 0, "decoder": 0, "head": 0}
    for l in graph.layers:
        by_section[l.section] += l.params
    total = sum(by_section.values())
    return ParamReport(
        total=total,
        pretrained=by_section["encoder"],
        fully_trainable=total - by_section["encoder"],
        reduction_block=by_section["reduction"],
        decoder_only=by_section["decoder"],
        final_conv=by_section["head"],
        per_layer=per_layer,
    )


def forward_shape(graph: NetworkGraph,
                  input_shape: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
    """Symbolic output shape for a (batch, h, w, channels) input."""
    batch, h, w, c = input_shape
    if c != graph.config.input_channels:
        raise GraphError(
            f"expected {graph.config.input_channels} input channels, got {c}")
    for dim, label in ((h, "height"), (w, "width")):
        if dim % DOWNSAMPLE_FACTOR != 0:
            raise GraphError(
                f"input {label} {dim} is not divisible by "
                f"{DOWNSAMPLE_FACTOR} (the encoder downsamples by "
                f"{DOWNSAMPLE_FACTOR}); pad to the next multiple")
    return (batch, h, w, graph.config.n_classes)


def layer_output_shape(layer: LayerSpec, input_hw: tuple[int, int]) -> tuple[int, int, int]:
    h, w = input_hw
    return (h // layer.scale, w // layer.scale, layer.out_channels)


def format_graph_report(graph: NetworkGraph,
                        input_hw: tuple[int, int] = (320, 320)) -> str:
    """Per-layer text table: name, kind, channels, output shape, params."""
    report = count_parameters(graph)
    header = (f"{'layer':34s} {'kind':22s} {'in':>6s} {'out':>6s} "
              f"{'output shape':>18s} {'params':>12s}  pretrained")
    lines = [header, "-" * len(header)]
    for l in graph.layers:
        oh, ow, oc = layer_output_shape(l, input_hw)
        lines.append(
            f"{l.name:34s} {l.kind:22s} {l.in_channels:6d} {l.out_channels:6d} "
            f"{f'{oh}x{ow}x{oc}':>18s} {l.params:12,d}  "
            f"{'yes' if l.pretrained else 'no'}")
    lines.append("-" * len(header))
    lines.append(f"total parameters      {report.total:12,d}")
    lines.append(f"encoder (pretrained)  {report.pretrained:12,d}")
    lines.append(f"fully trainable       {report.fully_trainable:12,d}")
    lines.append(f"  reduction blocks    {report.reduction_block:12,d}")
    lines.append(f"  decoder convs       {report.decoder_only:12,d}")
    lines.append(f"  final conv          {report.final_conv:12,d}")
    return "\n".join(lines)
