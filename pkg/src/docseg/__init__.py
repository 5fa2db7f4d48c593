"""Pixel-wise document segmentation toolkit.

A fixed encoder/decoder network (ResNet-50 contracting path, five-step
expansive path) plus a library of reusable post-processing operators,
composed into built-in tasks: page, baseline, layout, ornament, photo.
"""

from .netgraph import (ArchConfig, NetworkGraph, ParamReport, build_graph,
                       count_parameters, format_graph_report, forward_shape)
from .weights import WeightStore

__all__ = [
    "ArchConfig",
    "NetworkGraph",
    "ParamReport",
    "WeightStore",
    "build_graph",
    "count_parameters",
    "format_graph_report",
    "forward_shape",
]

__version__ = "0.1.0"
