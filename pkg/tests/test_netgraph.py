import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docseg.netgraph import (ArchConfig, GraphError, build_graph,
                             count_parameters, format_graph_report,
                             forward_shape)


@pytest.fixture(scope="module")
def default_graph():
    return build_graph(ArchConfig(n_classes=2))


def test_graph_structure(default_graph):
    kinds = [l.kind for l in default_graph.layers]
    assert kinds.count("downsample_bottleneck") == 4
    assert kinds.count("bottleneck_block") == sum((3, 4, 6, 3)) - 4
    assert kinds.count("bilinear_upsample") == 5
    assert kinds.count("final_conv") == 1
    reductions = [l for l in default_graph.layers if l.section == "reduction"]
    assert len(reductions) == 2
    decoder_convs = [l for l in default_graph.layers
                     if l.section == "decoder" and l.kind == "conv"]
    assert len(decoder_convs) == 5
    # five encoder downsampling stages, each halving the previous scale
    scales = []
    for l in default_graph.layers:
        if l.section == "encoder" and l.scale not in scales:
            scales.append(l.scale)
    assert scales == [2, 4, 8, 16, 32]


def test_every_decoder_step_has_one_skip(default_graph):
    steps = [dst for _, dst in default_graph.skip_links]
    assert steps == [0, 1, 2, 3, 4]
    # shallowest step concatenates the raw input image
    assert default_graph.skip_links[-1][0] == "input"


def test_rejects_bad_configs():
    with pytest.raises(GraphError):
        ArchConfig(n_classes=2, decoder_channels=(512, 256, 128, 64))
    with pytest.raises(GraphError):
        ArchConfig(n_classes=2, reduction_channels=2048)
    with pytest.raises(GraphError):
        ArchConfig(n_classes=0)


def test_final_conv_matches_classes():
    graph = build_graph(ArchConfig(n_classes=4))
    final = graph.layer("head.final_conv")
    assert final.kernel == (1, 1)
    assert final.out_channels == 4


def test_parameter_budgets(default_graph):
    report = count_parameters(default_graph)
    assert report.reduction_block == 1_573_888  # 2048*512+512 + 1024*512+512
    assert report.decoder_only == pytest.approx(7.79e6, rel=0.02)
    assert report.fully_trainable == pytest.approx(9.36e6, rel=0.02)
    assert report.total == pytest.approx(32.8e6, rel=0.02)


def test_parameter_accounting(default_graph):
    report = count_parameters(default_graph)
    assert report.total == sum(n for _, n in report.per_layer)
    assert report.total == report.pretrained + report.fully_trainable
    assert report.fully_trainable == (report.reduction_block
                                      + report.decoder_only
                                      + report.final_conv)


@given(n_classes=st.integers(1, 16), red=st.integers(8, 1024))
@settings(max_examples=25, deadline=None)
def test_accounting_holds_for_all_configs(n_classes, red):
    graph = build_graph(ArchConfig(n_classes=n_classes,
                                   reduction_channels=red))
    report = count_parameters(graph)
    assert report.total == report.pretrained + report.fully_trainable
    assert report.total == sum(n for _, n in report.per_layer)


def test_default_decoder_channels_halve():
    channels = ArchConfig(n_classes=2).decoder_channels
    for a, b in zip(channels, channels[1:]):
        assert a == 2 * b


def test_forward_shape(default_graph):
    assert forward_shape(default_graph, (1, 320, 320, 3)) == (1, 320, 320, 2)
    assert forward_shape(default_graph, (4, 608, 416, 3)) == (4, 608, 416, 2)


@given(h=st.integers(1, 20), w=st.integers(1, 20), b=st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_shape_round_trip(h, w, b):
    graph = build_graph(ArchConfig(n_classes=3))
    shape = forward_shape(graph, (b, 32 * h, 32 * w, 3))
    assert shape == (b, 32 * h, 32 * w, 3)


def test_forward_shape_rejects_indivisible(default_graph):
    with pytest.raises(GraphError, match="32"):
        forward_shape(default_graph, (1, 300, 300, 3))
    with pytest.raises(GraphError):
        forward_shape(default_graph, (1, 320, 320, 1))


def test_report_text(default_graph):
    text = format_graph_report(default_graph, input_hw=(320, 320))
    assert "head.final_conv" in text
    assert "encoder.stage4.block3" in text
    assert "32,880,578" in text
