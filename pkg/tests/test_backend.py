import numpy as np
import pytest
import torch
import torch.nn.functional as F

from docseg.backend import (BatchRenorm2d, SegmentationNet, activate,
                            _symmetric_padding, forward)
from docseg.netgraph import ArchConfig, build_graph, count_parameters
from docseg.weights import WeightStore


@pytest.fixture(scope="module")
def small_net():
    torch.manual_seed(0)
    net = SegmentationNet(ArchConfig(n_classes=2))
    net.init_weights(seed=0)
    return net


def test_parameter_count_matches_graph():
    cfg = ArchConfig(n_classes=2)
    net = SegmentationNet(cfg)
    report = count_parameters(build_graph(cfg))
    torch_total = sum(p.numel() for p in net.parameters())
    renorm_affine = sum(p.numel() for m in net.modules()
                       if isinstance(m, BatchRenorm2d)
                       for p in (m.weight, m.bias))
    assert torch_total - renorm_affine == report.total


def test_softmax_outputs_normalized(small_net):
    rng = np.random.default_rng(1)
    batch = rng.normal(size=(1, 64, 96, 3)).astype(np.float32)
    probs = small_net.predict_probabilities(batch)
    assert probs.shape == (1, 64, 96, 2)
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-5)
    assert probs.min() >= 0 and probs.max() <= 1


def test_sigmoid_outputs_bounded(small_net):
    rng = np.random.default_rng(2)
    batch = rng.normal(size=(1, 64, 64, 3)).astype(np.float32)
    probs = small_net.predict_probabilities(batch, mode="sigmoid")
    assert probs.min() >= 0 and probs.max() <= 1


def test_zero_weights_give_uniform_softmax():
    net = SegmentationNet(ArchConfig(n_classes=2))
    store = net.to_store()
    zero = WeightStore((name, np.zeros_like(arr)) for name, arr in store.items())
    probs = forward(ArchConfig(n_classes=2), zero,
                    np.ones((1, 32, 32, 3), np.float32))
    np.testing.assert_allclose(probs, 0.5, atol=1e-6)


def test_forward_deterministic(small_net):
    rng = np.random.default_rng(3)
    batch = rng.normal(size=(1, 64, 64, 3)).astype(np.float32)
    a = small_net.predict_probabilities(batch)
    b = small_net.predict_probabilities(batch)
    np.testing.assert_array_equal(a, b)


def test_arbitrary_sizes_padded(small_net):
    # not divisible by 32: padded internally, output cropped back
    batch = np.zeros((1, 300, 233, 3), np.float32)
    probs = small_net.predict_probabilities(batch)
    assert probs.shape == (1, 300, 233, 2)


def test_symmetric_padding_values():
    assert _symmetric_padding(64, 64) == (0, 0, 0, 0)
    left, right, top, bottom = _symmetric_padding(300, 300)
    assert left + right == 20 and top + bottom == 20
    assert abs(left - right) <= 1


def test_store_round_trip(tmp_path, small_net):
    store = small_net.to_store()
    path = tmp_path / "w.weights"
    store.save(path)
    loaded = WeightStore.load(path)
    other = SegmentationNet(ArchConfig(n_classes=2))
    other.load_store(loaded)
    batch = np.random.default_rng(4).normal(size=(1, 64, 64, 3)).astype(np.float32)
    np.testing.assert_array_equal(small_net.predict_probabilities(batch),
                                  other.predict_probabilities(batch))


def test_store_shape_mismatch_rejected(small_net):
    store = small_net.to_store()
    bad = WeightStore(store.items())
    bad["final_conv.weight"] = np.zeros((5, 32, 1, 1), np.float32)
    other = SegmentationNet(ArchConfig(n_classes=2))
    with pytest.raises(ValueError, match="shape mismatch"):
        other.load_store(bad)


def test_encoder_ingest(small_net):
    encoder_store = WeightStore(
        (name, arr) for name, arr in small_net.to_store().items()
        if name.startswith("encoder."))
    net = SegmentationNet(ArchConfig(n_classes=2, pretrained_encoder=True))
    net.load_encoder_store(encoder_store)
    got = net.state_dict()["encoder.conv1.weight"].numpy()
    np.testing.assert_array_equal(got, encoder_store["encoder.conv1.weight"])


def _central_difference_grad(fn, x, eps=1e-4):
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    gflat = grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = fn(x).item()
        flat[i] = orig - eps
        lo = fn(x).item()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def test_bilinear_upsample_gradient_matches_finite_differences():
    torch.manual_seed(5)
    x = torch.randn(1, 2, 8, 8, dtype=torch.float64, requires_grad=True)
    weight = torch.randn(1, 2, 16, 16, dtype=torch.float64)

    def fn(inp):
        up = F.interpolate(inp, scale_factor=2, mode="bilinear",
                           align_corners=False)
        return (up * weight).sum()

    fn(x).backward()
    analytic = x.grad.clone()
    numeric = _central_difference_grad(fn, x.detach().clone())
    rel = (analytic - numeric).norm() / numeric.norm()
    assert rel < 1e-3


def test_conv3x3_gradient_matches_finite_differences():
    torch.manual_seed(6)
    conv = torch.nn.Conv2d(2, 3, 3, padding=1).double()
    x = torch.randn(1, 2, 8, 8, dtype=torch.float64, requires_grad=True)
    weight = torch.randn(1, 3, 8, 8, dtype=torch.float64)

    def fn(inp):
        return (conv(inp) * weight).sum()

    fn(x).backward()
    analytic = x.grad.clone()
    numeric = _central_difference_grad(fn, x.detach().clone())
    rel = (analytic - numeric).norm() / numeric.norm()
    assert rel < 1e-3


def test_batch_renorm_clamps_and_eval_path():
    torch.manual_seed(7)
    bn = BatchRenorm2d(3)
    bn.train()
    x = torch.randn(4, 3, 8, 8)
    y = bn(x)
    assert y.shape == x.shape
    # running stats moved towards the batch
    assert not torch.allclose(bn.running_mean, torch.zeros(3))
    bn.eval()
    y2 = bn(x)
    assert torch.isfinite(y2).all()
    bn.set_clamps(0.5, 2.0, 0.1)
    assert bn.r_min == 0.5 and bn.r_max == 2.0 and bn.d_max == 0.1


def test_activate_rejects_unknown_mode():
    with pytest.raises(ValueError):
        activate(torch.zeros(1, 2, 4, 4), "linear")
