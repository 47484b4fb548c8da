"""Tensor engine: forward semantics of every op plus gradient fidelity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hazeflow.errors import GraphError, ShapeError
from hazeflow.gradcheck import check_gradients
from hazeflow.tensor import (Tensor, concat_channels, conv2d, crop2d, gelu,
                             instance_norm, maxpool2d, no_grad,
                             spatial_attention, upsample_bilinear2x)


def tensor(rng, shape, lo=-1.0, hi=1.0, requires_grad=True):
    return Tensor(rng.uniform(lo, hi, shape).astype(np.float32),
                  requires_grad=requires_grad)


class TestConv2d:
    def test_1x1_identity(self, rng):
        x = tensor(rng, (2, 3, 5, 7))
        w = Tensor(np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1))
        out = conv2d(x, w)
        np.testing.assert_array_equal(out.data, x.data)

    def test_3x3_ones_kernel_center_sum(self):
        x = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
        w = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
        out = conv2d(x, w, padding=0)
        assert out.shape == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == pytest.approx(9.0)

    def test_zero_kernel_bias_only(self, rng):
        x = tensor(rng, (1, 3, 4, 4))
        w = Tensor(np.zeros((2, 3, 3, 3), dtype=np.float32))
        b = Tensor(np.array([0.25, -1.5], dtype=np.float32))
        out = conv2d(x, w, b, padding=1)
        assert np.all(out.data[0, 0] == np.float32(0.25))
        assert np.all(out.data[0, 1] == np.float32(-1.5))

    def test_channel_mismatch_raises(self, rng):
        x = tensor(rng, (1, 3, 4, 4))
        w = tensor(rng, (2, 4, 3, 3))
        with pytest.raises(ShapeError):
            conv2d(x, w)

    def test_same_padding_preserves_size(self, rng):
        x = tensor(rng, (1, 3, 11, 13))
        w3 = tensor(rng, (5, 3, 3, 3))
        w1 = tensor(rng, (5, 3, 1, 1))
        assert conv2d(x, w3, padding=1).shape == (1, 5, 11, 13)
        assert conv2d(x, w1, padding=0).shape == (1, 5, 11, 13)


class TestGelu:
    def test_zero(self):
        out = gelu(Tensor(np.zeros((1, 1, 2, 2), dtype=np.float32)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_one(self):
        # x * Phi(x) at 1, via an independent erf evaluation
        out = gelu(Tensor(np.full((1,), 1.0, dtype=np.float64)))
        assert out.data[0] == pytest.approx(0.8413447460685429, abs=1e-9)

    def test_far_negative_tail(self):
        out = gelu(Tensor(np.full((1,), -10.0, dtype=np.float64)))
        assert -1e-3 < float(out.data[0]) < 0.0


class TestMaxpool:
    def test_constant(self):
        x = Tensor(np.full((1, 2, 6, 6), 0.7, dtype=np.float32))
        out = maxpool2d(x)
        assert out.shape == (1, 2, 3, 3)
        assert np.all(out.data == np.float32(0.7))

    def test_window_max(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]], dtype=np.float32),
                   requires_grad=True)
        out = maxpool2d(x)
        assert out.data[0, 0, 0, 0] == 4.0

    def test_tie_gradient_goes_to_first_element(self):
        x = Tensor(np.full((1, 1, 2, 2), 5.0, dtype=np.float32),
                   requires_grad=True)
        maxpool2d(x).sum().backward()
        np.testing.assert_array_equal(
            x.grad[0, 0], np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.float32))

    def test_odd_size_replication(self):
        x = Tensor(np.arange(15, dtype=np.float32).reshape(1, 1, 3, 5))
        out = maxpool2d(x)
        assert out.shape == (1, 1, 2, 3)
        # bottom-right window consists of replicated last row/column
        assert out.data[0, 0, 1, 2] == 14.0


class TestUpsample:
    def test_constant(self):
        x = Tensor(np.full((1, 3, 2, 2), 0.3, dtype=np.float32))
        out = upsample_bilinear2x(x)
        assert out.shape == (1, 3, 4, 4)
        np.testing.assert_allclose(out.data, 0.3, rtol=1e-6)

    def test_interior_sample_positions(self):
        x = Tensor(np.array([[[[0.0, 1.0]]]], dtype=np.float32))
        out = upsample_bilinear2x(x)
        np.testing.assert_allclose(out.data[0, 0, :, :],
                                   [[0.0, 0.25, 0.75, 1.0]] * 2, atol=1e-7)

    def test_roundtrip_with_maxpool_on_constant(self):
        x = Tensor(np.full((1, 2, 4, 4), 0.6, dtype=np.float32))
        out = maxpool2d(upsample_bilinear2x(x))
        np.testing.assert_allclose(out.data, x.data, rtol=1e-6)


class TestInstanceNorm:
    def test_constant_channel_normalizes_to_zero(self):
        x = Tensor(np.full((1, 2, 4, 4), 3.3, dtype=np.float32))
        gain = Tensor(np.ones(2, dtype=np.float32))
        bias = Tensor(np.zeros(2, dtype=np.float32))
        out = instance_norm(x, gain, bias)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_post_norm_mean_is_zero(self, rng):
        x = tensor(rng, (2, 3, 6, 6))
        gain = Tensor(np.ones(3, dtype=np.float32))
        bias = Tensor(np.zeros(3, dtype=np.float32))
        out = instance_norm(x, gain, bias)
        means = out.data.mean(axis=(2, 3))
        assert np.abs(means).max() < 1e-5

    def test_zero_gain_collapses_to_bias(self, rng):
        x = tensor(rng, (1, 2, 4, 4))
        gain = Tensor(np.zeros(2, dtype=np.float32))
        bias = Tensor(np.array([0.9, -0.4], dtype=np.float32))
        out = instance_norm(x, gain, bias)
        assert np.all(out.data[0, 0] == np.float32(0.9))
        assert np.all(out.data[0, 1] == np.float32(-0.4))


class TestSpatialAttention:
    def test_zero_weights_halve_features(self, rng):
        feats = tensor(rng, (1, 4, 5, 5))
        w = Tensor(np.zeros((1, 4, 3, 3), dtype=np.float32))
        b = Tensor(np.zeros(1, dtype=np.float32))
        out = spatial_attention(feats, w, b)
        np.testing.assert_allclose(out.data, 0.5 * feats.data, rtol=1e-6)

    def test_gate_strictly_inside_unit_interval(self, rng):
        feats = Tensor(np.ones((1, 2, 4, 4), dtype=np.float32))
        w = tensor(rng, (1, 2, 3, 3), lo=-3, hi=3)
        b = tensor(rng, (1,))
        out = spatial_attention(feats, w, b)
        assert np.all(out.data > 0.0) and np.all(out.data < 1.0)

    def test_zero_features(self, rng):
        feats = Tensor(np.zeros((1, 3, 4, 4), dtype=np.float32))
        w = tensor(rng, (1, 3, 3, 3))
        b = tensor(rng, (1,))
        out = spatial_attention(feats, w, b)
        np.testing.assert_array_equal(out.data, 0.0)


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        x = tensor(rng, (2, 3, 4, 4))
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones_like(x.data))

    def test_sum_of_squares(self):
        x = Tensor(np.array([3.0], dtype=np.float32), requires_grad=True)
        (x * x).sum().backward()
        assert x.grad[0] == pytest.approx(6.0)

    def test_disconnected_tensor_raises(self):
        with pytest.raises(GraphError):
            Tensor(np.zeros(3, dtype=np.float32)).backward()

    def test_reused_node_accumulates(self):
        x = Tensor(np.array([2.0], dtype=np.float32), requires_grad=True)
        y = x * x + x * 3.0
        y.sum().backward()
        assert x.grad[0] == pytest.approx(7.0)  # 2x + 3

    def test_no_grad_suppresses_graph(self, rng):
        x = tensor(rng, (1, 2, 3, 3))
        with no_grad():
            y = (x * 2.0).sum()
        with pytest.raises(GraphError):
            y.backward()


# every differentiable op, finite-difference consistency in float32:
# mean-scaled random losses, combined tolerance rtol 1e-3 / atol 1e-4
_OP_CASES = {
    "conv3x3": None, "conv1x1": None, "gelu": None, "maxpool": None,
    "maxpool_odd": None, "upsample": None, "instance_norm": None,
    "sigmoid": None, "attention": None, "concat_crop": None,
    "clamp": None, "abs": None,
}


def _build_case(name, rng):
    def probe(shape):
        return Tensor(rng.uniform(-1, 1, shape).astype(np.float32))

    if name == "conv3x3":
        x, w, b = (tensor(rng, (2, 3, 5, 5)), tensor(rng, (4, 3, 3, 3)),
                   tensor(rng, (4,)))
        r = probe((2, 4, 5, 5))
        return lambda: (conv2d(x, w, b, padding=1) * r).mean(), [x, w, b]
    if name == "conv1x1":
        x, w, b = (tensor(rng, (1, 3, 4, 4)), tensor(rng, (2, 3, 1, 1)),
                   tensor(rng, (2,)))
        r = probe((1, 2, 4, 4))
        return lambda: (conv2d(x, w, b) * r).mean(), [x, w, b]
    if name == "gelu":
        x = tensor(rng, (2, 2, 3, 3), lo=-2, hi=2)
        r = probe((2, 2, 3, 3))
        return lambda: (gelu(x) * r).mean(), [x]
    if name == "maxpool":
        # distinct values so the argmax does not flip under perturbation
        x = Tensor((rng.permutation(64).reshape(1, 1, 8, 8) / 8.0)
                   .astype(np.float32), requires_grad=True)
        r = probe((1, 1, 4, 4))
        return lambda: (maxpool2d(x) * r).mean(), [x]
    if name == "maxpool_odd":
        x = Tensor((rng.permutation(35).reshape(1, 1, 5, 7) / 4.0)
                   .astype(np.float32), requires_grad=True)
        r = probe((1, 1, 3, 4))
        return lambda: (maxpool2d(x) * r).mean(), [x]
    if name == "upsample":
        x = tensor(rng, (1, 2, 3, 4))
        r = probe((1, 2, 6, 8))
        return lambda: (upsample_bilinear2x(x) * r).mean(), [x]
    if name == "instance_norm":
        x, g, b = tensor(rng, (2, 3, 4, 4)), tensor(rng, (3,)), tensor(rng, (3,))
        r = probe((2, 3, 4, 4))
        return lambda: (instance_norm(x, g, b) * r).mean(), [x, g, b]
    if name == "sigmoid":
        x = tensor(rng, (2, 3, 3, 3), lo=-3, hi=3)
        r = probe((2, 3, 3, 3))
        return lambda: (x.sigmoid() * r).mean(), [x]
    if name == "attention":
        x, w, b = (tensor(rng, (1, 4, 5, 5)), tensor(rng, (1, 4, 3, 3)),
                   tensor(rng, (1,)))
        r = probe((1, 4, 5, 5))
        return lambda: (spatial_attention(x, w, b) * r).mean(), [x, w, b]
    if name == "concat_crop":
        x, y = tensor(rng, (1, 2, 4, 4)), tensor(rng, (1, 3, 4, 4))
        r = probe((1, 5, 3, 2))
        return lambda: (crop2d(concat_channels([x, y]), 3, 2) * r).mean(), [x, y]
    if name == "clamp":
        # sample away from the kinks at 0 and 1 so FD never straddles them
        base = rng.uniform(0.1, 0.9, (2, 3, 3, 3))
        shift = rng.choice([-2.0, 0.0, 1.0], size=(2, 3, 3, 3))
        x = Tensor((base + shift).astype(np.float32), requires_grad=True)
        r = probe((2, 3, 3, 3))
        return lambda: (x.clamp(0.0, 1.0) * r).mean(), [x]
    if name == "abs":
        data = (rng.uniform(0.2, 2, (2, 3, 3, 3))
                * np.where(rng.uniform(size=(2, 3, 3, 3)) > 0.5, 1, -1))
        x = Tensor(data.astype(np.float32), requires_grad=True)
        r = probe((2, 3, 3, 3))
        return lambda: (x.abs() * r).mean(), [x]
    raise AssertionError(name)


@pytest.mark.parametrize("op_name", sorted(_OP_CASES))
def test_finite_difference_consistency(op_name):
    # 9 trials x 12 ops > 100 total random trials
    op_index = sorted(_OP_CASES).index(op_name)
    for trial in range(9):
        rng = np.random.default_rng(1000 * trial + op_index)
        f, leaves = _build_case(op_name, rng)
        ratios = check_gradients(f, leaves, h=1e-3, rtol=1e-3, atol=1e-4)
        assert max(ratios.values()) <= 1.0, \
            f"{op_name} trial {trial}: gradient mismatch {ratios}"


@settings(max_examples=25, deadline=None)
@given(h=st.integers(3, 12), w=st.integers(3, 12),
       c_in=st.integers(1, 4), c_out=st.integers(1, 4))
def test_shape_algebra(h, w, c_in, c_out):
    rng = np.random.default_rng(h * 100 + w)
    x = Tensor(rng.uniform(0, 1, (1, c_in, h, w)).astype(np.float32))
    k3 = Tensor(rng.uniform(-1, 1, (c_out, c_in, 3, 3)).astype(np.float32))
    assert conv2d(x, k3, padding=1).shape == (1, c_out, h, w)
    assert maxpool2d(x).shape == (1, c_in, (h + h % 2) // 2, (w + w % 2) // 2)
    assert upsample_bilinear2x(x).shape == (1, c_in, 2 * h, 2 * w)


def test_deterministic_forward_backward():
    def run():
        rng = np.random.default_rng(99)
        x = Tensor(rng.uniform(-1, 1, (2, 3, 8, 8)).astype(np.float32),
                   requires_grad=True)
        w = Tensor(rng.uniform(-1, 1, (4, 3, 3, 3)).astype(np.float32),
                   requires_grad=True)
        out = gelu(conv2d(x, w, padding=1))
        loss = (maxpool2d(out)).abs().mean()
        loss.backward()
        return loss.data.copy(), x.grad.copy(), w.grad.copy()

    first = run()
    second = run()
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_ops_produce_finite_values(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(-5, 5, (1, 3, 6, 6)).astype(np.float32))
    w = Tensor(rng.uniform(-2, 2, (2, 3, 3, 3)).astype(np.float32))
    g = Tensor(rng.uniform(-2, 2, (2,)).astype(np.float32))
    b = Tensor(rng.uniform(-2, 2, (2,)).astype(np.float32))
    out = instance_norm(conv2d(x, w, padding=1), g, b)
    out = upsample_bilinear2x(maxpool2d(gelu(out)))
    assert np.all(np.isfinite(out.data))
