"""Tests for baseline layers, losses and the Adam optimizer."""

import numpy as np
import pytest

from kan_vision.base_layer import Sequential
from kan_vision.baseline_nn import (
    AdamState,
    Conv2dLayer,
    Flatten,
    LinearLayer,
    MaxPool2x2,
    ReLU,
    adam_step,
    maxpool2x2_backward,
    maxpool2x2_forward,
    mean_squared_error,
    relu,
    softmax_cross_entropy,
)
from kan_vision.exceptions import ShapeMismatchError, StaleCacheError
from kan_vision.tensor_core import central_difference, max_relative_error


class TestLayers:
    """Test the stateless and linear baseline layers."""

    def test_relu(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])

    def test_relu_backward_masks_nonpositive(self):
        layer = ReLU("relu")
        layer.forward(np.array([[-1.0, 0.0, 2.0]]))
        np.testing.assert_array_equal(layer.backward(np.ones((1, 3))), [[0.0, 0.0, 1.0]])

    def test_maxpool(self):
        y, winners = maxpool2x2_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        assert y.shape == (1, 1, 1, 1)
        assert y[0, 0, 0, 0] == 4.0
        assert winners[0, 0, 0, 0] == 3

    def test_maxpool_drops_odd_edge(self):
        x = np.arange(25, dtype=np.float64).reshape(1, 1, 5, 5)
        y, _ = maxpool2x2_forward(x)
        np.testing.assert_array_equal(y[0, 0], [[6.0, 8.0], [16.0, 18.0]])

    def test_maxpool_routes_gradient_to_first_maximum(self):
        x = np.ones((1, 1, 2, 2))
        _, winners = maxpool2x2_forward(x)
        grad = maxpool2x2_backward(x.shape, winners, np.full((1, 1, 1, 1), 5.0))
        np.testing.assert_array_equal(grad[0, 0], [[5.0, 0.0], [0.0, 0.0]])

    def test_flatten_round_trip_shape(self):
        layer = Flatten("flatten")
        y = layer.forward(np.zeros((2, 3, 4, 4)))
        assert y.shape == (2, 48)
        assert layer.backward(y).shape == (2, 3, 4, 4)

    def test_linear_without_bias(self):
        layer = LinearLayer("fc", 3, 2, bias=False, seed=0)
        assert sorted(layer.parameters()) == ["W"]
        layer.forward(np.ones((4, 3)))
        layer.backward(np.ones((4, 2)))
        assert sorted(layer.grads) == ["W"]

    def test_backward_before_forward(self):
        for layer in (ReLU("relu"), Flatten("flatten"), MaxPool2x2("pool"), LinearLayer("fc", 2, 2), Conv2dLayer("conv", 1, 1)):
            with pytest.raises(StaleCacheError):
                layer.backward(np.zeros((1, 1)))

    def test_conv_layer_keeps_spatial_size(self):
        layer = Conv2dLayer("conv", 3, 8, seed=0)
        assert layer.forward(np.zeros((2, 3, 16, 16))).shape == (2, 8, 16, 16)


class TestNetworkGradients:
    """Test a small baseline stack end to end against central differences."""

    def test_cnn_stack(self, np_rng):
        network = Sequential(
            [
                Conv2dLayer("conv", 2, 3, seed=1),
                ReLU("relu"),
                MaxPool2x2("pool"),
                Flatten("flatten"),
                LinearLayer("fc", 3 * 2 * 2, 4, seed=2),
            ]
        )
        x = np_rng.normal(size=(3, 2, 4, 4))
        labels = np.array([0, 3, 1])

        def objective():
            return softmax_cross_entropy(network.forward(x), labels)[0]

        loss, grad = softmax_cross_entropy(network.forward(x), labels)
        assert np.isfinite(loss)
        network.backward(grad)
        gradients = network.named_gradients()
        for key, value in network.named_parameters().items():
            assert max_relative_error(gradients[key], central_difference(objective, value)) < 1e-5, key


class TestLosses:
    """Test the cross-entropy and squared-error losses."""

    def test_uniform_logits(self):
        loss, _ = softmax_cross_entropy(np.zeros((4, 10)), np.array([0, 3, 7, 9]))
        assert loss == pytest.approx(2.302585, abs=1e-6)

    def test_large_logits_stay_finite(self):
        loss, grad = softmax_cross_entropy(np.array([[1000.0, -1000.0, 0.0]]), np.array([1]))
        assert loss == pytest.approx(2000.0)
        assert np.all(np.isfinite(grad))

    def test_cross_entropy_gradient(self, np_rng):
        logits = np_rng.normal(size=(5, 4))
        labels = np.array([0, 1, 2, 3, 1])
        _, grad = softmax_cross_entropy(logits, labels)
        numeric = central_difference(lambda: softmax_cross_entropy(logits, labels)[0], logits)
        np.testing.assert_allclose(grad, numeric, atol=1e-8)
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)

    def test_cross_entropy_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
        with pytest.raises(ShapeMismatchError):
            softmax_cross_entropy(np.zeros((2, 3)), np.array([0]))

    def test_mean_squared_error(self):
        loss, grad = mean_squared_error(np.array([[1.0], [3.0]]), np.array([[0.0], [1.0]]))
        assert loss == pytest.approx(2.5)
        np.testing.assert_allclose(grad, [[1.0], [2.0]])
        with pytest.raises(ShapeMismatchError):
            mean_squared_error(np.zeros((2, 1)), np.zeros(2))


class TestAdam:
    """Test the bias-corrected Adam update."""

    def test_first_step_moves_by_learning_rate(self):
        theta = np.array([1.0])
        adam_step(AdamState(lr=1e-3), {"theta": theta}, {"theta": np.array([2.0])})
        assert theta[0] == pytest.approx(1.0 - 0.001, abs=1e-9)

    def test_updates_in_place_and_tracks_moments(self):
        theta = np.array([1.0, -1.0])
        state = AdamState()
        adam_step(state, {"theta": theta}, {"theta": np.array([1.0, -1.0])})
        assert state.step == 1
        np.testing.assert_allclose(state.m["theta"], [0.1, -0.1])
        np.testing.assert_allclose(theta, [0.999, -0.999], atol=1e-9)

    def test_converges_on_quadratic(self):
        theta = np.array([1.0])
        state = AdamState(lr=0.01)
        for _ in range(2000):
            adam_step(state, {"theta": theta}, {"theta": 2.0 * theta})
        assert abs(theta[0]) < 0.05

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            adam_step(AdamState(), {"theta": np.zeros(2)}, {"theta": np.zeros(3)})
