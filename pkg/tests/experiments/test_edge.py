"""Edge detection on four-pixel binary rows."""

import pytest

from kan_vision.config import ModelSpec, TrainConfig
from kan_vision.data import edge_dataset, is_separable
from kan_vision.experiments.training import train


def _final_accuracy(arch: str, side: str, epochs: int, seed: int = 0) -> float:
    data = edge_dataset(side)
    _, result = train(ModelSpec(arch=arch, num_classes=2, input_dim=4), data, data, TrainConfig(epochs=epochs, batch_size=None, lr=0.01, seed=seed))
    return result.final_records("train")[-1].accuracy


class TestEdgeDetection:
    @pytest.mark.parametrize("side", ["left", "right"])
    def test_single_layer_cannot_fit(self, side):
        """A single additive layer on binary inputs is affine in the pixels."""
        data = edge_dataset(side)
        assert not is_separable(data.images.reshape(16, 4), data.labels, bias=True)
        for arch in ("edge_kan", "edge_linear"):
            assert _final_accuracy(arch, side, epochs=200) < 1.0

    @pytest.mark.slow
    @pytest.mark.parametrize("side", ["left", "right"])
    def test_two_layer_kan_fits(self, side):
        assert _final_accuracy("edge_kan_deep", side, epochs=2000) == 1.0
