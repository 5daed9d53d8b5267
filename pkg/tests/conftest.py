"""Shared fixtures."""

import os
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from kan_vision.data import LabeledDataset, write_cifar
from kan_vision.spline import SplineBasis


@pytest.fixture
def basis() -> SplineBasis:
    return SplineBasis(order=3, grid_size=5)


@pytest.fixture
def np_rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def make_labeled(n_per_class: int, class_count: int, shape=(3, 32, 32), seed: int = 0) -> LabeledDataset:
    """Balanced dataset of byte-valued images, labels in class order."""
    rng = np.random.default_rng(seed)
    n = n_per_class * class_count
    images = rng.integers(0, 256, size=(n,) + tuple(shape)).astype(np.float64) / 255.0
    labels = np.repeat(np.arange(class_count, dtype=np.int64), n_per_class)
    return LabeledDataset(images, labels, class_count)


@pytest.fixture
def cifar10_dir(tmp_path: Path) -> Path:
    """A miniature CIFAR-10 release: four records per class in every training batch, two in the test batch."""
    directory = tmp_path / "cifar-10-batches-bin"
    directory.mkdir()
    for i in range(1, 6):
        write_cifar(directory / f"data_batch_{i}.bin", make_labeled(4, 10, seed=i))
    write_cifar(directory / "test_batch.bin", make_labeled(2, 10, seed=99))
    return tmp_path


@pytest.fixture
def real_cifar_dir() -> Path:
    path = os.environ.get("KAN_VISION_CIFAR_DIR")
    if not path:
        pytest.skip("KAN_VISION_CIFAR_DIR not set")
    return Path(path)


@pytest.fixture
def labeled_factory() -> Callable[..., LabeledDataset]:
    return make_labeled
