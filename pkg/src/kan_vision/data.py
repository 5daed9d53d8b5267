"""
Datasets: CIFAR binary files, balanced subsets, label noise, and the synthetic edge and regression tasks.

Every transformation returns a new dataset; inputs are never modified.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Tuple, Union

import numpy as np
import numpy.typing as npt

from .exceptions import DatasetError, MissingDataError
from .tensor_core import Rng, Tensor

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

IMAGE_SHAPE = (3, 32, 32)
PIXEL_BYTES = 3 * 32 * 32

# variant -> (label bytes before the pixels, class count)
CIFAR_VARIANTS: Dict[str, Tuple[int, int]] = {
    "cifar10": (1, 10),
    "cifar100": (2, 100),
}

CIFAR_FILES: Dict[str, Dict[str, List[str]]] = {
    "cifar10": {
        "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
        "test": ["test_batch.bin"],
    },
    "cifar100": {
        "train": ["train.bin"],
        "test": ["test.bin"],
    },
}

CIFAR_SUBDIRS = {"cifar10": "cifar-10-batches-bin", "cifar100": "cifar-100-binary"}

REGRESSION_FUNCTIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    "sin": np.sin,
    "square": np.square,
}


@dataclass(frozen=True)
class LabeledDataset:
    """Images [n, C, H, W] with values in [0, 1] and integer labels in [0, class_count)."""

    images: Tensor
    labels: npt.NDArray[np.int64]
    class_count: int

    def __post_init__(self) -> None:
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, indices: npt.NDArray[np.int64]) -> "LabeledDataset":
        return LabeledDataset(self.images[indices], self.labels[indices], self.class_count)

    def class_histogram(self) -> npt.NDArray[np.int64]:
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass(frozen=True)
class RegressionDataset:
    """Paired samples x [n, 1], y [n, 1]."""

    x: Tensor
    y: Tensor

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def subset(self, indices: npt.NDArray[np.int64]) -> "RegressionDataset":
        return RegressionDataset(self.x[indices], self.y[indices])


@dataclass(frozen=True)
class NoiseSpec:
    fraction: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"noise fraction must lie in [0, 1], got {self.fraction}")


def _variant(variant: str) -> Tuple[int, int]:
    if variant not in CIFAR_VARIANTS:
        raise ValueError(f"unknown CIFAR variant {variant!r}, expected one of {sorted(CIFAR_VARIANTS)}")
    return CIFAR_VARIANTS[variant]


def load_cifar(path: PathLike, variant: str = "cifar10") -> LabeledDataset:
    """
    Read one CIFAR binary file.

    CIFAR-10 records are a label byte followed by 3072 channel-major pixel bytes; CIFAR-100
    records carry a coarse and a fine label byte, and the fine label is used.
    """
    label_bytes, class_count = _variant(variant)
    path = Path(path)
    if not path.is_file():
        raise MissingDataError(f"CIFAR file not found: {path}")
    raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    record = label_bytes + PIXEL_BYTES
    if raw.size == 0 or raw.size % record:
        raise DatasetError(f"{path}: size {raw.size} is not a multiple of the {record}-byte {variant} record")
    records = raw.reshape(-1, record)
    labels = records[:, label_bytes - 1].astype(np.int64)
    if labels.max() >= class_count:
        bad = int(np.argmax(labels >= class_count))
        raise DatasetError(f"{path}: record {bad} has label {labels[bad]} outside [0, {class_count})")
    images = records[:, label_bytes:].astype(np.float64).reshape((-1,) + IMAGE_SHAPE) / 255.0
    logger.debug(f"Loaded {len(labels)} {variant} records from {path}")
    return LabeledDataset(images, labels, class_count)


def write_cifar(path: PathLike, dataset: LabeledDataset, variant: str = "cifar10") -> None:
    """Serialize to the CIFAR record layout. The CIFAR-100 coarse label byte is written as 0."""
    label_bytes, class_count = _variant(variant)
    if dataset.images.shape[1:] != IMAGE_SHAPE:
        raise ValueError(f"CIFAR images must be {IMAGE_SHAPE}, got {dataset.images.shape[1:]}")
    if dataset.class_count > class_count:
        raise ValueError(f"{variant} holds at most {class_count} classes")
    n = len(dataset)
    records = np.zeros((n, label_bytes + PIXEL_BYTES), dtype=np.uint8)
    records[:, label_bytes - 1] = dataset.labels
    records[:, label_bytes:] = np.rint(dataset.images.reshape(n, -1) * 255.0).astype(np.uint8)
    Path(path).write_bytes(records.tobytes())


def _resolve_cifar_dir(directory: Path, variant: str) -> Path:
    nested = directory / CIFAR_SUBDIRS[variant]
    return nested if nested.is_dir() else directory


def load_cifar_split(directory: PathLike, variant: str = "cifar10", split: str = "train") -> LabeledDataset:
    """Load the official files of one split, from ``directory`` or its extracted archive folder."""
    _, class_count = _variant(variant)
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    root = _resolve_cifar_dir(Path(directory), variant)
    parts = [load_cifar(root / name, variant) for name in CIFAR_FILES[variant][split]]
    images = np.concatenate([part.images for part in parts])
    labels = np.concatenate([part.labels for part in parts])
    logger.info(f"Loaded {variant} {split} split: {len(labels)} images from {root}")
    return LabeledDataset(images, labels, class_count)


@dataclass
class VerifyReport:
    """Outcome of ``verify_cifar_dir``: per-file record counts, per-split histograms and problems."""

    directory: str
    variant: str = ""
    records: Dict[str, int] = field(default_factory=dict)
    histograms: Dict[str, List[int]] = field(default_factory=dict)
    problems: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.variant) and not self.problems

    def to_dict(self) -> Dict[str, object]:
        return {"directory": self.directory, "variant": self.variant, "ok": self.ok, "records": self.records, "histograms": self.histograms, "problems": self.problems}


def verify_cifar_dir(directory: PathLike) -> VerifyReport:
    """Check that a directory holds a complete CIFAR-10 or CIFAR-100 binary release with every class present."""
    directory = Path(directory)
    report = VerifyReport(directory=str(directory))
    if not directory.is_dir():
        report.problems.append(f"not a directory: {directory}")
        return report
    for variant in ("cifar10", "cifar100"):
        root = _resolve_cifar_dir(directory, variant)
        if any((root / name).is_file() for names in CIFAR_FILES[variant].values() for name in names):
            report.variant = variant
            break
    if not report.variant:
        report.problems.append("no CIFAR-10 or CIFAR-100 binary files found")
        return report

    root = _resolve_cifar_dir(directory, report.variant)
    _, class_count = CIFAR_VARIANTS[report.variant]
    for split, names in CIFAR_FILES[report.variant].items():
        histogram = np.zeros(class_count, dtype=np.int64)
        for name in names:
            try:
                part = load_cifar(root / name, report.variant)
            except DatasetError as e:
                report.problems.append(str(e))
                continue
            report.records[name] = len(part)
            histogram += part.class_histogram()
        report.histograms[split] = histogram.tolist()
        empty = [c for c in range(class_count) if histogram[c] == 0]
        if histogram.sum() and empty:
            report.problems.append(f"{split} split has no samples for classes {empty}")
        elif histogram.sum() and histogram.min() != histogram.max():
            logger.warning(f"{split} split is not class balanced (min {histogram.min()}, max {histogram.max()})")
    return report


def _floor_count(fraction: float, n: int) -> int:
    return int(math.floor(fraction * n + 1e-9))


def balanced_subset(dataset: LabeledDataset, fraction: float, seed: int) -> LabeledDataset:
    """
    Equal number of samples per class: floor(fraction * n_c) for the smallest class size n_c.

    Selection within each class is uniform without replacement; the result is shuffled.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    histogram = dataset.class_histogram()
    present = histogram[histogram > 0]
    per_class = _floor_count(fraction, int(present.min())) if present.size else 0
    if per_class < 1:
        raise ValueError(f"fraction {fraction} selects no samples per class")
    rng = Rng.for_stream(seed, "data", "subset")
    chosen = []
    for label in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == label)
        if members.size == 0:
            continue
        chosen.append(members[rng.choice_without_replacement(members.size, per_class)])
    indices = np.concatenate(chosen)
    return dataset.subset(indices[rng.permutation(indices.size)])


def inject_label_noise(dataset: LabeledDataset, spec: NoiseSpec) -> LabeledDataset:
    """Change exactly round(fraction * n) labels, each to a uniformly drawn different class."""
    if not 0.0 <= spec.fraction <= 1.0:
        raise ValueError(f"noise fraction must lie in [0, 1], got {spec.fraction}")
    if dataset.class_count < 2:
        raise ValueError("label noise needs at least two classes")
    n = len(dataset)
    count = int(math.floor(spec.fraction * n + 0.5))
    labels = dataset.labels.copy()
    if count:
        rng = Rng.for_stream(spec.seed, "data", "noise")
        for index in rng.choice_without_replacement(n, count):
            replacement = rng.randbelow(dataset.class_count - 1)
            labels[index] = replacement + 1 if replacement >= labels[index] else replacement
    logger.debug(f"Injected label noise into {count} of {n} labels")
    return LabeledDataset(dataset.images, labels, dataset.class_count)


def _has_transition(bits: Tuple[int, ...], pattern: Tuple[int, int]) -> bool:
    return any((bits[t], bits[t + 1]) == pattern for t in range(len(bits) - 1))


def edge_dataset(side: str) -> LabeledDataset:
    """
    All 16 binary four-pixel rows as [16, 1, 1, 4] images.

    A left edge is an adjacent (1, 0) pair, a right edge an adjacent (0, 1) pair, at any position.
    """
    patterns = {"left": (1, 0), "right": (0, 1)}
    if side not in patterns:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    rows = list(itertools.product((0, 1), repeat=4))
    images = np.array(rows, dtype=np.float64).reshape(16, 1, 1, 4)
    labels = np.array([int(_has_transition(row, patterns[side])) for row in rows], dtype=np.int64)
    return LabeledDataset(images, labels, 2)


def is_separable(inputs: Tensor, labels: npt.NDArray[np.int64], bias: bool, weight_range: int = 4) -> bool:
    """
    Brute-force check for integer weights w (and bias b) in [-weight_range, weight_range] with
    w.x + b > 0 on every positive and <= 0 on every negative.

    The two-output argmax of a linear layer predicts class 1 exactly when the difference of its
    columns scores above zero, ties going to class 0, so this decides whether such a layer can
    classify the set perfectly. Complete for the four-pixel edge sets.
    """
    inputs = np.asarray(inputs, dtype=np.float64).reshape(len(labels), -1)
    if bias:
        inputs = np.hstack([inputs, np.ones((inputs.shape[0], 1))])
    values = range(-weight_range, weight_range + 1)
    candidates = np.array(list(itertools.product(values, repeat=inputs.shape[1])), dtype=np.float64)
    scores = candidates @ inputs.T
    positive = labels.astype(bool)
    separating = np.all(scores[:, positive] > 0, axis=1) & np.all(scores[:, ~positive] <= 0, axis=1)
    return bool(separating.any())


def synth_regression(fn: str, n: int, domain: Tuple[float, float] = (-math.pi, math.pi), noise_sd: float = 0.0, seed: int = 0) -> RegressionDataset:
    """x uniform on the domain, y = fn(x) + Normal(0, noise_sd)."""
    if fn not in REGRESSION_FUNCTIONS:
        raise ValueError(f"unknown regression function {fn!r}, expected one of {sorted(REGRESSION_FUNCTIONS)}")
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be nonnegative, got {noise_sd}")
    lo, hi = domain
    rng = Rng.for_stream(seed, "data", "regression", fn)
    x = lo + (hi - lo) * rng.uniform_array(n)
    y = REGRESSION_FUNCTIONS[fn](x)
    if noise_sd > 0:
        y = y + rng.normal(n, 0.0, noise_sd)
    return RegressionDataset(x.reshape(n, 1), y.reshape(n, 1))


def standardize(train: LabeledDataset, test: LabeledDataset) -> Tuple[LabeledDataset, LabeledDataset]:
    """Per-channel standardization with statistics from the training images."""
    axes = (0, 2, 3)
    mean = train.images.mean(axis=axes, keepdims=True)
    std = train.images.std(axis=axes, keepdims=True)
    std = np.where(std > 0, std, 1.0)
    return (
        LabeledDataset((train.images - mean) / std, train.labels, train.class_count),
        LabeledDataset((test.images - mean) / std, test.labels, test.class_count),
    )
