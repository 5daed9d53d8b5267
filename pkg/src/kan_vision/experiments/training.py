"""
Training loop, inference-mode evaluation and checkpoints.

The loss of every step is the data loss (cross-entropy, or MSE for regression) plus the
smoothness penalty over every spline plus the L1 penalty. Segment Deactivation masks are drawn
only in training mode; evaluation always runs in inference mode and consumes no random draws.
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .. import __version__
from ..base_layer import Sequential
from ..baseline_nn import AdamState, adam_step, mean_squared_error, softmax_cross_entropy
from ..config import ModelSpec, TrainConfig
from ..data import LabeledDataset, RegressionDataset
from ..exceptions import DivergenceError
from ..tensor_core import Rng, Tensor, load_tensors, save_tensors
from .models import build_model
from .results import ExperimentResult, Record, StepLog

logger = logging.getLogger(__name__)

Dataset = Union[LabeledDataset, RegressionDataset]

EVAL_BATCH = 256


@dataclass
class RunLabel:
    """Identifies the records of one run inside an experiment grid."""

    preset: str = "train"
    cell: str = "main"
    model: str = ""
    sweep_value: str = ""
    seed: int = 0
    fingerprint: str = ""


@dataclass
class Checkpoint:
    """Parameter tensors keyed ``<layer>.<param>`` plus the JSON metadata needed to rebuild the model."""

    tensors: Dict[str, Tensor]
    metadata: Dict[str, Any]

    @staticmethod
    def sidecar(path: Union[str, Path]) -> Path:
        return Path(path).with_suffix(".json")

    def save(self, path: Union[str, Path]) -> None:
        save_tensors(path, self.tensors)
        with open(self.sidecar(path), "w") as f:
            json.dump(self.metadata, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Checkpoint not found: {path}")
        tensors = load_tensors(path)
        metadata_path = cls.sidecar(path)
        metadata = json.loads(metadata_path.read_text()) if metadata_path.is_file() else {}
        return cls(tensors=tensors, metadata=metadata)

    def restore(self) -> Sequential:
        """Rebuild the network described by the metadata and load the stored parameters."""
        if "model" not in self.metadata:
            raise ValueError("checkpoint metadata does not describe a model")
        network = build_model(ModelSpec(**self.metadata["model"]), seed=None)
        network.load_parameters(self.tensors)
        return network


def snapshot(network: Sequential) -> Dict[str, Tensor]:
    return {key: value.copy() for key, value in network.named_parameters().items()}


def dataset_arrays(dataset: Dataset) -> Tuple[Tensor, Any]:
    if isinstance(dataset, RegressionDataset):
        return dataset.x, dataset.y
    return dataset.images, dataset.labels


def evaluate_arrays(network: Sequential, inputs: Tensor, targets: Any, regression: bool = False) -> Tuple[float, Optional[float]]:
    """Inference-mode loss and accuracy (None for regression) over the whole set."""
    network.eval()
    n = inputs.shape[0]
    weighted_loss = 0.0
    correct = 0
    for start in range(0, n, EVAL_BATCH):
        xb = inputs[start : start + EVAL_BATCH]
        yb = targets[start : start + EVAL_BATCH]
        output = network.forward(xb)
        loss, _ = mean_squared_error(output, yb) if regression else softmax_cross_entropy(output, yb)
        weighted_loss += loss * xb.shape[0]
        if not regression:
            correct += int(np.sum(np.argmax(output, axis=1) == yb))
    return weighted_loss / n, None if regression else correct / n


def evaluate(network: Sequential, dataset: Dataset) -> Tuple[float, Optional[float]]:
    inputs, targets = dataset_arrays(dataset)
    return evaluate_arrays(network, inputs, targets, isinstance(dataset, RegressionDataset))


class Trainer:
    """Runs Adam on a network with the configured regularizers and records per-epoch evaluations."""

    def __init__(self, network: Sequential, cfg: TrainConfig, regression: bool = False, record_timing: bool = False):
        self.network = network
        self.cfg = cfg
        self.regression = regression
        self.record_timing = record_timing
        self.params = network.named_parameters()
        self.optimizer = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
        self.shuffle_rng = Rng.for_stream(cfg.seed, "train", "shuffle")

    def data_loss(self, output: Tensor, targets: Any) -> Tuple[float, Tensor]:
        if self.regression:
            return mean_squared_error(output, targets)
        return softmax_cross_entropy(output, targets)

    def evaluate(self, inputs: Tensor, targets: Any) -> Tuple[float, Optional[float]]:
        return evaluate_arrays(self.network, inputs, targets, self.regression)

    def train_step(self, xb: Tensor, yb: Any, epoch: int, step: int) -> StepLog:
        self.network.train()
        output = self.network.forward(xb)
        data_loss, grad_output = self.data_loss(output, yb)
        penalty = self.network.regularization(self.cfg.lambda_smooth, self.cfg.lambda_l1, self.cfg.l1_scope)
        total = data_loss + penalty.smooth + penalty.l1
        if not math.isfinite(total):
            components = {"data_loss": data_loss, "smooth": penalty.smooth, "l1": penalty.l1}
            logger.error(f"Non-finite loss at epoch {epoch}, step {step}: {components}")
            raise DivergenceError(epoch, step, components)
        self.network.backward(grad_output)
        grads = self.network.named_gradients()
        for key, grad in penalty.gradients.items():
            grads[key] = grads[key] + grad
        adam_step(self.optimizer, self.params, grads)
        return StepLog(epoch=epoch, step=step, data_loss=data_loss, smooth=penalty.smooth, l1=penalty.l1, total=total)

    def _batches(self, n: int) -> list:
        batch_size = self.cfg.batch_size
        if batch_size is None or batch_size >= n:
            return [np.arange(n)]
        order = self.shuffle_rng.permutation(n)
        return [order[start : start + batch_size] for start in range(0, n, batch_size)]

    def fit(self, train_data: Dataset, test_data: Dataset, label: RunLabel) -> ExperimentResult:
        train_x, train_y = dataset_arrays(train_data)
        test_x, test_y = dataset_arrays(test_data)
        result = ExperimentResult()

        def record(epoch: int, wall_ms: float) -> None:
            for split, (x, y) in (("train", (train_x, train_y)), ("test", (test_x, test_y))):
                loss, accuracy = self.evaluate(x, y)
                result.records.append(Record(label.preset, label.cell, label.model, label.sweep_value, label.seed, epoch, split, loss, accuracy, wall_ms, label.fingerprint))

        record(0, 0.0)
        step = 0
        for epoch in range(1, self.cfg.epochs + 1):
            started = time.perf_counter()
            for indices in self._batches(train_x.shape[0]):
                step += 1
                result.steps.append(self.train_step(train_x[indices], train_y[indices], epoch, step))
            wall_ms = (time.perf_counter() - started) * 1000.0 if self.record_timing else 0.0
            if epoch % self.cfg.eval_every == 0 or epoch == self.cfg.epochs:
                record(epoch, wall_ms)
                latest = result.records[-1]
                logger.info(f"[{label.model} seed={label.seed} {label.sweep_value}] epoch {epoch}/{self.cfg.epochs} test loss {latest.loss:.4f}" + ("" if latest.accuracy is None else f" accuracy {latest.accuracy:.4f}"))
        return result


def train(
    spec: ModelSpec,
    train_data: Dataset,
    test_data: Dataset,
    cfg: TrainConfig,
    label: Optional[RunLabel] = None,
    record_timing: bool = False,
) -> Tuple[Checkpoint, ExperimentResult]:
    """
    Build the model for ``spec`` from ``cfg.seed`` and train it.

    Args:
        spec: Model architecture
        train_data: Training set, already reduced and noised
        test_data: Evaluation set
        cfg: Optimizer and regularization settings
        label: Record labels inside an experiment grid
        record_timing: Store epoch wall time in the records (breaks byte-identical reruns)

    Returns:
        Final checkpoint and the per-epoch records with the step log

    Raises:
        DivergenceError: If the loss becomes non-finite
    """
    label = label or RunLabel(model=spec.arch, seed=cfg.seed)
    network = build_model(spec, seed=cfg.seed, deactivation_p=cfg.deactivation_p)
    trainer = Trainer(network, cfg, regression=isinstance(train_data, RegressionDataset), record_timing=record_timing)
    result = trainer.fit(train_data, test_data, label)
    network.eval()
    metadata = {"model": asdict(spec), "train": asdict(cfg), "epochs_completed": cfg.epochs, "version": __version__}
    result.metadata = {key: metadata[key] for key in ("model", "train", "version")}
    return Checkpoint(snapshot(network), metadata), result
