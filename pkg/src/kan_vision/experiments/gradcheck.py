"""
Finite-difference gradient checks of whole models at tiny widths.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Tuple

import numpy as np

from ..base_layer import Sequential
from ..baseline_nn import mean_squared_error, softmax_cross_entropy
from ..config import ARCHITECTURES, ModelSpec
from ..exceptions import GradcheckError
from ..kan import KanLayer
from ..tensor_core import Rng, Tensor, central_difference, max_relative_error
from .models import build_model, is_regression, spline_layers

logger = logging.getLogger(__name__)

DEACTIVATION_MODES = ("none", "all")


@dataclass
class GroupResult:
    name: str
    max_relative_error: float
    entries_checked: int


@dataclass
class GradcheckReport:
    """Max relative error per parameter group, judged against one tolerance."""

    model: str
    tolerance: float
    deactivation: str
    groups: List[GroupResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failed_groups()

    def failed_groups(self) -> List[str]:
        return [group.name for group in self.groups if not group.max_relative_error < self.tolerance]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "tolerance": self.tolerance,
            "deactivation": self.deactivation,
            "passed": self.passed,
            "groups": {group.name: {"max_relative_error": group.max_relative_error, "entries_checked": group.entries_checked} for group in self.groups},
        }


def tiny_model_spec(arch: str) -> ModelSpec:
    """Smallest instance of ``arch`` that still exercises every layer type it contains."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}")
    if arch.startswith("edge"):
        return ModelSpec(arch=arch, num_classes=2, input_dim=4)
    if arch == "ka_theorem":
        return ModelSpec(arch=arch, input_dim=2)
    return ModelSpec(arch=arch, in_channels=2, image_size=8, num_classes=3, channels=[2, 3], grid_size=4)


def _fixed_batch(spec: ModelSpec, batch: int, seed: int) -> Tuple[Tensor, Any]:
    rng = Rng.for_stream(seed, "gradcheck", "batch")
    if spec.arch == "ka_theorem":
        x = rng.normal(batch * spec.input_dim, 0.0, 0.6).reshape(batch, spec.input_dim)
        return x, rng.normal(batch, 0.0, 1.0).reshape(batch, 1)
    if spec.arch.startswith("edge"):
        x = rng.uniform_array(batch * spec.input_dim).reshape(batch, 1, 1, spec.input_dim)
    else:
        x = rng.uniform_array(batch * spec.in_channels * spec.image_size**2).reshape(batch, spec.in_channels, spec.image_size, spec.image_size)
    labels = np.array([rng.randbelow(spec.num_classes) for _ in range(batch)], dtype=np.int64)
    return x, labels


def _pin_masks(network: Sequential, deactivation: str) -> None:
    for layer in spline_layers(network):
        shape = (layer.d_in, layer.d_out) if isinstance(layer, KanLayer) else (layer.out_ch, layer.K)
        layer.pinned_mask = np.ones(shape) if deactivation == "all" else np.zeros(shape)


def _sample_indices(target: Tensor, limit: int, rng: Rng) -> List[tuple]:
    if target.size <= limit:
        return list(np.ndindex(*target.shape))
    flat = rng.choice_without_replacement(target.size, limit)
    return [tuple(int(i) for i in np.unravel_index(int(index), target.shape)) for index in sorted(flat)]


def gradcheck(
    spec: ModelSpec,
    tolerance: float = 1e-5,
    deactivation: str = "none",
    seed: int = 0,
    lambda_smooth: float = 0.0,
    lambda_l1: float = 0.0,
    batch: int = 4,
    max_entries: int = 24,
    step: float = 1e-5,
    raise_on_failure: bool = True,
) -> GradcheckReport:
    """
    Compare analytic gradients of data loss plus regularizers with central differences.

    Masks are pinned (all zero for ``none``, all one for ``all``) so repeated forward passes
    see the same function. Large groups are checked at a seeded sample of entries.

    Raises:
        GradcheckError: When any group's max relative error reaches ``tolerance`` and
            ``raise_on_failure`` is set
    """
    if deactivation not in DEACTIVATION_MODES:
        raise ValueError(f"deactivation must be one of {DEACTIVATION_MODES}, got {deactivation!r}")
    network = build_model(replace(spec, deactivation_p=0.0), seed=seed)
    _pin_masks(network, deactivation)
    network.train()
    x, targets = _fixed_batch(spec, batch, seed)
    regression = is_regression(spec)

    def objective() -> float:
        output = network.forward(x)
        loss, _ = mean_squared_error(output, targets) if regression else softmax_cross_entropy(output, targets)
        return loss + network.regularization(lambda_smooth, lambda_l1).total

    output = network.forward(x)
    _, grad_output = mean_squared_error(output, targets) if regression else softmax_cross_entropy(output, targets)
    network.backward(grad_output)
    analytic = network.named_gradients()
    for key, grad in network.regularization(lambda_smooth, lambda_l1).gradients.items():
        analytic[key] = analytic[key] + grad

    report = GradcheckReport(model=spec.arch, tolerance=tolerance, deactivation=deactivation)
    sample_rng = Rng.for_stream(seed, "gradcheck", "sample")
    for key, target in network.named_parameters().items():
        indices = _sample_indices(target, max_entries, sample_rng)
        numeric = central_difference(objective, target, step, indices)
        selector = tuple(np.array(axis) for axis in zip(*indices))
        error = max_relative_error(analytic[key][selector], numeric[selector], floor=1e-8)
        report.groups.append(GroupResult(name=key, max_relative_error=error, entries_checked=len(indices)))
        logger.debug(f"gradcheck {spec.arch} {key}: max relative error {error:.3e} over {len(indices)} entries")

    if not report.passed:
        logger.warning(f"Gradient check failed for {spec.arch}: {report.failed_groups()}")
        if raise_on_failure:
            raise GradcheckError(report)
    return report


def check_model(arch: str, tolerance: float = 1e-5, deactivation: str = "none", seed: int = 0, raise_on_failure: bool = True) -> GradcheckReport:
    """Gradient check of the tiny instance of ``arch``."""
    return gradcheck(tiny_model_spec(arch), tolerance=tolerance, deactivation=deactivation, seed=seed, raise_on_failure=raise_on_failure)
