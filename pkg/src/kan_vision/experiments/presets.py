"""
Experiment presets: the sweep grid of every protocol at desk and paper scale.

A preset expands into grid cells; each cell is one (condition, model row, sweep value) and is
trained once per seed. Desk scale trains on a balanced 10% pool of CIFAR for 15 epochs; paper
scale uses the full data and longer schedules.
"""

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ..config import DataConfig, ModelSpec, RunConfig, TrainConfig
from .models import COMPARISON_MODELS

SCALES = ("desk", "paper")

EXP1_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
EXP2_NOISE = (0.1, 0.2, 0.3, 0.4, 0.5)
EXP3_LAMBDA_L1 = (0.0, 1e-4, 1e-3, 1e-2)
EXP3_CONDITIONS = {"noise30": {"noise": 0.3}, "data60": {"fraction": 0.6}}
EXP4_DEACTIVATION_P = 0.1
EXP4_LAMBDA_SMOOTH = 1e-3
SENSITIVITY_P = (0.0, 0.05, 0.1, 0.2, 0.3)
SENSITIVITY_LAMBDA = (0.0, 1e-4, 1e-3, 1e-2, 1e-1)


@dataclass
class GridCell:
    """One trainable configuration of a preset, without the seed."""

    preset: str
    cell: str
    model: str
    sweep_value: str
    config: RunConfig

    @property
    def key(self) -> str:
        return f"{self.preset}/{self.cell}/{self.model}/{self.sweep_value}"


def format_sweep(value: float) -> str:
    return f"{value:g}"


def _scaled(base: RunConfig, scale: str, dataset: str = "cifar10", num_classes: int = 10) -> RunConfig:
    """Base configuration of the CIFAR presets at the requested scale."""
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    desk = scale == "desk"
    return RunConfig(
        model=replace(base.model, in_channels=3, image_size=32, num_classes=num_classes),
        train=replace(base.train, epochs=15 if desk else 50, batch_size=128),
        data=replace(base.data, dataset=dataset, subset=0.1 if desk else 1.0),
        output=base.output,
    )


def _cell(preset: str, cell: str, model: str, sweep_value: str, config: RunConfig, arch: str, **train_updates: float) -> GridCell:
    return GridCell(
        preset=preset,
        cell=cell,
        model=model,
        sweep_value=sweep_value,
        config=RunConfig(
            model=replace(config.model, arch=arch),
            train=replace(config.train, **train_updates),
            data=config.data,
            output=config.output,
        ),
    )


def _exp1(base: RunConfig, scale: str) -> List[GridCell]:
    config = _scaled(base, scale)
    return [_cell("exp1", "main", model, format_sweep(f), config, arch, fraction=f) for f in EXP1_FRACTIONS for model, arch in COMPARISON_MODELS.items()]


def _exp2(base: RunConfig, scale: str) -> List[GridCell]:
    config = _scaled(base, scale)
    return [_cell("exp2", "main", model, format_sweep(eta), config, arch, noise=eta) for eta in EXP2_NOISE for model, arch in COMPARISON_MODELS.items()]


def _exp3(base: RunConfig, scale: str) -> List[GridCell]:
    config = _scaled(base, scale)
    cells = []
    for condition, updates in EXP3_CONDITIONS.items():
        for lam in EXP3_LAMBDA_L1:
            for model, arch in COMPARISON_MODELS.items():
                cells.append(_cell("exp3", condition, model, format_sweep(lam), config, arch, lambda_l1=lam, **updates))
    return cells


EXP4_ROWS: Dict[str, Tuple[str, float, float]] = {
    "CNN+MLP": ("cnn_mlp", 0.0, 0.0),
    "CNN+KAN": ("cnn_kan", 0.0, 0.0),
    "CNN+KAN+Smooth": ("cnn_kan", EXP4_LAMBDA_SMOOTH, 0.0),
    "CNN+KAN+SegDeact": ("cnn_kan", 0.0, EXP4_DEACTIVATION_P),
    "CNN+KAN+Smooth+SegDeact": ("cnn_kan", EXP4_LAMBDA_SMOOTH, EXP4_DEACTIVATION_P),
}


def _exp4(base: RunConfig, scale: str) -> List[GridCell]:
    config = _scaled(base, scale)
    return [_cell("exp4", "main", model, "clean", config, arch, lambda_smooth=lam, deactivation_p=p) for model, (arch, lam, p) in EXP4_ROWS.items()]


def _exp4_sensitivity(base: RunConfig, scale: str) -> List[GridCell]:
    config = _scaled(base, scale)
    cells = [_cell("exp4_sensitivity", "deactivation_p", "CNN+KAN", format_sweep(p), config, "cnn_kan", deactivation_p=p) for p in SENSITIVITY_P]
    cells += [_cell("exp4_sensitivity", "lambda_smooth", "CNN+KAN", format_sweep(lam), config, "cnn_kan", lambda_smooth=lam) for lam in SENSITIVITY_LAMBDA]
    return cells


EXP0_MODELS = {
    "CNN+MLP": "cnn_mlp",
    "CNN+KAN": "cnn_kan",
    "CKAN(first)+CNN+MLP": "ckan_cnn_mlp",
    "CNN+CKAN(last)+MLP": "cnn_ckan_mlp",
    "CKAN+CKAN+MLP": "ckan_ckan_mlp",
}


def _exp0(base: RunConfig, scale: str) -> List[GridCell]:
    config = _scaled(base, scale, dataset="cifar100", num_classes=100)
    return [_cell("exp0", "main", model, "clean", config, arch) for model, arch in EXP0_MODELS.items()]


EDGE_MODELS = {"Linear": "edge_linear", "KAN": "edge_kan", "KAN(deep)": "edge_kan_deep"}


def _exp_edge(base: RunConfig, scale: str) -> List[GridCell]:
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    cells = []
    for side in ("left", "right"):
        config = RunConfig(
            model=ModelSpec(num_classes=2, input_dim=4, grid_size=base.model.grid_size, spline_order=base.model.spline_order),
            train=TrainConfig(epochs=500 if scale == "desk" else 2000, batch_size=None, lr=0.01),
            data=DataConfig(dataset=f"edge_{side}"),
            output=base.output,
        )
        cells += [_cell("exp_edge", side, model, side, config, arch) for model, arch in EDGE_MODELS.items()]
    return cells


REGRESSION_ROWS: Dict[str, Tuple[float, float]] = {
    "KAN": (0.0, 0.0),
    "KAN+Smooth": (EXP4_LAMBDA_SMOOTH, 0.0),
    "KAN+SegDeact": (0.0, EXP4_DEACTIVATION_P),
    "KAN+Smooth+SegDeact": (EXP4_LAMBDA_SMOOTH, EXP4_DEACTIVATION_P),
}


def regression_config(base: RunConfig, scale: str = "desk") -> RunConfig:
    """Noisy sine fit with more spline intervals than the sample can pin down."""
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    return RunConfig(
        model=ModelSpec(arch="ka_theorem", input_dim=1, grid_size=20, domain=[-math.pi, math.pi]),
        train=TrainConfig(epochs=300 if scale == "desk" else 1000, batch_size=None, lr=0.01),
        data=DataConfig(dataset="regression", regression_fn="sin", regression_train_n=24, regression_test_n=512, regression_noise_sd=0.2),
        output=base.output,
    )


def _regression(base: RunConfig, scale: str) -> List[GridCell]:
    config = regression_config(base, scale)
    return [_cell("regression", "main", model, "sin", config, "ka_theorem", lambda_smooth=lam, deactivation_p=p) for model, (lam, p) in REGRESSION_ROWS.items()]


PRESETS: Dict[str, Callable[[RunConfig, str], List[GridCell]]] = {
    "exp0": _exp0,
    "exp1": _exp1,
    "exp2": _exp2,
    "exp3": _exp3,
    "exp4": _exp4,
    "exp4_sensitivity": _exp4_sensitivity,
    "exp_edge": _exp_edge,
    "regression": _regression,
}


def build_grid(preset: str, scale: str = "desk", base: Optional[RunConfig] = None) -> List[GridCell]:
    """Expand ``preset`` into its grid cells in table order."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
    return PRESETS[preset](base or RunConfig(), scale)


def preset_names() -> Sequence[str]:
    return tuple(PRESETS)
