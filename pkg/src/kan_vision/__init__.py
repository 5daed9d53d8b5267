"""
kan-vision: Kolmogorov-Arnold layers for small vision models

Spline-edge KAN layers and convolutional KAN layers with a curvature penalty and Segment
Deactivation, plain CNN/MLP baselines, CIFAR loaders and the experiment harness that compares them.
"""

__version__ = "0.1.0"

from .base_layer import BaseLayer, Penalty, Sequential
from .baseline_nn import AdamState, Conv2dLayer, Flatten, LinearLayer, MaxPool2x2, ReLU, adam_step, mean_squared_error, softmax_cross_entropy
from .ckan import CkanLayer, ckan_activation, ckan_backward, ckan_forward, col2im, conv2d_backward, conv2d_forward, im2col
from .config import ConfigLoader, DataConfig, ModelSpec, OutputConfig, RunConfig, TrainConfig, create_sample_config, load_config
from .data import LabeledDataset, NoiseSpec, RegressionDataset, balanced_subset, edge_dataset, inject_label_noise, load_cifar, load_cifar_split, synth_regression, verify_cifar_dir
from .exceptions import ConfigError, DatasetError, DivergenceError, GradcheckError, KanVisionError, MissingDataError, ShapeMismatchError, StaleCacheError
from .kan import KanLayer, ka_theorem_network, kan_backward, kan_forward
from .spline import SplineBasis, basis_eval, chord_line, smoothness_penalty, spline_eval
from .tensor_core import Rng

__author__ = "kan-vision contributors"

__all__ = [
    # Layers
    "BaseLayer",
    "Sequential",
    "Penalty",
    "KanLayer",
    "CkanLayer",
    "Conv2dLayer",
    "LinearLayer",
    "ReLU",
    "MaxPool2x2",
    "Flatten",
    # Layer functions
    "kan_forward",
    "kan_backward",
    "ka_theorem_network",
    "ckan_forward",
    "ckan_backward",
    "ckan_activation",
    "conv2d_forward",
    "conv2d_backward",
    "im2col",
    "col2im",
    # Splines
    "SplineBasis",
    "basis_eval",
    "spline_eval",
    "chord_line",
    "smoothness_penalty",
    # Optimization
    "AdamState",
    "adam_step",
    "softmax_cross_entropy",
    "mean_squared_error",
    "Rng",
    # Data
    "LabeledDataset",
    "RegressionDataset",
    "NoiseSpec",
    "load_cifar",
    "load_cifar_split",
    "verify_cifar_dir",
    "balanced_subset",
    "inject_label_noise",
    "edge_dataset",
    "synth_regression",
    # Configuration
    "ConfigLoader",
    "RunConfig",
    "ModelSpec",
    "TrainConfig",
    "DataConfig",
    "OutputConfig",
    "load_config",
    "create_sample_config",
    # Exceptions
    "KanVisionError",
    "ShapeMismatchError",
    "StaleCacheError",
    "ConfigError",
    "DatasetError",
    "MissingDataError",
    "DivergenceError",
    "GradcheckError",
    # Metadata
    "__version__",
]
