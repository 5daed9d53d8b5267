"""
Model builders for every architecture tag.

Image models are two convolution stages (3x3, stride 1, padding 1, then 2x2 max-pool) and a
one-layer head. A plain stage applies ReLU after the convolution; a CKAN stage applies the
spline activation instead. The head is a linear map or a KAN layer, with an optional hidden layer.
"""

import logging
from typing import List, Optional

from ..base_layer import BaseLayer, Sequential
from ..baseline_nn import Conv2dLayer, Flatten, LinearLayer, MaxPool2x2, ReLU
from ..ckan import CkanLayer
from ..config import ModelSpec
from ..kan import KanLayer, ka_theorem_network
from ..spline import SplineBasis

logger = logging.getLogger(__name__)

# arch -> (first stage is CKAN, second stage is CKAN, KAN head)
_IMAGE_LAYOUTS = {
    "cnn_mlp": (False, False, False),
    "ckan_cnn_mlp": (True, False, False),
    "cnn_kan": (False, False, True),
    "cnn_ckan_mlp": (False, True, False),
    "ckan_ckan_mlp": (True, True, False),
}

COMPARISON_MODELS = {
    "CNN+MLP": "cnn_mlp",
    "CKAN+CNN+MLP": "ckan_cnn_mlp",
    "CNN+KAN": "cnn_kan",
}


def spline_basis(spec: ModelSpec) -> SplineBasis:
    return SplineBasis(order=spec.spline_order, grid_size=spec.grid_size, x_min=float(spec.domain[0]), x_max=float(spec.domain[1]))


def is_regression(spec: ModelSpec) -> bool:
    return spec.arch == "ka_theorem"


def feature_count(spec: ModelSpec) -> int:
    side = (spec.image_size // 2) // 2
    return spec.channels[1] * side * side


def _stage(spec: ModelSpec, index: int, in_ch: int, out_ch: int, use_ckan: bool, deactivation_p: float, seed: Optional[int]) -> List[BaseLayer]:
    padding = spec.kernel_size // 2
    if use_ckan:
        conv: BaseLayer = CkanLayer(
            f"ckan{index}",
            in_ch,
            out_ch,
            kernel=spec.kernel_size,
            padding=padding,
            K=spec.ckan_k,
            basis=spline_basis(spec),
            deactivation_p=deactivation_p,
            silu_path=spec.ckan_silu,
            seed=seed,
        )
        return [conv, MaxPool2x2(f"pool{index}")]
    conv = Conv2dLayer(f"conv{index}", in_ch, out_ch, kernel=spec.kernel_size, padding=padding, seed=seed)
    return [conv, ReLU(f"relu{index}"), MaxPool2x2(f"pool{index}")]


def _head(spec: ModelSpec, d_in: int, use_kan: bool, deactivation_p: float, seed: Optional[int]) -> List[BaseLayer]:
    basis = spline_basis(spec)
    widths = [d_in] + ([spec.hidden_width] if spec.hidden_width else []) + [spec.num_classes]
    layers: List[BaseLayer] = []
    for i, (d_a, d_b) in enumerate(zip(widths[:-1], widths[1:])):
        name = f"head{i}"
        if use_kan:
            layers.append(KanLayer(name, d_a, d_b, basis, deactivation_p, seed))
        else:
            if i:
                layers.append(ReLU(f"head_relu{i}"))
            layers.append(LinearLayer(name, d_a, d_b, seed=seed))
    return layers


def build_model(spec: ModelSpec, seed: Optional[int] = 0, deactivation_p: Optional[float] = None) -> Sequential:
    """
    Instantiate the network for ``spec``.

    Args:
        spec: Architecture tag and hyperparameters
        seed: Run seed; every layer derives its own initialization and mask streams from it
        deactivation_p: Overrides ``spec.deactivation_p`` when given

    Returns:
        The network as a Sequential stack
    """
    spec.validate()
    p = spec.deactivation_p if deactivation_p is None else deactivation_p
    basis = spline_basis(spec)
    layers: List[BaseLayer]
    if spec.arch in _IMAGE_LAYOUTS:
        first_ckan, second_ckan, kan_head = _IMAGE_LAYOUTS[spec.arch]
        layers = _stage(spec, 1, spec.in_channels, spec.channels[0], first_ckan, p, seed)
        layers += _stage(spec, 2, spec.channels[0], spec.channels[1], second_ckan, p, seed)
        layers.append(Flatten("flatten"))
        layers += _head(spec, feature_count(spec), kan_head, p, seed)
    elif spec.arch == "edge_kan":
        layers = [Flatten("flatten"), KanLayer("edge", spec.input_dim, spec.num_classes, basis, p, seed)]
    elif spec.arch == "edge_kan_deep":
        hidden = 2 * spec.input_dim + 1
        layers = [
            Flatten("flatten"),
            KanLayer("inner", spec.input_dim, hidden, basis, p, seed),
            KanLayer("outer", hidden, spec.num_classes, basis, p, seed),
        ]
    elif spec.arch == "edge_linear":
        layers = [Flatten("flatten"), LinearLayer("edge", spec.input_dim, spec.num_classes, bias=False, seed=seed)]
    elif spec.arch == "ka_theorem":
        layers = list(ka_theorem_network(spec.input_dim, basis, p, seed))
    else:
        raise ValueError(f"unknown architecture {spec.arch!r}")
    network = Sequential(layers)
    logger.debug(f"Built {spec.arch} with {network.parameter_count()} parameters")
    return network


def spline_layers(network: Sequential) -> List[BaseLayer]:
    """Layers that carry Segment Deactivation masks."""
    return [layer for layer in network if isinstance(layer, (KanLayer, CkanLayer))]
