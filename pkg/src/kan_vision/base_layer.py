"""
Base layer abstraction shared by every network building block.

Layers own their parameter arrays and update them in place, so optimizers and gradient
checks can hold references to the same buffers the forward pass reads.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from .tensor_core import Rng, Tensor

L1_SCOPES = ("all", "spline")


@dataclass
class Penalty:
    """Regularizer values and their gradients, keyed like ``named_parameters``."""

    smooth: float = 0.0
    l1: float = 0.0
    gradients: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.smooth + self.l1

    def merge(self, other: "Penalty") -> None:
        self.smooth += other.smooth
        self.l1 += other.l1
        for key, grad in other.gradients.items():
            if key in self.gradients:
                self.gradients[key] = self.gradients[key] + grad
            else:
                self.gradients[key] = grad


def l1_terms(parameters: Dict[str, Tensor], lambda_l1: float) -> Penalty:
    """lambda_l1 * sum |theta| over the given arrays, with subgradient sign(theta) (0 at 0)."""
    if lambda_l1 < 0:
        raise ValueError(f"L1 strength must be nonnegative, got {lambda_l1}")
    penalty = Penalty()
    if lambda_l1 == 0:
        return penalty
    for key, value in parameters.items():
        penalty.l1 += float(lambda_l1 * np.sum(np.abs(value)))
        penalty.gradients[key] = lambda_l1 * np.sign(value)
    return penalty


class BaseLayer(ABC):
    """
    Abstract base class for layers with hand-written forward and backward passes.

    Subclasses implement ``forward`` and ``backward``; trainable layers also override
    ``parameters`` and fill ``self.grads`` during ``backward``.
    """

    def __init__(self, name: str):
        self.name = name
        self.training = False
        self.grads: Dict[str, Tensor] = {}

    @abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        """Compute the layer output and keep whatever ``backward`` needs."""

    @abstractmethod
    def backward(self, grad_output: Tensor) -> Tensor:
        """Propagate dL/d(output) to dL/d(input), storing parameter gradients in ``self.grads``."""

    def parameters(self) -> Dict[str, Tensor]:
        """Trainable arrays by short key (``W``, ``c`` ...). Stateless layers return nothing."""
        return {}

    def named_parameters(self) -> Dict[str, Tensor]:
        return {f"{self.name}.{key}": value for key, value in self.parameters().items()}

    def named_gradients(self) -> Dict[str, Tensor]:
        return {f"{self.name}.{key}": value for key, value in self.grads.items()}

    def parameter_count(self) -> int:
        return int(sum(value.size for value in self.parameters().values()))

    def spline_parameters(self) -> Dict[str, Tensor]:
        """Spline coefficient arrays, the only ones the ``spline`` L1 scope touches."""
        return {}

    def regularization(self, lambda_smooth: float, lambda_l1: float, l1_scope: str = "all") -> Penalty:
        """Smoothness and L1 terms for this layer. The default covers layers without splines."""
        if lambda_smooth < 0:
            raise ValueError(f"smoothness strength must be nonnegative, got {lambda_smooth}")
        if l1_scope not in L1_SCOPES:
            raise ValueError(f"l1_scope must be one of {L1_SCOPES}, got {l1_scope!r}")
        scoped = self.parameters() if l1_scope == "all" else self.spline_parameters()
        penalty = l1_terms(scoped, lambda_l1)
        penalty.gradients = {f"{self.name}.{key}": grad for key, grad in penalty.gradients.items()}
        return penalty

    def rng_streams(self) -> List[Rng]:
        return []

    def train(self) -> None:
        self.training = True

    def eval(self) -> None:
        self.training = False

    def __str__(self) -> str:
        return f"{self.name} ({self.__class__.__name__})"


class Sequential:
    """Ordered stack of layers with whole-network forward, backward and regularization."""

    def __init__(self, layers: Sequence[BaseLayer]):
        names = [layer.name for layer in layers]
        if len(set(names)) != len(names):
            raise ValueError(f"layer names must be unique, got {names}")
        self.layers: List[BaseLayer] = list(layers)

    def __iter__(self) -> Iterator[BaseLayer]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, index: int) -> BaseLayer:
        return self.layers[index]

    def get(self, name: str) -> Optional[BaseLayer]:
        for layer in self.layers:
            if layer.name == name:
                return layer
        return None

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_output: Tensor) -> Tensor:
        for layer in reversed(self.layers):
            grad_output = layer.backward(grad_output)
        return grad_output

    def named_parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for layer in self.layers:
            params.update(layer.named_parameters())
        return params

    def named_gradients(self) -> Dict[str, Tensor]:
        grads: Dict[str, Tensor] = {}
        for layer in self.layers:
            grads.update(layer.named_gradients())
        return grads

    def parameter_count(self) -> int:
        return sum(layer.parameter_count() for layer in self.layers)

    def regularization(self, lambda_smooth: float, lambda_l1: float, l1_scope: str = "all") -> Penalty:
        total = Penalty()
        for layer in self.layers:
            total.merge(layer.regularization(lambda_smooth, lambda_l1, l1_scope))
        return total

    def rng_streams(self) -> List[Rng]:
        return [rng for layer in self.layers for rng in layer.rng_streams()]

    def train(self) -> None:
        for layer in self.layers:
            layer.train()

    def eval(self) -> None:
        for layer in self.layers:
            layer.eval()

    def load_parameters(self, tensors: Dict[str, Tensor]) -> None:
        """Copy checkpoint tensors into the live parameter buffers."""
        params = self.named_parameters()
        missing = sorted(set(params) - set(tensors))
        unexpected = sorted(set(tensors) - set(params))
        if missing or unexpected:
            raise KeyError(f"checkpoint keys differ: missing={missing}, unexpected={unexpected}")
        for key, value in tensors.items():
            if value.shape != params[key].shape:
                raise ValueError(f"{key}: checkpoint shape {value.shape} != model shape {params[key].shape}")
            params[key][...] = value
