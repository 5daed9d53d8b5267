"""
KAN layer: every edge (i, j) carries phi_ij(t) = w_b * silu(t) + w_s * S_ij(t), outputs sum over inputs.

Segment Deactivation replaces the spline term S_ij of an edge by its chord line with
probability p during training. The SiLU path is never deactivated, and inference mode
always uses the full splines.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .base_layer import BaseLayer, Penalty, Sequential, l1_terms
from .exceptions import ShapeMismatchError, StaleCacheError
from .spline import SplineBasis, chord_line, endpoint_bases, smoothness_penalty
from .tensor_core import Rng, Tensor, bernoulli_mask

logger = logging.getLogger(__name__)


def _sigmoid(x: Tensor) -> Tensor:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def silu(x: Tensor) -> Tensor:
    """x / (1 + exp(-x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return x * _sigmoid(x)


def silu_grad(x: Tensor) -> Tensor:
    x = np.asarray(x, dtype=np.float64)
    sig = _sigmoid(x)
    return sig * (1.0 + x * (1.0 - sig))


@dataclass
class KanCache:
    """Everything ``kan_backward`` needs from one forward pass."""

    token: int
    x: Tensor
    x_clamped: Tensor
    bases: Tensor
    silu_x: Tensor
    edge_values: Tensor
    mask: Tensor
    slope: Optional[Tensor] = None


class KanLayer(BaseLayer):
    """
    Fully connected KAN layer from ``d_in`` to ``d_out`` with a shared spline basis.

    Parameters: ``c`` [d_in, d_out, n_basis], ``w_b`` and ``w_s`` [d_in, d_out]. Passing a
    ``seed`` derives the initialization and mask streams from (seed, name).
    """

    def __init__(self, name: str, d_in: int, d_out: int, basis: Optional[SplineBasis] = None, deactivation_p: float = 0.0, seed: Optional[int] = None):
        super().__init__(name)
        if d_in < 1 or d_out < 1:
            raise ValueError(f"layer extents must be positive, got {d_in}x{d_out}")
        self.d_in = d_in
        self.d_out = d_out
        self.basis = basis or SplineBasis()
        self.deactivation_p = deactivation_p
        n = self.basis.n_basis
        self.w_b = np.ones((d_in, d_out))
        self.w_s = np.ones((d_in, d_out))
        if seed is None:
            self.c = np.zeros((d_in, d_out, n))
            self.rng: Optional[Rng] = None
        else:
            init_rng = Rng.for_stream(seed, name, "init")
            self.c = init_rng.normal(d_in * d_out * n, 0.0, 0.1 / math.sqrt(n)).reshape(d_in, d_out, n)
            self.rng = Rng.for_stream(seed, name, "mask")
        self.pinned_mask: Optional[Tensor] = None
        self._forward_count = 0
        self._cache: Optional[KanCache] = None

    @property
    def deactivation_p(self) -> float:
        return self._deactivation_p

    @deactivation_p.setter
    def deactivation_p(self, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"deactivation_p must lie in [0, 1], got {value}")
        self._deactivation_p = float(value)

    def parameters(self) -> Dict[str, Tensor]:
        return {"c": self.c, "w_b": self.w_b, "w_s": self.w_s}

    def spline_parameters(self) -> Dict[str, Tensor]:
        return {"c": self.c}

    def rng_streams(self) -> List[Rng]:
        return [self.rng] if self.rng is not None else []

    def draw_mask(self) -> Tensor:
        """Deactivation bits for this forward pass, one per edge."""
        shape = (self.d_in, self.d_out)
        if not self.training:
            return np.zeros(shape)
        if self.pinned_mask is not None:
            if self.pinned_mask.shape != shape:
                raise ShapeMismatchError("pinned mask", self.pinned_mask.shape, shape)
            return self.pinned_mask
        if self.rng is None:
            raise ValueError(f"training-mode forward of layer '{self.name}' needs an Rng")
        if self._deactivation_p == 0.0:
            return np.zeros(shape)
        return bernoulli_mask(self.rng, self._deactivation_p, shape)

    def forward(self, x: Tensor) -> Tensor:
        y, self._cache = kan_forward(self, x)
        return y

    def backward(self, grad_output: Tensor) -> Tensor:
        if self._cache is None:
            raise StaleCacheError(f"backward called on layer '{self.name}' before forward")
        grads = kan_backward(self, self._cache, grad_output)
        self.grads = {"c": grads["c"], "w_b": grads["w_b"], "w_s": grads["w_s"]}
        return grads["x"]

    def regularization(self, lambda_smooth: float, lambda_l1: float, l1_scope: str = "all") -> Penalty:
        penalty = super().regularization(lambda_smooth, lambda_l1, l1_scope)
        value, grad = smoothness_penalty(self.basis, self.c, lambda_smooth)
        penalty.merge(Penalty(smooth=value, gradients={f"{self.name}.c": grad}))
        return penalty


def kan_forward(layer: KanLayer, x: Tensor) -> Tuple[Tensor, KanCache]:
    """y[b, j] = sum_i w_b[i, j] silu(x[b, i]) + w_s[i, j] G_ij(x[b, i])."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.d_in:
        raise ShapeMismatchError("kan_forward", x.shape, (None, layer.d_in))
    basis = layer.basis
    mask = layer.draw_mask()
    x_clamped = basis.clamp(x)
    bases = basis._cox_de_boor(x_clamped, basis.order)
    # [d_in, batch, n] @ [d_in, n, d_out] -> [batch, d_in, d_out]
    edge_values = np.matmul(bases.transpose(1, 0, 2), layer.c.transpose(0, 2, 1)).transpose(1, 0, 2)
    slope = None
    if mask.any():
        slope, intercept = chord_line(basis, layer.c)
        chord = x_clamped[:, :, None] * slope + intercept
        edge_values = np.where(mask.astype(bool), chord, edge_values)
    silu_x = silu(x)
    y = silu_x @ layer.w_b + np.einsum("bij,ij->bj", edge_values, layer.w_s)
    layer._forward_count += 1
    cache = KanCache(token=layer._forward_count, x=x, x_clamped=x_clamped, bases=bases, silu_x=silu_x, edge_values=edge_values, mask=mask, slope=slope)
    return y, cache


def kan_backward(layer: KanLayer, cache: KanCache, grad_output: Tensor) -> Dict[str, Tensor]:
    """Exact gradients of the realized forward pass, including chord-replaced edges."""
    if cache.token != layer._forward_count:
        raise StaleCacheError(f"cache {cache.token} does not match the latest forward pass {layer._forward_count} of layer '{layer.name}'")
    batch = cache.x.shape[0]
    if grad_output.shape != (batch, layer.d_out):
        raise ShapeMismatchError("kan_backward", grad_output.shape, (batch, layer.d_out))
    basis = layer.basis
    mask = cache.mask
    active = 1.0 - mask

    grad_w_b = cache.silu_x.T @ grad_output
    grad_w_s = np.einsum("bj,bij->ij", grad_output, cache.edge_values)
    # dL/dG for every (batch, edge)
    weighted = grad_output[:, None, :] * layer.w_s[None, :, :]

    # [d_in, d_out, batch] @ [d_in, batch, n] -> [d_in, d_out, n]
    grad_c = np.matmul((weighted * active).transpose(1, 2, 0), cache.bases.transpose(1, 0, 2))
    if mask.any():
        start_basis, end_basis = endpoint_bases(basis)
        t = (cache.x_clamped - basis.x_min) / (basis.x_max - basis.x_min)
        masked = weighted * mask
        low = np.einsum("bij,bi->ij", masked, 1.0 - t)
        high = np.einsum("bij,bi->ij", masked, t)
        grad_c = grad_c + low[..., None] * start_basis + high[..., None] * end_basis

    derivative = basis._derivative(cache.x_clamped, basis.order, 1)
    slopes = np.matmul(derivative.transpose(1, 0, 2), layer.c.transpose(0, 2, 1)).transpose(1, 0, 2)
    if cache.slope is not None:
        slopes = np.where(mask.astype(bool), cache.slope, slopes)
    grad_x = silu_grad(cache.x) * (grad_output @ layer.w_b.T)
    grad_x = grad_x + basis.inside(cache.x) * np.einsum("bij,bij->bi", weighted, slopes)
    return {"c": grad_c, "w_b": grad_w_b, "w_s": grad_w_s, "x": grad_x}


def l1_penalty(layer: KanLayer, lambda_l1: float, scope: str = "all") -> Tuple[float, Dict[str, Tensor]]:
    """lambda_l1 * sum |theta| over c, w_b, w_s (or c alone for the ``spline`` scope)."""
    scoped = layer.parameters() if scope == "all" else layer.spline_parameters()
    penalty = l1_terms(scoped, lambda_l1)
    return penalty.l1, penalty.gradients


def ka_theorem_network(d: int, basis: Optional[SplineBasis] = None, deactivation_p: float = 0.0, seed: Optional[int] = None, d_out: int = 1) -> Sequential:
    """Two stacked KAN layers d -> 2d + 1 -> d_out, the superposition form of the representation theorem."""
    if d < 1:
        raise ValueError(f"input dimension must be at least 1, got {d}")
    basis = basis or SplineBasis()
    hidden = 2 * d + 1
    logger.debug(f"Building KA-theorem network {d} -> {hidden} -> {d_out}")
    return Sequential(
        [
            KanLayer("inner", d, hidden, basis, deactivation_p, seed),
            KanLayer("outer", hidden, d_out, basis, deactivation_p, seed),
        ]
    )
