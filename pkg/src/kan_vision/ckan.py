"""
Convolutional KAN layer: a 2D convolution followed by a per-channel mixture of spline activations.

For output channel i the activation is z_i = sum_k w_k[i, k] * phi_ik(y_i), where each phi_ik
has the KAN edge form w_b_act * silu(t) + S_ik(t). Segment Deactivation swaps S_ik for its chord
line with one mask bit per (channel, k) per training forward pass.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .base_layer import BaseLayer, Penalty
from .exceptions import ShapeMismatchError, StaleCacheError
from .kan import silu, silu_grad
from .spline import SplineBasis, chord_line, endpoint_bases, smoothness_penalty
from .tensor_core import Rng, Tensor, bernoulli_mask, matmul


def conv_output_size(size: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    """floor((size + 2 * padding - kernel) / stride) + 1"""
    if stride < 1 or padding < 0:
        raise ValueError(f"invalid stride {stride} or padding {padding}")
    if kernel > size + 2 * padding:
        raise ShapeMismatchError("conv2d", (size + 2 * padding,), (kernel,), "kernel larger than padded input")
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x: Tensor, kh: int, kw: int, stride: int = 1, padding: int = 0) -> Tensor:
    """Patch matrix [batch * oh * ow, channels * kh * kw], rows in (b, oy, ox) order."""
    batch, channels, height, width = x.shape
    oh = conv_output_size(height, kh, stride, padding)
    ow = conv_output_size(width, kw, stride, padding)
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.zeros((batch, channels, kh, kw, oh, ow))
    for dy in range(kh):
        y_end = dy + stride * oh
        for dx in range(kw):
            x_end = dx + stride * ow
            cols[:, :, dy, dx, :, :] = padded[:, :, dy:y_end:stride, dx:x_end:stride]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(batch * oh * ow, -1)


def col2im(cols: Tensor, x_shape: Tuple[int, int, int, int], kh: int, kw: int, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of ``im2col``: scatter-add patch rows back onto the input grid."""
    batch, channels, height, width = x_shape
    oh = conv_output_size(height, kh, stride, padding)
    ow = conv_output_size(width, kw, stride, padding)
    cols = cols.reshape(batch, oh, ow, channels, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    image = np.zeros((batch, channels, height + 2 * padding, width + 2 * padding))
    for dy in range(kh):
        y_end = dy + stride * oh
        for dx in range(kw):
            x_end = dx + stride * ow
            image[:, :, dy:y_end:stride, dx:x_end:stride] += cols[:, :, dy, dx, :, :]
    return image[:, :, padding : padding + height, padding : padding + width]


@dataclass
class ConvCache:
    x_shape: Tuple[int, int, int, int]
    cols: Tensor
    out_hw: Tuple[int, int]
    stride: int
    padding: int


def conv2d_forward(W: Tensor, b: Tensor, x: Tensor, stride: int = 1, padding: int = 0) -> Tuple[Tensor, ConvCache]:
    """Cross-correlation y[n, o] = sum_c W[o, c] * x[n, c] + b[o]."""
    if x.ndim != 4:
        raise ShapeMismatchError("conv2d", x.shape, detail="input must be [batch, channels, height, width]")
    out_ch, in_ch, kh, kw = W.shape
    if x.shape[1] != in_ch:
        raise ShapeMismatchError("conv2d", x.shape, W.shape, "input channels differ from kernel channels")
    if b.shape != (out_ch,):
        raise ShapeMismatchError("conv2d bias", b.shape, (out_ch,))
    batch, _, height, width = x.shape
    oh = conv_output_size(height, kh, stride, padding)
    ow = conv_output_size(width, kw, stride, padding)
    cols = im2col(x, kh, kw, stride, padding)
    out = matmul(cols, W.reshape(out_ch, -1).T) + b
    y = out.reshape(batch, oh, ow, out_ch).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y), ConvCache(x_shape=(batch, in_ch, height, width), cols=cols, out_hw=(oh, ow), stride=stride, padding=padding)


def conv2d_backward(W: Tensor, cache: ConvCache, grad_output: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Returns (dW, db, dx)."""
    out_ch, _, kh, kw = W.shape
    batch = cache.x_shape[0]
    expected = (batch, out_ch) + cache.out_hw
    if grad_output.shape != expected:
        raise ShapeMismatchError("conv2d_backward", grad_output.shape, expected)
    grad_rows = grad_output.transpose(0, 2, 3, 1).reshape(-1, out_ch)
    grad_W = matmul(grad_rows.T, cache.cols).reshape(W.shape)
    grad_b = grad_rows.sum(axis=0)
    grad_cols = matmul(grad_rows, W.reshape(out_ch, -1))
    grad_x = col2im(grad_cols, cache.x_shape, kh, kw, cache.stride, cache.padding)
    return grad_W, grad_b, grad_x


@dataclass
class ActivationCache:
    y: Tensor
    mask: Tensor
    # [batch, out_ch, H, W, K]
    phi: Tensor


@dataclass
class CkanCache:
    token: int
    conv: ConvCache
    activation: ActivationCache


class CkanLayer(BaseLayer):
    """
    Convolution then spline activation.

    Parameters: ``W`` [out_ch, in_ch, k, k], ``b`` [out_ch], ``c_act`` [out_ch, K, n_basis],
    ``w_b_act`` [out_ch, K] and ``w_k`` [out_ch, K]. With ``silu_path=False`` the SiLU term is
    dropped from every phi and ``w_b_act`` is not trained.
    """

    def __init__(
        self,
        name: str,
        in_ch: int,
        out_ch: int,
        kernel: int = 3,
        stride: int = 1,
        padding: int = 0,
        K: int = 1,
        basis: Optional[SplineBasis] = None,
        deactivation_p: float = 0.0,
        silu_path: bool = True,
        seed: Optional[int] = None,
    ):
        super().__init__(name)
        if in_ch < 1 or out_ch < 1 or kernel < 1 or K < 1:
            raise ValueError(f"invalid CKAN extents in_ch={in_ch} out_ch={out_ch} kernel={kernel} K={K}")
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.K = K
        self.basis = basis or SplineBasis()
        self.deactivation_p = deactivation_p
        self.silu_path = silu_path
        n = self.basis.n_basis
        fan_in = in_ch * kernel * kernel
        if seed is None:
            self.W = np.zeros((out_ch, in_ch, kernel, kernel))
            self.c_act = np.zeros((out_ch, K, n))
            self.rng: Optional[Rng] = None
        else:
            init_rng = Rng.for_stream(seed, name, "init")
            self.W = init_rng.normal(out_ch * fan_in, 0.0, math.sqrt(2.0 / fan_in)).reshape(out_ch, in_ch, kernel, kernel)
            self.c_act = init_rng.normal(out_ch * K * n, 0.0, 0.1 / math.sqrt(n)).reshape(out_ch, K, n)
            self.rng = Rng.for_stream(seed, name, "mask")
        self.b = np.zeros(out_ch)
        self.w_b_act = np.ones((out_ch, K))
        self.w_k = np.full((out_ch, K), 1.0 / K)
        self.pinned_mask: Optional[Tensor] = None
        self._forward_count = 0
        self._cache: Optional[CkanCache] = None

    @property
    def deactivation_p(self) -> float:
        return self._deactivation_p

    @deactivation_p.setter
    def deactivation_p(self, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"deactivation_p must lie in [0, 1], got {value}")
        self._deactivation_p = float(value)

    def parameters(self) -> Dict[str, Tensor]:
        params = {"W": self.W, "b": self.b, "c_act": self.c_act, "w_k": self.w_k}
        if self.silu_path:
            params["w_b_act"] = self.w_b_act
        return params

    def spline_parameters(self) -> Dict[str, Tensor]:
        return {"c_act": self.c_act}

    def rng_streams(self) -> List[Rng]:
        return [self.rng] if self.rng is not None else []

    def output_shape(self, height: int, width: int) -> Tuple[int, int, int]:
        return (
            self.out_ch,
            conv_output_size(height, self.kernel, self.stride, self.padding),
            conv_output_size(width, self.kernel, self.stride, self.padding),
        )

    def draw_mask(self) -> Tensor:
        shape = (self.out_ch, self.K)
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
        z, self._cache = ckan_forward(self, x)
        return z

    def backward(self, grad_output: Tensor) -> Tensor:
        if self._cache is None:
            raise StaleCacheError(f"backward called on layer '{self.name}' before forward")
        grads = ckan_backward(self, self._cache, grad_output)
        self.grads = {key: grads[key] for key in self.parameters()}
        return grads["x"]

    def regularization(self, lambda_smooth: float, lambda_l1: float, l1_scope: str = "all") -> Penalty:
        penalty = super().regularization(lambda_smooth, lambda_l1, l1_scope)
        value, grad = smoothness_penalty(self.basis, self.c_act, lambda_smooth)
        penalty.merge(Penalty(smooth=value, gradients={f"{self.name}.c_act": grad}))
        return penalty


def _phi_values(layer: CkanLayer, y: Tensor, mask: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Spline terms, their x-derivatives and bases, each [batch, out_ch, H, W, K(, n)]."""
    basis = layer.basis
    yc = basis.clamp(y)
    bases = basis._cox_de_boor(yc, basis.order)
    derivative = basis._derivative(yc, basis.order, 1)
    # [..., n] x [out_ch, K, n] contracted per channel
    spline = np.einsum("bchwn,ckn->bchwk", bases, layer.c_act)
    slope_values = np.einsum("bchwn,ckn->bchwk", derivative, layer.c_act)
    if mask.any():
        slope, intercept = chord_line(basis, layer.c_act)
        chord = yc[..., None] * slope[None, :, None, None, :] + intercept[None, :, None, None, :]
        bits = mask.astype(bool)[None, :, None, None, :]
        spline = np.where(bits, chord, spline)
        slope_values = np.where(bits, slope[None, :, None, None, :], slope_values)
    return spline, slope_values, bases


def ckan_activation(layer: CkanLayer, y: Tensor, mask: Optional[Tensor] = None) -> Tuple[Tensor, ActivationCache]:
    """z[:, i] = sum_k w_k[i, k] * (w_b_act[i, k] * silu(y[:, i]) + G_ik(y[:, i]))."""
    if y.ndim != 4 or y.shape[1] != layer.out_ch:
        raise ShapeMismatchError("ckan_activation", y.shape, (None, layer.out_ch, None, None))
    if mask is None:
        mask = layer.draw_mask()
    spline, _, _ = _phi_values(layer, y, mask)
    phi = spline
    if layer.silu_path:
        phi = phi + silu(y)[..., None] * layer.w_b_act[None, :, None, None, :]
    z = np.einsum("bchwk,ck->bchw", phi, layer.w_k)
    return z, ActivationCache(y=y, mask=mask, phi=phi)


def ckan_activation_backward(layer: CkanLayer, cache: ActivationCache, grad_output: Tensor) -> Dict[str, Tensor]:
    """Gradients for c_act, w_b_act, w_k and the pre-activation y. Spline bases are recomputed."""
    y = cache.y
    if grad_output.shape != y.shape:
        raise ShapeMismatchError("ckan_activation_backward", grad_output.shape, y.shape)
    basis = layer.basis
    mask = cache.mask
    _, slope_values, bases = _phi_values(layer, y, mask)

    grad_w_k = np.einsum("bchw,bchwk->ck", grad_output, cache.phi)
    # dL/dphi_ik at every position
    weighted = grad_output[..., None] * layer.w_k[None, :, None, None, :]

    active = 1.0 - mask
    grad_c = np.einsum("bchwk,bchwn->ckn", weighted, bases) * active[..., None]
    if mask.any():
        start_basis, end_basis = endpoint_bases(basis)
        t = (basis.clamp(y) - basis.x_min) / (basis.x_max - basis.x_min)
        low = np.einsum("bchwk,bchw->ck", weighted, 1.0 - t) * mask
        high = np.einsum("bchwk,bchw->ck", weighted, t) * mask
        grad_c = grad_c + low[..., None] * start_basis + high[..., None] * end_basis

    grad_y = basis.inside(y) * np.einsum("bchwk,bchwk->bchw", weighted, slope_values)
    grads = {"c_act": grad_c, "w_k": grad_w_k}
    if layer.silu_path:
        silu_y = silu(y)
        grads["w_b_act"] = np.einsum("bchwk,bchw->ck", weighted, silu_y)
        grad_y = grad_y + silu_grad(y) * np.einsum("bchwk,ck->bchw", weighted, layer.w_b_act)
    else:
        grads["w_b_act"] = np.zeros_like(layer.w_b_act)
    grads["y"] = grad_y
    return grads


def ckan_forward(layer: CkanLayer, x: Tensor) -> Tuple[Tensor, CkanCache]:
    x = np.asarray(x, dtype=np.float64)
    y, conv_cache = conv2d_forward(layer.W, layer.b, x, layer.stride, layer.padding)
    z, activation_cache = ckan_activation(layer, y)
    layer._forward_count += 1
    return z, CkanCache(token=layer._forward_count, conv=conv_cache, activation=activation_cache)


def ckan_backward(layer: CkanLayer, cache: CkanCache, grad_output: Tensor) -> Dict[str, Tensor]:
    """Joint backward through the activation and the convolution."""
    if cache.token != layer._forward_count:
        raise StaleCacheError(f"cache {cache.token} does not match the latest forward pass {layer._forward_count} of layer '{layer.name}'")
    grads = ckan_activation_backward(layer, cache.activation, grad_output)
    grad_W, grad_b, grad_x = conv2d_backward(layer.W, cache.conv, grads.pop("y"))
    grads.update({"W": grad_W, "b": grad_b, "x": grad_x})
    return grads
