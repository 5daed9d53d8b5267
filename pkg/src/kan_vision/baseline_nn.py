"""
Baseline building blocks: plain convolution, linear map, ReLU, 2x2 max-pool, flatten,
the two training losses and the Adam optimizer.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import numpy.typing as npt

from .base_layer import BaseLayer
from .ckan import ConvCache, conv2d_backward, conv2d_forward
from .exceptions import ShapeMismatchError, StaleCacheError
from .tensor_core import Rng, Tensor, matmul

Labels = npt.NDArray[np.int64]


class Conv2dLayer(BaseLayer):
    """Convolution with He-normal initialization; shares the im2col kernels with the CKAN layer."""

    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1, padding: int = 1, seed: Optional[int] = None):
        super().__init__(name)
        self.stride = stride
        self.padding = padding
        fan_in = in_ch * kernel * kernel
        if seed is None:
            self.W = np.zeros((out_ch, in_ch, kernel, kernel))
        else:
            rng = Rng.for_stream(seed, name, "init")
            self.W = rng.normal(out_ch * fan_in, 0.0, math.sqrt(2.0 / fan_in)).reshape(out_ch, in_ch, kernel, kernel)
        self.b = np.zeros(out_ch)
        self._cache: Optional[ConvCache] = None

    def parameters(self) -> Dict[str, Tensor]:
        return {"W": self.W, "b": self.b}

    def forward(self, x: Tensor) -> Tensor:
        y, self._cache = conv2d_forward(self.W, self.b, x, self.stride, self.padding)
        return y

    def backward(self, grad_output: Tensor) -> Tensor:
        if self._cache is None:
            raise StaleCacheError(f"backward called on layer '{self.name}' before forward")
        grad_W, grad_b, grad_x = conv2d_backward(self.W, self._cache, grad_output)
        self.grads = {"W": grad_W, "b": grad_b}
        return grad_x


class LinearLayer(BaseLayer):
    """y = x W + b with W [d_in, d_out]. ``bias=False`` drops b entirely."""

    def __init__(self, name: str, d_in: int, d_out: int, bias: bool = True, seed: Optional[int] = None):
        super().__init__(name)
        self.d_in = d_in
        self.d_out = d_out
        self.bias = bias
        if seed is None:
            self.W = np.zeros((d_in, d_out))
        else:
            rng = Rng.for_stream(seed, name, "init")
            self.W = rng.normal(d_in * d_out, 0.0, math.sqrt(1.0 / d_in)).reshape(d_in, d_out)
        self.b = np.zeros(d_out)
        self._x: Optional[Tensor] = None

    def parameters(self) -> Dict[str, Tensor]:
        return {"W": self.W, "b": self.b} if self.bias else {"W": self.W}

    def forward(self, x: Tensor) -> Tensor:
        y, self._x = linear_forward(self.W, self.b if self.bias else None, x), x
        return y

    def backward(self, grad_output: Tensor) -> Tensor:
        if self._x is None:
            raise StaleCacheError(f"backward called on layer '{self.name}' before forward")
        grad_W, grad_b, grad_x = linear_backward(self.W, self._x, grad_output)
        self.grads = {"W": grad_W, "b": grad_b} if self.bias else {"W": grad_W}
        return grad_x


def linear_forward(W: Tensor, b: Optional[Tensor], x: Tensor) -> Tensor:
    y = matmul(x, W)
    return y + b if b is not None else y


def linear_backward(W: Tensor, x: Tensor, grad_output: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    if grad_output.shape != (x.shape[0], W.shape[1]):
        raise ShapeMismatchError("linear_backward", grad_output.shape, (x.shape[0], W.shape[1]))
    return matmul(x.T, grad_output), grad_output.sum(axis=0), matmul(grad_output, W.T)


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_backward(x: Tensor, grad_output: Tensor) -> Tensor:
    return grad_output * (x > 0)


class ReLU(BaseLayer):
    def __init__(self, name: str):
        super().__init__(name)
        self._x: Optional[Tensor] = None

    def forward(self, x: Tensor) -> Tensor:
        self._x = x
        return relu(x)

    def backward(self, grad_output: Tensor) -> Tensor:
        if self._x is None:
            raise StaleCacheError(f"backward called on layer '{self.name}' before forward")
        return relu_backward(self._x, grad_output)


def maxpool2x2_forward(x: Tensor) -> Tuple[Tensor, npt.NDArray[np.intp]]:
    """
    2x2 max-pool with stride 2; odd trailing rows and columns are dropped.

    Returns the pooled tensor and, per window, the row-major index (0..3) of the first maximum.
    """
    if x.ndim != 4:
        raise ShapeMismatchError("maxpool2x2", x.shape, detail="input must be [batch, channels, height, width]")
    batch, channels, height, width = x.shape
    oh, ow = height // 2, width // 2
    windows = x[:, :, : 2 * oh, : 2 * ow].reshape(batch, channels, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, oh, ow, 4)
    winners = np.argmax(windows, axis=-1)
    return np.take_along_axis(windows, winners[..., None], axis=-1)[..., 0], winners


def maxpool2x2_backward(x_shape: Tuple[int, ...], winners: npt.NDArray[np.intp], grad_output: Tensor) -> Tensor:
    batch, channels, height, width = x_shape
    oh, ow = winners.shape[2], winners.shape[3]
    routed = np.zeros((batch, channels, oh, ow, 4))
    np.put_along_axis(routed, winners[..., None], grad_output[..., None], axis=-1)
    grad_x = np.zeros(x_shape)
    grad_x[:, :, : 2 * oh, : 2 * ow] = routed.reshape(batch, channels, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, 2 * oh, 2 * ow)
    return grad_x


class MaxPool2x2(BaseLayer):
    def __init__(self, name: str):
        super().__init__(name)
        self._state: Optional[Tuple[Tuple[int, ...], npt.NDArray[np.intp]]] = None

    def forward(self, x: Tensor) -> Tensor:
        y, winners = maxpool2x2_forward(x)
        self._state = (x.shape, winners)
        return y

    def backward(self, grad_output: Tensor) -> Tensor:
        if self._state is None:
            raise StaleCacheError(f"backward called on layer '{self.name}' before forward")
        return maxpool2x2_backward(self._state[0], self._state[1], grad_output)


class Flatten(BaseLayer):
    def __init__(self, name: str):
        super().__init__(name)
        self._shape: Optional[Tuple[int, ...]] = None

    def forward(self, x: Tensor) -> Tensor:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_output: Tensor) -> Tensor:
        if self._shape is None:
            raise StaleCacheError(f"backward called on layer '{self.name}' before forward")
        return grad_output.reshape(self._shape)


def softmax_cross_entropy(logits: Tensor, labels: Labels) -> Tuple[float, Tensor]:
    """Mean cross-entropy via log-sum-exp, and its gradient (softmax - onehot) / batch."""
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatchError("softmax_cross_entropy", logits.shape, labels.shape)
    batch, classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(batch)
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / batch


def mean_squared_error(prediction: Tensor, target: Tensor) -> Tuple[float, Tensor]:
    """Mean of squared residuals over every element, and its gradient 2 (pred - target) / n."""
    if prediction.shape != target.shape:
        raise ShapeMismatchError("mean_squared_error", prediction.shape, target.shape)
    residual = prediction - target
    return float(np.mean(residual * residual)), 2.0 * residual / residual.size


@dataclass
class AdamState:
    """First and second moment buffers keyed like the parameters they track."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, Tensor] = field(default_factory=dict)
    v: Dict[str, Tensor] = field(default_factory=dict)


def adam_step(state: AdamState, params: Dict[str, Tensor], grads: Dict[str, Tensor]) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for key, param in params.items():
        grad = grads[key]
        if grad.shape != param.shape:
            raise ShapeMismatchError(f"adam_step {key}", param.shape, grad.shape)
        if key not in state.m:
            state.m[key] = np.zeros_like(param)
            state.v[key] = np.zeros_like(param)
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        param -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
