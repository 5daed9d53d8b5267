"""
Dense float64 tensors, deterministic random streams and the binary tensor format.

Tensors are plain C-ordered ``numpy.ndarray`` objects of dtype float64. The helpers in
this module add the shape checks and error messages the rest of the package relies on.
"""

import hashlib
import math
import struct
from pathlib import Path
from typing import BinaryIO, Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from .exceptions import ShapeMismatchError

Tensor = npt.NDArray[np.float64]

_MASK64 = (1 << 64) - 1
_CONTAINER_MAGIC = b"KANT"


def as_tensor(data: Union[Tensor, Sequence, float], shape: Optional[Sequence[int]] = None) -> Tensor:
    """Convert array-like data to a C-ordered float64 tensor, optionally reshaping a flat buffer."""
    tensor = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if shape is not None:
        expected = int(np.prod(shape, dtype=np.int64)) if len(shape) else 1
        if tensor.size != expected:
            raise ShapeMismatchError("as_tensor", tensor.shape, tuple(shape), "element count differs from product of extents")
        tensor = tensor.reshape(tuple(shape))
    return tensor


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m, k] and b [k, n]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    return np.matmul(a, b)


def elementwise_apply(fn: Callable[[Tensor], Tensor], tensor: Tensor) -> Tensor:
    """Apply a vectorised scalar function to every element."""
    result = np.asarray(fn(tensor), dtype=np.float64)
    if result.shape != tensor.shape:
        raise ShapeMismatchError("elementwise_apply", tensor.shape, result.shape, "function changed the shape")
    return result


def broadcast_add(a: Tensor, b: Tensor) -> Tensor:
    """Add two tensors with trailing-dimension broadcasting."""
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError("broadcast_add", a.shape, b.shape) from None
    return np.add(a, b)


def reduce_sum(tensor: Tensor, axis: Optional[int] = None) -> Union[float, Tensor]:
    """Sum over one axis, or over everything when ``axis`` is None."""
    if axis is None:
        return float(np.sum(tensor))
    if not -tensor.ndim <= axis < tensor.ndim:
        raise ShapeMismatchError("reduce_sum", tensor.shape, detail=f"axis {axis} out of range")
    return np.sum(tensor, axis=axis)


def _rotl(value: int, shift: int) -> int:
    return ((value << shift) | (value >> (64 - shift))) & _MASK64


def _splitmix64(state: int) -> Tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(run_seed: int, *names: str) -> int:
    """Derive an independent 64-bit stream seed from a run seed and a path of names."""
    key = ":".join([str(run_seed), *names])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")


class Rng:
    """
    xoshiro256** stream seeded through SplitMix64.

    The stream is single-owner: give each layer or worker its own instance, usually
    created with ``Rng.for_stream(run_seed, layer_name, purpose)``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        sm = self.seed
        words = []
        for _ in range(4):
            sm, word = _splitmix64(sm)
            words.append(word)
        self._s = words
        self.position = 0

    @classmethod
    def for_stream(cls, run_seed: int, *names: str) -> "Rng":
        return cls(derive_seed(run_seed, *names))

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        self.position += 1
        return result

    def uniform(self) -> float:
        """A double in [0, 1) built from the top 53 bits of one draw."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform_array(self, size: int) -> Tensor:
        return np.fromiter((self.uniform() for _ in range(size)), dtype=np.float64, count=size)

    def randbelow(self, bound: int) -> int:
        """Integer in [0, bound) by multiply-shift of one draw."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        return (self.next_u64() * bound) >> 64

    def randint(self, low: int, high: int) -> int:
        """Integer in [low, high)."""
        if high <= low:
            raise ValueError(f"empty range [{low}, {high})")
        return low + self.randbelow(high - low)

    def normal(self, size: int, mean: float = 0.0, std: float = 1.0) -> Tensor:
        """Box-Muller normals; consumes two uniforms per generated pair."""
        out = np.empty(size, dtype=np.float64)
        for i in range(0, size, 2):
            u1 = 1.0 - self.uniform()
            u2 = self.uniform()
            radius = math.sqrt(-2.0 * math.log(u1))
            out[i] = radius * math.cos(2.0 * math.pi * u2)
            if i + 1 < size:
                out[i + 1] = radius * math.sin(2.0 * math.pi * u2)
        return mean + std * out

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        """Fisher-Yates shuffle of range(n)."""
        order = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def choice_without_replacement(self, n: int, k: int) -> npt.NDArray[np.int64]:
        """k distinct indices from range(n), uniformly, via a partial Fisher-Yates pass."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot choose {k} items from {n}")
        pool = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k].copy()


def bernoulli(rng: Rng, p: float) -> int:
    """Return 1 with probability p. Consumes exactly one uniform draw."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability p must lie in [0, 1], got {p}")
    return 1 if rng.uniform() < p else 0


def bernoulli_mask(rng: Rng, p: float, shape: Sequence[int]) -> Tensor:
    """Row-major grid of independent Bernoulli bits, one uniform draw per bit."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability p must lie in [0, 1], got {p}")
    size = int(np.prod(shape, dtype=np.int64))
    bits = np.fromiter((rng.uniform() < p for _ in range(size)), dtype=np.float64, count=size)
    return bits.reshape(tuple(shape))


def write_tensor(stream: BinaryIO, tensor: Tensor) -> None:
    """u32 rank, rank x u64 extents, then row-major little-endian float64 data."""
    tensor = as_tensor(tensor)
    stream.write(struct.pack("<I", tensor.ndim))
    stream.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
    stream.write(tensor.astype("<f8").tobytes(order="C"))


def read_tensor(stream: BinaryIO) -> Tensor:
    header = stream.read(4)
    if len(header) != 4:
        raise EOFError("truncated tensor header")
    (rank,) = struct.unpack("<I", header)
    extents_raw = stream.read(8 * rank)
    if len(extents_raw) != 8 * rank:
        raise EOFError("truncated tensor extents")
    shape = struct.unpack(f"<{rank}Q", extents_raw)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = stream.read(8 * count)
    if len(payload) != 8 * count:
        raise EOFError("truncated tensor payload")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def save_tensors(path: Union[str, Path], tensors: Dict[str, Tensor]) -> None:
    """Write a named-tensor container: magic, u32 count, then (u32 name length, name, tensor) entries."""
    with open(path, "wb") as f:
        f.write(_CONTAINER_MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            write_tensor(f, tensor)


def load_tensors(path: Union[str, Path]) -> Dict[str, Tensor]:
    tensors: Dict[str, Tensor] = {}
    with open(path, "rb") as f:
        if f.read(4) != _CONTAINER_MAGIC:
            raise ValueError(f"{path} is not a tensor container")
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            (length,) = struct.unpack("<I", f.read(4))
            name = f.read(length).decode("utf-8")
            tensors[name] = read_tensor(f)
    return tensors


def max_relative_error(analytic: Tensor, numeric: Tensor, floor: float = 1e-12) -> float:
    """Largest absolute difference scaled by the larger of the two gradients' magnitudes."""
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def central_difference(fn: Callable[[], float], target: Tensor, step: float = 1e-5, indices: Optional[Iterable[Tuple[int, ...]]] = None) -> Tensor:
    """
    Central finite differences of a scalar function with respect to ``target``, perturbed in place.

    ``fn`` closes over ``target``; each entry is restored after it is perturbed.
    """
    grad = np.zeros_like(target)
    for index in indices if indices is not None else np.ndindex(*target.shape):
        original = target[index]
        target[index] = original + step
        upper = fn()
        target[index] = original - step
        lower = fn()
        target[index] = original
        grad[index] = (upper - lower) / (2.0 * step)
    return grad
