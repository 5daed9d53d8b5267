"""
Uniform B-spline bases, their derivatives, chord lines and the curvature Gram matrix.

Inputs are clamped to the basis domain before evaluation, so partition of unity holds for
every input and gradients stay bounded. Coefficient arrays carry the basis along their last
axis; every function here is vectorised over leading axes.
"""

import functools
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np

from .exceptions import ShapeMismatchError
from .tensor_core import Tensor

MAX_ORDER = 5

ArrayLike = Union[float, Tensor]


@dataclass(frozen=True)
class SplineBasis:
    """
    Uniform B-spline basis of polynomial degree ``order`` with ``grid_size`` interior intervals.

    The knot vector continues the uniform spacing ``order`` knots beyond each end of the
    domain, giving ``grid_size + 2 * order + 1`` knots and ``grid_size + order`` basis functions.
    """

    order: int = 3
    grid_size: int = 5
    x_min: float = -1.0
    x_max: float = 1.0

    def __post_init__(self) -> None:
        if self.grid_size < 1:
            raise ValueError(f"grid_size must be at least 1, got {self.grid_size}")
        if not 1 <= self.order <= MAX_ORDER:
            raise ValueError(f"order must lie in [1, {MAX_ORDER}], got {self.order}")
        if not self.x_min < self.x_max:
            raise ValueError(f"empty domain [{self.x_min}, {self.x_max}]")

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.order

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / self.grid_size

    @property
    def domain(self) -> Tuple[float, float]:
        return (self.x_min, self.x_max)

    @functools.cached_property
    def knots(self) -> Tensor:
        offsets = np.arange(-self.order, self.grid_size + self.order + 1, dtype=np.float64)
        knots = self.x_min + (self.x_max - self.x_min) * offsets / self.grid_size
        knots[self.order] = self.x_min
        knots[self.order + self.grid_size] = self.x_max
        knots.setflags(write=False)
        return knots

    def clamp(self, x: ArrayLike) -> Tensor:
        return np.clip(np.asarray(x, dtype=np.float64), self.x_min, self.x_max)

    def inside(self, x: ArrayLike) -> Tensor:
        """1.0 where x lies in the closed domain (the clamp passes gradients), else 0.0."""
        x = np.asarray(x, dtype=np.float64)
        return ((x >= self.x_min) & (x <= self.x_max)).astype(np.float64)

    def metadata(self) -> dict:
        return {"order": self.order, "grid_size": self.grid_size, "x_min": self.x_min, "x_max": self.x_max}

    def _cox_de_boor(self, x: Tensor, degree: int) -> Tensor:
        t = self.knots
        xe = x[..., None]
        bases = ((xe >= t[:-1]) & (xe < t[1:])).astype(np.float64)
        for p in range(1, degree + 1):
            left = (xe - t[: -(p + 1)]) / (t[p:-1] - t[: -(p + 1)]) * bases[..., :-1]
            right = (t[p + 1 :] - xe) / (t[p + 1 :] - t[1:-p]) * bases[..., 1:]
            bases = left + right
        return bases

    def _derivative(self, x: Tensor, degree: int, nu: int) -> Tensor:
        if nu == 0:
            return self._cox_de_boor(x, degree)
        count = len(self.knots) - 1 - degree
        if nu > degree:
            return np.zeros(x.shape + (count,), dtype=np.float64)
        t = self.knots
        lower = self._derivative(x, degree - 1, nu - 1)
        left = lower[..., :-1] / (t[degree:-1] - t[: -(degree + 1)])
        right = lower[..., 1:] / (t[degree + 1 :] - t[1:-degree])
        return degree * (left - right)


def basis_eval(basis: SplineBasis, x: ArrayLike) -> Tensor:
    """Basis values at clamped x, shape ``x.shape + (n_basis,)``."""
    return basis._cox_de_boor(basis.clamp(x), basis.order)


def basis_derivative(basis: SplineBasis, x: ArrayLike, nu: int) -> Tensor:
    """``nu``-th derivative of every basis function at clamped x."""
    if nu < 0:
        raise ValueError(f"derivative order must be nonnegative, got {nu}")
    return basis._derivative(basis.clamp(x), basis.order, nu)


def _check_coefficients(basis: SplineBasis, c: Tensor) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 0 or c.shape[-1] != basis.n_basis:
        raise ShapeMismatchError("spline coefficients", c.shape, (basis.n_basis,), "last axis must equal n_basis")
    return c


def spline_eval(basis: SplineBasis, c: Tensor, x: ArrayLike) -> Tensor:
    c = _check_coefficients(basis, c)
    return basis_eval(basis, x) @ c


def spline_d1(basis: SplineBasis, c: Tensor, x: ArrayLike) -> Tensor:
    c = _check_coefficients(basis, c)
    return basis_derivative(basis, x, 1) @ c


def spline_d2(basis: SplineBasis, c: Tensor, x: ArrayLike) -> Tensor:
    c = _check_coefficients(basis, c)
    return basis_derivative(basis, x, 2) @ c


@functools.lru_cache(maxsize=None)
def endpoint_bases(basis: SplineBasis) -> Tuple[Tensor, Tensor]:
    """Basis vectors at x_min and x_max (read-only)."""
    start = basis_eval(basis, basis.x_min)
    end = basis_eval(basis, basis.x_max)
    start.setflags(write=False)
    end.setflags(write=False)
    return start, end


def chord_line(basis: SplineBasis, c: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Slope and intercept of the line through (x_min, S(x_min)) and (x_max, S(x_max)).

    For coefficient arrays of shape ``(..., n_basis)`` the result has shape ``(...)``.
    """
    c = _check_coefficients(basis, c)
    start_basis, end_basis = endpoint_bases(basis)
    s_start = c @ start_basis
    s_end = c @ end_basis
    slope = (s_end - s_start) / (basis.x_max - basis.x_min)
    intercept = s_start - slope * basis.x_min
    return slope, intercept


def greville_coefficients(basis: SplineBasis, fn: Callable[[Tensor], Tensor]) -> Tensor:
    """Coefficients fn(Greville abscissae); exact for affine fn."""
    t = basis.knots
    k = basis.order
    abscissae = np.array([t[i + 1 : i + k + 1].mean() for i in range(basis.n_basis)])
    return np.asarray(fn(abscissae), dtype=np.float64)


def fit_coefficients(basis: SplineBasis, fn: Callable[[Tensor], Tensor], samples_per_interval: int = 20) -> Tensor:
    """Least-squares interpolation of fn over the domain; exact for polynomials of degree <= order."""
    x = np.linspace(basis.x_min, basis.x_max, basis.grid_size * samples_per_interval + 1)
    design = basis_eval(basis, x)
    coefficients, *_ = np.linalg.lstsq(design, np.asarray(fn(x), dtype=np.float64), rcond=None)
    return coefficients


@dataclass(frozen=True)
class SmoothnessGram:
    """M[i, j] = integral of B_i'' B_j'' over the domain."""

    basis: SplineBasis
    matrix: Tensor

    def quadratic_form(self, c: Tensor) -> Tensor:
        """c^T M c over the last axis of c."""
        c = _check_coefficients(self.basis, c)
        return np.einsum("...i,ij,...j->...", c, self.matrix, c)


@functools.lru_cache(maxsize=None)
def smoothness_gram(basis: SplineBasis) -> SmoothnessGram:
    """
    Exact curvature Gram matrix.

    On each knot interval B'' is a polynomial of degree order - 2, so an (order - 1)-point
    Gauss-Legendre rule integrates the products exactly. Orders below 2 give the zero matrix.
    """
    n = basis.n_basis
    matrix = np.zeros((n, n), dtype=np.float64)
    if basis.order >= 2:
        nodes, weights = np.polynomial.legendre.leggauss(max(basis.order - 1, 1))
        t = basis.knots
        for m in range(basis.order, basis.order + basis.grid_size):
            lo, hi = t[m], t[m + 1]
            half = 0.5 * (hi - lo)
            points = lo + half * (nodes + 1.0)
            second = basis._derivative(points, basis.order, 2)
            matrix += half * np.einsum("q,qi,qj->ij", weights, second, second)
    matrix = 0.5 * (matrix + matrix.T)
    matrix.setflags(write=False)
    return SmoothnessGram(basis=basis, matrix=matrix)


def smoothness_penalty(basis: SplineBasis, c: Tensor, lam: float) -> Tuple[float, Tensor]:
    """lam * sum of c^T M c over every spline in c, and its gradient 2 * lam * M c."""
    if lam < 0:
        raise ValueError(f"smoothness strength must be nonnegative, got {lam}")
    c = _check_coefficients(basis, c)
    if lam == 0:
        return 0.0, np.zeros_like(c)
    gram = smoothness_gram(basis).matrix
    mc = c @ gram
    return float(lam * np.sum(c * mc)), 2.0 * lam * mc
