"""Tests for B-spline bases, chord lines and the curvature penalty."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kan_vision.exceptions import ShapeMismatchError
from kan_vision.spline import (
    SplineBasis,
    basis_derivative,
    basis_eval,
    chord_line,
    fit_coefficients,
    greville_coefficients,
    smoothness_gram,
    smoothness_penalty,
    spline_d1,
    spline_d2,
    spline_eval,
)
from kan_vision.tensor_core import central_difference


class TestSplineBasis:
    """Test basis construction and validation."""

    def test_sizes(self, basis):
        assert basis.n_basis == 8
        assert len(basis.knots) == 5 + 2 * 3 + 1
        assert basis.spacing == pytest.approx(0.4)

    def test_knots_hit_domain_ends(self, basis):
        assert basis.knots[basis.order] == -1.0
        assert basis.knots[basis.order + basis.grid_size] == 1.0
        assert np.all(np.diff(basis.knots) > 0)

    @pytest.mark.parametrize("kwargs", [{"grid_size": 0}, {"order": 0}, {"order": 6}, {"x_min": 1.0, "x_max": 1.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SplineBasis(**kwargs)

    def test_hashable_and_equal(self):
        assert SplineBasis(3, 5) == SplineBasis(3, 5)
        assert len({SplineBasis(3, 5), SplineBasis(3, 5), SplineBasis(2, 5)}) == 2


class TestBasisEval:
    """Test Cox-de Boor evaluation."""

    @settings(max_examples=200, deadline=None)
    @given(x=st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
    def test_partition_of_unity(self, x):
        values = basis_eval(SplineBasis(3, 5), x)
        assert abs(values.sum() - 1.0) < 1e-12
        assert np.all(values >= 0.0)

    @pytest.mark.parametrize("order,grid_size", [(1, 3), (2, 4), (3, 5), (4, 7), (5, 2)])
    def test_partition_of_unity_across_orders(self, order, grid_size):
        basis = SplineBasis(order, grid_size)
        values = basis_eval(basis, np.linspace(-1.0, 1.0, 101))
        np.testing.assert_allclose(values.sum(axis=-1), 1.0, atol=1e-12)

    def test_cubic_cardinal_values_at_interior_knot(self, basis):
        values = basis_eval(basis, basis.knots[5])
        np.testing.assert_allclose(values[2:5], [1 / 6, 2 / 3, 1 / 6], atol=1e-12)
        assert np.all(values[:2] == 0.0)
        assert np.all(values[5:] == 0.0)

    def test_inputs_are_clamped(self, basis):
        np.testing.assert_array_equal(basis_eval(basis, 5.0), basis_eval(basis, 1.0))
        np.testing.assert_array_equal(basis_eval(basis, -7.0), basis_eval(basis, -1.0))

    @pytest.mark.parametrize("order,grid_size", [(1, 4), (2, 3), (3, 5), (5, 4)])
    def test_local_support(self, order, grid_size):
        basis = SplineBasis(order, grid_size)
        t = basis.knots
        x = np.linspace(-1.0, 1.0, 4001)
        x = x[np.min(np.abs(x[:, None] - t[None, :]), axis=1) > 1e-9]
        values = basis_eval(basis, x)
        for i in range(basis.n_basis):
            outside = (x < t[i]) | (x >= t[i + order + 1])
            assert np.all(values[outside, i] == 0.0), i
            assert np.all(values[~outside, i] > 0.0), i

    def test_vectorised_shape(self, basis):
        assert basis_eval(basis, np.zeros((4, 3))).shape == (4, 3, 8)

    def test_inside(self, basis):
        np.testing.assert_array_equal(basis.inside(np.array([-2.0, -1.0, 0.0, 1.0, 1.5])), [0, 1, 1, 1, 0])


class TestDerivatives:
    """Test basis derivatives against finite differences."""

    @pytest.mark.parametrize("nu", [1, 2])
    def test_matches_finite_difference(self, basis, nu):
        x = np.array([-0.93, -0.5, -0.11, 0.27, 0.66, 0.9])
        h = 1e-6
        lower = basis_derivative(basis, x - h, nu - 1)
        upper = basis_derivative(basis, x + h, nu - 1)
        np.testing.assert_allclose(basis_derivative(basis, x, nu), (upper - lower) / (2 * h), atol=1e-5)

    def test_derivatives_sum_to_zero(self, basis):
        x = np.linspace(-0.95, 0.95, 17)
        np.testing.assert_allclose(basis_derivative(basis, x, 1).sum(axis=-1), 0.0, atol=1e-10)

    def test_above_degree_is_zero(self):
        basis = SplineBasis(2, 4)
        assert np.all(basis_derivative(basis, np.array([0.1, 0.3]), 3) == 0.0)

    def test_negative_order_rejected(self, basis):
        with pytest.raises(ValueError):
            basis_derivative(basis, 0.0, -1)

    def test_cubic_polynomial_reproduced(self, basis):
        c = fit_coefficients(basis, lambda x: x**3)
        x = np.linspace(-0.9, 0.9, 11)
        np.testing.assert_allclose(spline_eval(basis, c, x), x**3, atol=1e-10)
        np.testing.assert_allclose(spline_d1(basis, c, x), 3 * x**2, atol=1e-8)
        np.testing.assert_allclose(spline_d2(basis, c, x), 6 * x, atol=1e-7)


class TestSplineEval:
    """Test spline evaluation and coefficient helpers."""

    def test_greville_is_exact_for_affine(self, basis):
        c = greville_coefficients(basis, lambda x: 2.0 * x - 0.5)
        x = np.linspace(-1.0, 1.0, 21)
        np.testing.assert_allclose(spline_eval(basis, c, x), 2.0 * x - 0.5, atol=1e-12)

    def test_leading_axes(self, basis, np_rng):
        c = np_rng.normal(size=(2, 3, basis.n_basis))
        assert spline_eval(basis, c, np.array(0.2)).shape == (2, 3)

    def test_wrong_coefficient_count(self, basis):
        with pytest.raises(ShapeMismatchError):
            spline_eval(basis, np.zeros(7), 0.0)


class TestChordLine:
    """Test the line through the spline's values at the domain ends."""

    def test_parabola(self, basis):
        slope, intercept = chord_line(basis, fit_coefficients(basis, lambda x: x**2))
        assert slope == pytest.approx(0.0, abs=1e-10)
        assert intercept == pytest.approx(1.0, abs=1e-10)

    def test_affine_spline_is_its_own_chord(self, basis):
        slope, intercept = chord_line(basis, greville_coefficients(basis, lambda x: 3.0 * x + 1.0))
        assert slope == pytest.approx(3.0)
        assert intercept == pytest.approx(1.0)

    def test_interpolates_endpoints(self, basis, np_rng):
        c = np_rng.normal(size=(4, basis.n_basis))
        slope, intercept = chord_line(basis, c)
        np.testing.assert_allclose(slope * -1.0 + intercept, spline_eval(basis, c, -1.0), atol=1e-12)
        np.testing.assert_allclose(slope * 1.0 + intercept, spline_eval(basis, c, 1.0), atol=1e-12)

    def test_shifted_domain(self, np_rng):
        basis = SplineBasis(3, 6, x_min=0.0, x_max=3.0)
        c = np_rng.normal(size=basis.n_basis)
        slope, intercept = chord_line(basis, c)
        assert intercept == pytest.approx(float(spline_eval(basis, c, 0.0)))
        assert slope * 3.0 + intercept == pytest.approx(float(spline_eval(basis, c, 3.0)))


class TestSmoothness:
    """Test the curvature Gram matrix and the penalty built on it."""

    def test_parabola_curvature(self, basis):
        c = fit_coefficients(basis, lambda x: x**2)
        assert float(smoothness_gram(basis).quadratic_form(c)) == pytest.approx(8.0, rel=1e-9)

    def test_affine_has_zero_curvature(self, basis):
        c = greville_coefficients(basis, lambda x: 0.7 * x - 0.2)
        assert float(smoothness_gram(basis).quadratic_form(c)) == pytest.approx(0.0, abs=1e-12)

    def test_gram_symmetric_positive_semidefinite(self, basis):
        matrix = smoothness_gram(basis).matrix
        np.testing.assert_array_equal(matrix, matrix.T)
        assert np.linalg.eigvalsh(matrix).min() > -1e-10

    @pytest.mark.parametrize("order,grid_size", [(3, 5), (4, 7), (2, 3), (5, 4)])
    def test_gram_matches_dense_quadrature(self, order, grid_size, np_rng):
        """Trapezoid rule over each knot span, stopping one ulp short of the next knot."""
        basis = SplineBasis(order, grid_size)
        c = np_rng.normal(size=basis.n_basis)
        spans = basis.knots[order : order + grid_size + 1]
        trapezoid = 0.0
        for a, b in zip(spans[:-1], spans[1:]):
            x = np.linspace(a, b, 100000 // grid_size + 1)
            x[-1] = np.nextafter(b, a)
            curvature = spline_d2(basis, c, x) ** 2
            trapezoid += float(np.sum(np.diff(x) * (curvature[1:] + curvature[:-1]) / 2))
        assert float(smoothness_gram(basis).quadratic_form(c)) == pytest.approx(trapezoid, rel=1e-5, abs=1e-5)

    def test_gram_is_cached(self, basis):
        assert smoothness_gram(basis) is smoothness_gram(SplineBasis(3, 5))

    def test_linear_order_gives_zero_matrix(self):
        assert np.all(smoothness_gram(SplineBasis(1, 4)).matrix == 0.0)

    def test_penalty_sums_splines(self, basis, np_rng):
        c = np_rng.normal(size=(3, 2, basis.n_basis))
        value, _ = smoothness_penalty(basis, c, 0.5)
        expected = 0.5 * float(np.sum(smoothness_gram(basis).quadratic_form(c)))
        assert value == pytest.approx(expected)

    def test_penalty_gradient(self, basis, np_rng):
        c = np_rng.normal(size=(2, basis.n_basis))
        _, grad = smoothness_penalty(basis, c, 0.3)
        numeric = central_difference(lambda: smoothness_penalty(basis, c, 0.3)[0], c)
        np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-8)

    def test_zero_strength(self, basis, np_rng):
        value, grad = smoothness_penalty(basis, np_rng.normal(size=basis.n_basis), 0.0)
        assert value == 0.0
        assert np.all(grad == 0.0)

    def test_negative_strength_rejected(self, basis):
        with pytest.raises(ValueError):
            smoothness_penalty(basis, np.zeros(basis.n_basis), -1.0)
