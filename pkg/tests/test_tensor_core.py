"""Tests for tensors, random streams and the tensor container format."""

import io

import numpy as np
import pytest

from kan_vision.exceptions import ShapeMismatchError
from kan_vision.tensor_core import (
    Rng,
    _splitmix64,
    as_tensor,
    bernoulli,
    bernoulli_mask,
    broadcast_add,
    central_difference,
    derive_seed,
    elementwise_apply,
    load_tensors,
    matmul,
    max_relative_error,
    read_tensor,
    reduce_sum,
    save_tensors,
    write_tensor,
)


class TestTensorOps:
    """Test the checked array helpers."""

    def test_matmul_identity(self):
        a = as_tensor([[1, 2], [3, 4]])
        np.testing.assert_array_equal(matmul(a, np.eye(2)), a)

    def test_matmul_zero(self):
        a = as_tensor([[1, 2], [3, 4]])
        np.testing.assert_array_equal(matmul(a, np.zeros((2, 2))), np.zeros((2, 2)))

    def test_matmul_values(self):
        result = matmul(as_tensor([[1, 2], [3, 4]]), as_tensor([[5, 6], [7, 8]]))
        np.testing.assert_array_equal(result, [[19, 22], [43, 50]])

    def test_matmul_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeMismatchError) as excinfo:
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))
        assert "(2, 3)" in str(excinfo.value)
        assert excinfo.value.left == (2, 3)
        assert excinfo.value.right == (2, 3)

    def test_matmul_associative(self, np_rng):
        a = np_rng.uniform(-1e3, 1e3, size=(3, 4))
        b = np_rng.uniform(-1e3, 1e3, size=(4, 5))
        c = np_rng.uniform(-1e3, 1e3, size=(5, 2))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right) / np.maximum(np.abs(left), 1.0)) < 1e-9

    def test_reduce_sum(self):
        assert reduce_sum(as_tensor([1, 2, 3])) == 6.0
        np.testing.assert_array_equal(reduce_sum(as_tensor([[1, 2], [3, 4]]), axis=0), [4, 6])

    def test_reduce_sum_bad_axis(self):
        with pytest.raises(ShapeMismatchError):
            reduce_sum(np.zeros((2, 2)), axis=2)

    def test_elementwise_apply_negate(self):
        np.testing.assert_array_equal(elementwise_apply(np.negative, as_tensor([0.0])), [0.0])

    def test_elementwise_apply_rejects_shape_change(self):
        with pytest.raises(ShapeMismatchError):
            elementwise_apply(lambda t: t.ravel()[:1], np.zeros((2, 2)))

    def test_broadcast_add(self):
        np.testing.assert_array_equal(broadcast_add(as_tensor([[1, 1], [1, 1]]), as_tensor([0, 2])), [[1, 3], [1, 3]])

    def test_broadcast_add_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            broadcast_add(np.zeros((2, 2)), np.zeros(3))

    def test_as_tensor_reshape_checks_count(self):
        assert as_tensor([1, 2, 3, 4, 5, 6], shape=(2, 3)).shape == (2, 3)
        with pytest.raises(ShapeMismatchError):
            as_tensor([1, 2, 3], shape=(2, 2))


class TestRng:
    """Test the SplitMix64-seeded xoshiro256** stream."""

    def test_splitmix64_reference_value(self):
        state, value = _splitmix64(0)
        assert state == 0x9E3779B97F4A7C15
        assert value == 0xE220A8397B1DCDAF

    def test_xoshiro_reference_sequence(self):
        rng = Rng(0)
        rng._s = [1, 2, 3, 4]
        assert [rng.next_u64() for _ in range(3)] == [11520, 0, 1509978240]

    def test_same_seed_same_sequence(self):
        assert [Rng(42).next_u64() for _ in range(5)] == [Rng(42).next_u64() for _ in range(5)]
        first = Rng(7)
        second = Rng(7)
        assert [first.next_u64() for _ in range(100)] == [second.next_u64() for _ in range(100)]

    def test_different_seeds_differ(self):
        assert Rng(1).next_u64() != Rng(2).next_u64()

    def test_position_counts_draws(self):
        rng = Rng(3)
        rng.uniform()
        rng.randbelow(10)
        rng.uniform_array(5)
        assert rng.position == 7

    def test_uniform_range(self):
        values = Rng(5).uniform_array(1000)
        assert values.min() >= 0.0
        assert values.max() < 1.0

    def test_randbelow_range(self):
        rng = Rng(11)
        draws = [rng.randbelow(3) for _ in range(300)]
        assert set(draws) == {0, 1, 2}
        with pytest.raises(ValueError):
            rng.randbelow(0)

    def test_randint(self):
        rng = Rng(13)
        assert all(5 <= rng.randint(5, 8) < 8 for _ in range(50))
        with pytest.raises(ValueError):
            rng.randint(3, 3)

    def test_permutation_is_permutation(self):
        order = Rng(17).permutation(50)
        assert sorted(order.tolist()) == list(range(50))

    def test_choice_without_replacement(self):
        picks = Rng(19).choice_without_replacement(20, 8)
        assert len(set(picks.tolist())) == 8
        assert all(0 <= p < 20 for p in picks)
        with pytest.raises(ValueError):
            Rng(19).choice_without_replacement(3, 4)

    def test_normal_moments(self):
        values = Rng(23).normal(20000, 1.5, 2.0)
        assert abs(values.mean() - 1.5) < 0.05
        assert abs(values.std() - 2.0) < 0.05

    def test_derived_streams_are_independent_of_each_other(self):
        assert derive_seed(0, "layer", "init") != derive_seed(0, "layer", "mask")
        assert derive_seed(0, "a") == derive_seed(0, "a")
        assert Rng.for_stream(0, "a").next_u64() == Rng(derive_seed(0, "a")).next_u64()


class TestBernoulli:
    """Test Bernoulli draws."""

    def test_degenerate_probabilities(self):
        rng = Rng(0)
        assert all(bernoulli(rng, 0.0) == 0 for _ in range(100))
        assert all(bernoulli(rng, 1.0) == 1 for _ in range(100))

    def test_consumes_one_draw(self):
        rng = Rng(0)
        bernoulli(rng, 0.3)
        assert rng.position == 1

    def test_empirical_mean(self):
        rng = Rng(2024)
        mean = sum(bernoulli(rng, 0.5) for _ in range(100000)) / 100000
        assert abs(mean - 0.5) < 0.01

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            bernoulli(Rng(0), 1.5)
        with pytest.raises(ValueError):
            bernoulli_mask(Rng(0), -0.1, (2, 2))

    def test_mask_shape_and_draws(self):
        rng = Rng(1)
        mask = bernoulli_mask(rng, 0.5, (3, 4))
        assert mask.shape == (3, 4)
        assert set(np.unique(mask)) <= {0.0, 1.0}
        assert rng.position == 12


class TestSerialization:
    """Test the binary tensor layout and the named container."""

    def test_layout(self):
        stream = io.BytesIO()
        write_tensor(stream, as_tensor([[1.0, 2.0, 3.0]]))
        raw = stream.getvalue()
        assert raw[:4] == (2).to_bytes(4, "little")
        assert raw[4:12] == (1).to_bytes(8, "little")
        assert raw[12:20] == (3).to_bytes(8, "little")
        assert raw[20:28] == np.float64(1.0).astype("<f8").tobytes()
        assert len(raw) == 4 + 16 + 24

    def test_read_back(self):
        tensor = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
        stream = io.BytesIO()
        write_tensor(stream, tensor)
        stream.seek(0)
        np.testing.assert_array_equal(read_tensor(stream), tensor)

    def test_truncated(self):
        stream = io.BytesIO()
        write_tensor(stream, np.ones(4))
        with pytest.raises(EOFError):
            read_tensor(io.BytesIO(stream.getvalue()[:-1]))

    def test_container(self, tmp_path):
        tensors = {"layer.c": np.ones((2, 3, 8)), "layer.w_b": np.full((2, 3), 0.5)}
        path = tmp_path / "model.kant"
        save_tensors(path, tensors)
        loaded = load_tensors(path)
        assert list(loaded) == ["layer.c", "layer.w_b"]
        np.testing.assert_array_equal(loaded["layer.w_b"], tensors["layer.w_b"])

    def test_container_magic(self, tmp_path):
        path = tmp_path / "bogus.kant"
        path.write_bytes(b"NOPE")
        with pytest.raises(ValueError):
            load_tensors(path)


class TestGradientHelpers:
    """Test the finite-difference helpers used by every gradient check."""

    def test_central_difference_quadratic(self):
        target = np.array([1.0, -2.0, 0.5])
        grad = central_difference(lambda: float(np.sum(target**2)), target)
        np.testing.assert_allclose(grad, 2 * target, atol=1e-8)
        np.testing.assert_array_equal(target, [1.0, -2.0, 0.5])

    def test_central_difference_indices(self):
        target = np.zeros((2, 2))
        grad = central_difference(lambda: float(target[0, 1] * 3.0), target, indices=[(0, 1)])
        assert grad[0, 1] == pytest.approx(3.0)
        assert grad[1, 1] == 0.0

    def test_max_relative_error(self):
        assert max_relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
        assert max_relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)
        assert max_relative_error(np.zeros(3), np.zeros(3)) == 0.0
