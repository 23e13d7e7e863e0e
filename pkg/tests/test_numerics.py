import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from sensorformer.numerics import (
    AdamState,
    ContractError,
    NumericError,
    Parameter,
    ShapeError,
    Tensor,
    adam_step,
    allocations,
    count_macs,
    finite_diff_check,
    gelu,
    layer_norm,
    linear,
    matmul,
    mul,
    no_grad,
    softmax_rows,
    square,
    tsum,
)


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])

    def test_row_by_column(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_matches_triple_loop(self, rng):
        A = rng.standard_normal((5, 7))
        B = rng.standard_normal((7, 3))
        expected = oracles.matmul(A.tolist(), B.tolist())
        assert oracles.max_abs_diff(matmul(Tensor(A), Tensor(B)).data.tolist(), expected) < 1e-12

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))

    def test_batched_broadcast_grad(self, rng):
        x = Parameter(rng.standard_normal((2, 3, 4)), "x")
        W = Parameter(rng.standard_normal((4, 5)), "W")
        assert finite_diff_check(lambda: tsum(square(matmul(x, W))), [x, W], 1e-5) < 1e-7

    def test_mac_counter(self):
        with count_macs() as c:
            matmul(Tensor(np.ones((3, 2, 4))), Tensor(np.ones((4, 5))))
        assert c.total == 3 * 2 * 4 * 5


class TestSoftmax:
    def test_uniform_row(self):
        np.testing.assert_allclose(softmax_rows(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3], atol=1e-15)

    def test_large_logits_do_not_overflow(self):
        out = softmax_rows(Tensor([[1000.0, 0.0]])).data
        assert np.isfinite(out).all()
        assert out[0, 0] == 1.0 and out[0, 1] == 0.0

    def test_matches_naive(self, rng):
        M = rng.standard_normal((4, 6))
        out = softmax_rows(Tensor(M)).data
        expected = [oracles.softmax(r) for r in M.tolist()]
        assert oracles.max_abs_diff(out.tolist(), expected) < 1e-12
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)

    def test_nan_rejected(self):
        with pytest.raises(NumericError):
            softmax_rows(Tensor([[0.0, np.nan]]))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 9)),
                  elements=st.floats(-1e3, 1e3)))
    def test_rows_are_probability_vectors(self, m):
        out = softmax_rows(Tensor(m)).data
        assert (out >= 0).all()
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)


class TestLayerNorm:
    def test_constant_vector_maps_to_zero(self):
        out = layer_norm(Tensor([[5.0, 5.0, 5.0, 5.0]]), Tensor(np.ones(4)), Tensor(np.zeros(4)), 1e-5)
        np.testing.assert_array_equal(out.data, np.zeros((1, 4)))

    def test_hand_case(self):
        out = layer_norm(Tensor([1.0, 2.0, 3.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)), 0.0)
        np.testing.assert_allclose(out.data, [-math.sqrt(1.5), 0.0, math.sqrt(1.5)], atol=1e-14)

    def test_matches_scalar_oracle(self, rng):
        x = rng.standard_normal((3, 8)) * 4 + 2
        g, b = rng.standard_normal(8), rng.standard_normal(8)
        out = layer_norm(Tensor(x), Tensor(g), Tensor(b), 1e-5).data
        expected = [oracles.layer_norm(r, g.tolist(), b.tolist(), 1e-5) for r in x.tolist()]
        assert oracles.max_abs_diff(out.tolist(), expected) < 1e-12
        plain = layer_norm(Tensor(x), Tensor(np.ones(8)), Tensor(np.zeros(8)), 1e-5).data
        assert np.abs(plain.mean(axis=1)).max() < 1e-7

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            layer_norm(Tensor(np.zeros((2, 3))), Tensor(np.ones(4)), Tensor(np.zeros(4)))

    def test_gradients(self, rng):
        x = Parameter(rng.standard_normal((3, 5)), "x")
        g = Parameter(rng.standard_normal(5), "g")
        b = Parameter(rng.standard_normal(5), "b")
        w = rng.standard_normal((3, 5))
        err = finite_diff_check(lambda: tsum(mul(layer_norm(x, g, b), w)), [x, g, b], 1e-5)
        assert err < 1e-6


class TestLinear:
    def test_identity(self, rng):
        x = rng.standard_normal((4, 3))
        out = linear(Tensor(x), Parameter(np.eye(3)), Parameter(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x)

    def test_hand_case(self):
        out = linear(Tensor([[1.0, 1.0]]), Parameter([[2.0], [3.0]]), Parameter([1.0]))
        assert out.data.tolist() == [[6.0]]

    def test_matches_matmul_plus_bias(self, rng):
        x, W, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 6)), rng.standard_normal(6)
        out = linear(Tensor(x), Parameter(W), Parameter(b)).data
        expected = [[[v + bb for v, bb in zip(row, b)] for row in oracles.matmul(xs.tolist(), W.tolist())] for xs in x]
        assert oracles.max_abs_diff(out.tolist(), expected) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            linear(Tensor(np.zeros((2, 3))), Parameter(np.zeros((4, 2))))


class TestBackward:
    def test_linear_map_gradient_is_input(self, rng):
        x = rng.standard_normal((1, 4))
        W = Parameter(rng.standard_normal((4, 3)), "W")
        tsum(matmul(Tensor(x), W)).backward()
        np.testing.assert_allclose(W.grad, np.repeat(x.T, 3, axis=1))

    def test_squared_norm(self, rng):
        x = Parameter(rng.standard_normal(5), "x")
        tsum(square(x)).backward()
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_non_scalar_rejected(self):
        x = Parameter(np.ones(3))
        with pytest.raises(ContractError):
            mul(x, 2.0).backward()

    def test_repeated_calls_accumulate(self):
        x = Parameter(np.array([1.0, -2.0]))
        for _ in range(2):
            tsum(square(x)).backward()
        np.testing.assert_allclose(x.grad, 4 * x.data)

    def test_shared_parameter_accumulated_once(self):
        x = Parameter(np.array([3.0]))
        loss = tsum(mul(x, x) + mul(x, 2.0))  # x^2 + 2x
        loss.backward()
        assert x.grad.tolist() == [8.0]

    def test_no_grad_records_nothing(self):
        x = Parameter(np.ones(2))
        with no_grad():
            y = mul(x, 3.0)
        assert not y.requires_grad and y._parents == ()

    def test_gelu_gradient(self, rng):
        x = Parameter(rng.standard_normal(7) * 2, "x")
        assert finite_diff_check(lambda: tsum(gelu(x)), x, 1e-5) < 1e-8
        expected = [oracles.gelu(v) for v in x.data.tolist()]
        assert oracles.max_abs_diff(gelu(x).data.tolist(), expected) < 1e-14


class TestAdam:
    def test_zero_gradient_leaves_parameter(self):
        p = Parameter(np.array([1.5, -0.5]))
        p.grad = np.zeros(2)
        adam_step([p], AdamState(lr=0.1))
        np.testing.assert_array_equal(p.data, [1.5, -0.5])

    def test_first_step_is_lr_sized(self):
        p = Parameter(np.array([0.0]))
        p.grad = np.array([1.0])
        state = AdamState(lr=0.1)
        adam_step([p], state)
        assert p.data[0] == pytest.approx(-0.1, abs=1e-6)
        assert state.step == 1
        assert p.grad[0] == 0.0

    def test_descends_quadratic(self):
        w = Parameter(np.array([0.0]), "w")
        state = AdamState(lr=0.1)
        dist = []
        for _ in range(100):
            tsum(square(w - 3.0)).backward()
            adam_step([w], state)
            dist.append(abs(w.data[0] - 3.0))
        assert dist[-1] < 0.5
        assert np.mean(dist[-10:]) < np.mean(dist[:10])
        assert state.step == 100

    def test_missing_gradient(self):
        with pytest.raises(ContractError):
            adam_step([Parameter(np.zeros(2), "w")], AdamState())


class TestFiniteDiff:
    def test_quadratic_form(self, rng):
        A = rng.standard_normal((4, 4))
        x = Parameter(rng.standard_normal((1, 4)), "x")
        assert finite_diff_check(lambda: tsum(mul(matmul(x, Tensor(A)), x)), x, 1e-3) < 1e-8

    def test_softmax_composition(self, rng):
        x = Parameter(rng.standard_normal((3, 5)), "x")
        A = Tensor(rng.standard_normal((5, 5)))
        w = rng.standard_normal((3, 5))
        assert finite_diff_check(lambda: tsum(mul(softmax_rows(matmul(x, A)), w)), x, 1e-5) < 1e-5

    def test_step_bounds(self):
        x = Parameter(np.ones(2))
        with pytest.raises(ContractError):
            finite_diff_check(lambda: tsum(square(x)), x, 1e-2)

    def test_requires_double_precision(self):
        x = Parameter(np.ones(2, dtype=np.float32))
        with pytest.raises(ContractError):
            finite_diff_check(lambda: tsum(square(x)), x, 1e-4)


class TestAllocations:
    def test_peak_monotone_and_resettable(self):
        allocations.reset_peak()
        start = allocations.live
        peaks = []
        keep = []
        for k in range(1, 5):
            keep.append(Tensor(np.zeros(1000 * k)))
            peaks.append(allocations.peak)
        assert peaks == sorted(peaks)
        assert allocations.peak - start >= 8 * 1000 * (1 + 2 + 3 + 4)
        del keep
        allocations.reset_peak()
        assert allocations.peak == allocations.live


def test_determinism(rng):
    x = rng.standard_normal((3, 4))
    W = rng.standard_normal((4, 4))
    a = softmax_rows(matmul(Tensor(x), Tensor(W))).data
    b = softmax_rows(matmul(Tensor(x), Tensor(W))).data
    assert a.tobytes() == b.tobytes()
