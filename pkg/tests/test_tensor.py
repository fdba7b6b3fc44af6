import numpy as np
import pytest

from dacn.errors import ContractError, DimensionError
from dacn.tensor import Dims2D, Tensor, concat, matmul, no_grad, softmax_rows

from conftest import assert_grads_match


class TestMatmul:
    def test_identity(self):
        m = Tensor([[1.0, 2.0, 5.0], [3.0, 4.0, -1.0], [0.5, 0.0, 2.0]])
        out = matmul(Tensor(np.eye(3)), m)
        assert np.array_equal(out.data, m.data)

    def test_hand_product(self):
        # [[1,2],[3,4]] x [[1],[1]] -> [[3],[7]]
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        assert np.array_equal(out.data, [[3.0], [7.0]])

    def test_zero_annihilator(self, rng):
        b = Tensor(rng.normal(size=(3, 4)))
        out = matmul(Tensor(np.zeros((2, 3))), b)
        assert np.array_equal(out.data, np.zeros((2, 4)))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))

    def test_associative_with_identity(self, rng):
        # integer-valued tensors keep the products exact
        a = Tensor(rng.integers(-3, 4, size=(4, 4)).astype(float))
        b = Tensor(rng.integers(-3, 4, size=(4, 4)).astype(float))
        c = Tensor(rng.integers(-3, 4, size=(4, 4)).astype(float))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.allclose(left.data, right.data, atol=1e-10)
        eye = Tensor(np.eye(4))
        assert np.allclose(matmul(a, eye).data, a.data, atol=1e-10)

    def test_gradients(self, rng):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2)))
        assert_grads_match(lambda: (matmul(a, b) * w).sum(), [a, b])

    def test_batched_gradients(self, rng):
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 4, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(2, 3, 5)))
        assert_grads_match(lambda: (matmul(a, b) * w).sum(), [a, b])


class TestSoftmaxRows:
    def test_uniform_on_constants(self):
        out = softmax_rows(Tensor([[0.0, 0.0, 0.0]]))
        assert np.allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-12)

    def test_extended_precision_oracle(self):
        # frozen from a 50-digit exp/sum computation of softmax([1, 2, 3])
        expected = [
            0.0900305731703804579980221,
            0.2447284710547976524729596,
            0.6652409557748218895290183,
        ]
        out = softmax_rows(Tensor([[1.0, 2.0, 3.0]]))
        assert np.allclose(out.data[0], expected, atol=1e-15)

    def test_rows_sum_to_one(self, rng):
        x = Tensor(rng.normal(size=(6, 7)) * 10)
        sums = softmax_rows(x).data.sum(axis=-1)
        assert np.all(np.abs(sums - 1.0) < 1e-6)
        assert np.all(softmax_rows(x).data >= 0)

    def test_shift_invariance_exact_on_integer_logits(self, rng):
        # integer logits + integer shift keep x + c exact, so outputs match bitwise
        x = rng.integers(-4, 5, size=(4, 5)).astype(float)
        assert np.array_equal(softmax_rows(Tensor(x + 7.0)).data, softmax_rows(Tensor(x)).data)

    def test_shift_invariance_float(self, rng):
        x = rng.normal(size=(4, 5))
        shifted = softmax_rows(Tensor(x + 3.7))
        base = softmax_rows(Tensor(x))
        assert np.allclose(shifted.data, base.data, atol=1e-12)

    def test_gradients(self, rng):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 4)))
        assert_grads_match(lambda: (softmax_rows(x) * w).sum(), [x])


class TestBackward:
    def test_sum_gives_ones(self, rng):
        p = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        p.sum().backward()
        assert np.array_equal(p.grad, np.ones((3, 2)))

    def test_analytic_square(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        (p**2).sum().backward()
        assert np.allclose(p.grad, [2.0, 4.0])

    def test_non_scalar_rejected(self):
        p = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(ContractError):
            (p * 2).backward()

    def test_composite_graph_matches_fd(self, rng):
        a = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 3)) + 2.5, requires_grad=True)

        def loss():
            z = matmul(a, b) / b + (a * b).exp() * 0.01
            return (softmax_rows(z) * Tensor(np.eye(3))).sum() + (z**2).mean()

        assert_grads_match(loss, [a, b])

    def test_grad_accumulates_through_reuse(self, rng):
        a = Tensor(rng.normal(size=4), requires_grad=True)
        ((a * a) + a * 3).sum().backward()
        assert np.allclose(a.grad, 2 * a.data + 3)

    def test_deterministic(self, rng):
        vals = rng.normal(size=(4, 4))
        grads = []
        for _ in range(2):
            p = Tensor(vals.copy(), requires_grad=True)
            (softmax_rows(p) ** 2).sum().backward()
            grads.append(p.grad.copy())
        assert np.array_equal(grads[0], grads[1])


class TestElementwiseAndShape:
    def test_broadcast_add_and_mul(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        c = Tensor(rng.normal(size=(4,)), requires_grad=True)
        w = Tensor(rng.normal(size=(2, 3, 4)))
        assert_grads_match(lambda: ((x + c) * c * w).sum(), [x, c])

    def test_reductions_and_reshape(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(3,)))

        def loss():
            return (x.mean(axis=(0, 2)) * w).sum() + x.transpose((1, 0, 2)).reshape(3, 8).sum(axis=1).sum()

        assert_grads_match(loss, [x])

    def test_slice_and_concat(self, rng):
        x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        y = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 5)))
        assert_grads_match(lambda: (concat([x[:, 1:4], y], axis=1) * w).sum(), [x, y])

    def test_finite_outputs_on_finite_inputs(self, rng):
        x = Tensor(rng.normal(size=(4, 4)) * 50, requires_grad=True)
        out = softmax_rows(x / 3.0 + x**2 * 0.01)
        loss = (out * out).sum()
        loss.backward()
        assert np.isfinite(out.data).all()
        assert np.isfinite(x.grad).all()

    def test_no_grad_blocks_recording(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        with no_grad():
            out = (p * 2).sum()
        assert out._backward is None and out._parents == ()
        out.backward()  # detached scalar: nothing to propagate
        assert p.grad is None


class TestDims2D:
    def test_valid(self):
        d = Dims2D(4, 5, 2)
        assert (d.height, d.width, d.channels) == (4, 5, 2)

    def test_rejects_nonpositive(self):
        with pytest.raises(ContractError):
            Dims2D(0, 4, 1)
