import numpy as np
import numpy.testing as npt
import pytest

from mier.autodiff import (
    AdamState,
    DomainError,
    GraphError,
    ShapeMismatchError,
    Tensor,
    adam_step,
    clip,
    concat,
    exp,
    gradients,
    log,
    matmul,
    no_grad,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    softmax_rows,
    softplus,
    stable_sigmoid,
)

from helpers import (
    adam_scalar_recurrence,
    central_difference,
    matmul_triple_loop,
    relative_errors,
)


class TestForwardOps:
    def test_matmul_identity(self):
        a = np.arange(12.0).reshape(3, 4)
        out = matmul(Tensor(np.eye(3)), Tensor(a))
        npt.assert_array_equal(out.data, a)

    def test_matmul_against_triple_loop(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 5))
        b = rng.normal(size=(5, 3))
        expected = matmul_triple_loop(a, b)
        npt.assert_allclose(matmul(Tensor(a), Tensor(b)).data, expected, atol=1e-12)

    def test_softmax_symmetry(self):
        out = softmax_rows(Tensor([[0.0, 0.0]]))
        npt.assert_allclose(out.data, [[0.5, 0.5]], atol=0)

    def test_softmax_rows_sum_to_one_for_extreme_inputs(self):
        rng = np.random.default_rng(1)
        x = rng.normal(scale=300.0, size=(20, 7))
        out = softmax_rows(Tensor(x))
        npt.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(np.isfinite(out.data))

    def test_matmul_shape_mismatch_names_op_and_shapes(self):
        with pytest.raises(ShapeMismatchError) as err:
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
        message = str(err.value)
        assert "matmul" in message and "(2, 3)" in message and "(4, 2)" in message

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            Tensor(np.zeros((2, 3))) + Tensor(np.zeros((3, 4)))

    def test_log_domain_error(self):
        with pytest.raises(DomainError):
            log(Tensor([1.0, 0.0]))

    def test_softplus_matches_naive_on_moderate_inputs(self):
        x = np.linspace(-5, 5, 101)
        npt.assert_allclose(softplus(Tensor(x)).data, np.log1p(np.exp(x)), atol=1e-12)

    def test_softplus_stable_for_large_inputs(self):
        out = softplus(Tensor([1000.0, -1000.0]))
        npt.assert_allclose(out.data, [1000.0, 0.0], atol=1e-12)

    def test_concat_and_slice_round_trip(self):
        a = np.arange(6.0).reshape(2, 3)
        b = np.arange(4.0).reshape(2, 2)
        joined = concat([Tensor(a), Tensor(b)], axis=1)
        npt.assert_array_equal(joined.data[:, :3], a)
        npt.assert_array_equal(joined[:, 3:].data, b)


class TestBackward:
    def test_square_gradient(self):
        x = Tensor(3.0, requires_grad=True)
        loss = x * x
        loss.backward()
        npt.assert_allclose(x.grad, 6.0, atol=1e-15)

    def test_sum_of_softmax_has_zero_gradient(self):
        v = Tensor(np.random.default_rng(2).normal(size=(3, 5)), requires_grad=True)
        loss = reduce_sum(softmax_rows(v))
        loss.backward()
        npt.assert_allclose(v.grad, 0.0, atol=1e-12)

    def test_two_layer_network_against_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 6))
        w1 = Tensor(rng.normal(size=(6, 5)) * 0.5, requires_grad=True)
        b1 = Tensor(np.zeros(5), requires_grad=True)
        w2 = Tensor(rng.normal(size=(5, 3)) * 0.5, requires_grad=True)
        b2 = Tensor(np.zeros(3), requires_grad=True)
        params = {"w1": w1, "b1": b1, "w2": w2, "b2": b2}

        def loss_fn():
            h = softplus(matmul(Tensor(x), w1) + b1)
            out = softmax_rows(matmul(h, w2) + b2)
            return reduce_sum(out * out)

        analytic = gradients(loss_fn(), params)
        for name, p in params.items():
            numeric = central_difference(lambda _: loss_fn().item(), p.data)
            assert relative_errors(analytic[name], numeric).max() < 1e-4, name

    @pytest.mark.parametrize("seed", range(20))
    def test_composite_ops_finite_difference_sweep(self, seed):
        # One composite touching every op the objectives build on:
        # matmul, add, multiply, exp, log, softplus, relu, softmax, clip,
        # concat, slice, reshape, sum, mean, negation.
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(3, 4))
        w = Tensor(rng.normal(size=(8, 6)) * 0.4, requires_grad=True)
        u = Tensor(rng.normal(size=(3, 4)) * 0.4, requires_grad=True)
        params = {"w": w, "u": u}

        def loss_fn():
            joined = concat([Tensor(x), u], axis=1)
            h = matmul(joined, w)
            a = softplus(h[:, :3])
            b = relu(h[:, 3:])
            mixed = a * exp(clip(b, 0.1, 2.0)) + log(a + 1.0)
            probs = softmax_rows(mixed)
            flat = reshape(mixed, (9,))
            return reduce_mean(flat) + reduce_sum(probs * probs) - reduce_mean(
                reduce_sum(probs, axis=1)
            )

        analytic = gradients(loss_fn(), params)
        for name, p in params.items():
            numeric = central_difference(lambda _: loss_fn().item(), p.data)
            assert relative_errors(analytic[name], numeric).max() < 1e-4

    def test_broadcast_bias_gradient(self):
        rng = np.random.default_rng(7)
        b = Tensor(rng.normal(size=4), requires_grad=True)
        x = rng.normal(size=(5, 4))
        loss = reduce_sum((Tensor(x) + b) * (Tensor(x) + b))
        loss.backward()
        numeric = central_difference(
            lambda arr: float(((x + arr) ** 2).sum()), b.data.copy()
        )
        npt.assert_allclose(b.grad, numeric, rtol=1e-6, atol=1e-8)

    def test_backward_rejects_non_scalar(self):
        v = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GraphError):
            (v * v).backward()

    def test_backward_rejects_detached(self):
        with pytest.raises(GraphError):
            (Tensor(2.0) * Tensor(3.0)).backward()

    def test_gradients_fill_untouched_params_with_zeros(self):
        a = Tensor(1.0, requires_grad=True)
        unused = Tensor(np.ones((2, 2)), requires_grad=True)
        grads = gradients(a * a, {"a": a, "unused": unused})
        npt.assert_allclose(grads["a"], 2.0)
        npt.assert_array_equal(grads["unused"], np.zeros((2, 2)))

    def test_repeated_evaluation_is_bitwise_identical(self):
        rng = np.random.default_rng(11)
        w = Tensor(rng.normal(size=(6, 6)), requires_grad=True)
        x = rng.normal(size=(4, 6))

        def run():
            loss = reduce_sum(softmax_rows(matmul(Tensor(x), w)) * Tensor(x))
            return loss.item(), gradients(loss, {"w": w})["w"]

        value1, grad1 = run()
        value2, grad2 = run()
        assert value1 == value2
        assert np.array_equal(grad1, grad2)

    def test_no_grad_suppresses_graph(self):
        w = Tensor(np.ones((2, 2)), requires_grad=True)
        with no_grad():
            out = matmul(Tensor(np.eye(2)), w)
        assert not out.requires_grad and out._prev == ()


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = Tensor(np.array([1.5, -2.0]), requires_grad=True)
        state = AdamState(lr=3e-4)
        adam_step({"p": p}, {"p": np.zeros(2)}, state)
        npt.assert_array_equal(p.data, [1.5, -2.0])
        assert state.t == 1

    def test_first_step_magnitude(self):
        # At t=1 with g=1: m_hat=1, v_hat=1, so the update is lr / (1 + eps).
        p = Tensor(0.0, requires_grad=True)
        state = AdamState(lr=3e-4, eps=1e-8)
        adam_step({"p": p}, {"p": np.asarray(1.0)}, state)
        expected = -3e-4 * (1.0 / (1.0 + 1e-8))
        npt.assert_allclose(p.data, expected, rtol=0, atol=1e-18)

    def test_two_steps_match_scalar_recurrence(self):
        p = Tensor(0.25, requires_grad=True)
        state = AdamState(lr=1e-2)
        reference = adam_scalar_recurrence([0.7, 0.7], lr=1e-2, x0=0.25)
        adam_step({"p": p}, {"p": np.asarray(0.7)}, state)
        npt.assert_allclose(p.data, reference[0], atol=1e-12)
        adam_step({"p": p}, {"p": np.asarray(0.7)}, state)
        npt.assert_allclose(p.data, reference[1], atol=1e-12)

    def test_shape_mismatch_rejected(self):
        p = Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(ShapeMismatchError):
            adam_step({"p": p}, {"p": np.zeros(3)}, AdamState())

    def test_snapshot_arrays_survive_the_step(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        snapshot = p.data
        adam_step({"p": p}, {"p": np.array([1.0])}, AdamState(lr=0.1))
        npt.assert_array_equal(snapshot, [1.0])
        assert p.data[0] != 1.0


def test_stable_sigmoid_extremes():
    out = stable_sigmoid(np.array([-800.0, 0.0, 800.0]))
    npt.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-12)
