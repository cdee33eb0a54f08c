import numpy as np
import pytest

from dsalab import nn
from dsalab.errors import ActionIndexOutOfRange, ShapeMismatch


def finite_difference_loss_grad(loss_of, x, h=1e-5):
    """Central finite differences of a scalar function w.r.t. every entry of x."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_of()
        flat[i] = orig - h
        down = loss_of()
        flat[i] = orig
        out[i] = (up - down) / (2 * h)
    return grad


class TestInit:
    def test_shapes(self, rng):
        params = nn.init_params([8, 128, 128, 8], rng)
        assert [w.shape for w in params.weights] == [(128, 8), (128, 128), (8, 128)]
        assert [b.shape for b in params.biases] == [(128,), (128,), (8,)]

    def test_biases_zero(self, rng):
        params = nn.init_params([8, 128, 128, 8], rng)
        for b in params.biases:
            assert np.all(b == 0.0)

    def test_weight_mean_and_range(self, rng):
        # 128x128 layer gives > 10^4 uniform draws in (-a, a)
        params = nn.init_params([4, 128, 128, 4], rng)
        w = params.weights[1]
        a = np.sqrt(6.0 / 256)
        assert np.all(np.abs(w) <= a)
        sigma_mean = (a / np.sqrt(3)) / np.sqrt(w.size)
        assert abs(w.mean()) <= 3 * sigma_mean

    def test_views_share_flat_storage(self, rng):
        params = nn.init_params([3, 5, 2], rng)
        params.flat[:] = 0.0
        assert all(np.all(w == 0) for w in params.weights)
        params.weights[0][0, 0] = 7.0
        assert params.flat[0] == 7.0


class TestForward:
    def test_all_zero_params_give_zero_output(self, rng):
        params = nn.MlpParams((3, 4, 2), np.zeros(nn.param_count((3, 4, 2))))
        out, _ = nn.forward(params, rng.normal(size=(5, 3)))
        assert np.all(out == 0.0)

    def test_single_linear_layer_identity(self):
        params = nn.MlpParams((2, 2), np.zeros(nn.param_count((2, 2))))
        params.weights[0][:] = np.eye(2)
        out, _ = nn.forward(params, np.array([1.0, -2.0]))
        assert np.array_equal(out, [[1.0, -2.0]])  # output layer is linear

    def test_two_layer_hand_computation(self):
        # x=(0.3,-0.2); z1 = (0.3+0.5, -0.2-0.5) = (0.8, -0.7); relu -> (0.8, 0)
        # out = 1*0.8 + (-1)*0 + 0.25 = 1.05
        params = nn.MlpParams((2, 2, 1), np.zeros(nn.param_count((2, 2, 1))))
        params.weights[0][:] = np.eye(2)
        params.biases[0][:] = [0.5, -0.5]
        params.weights[1][:] = [[1.0, -1.0]]
        params.biases[1][:] = [0.25]
        out, _ = nn.forward(params, np.array([0.3, -0.2]))
        assert abs(out[0, 0] - 1.05) < 1e-12

    def test_deterministic(self, rng):
        params = nn.init_params([6, 16, 3], rng)
        x = rng.normal(size=(4, 6))
        a, _ = nn.forward(params, x)
        b, _ = nn.forward(params, x)
        assert np.array_equal(a, b)

    def test_shape_mismatch(self, rng):
        params = nn.init_params([6, 16, 3], rng)
        with pytest.raises(ShapeMismatch):
            nn.forward(params, np.zeros((4, 5)))


class TestMaskedMseLoss:
    def test_zero_when_predictions_match(self, rng):
        q = rng.normal(size=(3, 4))
        actions = np.array([0, 2, 3])
        targets = q[np.arange(3), actions].copy()
        loss, grad = nn.masked_mse_loss(q, actions, targets)
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_single_entry(self):
        q = np.zeros((1, 4))
        q[0, 2] = 1.0
        loss, grad = nn.masked_mse_loss(q, np.array([2]), np.array([0.0]))
        assert loss == 1.0
        assert grad[0, 2] == 2.0
        assert np.count_nonzero(grad) == 1

    def test_gradient_matches_finite_differences(self, rng):
        q = rng.normal(size=(5, 6))
        actions = rng.integers(6, size=5)
        targets = rng.normal(size=5)
        _, grad = nn.masked_mse_loss(q, actions, targets)
        fd = finite_difference_loss_grad(lambda: nn.masked_mse_loss(q, actions, targets)[0], q)
        rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-10)
        assert rel.max() <= 1e-6

    def test_bad_action_index(self):
        with pytest.raises(ActionIndexOutOfRange):
            nn.masked_mse_loss(np.zeros((2, 3)), np.array([0, 3]), np.zeros(2))


class TestBackward:
    def test_zero_output_grad_gives_zero_grads(self, rng):
        params = nn.init_params([4, 8, 3], rng)
        x = rng.normal(size=(6, 4))
        _, cache = nn.forward(params, x)
        grads = nn.backward(params, cache, np.zeros((6, 3)))
        assert np.all(grads.flat == 0.0)

    def test_gradients_match_finite_differences(self, rng):
        params = nn.init_params([4, 8, 8, 4], rng)
        x = rng.normal(size=(5, 4))
        actions = rng.integers(4, size=5)
        targets = rng.normal(size=5)

        def loss_of():
            q, _ = nn.forward(params, x)
            return nn.masked_mse_loss(q, actions, targets)[0]

        q, cache = nn.forward(params, x)
        _, out_grad = nn.masked_mse_loss(q, actions, targets)
        grads = nn.backward(params, cache, out_grad)
        fd = finite_difference_loss_grad(loss_of, params.flat)
        rel = np.abs(grads.flat - fd) / np.maximum(np.maximum(np.abs(grads.flat), np.abs(fd)), 1e-10)
        assert rel.max() <= 1e-4

    def test_dead_relu_unit_gets_no_gradient(self):
        # hidden unit 1 has a large negative bias: always inactive
        params = nn.MlpParams((2, 2, 1), np.zeros(nn.param_count((2, 2, 1))))
        params.weights[0][:] = [[1.0, 0.0], [0.0, 1.0]]
        params.biases[0][:] = [0.0, -100.0]
        params.weights[1][:] = [[1.0, 1.0]]
        x = np.array([[0.5, 0.5]])
        q, cache = nn.forward(params, x)
        _, out_grad = nn.masked_mse_loss(q, np.array([0]), np.array([1.0]))
        grads = nn.backward(params, cache, out_grad)
        assert np.all(grads.weights[0][1] == 0.0)
        assert grads.biases[0][1] == 0.0
        assert np.any(grads.weights[0][0] != 0.0)


class TestAdam:
    def test_zero_gradient_leaves_params(self, rng):
        params = nn.init_params([3, 4, 2], rng)
        before = params.flat.copy()
        state = nn.AdamState.for_params(params)
        nn.adam_update(params, state, nn.zeros_like_params(params), lr=0.1)
        assert np.array_equal(params.flat, before)

    def test_zero_gradient_decays_moments(self, rng):
        params = nn.init_params([3, 4, 2], rng)
        state = nn.AdamState.for_params(params)
        state.m[:] = 1.0
        state.v[:] = 1.0
        nn.adam_update(params, state, nn.zeros_like_params(params), lr=0.1)
        assert np.allclose(state.m, 0.9)
        assert np.allclose(state.v, 0.999)

    def test_first_step_magnitude(self, rng):
        params = nn.init_params([3, 4, 2], rng)
        before = params.flat.copy()
        grads = nn.zeros_like_params(params)
        grads.flat[:] = rng.normal(size=grads.flat.size)
        state = nn.AdamState.for_params(params)
        nn.adam_update(params, state, grads, lr=1e-3)
        g = grads.flat
        expected = 1e-3 * g / (np.abs(g) + state.eps)
        assert np.allclose(before - params.flat, expected, rtol=1e-12, atol=1e-18)

    def test_two_steps_match_textbook_recursion(self):
        # 1-parameter model, gradients 1.0 then 0.5, computed by hand
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        theta, m, v = 2.0, 0.0, 0.0
        for t, g in enumerate([1.0, 0.5], start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)

        params = nn.MlpParams((1, 1), np.array([2.0, 0.0]))  # weight 2.0, bias 0
        state = nn.AdamState.for_params(params)
        for g in [1.0, 0.5]:
            grads = nn.zeros_like_params(params)
            grads.weights[0][0, 0] = g
            nn.adam_update(params, state, grads, lr=lr)
        assert abs(params.weights[0][0, 0] - theta) < 1e-14

    def test_loss_drops_90_percent_on_toy_regression(self, rng):
        params = nn.init_params([4, 16, 16, 2], rng)
        state = nn.AdamState.for_params(params)
        x = rng.normal(size=(8, 4))
        actions = rng.integers(2, size=8)
        targets = rng.normal(size=8)
        q, _ = nn.forward(params, x)
        initial, _ = nn.masked_mse_loss(q, actions, targets)
        for _ in range(200):
            q, cache = nn.forward(params, x)
            _, out_grad = nn.masked_mse_loss(q, actions, targets)
            grads = nn.backward(params, cache, out_grad)
            nn.adam_update(params, state, grads, lr=0.01)
        q, _ = nn.forward(params, x)
        final, _ = nn.masked_mse_loss(q, actions, targets)
        assert final <= 0.1 * initial


class TestCopyParams:
    def test_copy_is_deep(self, rng):
        params = nn.init_params([3, 5, 2], rng)
        copy = nn.copy_params(params)
        assert np.array_equal(copy.flat, params.flat)
        params.flat[:] += 1.0
        assert not np.array_equal(copy.flat, params.flat)

    def test_copy_of_copy(self, rng):
        params = nn.init_params([3, 5, 2], rng)
        assert np.array_equal(nn.copy_params(nn.copy_params(params)).flat, params.flat)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, rng, tmp_path):
        params = nn.init_params([8, 128, 128, 8], rng)
        path = tmp_path / "net.txt"
        nn.save_checkpoint(path, params)
        loaded = nn.load_checkpoint(path)
        assert loaded.dims == params.dims
        assert np.array_equal(loaded.flat, params.flat)

    def test_header(self, rng, tmp_path):
        path = tmp_path / "net.txt"
        nn.save_checkpoint(path, nn.init_params([2, 3, 2], rng))
        assert path.read_text().splitlines()[0] == "ddqsa-ckpt v1"
        assert path.read_text().splitlines()[1] == "2 3 2"

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a checkpoint\n")
        with pytest.raises(ShapeMismatch):
            nn.load_checkpoint(path)
