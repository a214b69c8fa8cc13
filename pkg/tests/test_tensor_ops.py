import numpy as np
import pytest

from autodiff import ops
from autodiff.conv import conv2d, conv_transpose2d, max_pool2d
from autodiff.optim import Adam, AdamState, adam_step
from autodiff.sampling import bilinear_upsample, grid_sample
from autodiff.tensor import Tensor, backward, current_tape, get_dtype, no_grad, precision
from models.warp import identity_mesh
from utils.errors import NonFiniteError, ShapeError


def brute_force_sample(image: np.ndarray, field: np.ndarray) -> np.ndarray:
    n, c, h, w = image.shape
    out = np.zeros((n, c) + field.shape[2:])
    for b in range(n):
        for i in range(field.shape[2]):
            for j in range(field.shape[3]):
                x = min(max((field[b, 0, i, j] + 1) / 2 * (w - 1), 0.0), w - 1)
                y = min(max((field[b, 1, i, j] + 1) / 2 * (h - 1), 0.0), h - 1)
                x0, y0 = int(np.floor(x)), int(np.floor(y))
                x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
                ax, ay = x - x0, y - y0
                out[b, :, i, j] = (image[b, :, y0, x0] * (1 - ax) * (1 - ay) + image[b, :, y0, x1] * ax * (1 - ay)
                                   + image[b, :, y1, x0] * (1 - ax) * ay + image[b, :, y1, x1] * ax * ay)
    return out


class TestConv:
    def test_unit_kernel_is_identity(self, rng):
        x = rng.standard_normal((1, 1, 3, 3))
        out = conv2d(Tensor(x, dtype=np.float64), Tensor(np.ones((1, 1, 1, 1)), dtype=np.float64))
        np.testing.assert_allclose(out.numpy(), x)

    def test_full_window_sum(self):
        x = Tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
        out = conv2d(x, Tensor(np.ones((1, 1, 2, 2))))
        np.testing.assert_allclose(out.numpy(), [[[[10.0]]]])

    def test_output_extents(self, rng):
        out = conv2d(Tensor(rng.standard_normal((2, 3, 9, 8))), Tensor(rng.standard_normal((5, 3, 4, 4))),
                     stride=2, padding=1)
        assert out.shape == (2, 5, 4, 4)

    def test_channel_mismatch_names_dimension(self, rng):
        with pytest.raises(ShapeError, match="dim 1"):
            conv2d(Tensor(rng.standard_normal((1, 3, 8, 8))), Tensor(rng.standard_normal((2, 4, 3, 3))))

    def test_kernel_larger_than_input(self, rng):
        with pytest.raises(ShapeError, match="dim 2"):
            conv2d(Tensor(rng.standard_normal((1, 1, 2, 8))), Tensor(rng.standard_normal((1, 1, 3, 3))))

    def test_transpose_unit_kernel_is_identity(self, rng):
        x = rng.standard_normal((1, 1, 4, 4))
        out = conv_transpose2d(Tensor(x, dtype=np.float64), Tensor(np.ones((1, 1, 1, 1)), dtype=np.float64))
        np.testing.assert_allclose(out.numpy(), x)

    def test_transpose_output_size(self, rng):
        out = conv_transpose2d(Tensor(rng.standard_normal((1, 6, 4, 4))), Tensor(rng.standard_normal((6, 3, 4, 4))),
                               stride=2, padding=1)
        assert out.shape == (1, 3, 8, 8)

    def test_transpose_equals_conv_input_gradient(self, rng, float64):
        kernel = rng.standard_normal((5, 3, 4, 4))
        upstream = rng.standard_normal((2, 5, 4, 4))
        x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True)
        out = conv2d(x, Tensor(kernel), stride=2, padding=1)
        backward(out, upstream)
        transposed = conv_transpose2d(Tensor(upstream), Tensor(kernel), stride=2, padding=1)
        np.testing.assert_allclose(transposed.numpy(), x.grad, atol=1e-6)

    def test_max_pool_routes_to_first_tie(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        out = max_pool2d(x, 2)
        backward(out.sum())
        np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


class TestElementwise:
    def test_relu(self):
        np.testing.assert_array_equal(ops.relu(Tensor([-1.0, 0.0, 2.0])).numpy(), [0.0, 0.0, 2.0])

    def test_relu_subgradient_at_zero(self):
        x = Tensor([0.0], requires_grad=True)
        backward(ops.relu(x).sum())
        assert x.grad[0] == 0.0

    def test_sigmoid_range(self, rng):
        out = ops.sigmoid(Tensor(rng.standard_normal(100) * 10)).numpy()
        assert np.all((out > 0) & (out < 1))

    def test_mse_of_identical_is_zero(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4)))
        assert ops.mse(x, x).item() == 0.0

    def test_mse_shape_mismatch(self):
        with pytest.raises(ShapeError, match="dim 1"):
            ops.mse(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))

    def test_sqrt_of_negative(self):
        with pytest.raises(ValueError):
            ops.sqrt(Tensor([-1.0]))

    def test_max_of_empty(self):
        with pytest.raises(ValueError):
            ops.max_of([])

    def test_max_of_gradient_is_one_hot(self):
        scalars = [Tensor(v, requires_grad=True) for v in (0.5, 2.0, 2.0, -1.0)]
        out = ops.max_of(scalars)
        assert out.item() == 2.0
        backward(out)
        assert [s.grad for s in scalars][1] == 1.0
        assert all(s.grad is None for i, s in enumerate(scalars) if i != 1)

    def test_maximum_is_elementwise(self):
        first = Tensor(np.array([1.0, 5.0, 2.0]), requires_grad=True)
        second = Tensor(np.array([3.0, 5.0, 0.0]), requires_grad=True)
        out = ops.maximum([first, second])
        np.testing.assert_array_equal(out.numpy(), [3.0, 5.0, 2.0])
        backward(out.sum())
        np.testing.assert_array_equal(first.grad, [0.0, 1.0, 1.0])
        np.testing.assert_array_equal(second.grad, [1.0, 0.0, 0.0])

    def test_maximum_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ops.maximum([Tensor(np.zeros(2)), Tensor(np.zeros(3))])

    def test_fill_map_and_concat_channels(self):
        time_map = ops.fill_map(0.25, 3, 4)
        assert time_map.shape == (1, 3, 4)
        assert np.all(time_map.numpy() == 0.25)
        stacked = ops.concat_channels([Tensor(np.zeros((1, 2, 3, 4))), Tensor(time_map.numpy()[None])])
        assert stacked.shape == (1, 3, 3, 4)

    def test_non_finite_forward_raises(self):
        with pytest.raises(NonFiniteError) as info:
            with np.errstate(divide='ignore'):
                ops.div(Tensor([1.0]), Tensor([0.0]))
        assert info.value.where == 'div'


class TestInstanceStats:
    def test_constant_channel(self, float64):
        mu, sigma = ops.instance_stats(Tensor(np.full((1, 1, 3, 3), 2.5)))
        assert mu.numpy()[0, 0] == pytest.approx(2.5)
        assert sigma.numpy()[0, 0] == pytest.approx(np.sqrt(ops.INSTANCE_EPS))

    def test_two_values(self, float64):
        mu, sigma = ops.instance_stats(Tensor(np.array([0.0, 2.0]).reshape(1, 1, 1, 2)))
        assert mu.numpy()[0, 0] == pytest.approx(1.0)
        assert sigma.numpy()[0, 0] == pytest.approx(np.sqrt(1.0 + ops.INSTANCE_EPS))

    def test_rank_check(self):
        with pytest.raises(ShapeError):
            ops.instance_stats(Tensor(np.zeros((2, 3))))


class TestSampling:
    def test_identity_field(self, rng, float64):
        image = rng.standard_normal((2, 3, 7, 9))
        field = Tensor(np.repeat(bilinear_upsample(Tensor(identity_mesh(5)), 7, 9).numpy(), 2, axis=0))
        np.testing.assert_allclose(grid_sample(Tensor(image), field).numpy(), image, atol=1e-6)

    def test_horizontal_midpoint(self, float64):
        image = Tensor(np.array([[0.0, 4.0]]).reshape(1, 1, 1, 2))
        field = Tensor(np.array([0.0, -1.0]).reshape(1, 2, 1, 1))
        assert grid_sample(image, field).item() == pytest.approx(2.0)

    def test_matches_brute_force(self, float64):
        cases = np.random.default_rng(3)
        for _ in range(100):
            h, w = cases.integers(2, 7, size=2)
            image = cases.standard_normal((1, 2, h, w))
            field = cases.uniform(-1.2, 1.2, size=(1, 2, int(cases.integers(1, 5)), int(cases.integers(1, 5))))
            out = grid_sample(Tensor(image), Tensor(field)).numpy()
            np.testing.assert_allclose(out, brute_force_sample(image, field), atol=1e-6)

    def test_upsample_same_size_is_identity(self, rng, float64):
        x = rng.standard_normal((1, 2, 5, 5))
        np.testing.assert_allclose(bilinear_upsample(Tensor(x), 5, 5).numpy(), x, atol=1e-12)

    def test_upsample_single_pixel(self, float64):
        out = bilinear_upsample(Tensor(np.full((1, 1, 1, 1), 0.7)), 4, 6).numpy()
        np.testing.assert_allclose(out, np.full((1, 1, 4, 6), 0.7))

    def test_upsample_center_is_corner_mean(self, float64):
        x = np.array([[1.0, 2.0], [3.0, 6.0]]).reshape(1, 1, 2, 2)
        out = bilinear_upsample(Tensor(x), 3, 3).numpy()
        assert out[0, 0, 1, 1] == pytest.approx(3.0)
        np.testing.assert_allclose(out[0, 0, [0, 0, 2, 2], [0, 2, 0, 2]], [1.0, 2.0, 3.0, 6.0])


class TestTape:
    def test_leaf_gradients_populated(self, float64):
        a = Tensor([1.0, 2.0], requires_grad=True)
        b = Tensor([3.0, -1.0], requires_grad=True)
        backward((a * b + a).sum())
        np.testing.assert_allclose(a.grad, [4.0, 0.0])
        np.testing.assert_allclose(b.grad, [1.0, 2.0])

    def test_reused_node_accumulates(self, float64):
        a = Tensor([3.0], requires_grad=True)
        y = a * a
        backward((y + y).sum())
        np.testing.assert_allclose(a.grad, [12.0])

    def test_tape_is_consumed(self):
        a = Tensor([1.0], requires_grad=True)
        loss = (a * 2.0).sum()
        assert len(current_tape()) == 2
        backward(loss)
        assert len(current_tape()) == 0

    def test_no_grad_records_nothing(self):
        a = Tensor([1.0], requires_grad=True)
        with no_grad():
            out = a * 2.0
        assert not out.requires_grad
        assert len(current_tape()) == 0

    def test_precision_switch(self):
        assert Tensor([1.0]).data.dtype == get_dtype()
        with precision('float64'):
            assert Tensor([1.0]).data.dtype == np.float64
        with pytest.raises(ValueError):
            with precision('float16'):
                pass

    def test_backward_needs_scalar(self):
        with pytest.raises(ShapeError):
            backward(Tensor([1.0, 2.0], requires_grad=True) * 2.0)


class TestAdam:
    def test_constant_gradient_moves_against_sign(self, float64):
        param = Tensor([0.0, 0.0], requires_grad=True)
        state = AdamState([param])
        for _ in range(100):
            adam_step([param], [np.array([0.3, -2.0])], state)
        assert param.data[0] < 0 < param.data[1]

    def test_zero_gradient_keeps_parameter(self, float64):
        param = Tensor([1.5], requires_grad=True)
        state = AdamState([param])
        adam_step([param], [np.zeros(1)], state)
        assert param.data[0] == 1.5

    def test_first_step_is_lr_times_sign(self, float64):
        param = Tensor([0.0, 0.0], requires_grad=True)
        adam_step([param], [np.array([5.0, -0.01])], AdamState([param]), lr=2e-4)
        np.testing.assert_allclose(param.data, [-2e-4, 2e-4], rtol=1e-4)

    def test_state_dict_round_trip(self, float64):
        param = Tensor([1.0, 2.0], requires_grad=True)
        optimizer = Adam({'w': param})
        param.grad = np.array([1.0, -1.0])
        optimizer.step()
        restored = Adam({'w': Tensor([1.0, 2.0], requires_grad=True)})
        restored.load_state_dict(optimizer.state_dict())
        assert restored.state.step == 1
        np.testing.assert_array_equal(restored.state.m[0], optimizer.state.m[0])
