import numpy as np
import pytest

from core.errors import ConfigurationError, DimensionError, StateError
from core.ops import (
    BatchNormState,
    PoolKind,
    batch_norm,
    conv_pointwise,
    conv_spatial,
    conv_temporal,
    einsum,
    linear,
    pool,
)
from core.tensor import Tensor


def naive_conv2d_per_frame(x, w, stride, padding):
    """Direct loop reference for (N, C, H, W, T) inputs."""
    n, c_in, h, wid, t = x.shape
    c_out, _, k, _ = w.shape
    padded = np.pad(x, [(0, 0), (0, 0), (padding, padding), (padding, padding), (0, 0)])
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wid + 2 * padding - k) // stride + 1
    out = np.zeros((n, c_out, oh, ow, t))
    for b in range(n):
        for o in range(c_out):
            for i in range(oh):
                for j in range(ow):
                    for f in range(t):
                        rows = slice(i * stride, i * stride + k)
                        cols = slice(j * stride, j * stride + k)
                        patch = padded[b, :, rows, cols, f]
                        out[b, o, i, j, f] = np.sum(patch * w[o])
    return out


def naive_conv_time(x, w):
    """(N, C, F, T) input, (C_out, C_in, k) kernel, same padding along T."""
    n, c_in, freq, t = x.shape
    c_out, _, k = w.shape
    pad = (k - 1) // 2
    padded = np.pad(x, [(0, 0), (0, 0), (0, 0), (pad, pad)])
    out = np.zeros((n, c_out, freq, t))
    for o in range(c_out):
        for s in range(t):
            out[:, o, :, s] = np.einsum("ncfk,ck->nf", padded[:, :, :, s : s + k], w[o])
    return out


class TestConvolution:
    @pytest.mark.parametrize("stride,kernel", [(1, 3), (1, 5), (2, 3)])
    def test_spatial_matches_direct_loop(self, rng, stride, kernel):
        x = rng.standard_normal((2, 3, 7, 7, 2))
        w = rng.standard_normal((4, 3, kernel, kernel))
        out = conv_spatial(Tensor(x), Tensor(w), stride=stride)
        expected = naive_conv2d_per_frame(x, w, stride, (kernel - 1) // 2)
        np.testing.assert_allclose(out.numpy(), expected, atol=1e-10)

    def test_stride_two_halves_even_sizes(self, rng):
        x = Tensor(rng.standard_normal((1, 1, 112, 112, 1)))
        w = Tensor(rng.standard_normal((2, 1, 3, 3)))
        assert conv_spatial(x, w, stride=2).shape == (1, 2, 56, 56, 1)

    @pytest.mark.parametrize("kernel", [3, 5])
    def test_temporal_matches_direct_loop(self, rng, kernel):
        x = rng.standard_normal((2, 3, 4, 6))
        w = rng.standard_normal((5, 3, kernel))
        out = conv_temporal(Tensor(x), Tensor(w))
        np.testing.assert_allclose(out.numpy(), naive_conv_time(x, w), atol=1e-10)

    def test_temporal_single_frame_sees_only_centre_tap(self, rng):
        x = rng.standard_normal((1, 2, 3, 1))
        w = rng.standard_normal((2, 2, 5))
        out = conv_temporal(Tensor(x), Tensor(w)).numpy()
        expected = np.einsum("ncf,oc->nof", x[..., 0], w[:, :, 2])
        np.testing.assert_allclose(out[..., 0], expected, atol=1e-12)

    def test_even_temporal_kernel_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            conv_temporal(Tensor(rng.standard_normal((1, 1, 2, 4))), Tensor(np.ones((1, 1, 4))))

    def test_channel_mismatch_rejected(self, rng):
        with pytest.raises(DimensionError):
            conv_spatial(Tensor(np.ones((1, 2, 4, 4, 1))), Tensor(np.ones((3, 1, 3, 3))))

    def test_pointwise_is_channel_mix_with_bias(self, rng):
        x = rng.standard_normal((2, 3, 5, 4))
        w = rng.standard_normal((6, 3))
        b = rng.standard_normal(6)
        out = conv_pointwise(Tensor(x), Tensor(w), Tensor(b)).numpy()
        expected = np.einsum("ncvt,oc->novt", x, w) + b[None, :, None, None]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_convolution_gradient_matches_adjoint(self, rng):
        # <conv(x), g> is linear in x, so d/dx equals the adjoint applied to g
        x = Tensor(rng.standard_normal((1, 2, 5, 5, 2)), requires_grad=True, dtype=np.float64)
        w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True, dtype=np.float64)
        g = rng.standard_normal((1, 3, 5, 5, 2))
        (conv_spatial(x, w) * Tensor(g)).sum().backward()
        probe = rng.standard_normal(x.shape)
        lhs = np.sum(x.grad * probe)
        rhs = np.sum(naive_conv2d_per_frame(probe, w.numpy(), 1, 1) * g)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    @pytest.mark.parametrize("seed", range(20))
    def test_convolutions_are_linear_in_input(self, seed):
        rng = np.random.default_rng(seed)
        alpha, beta = rng.uniform(-2.0, 2.0, size=2)
        for x_shape, conv, w in (
            ((1, 2, 6, 6, 3), conv_spatial, rng.standard_normal((3, 2, 3, 3))),
            ((2, 3, 4, 5), conv_temporal, rng.standard_normal((2, 3, 5))),
        ):
            x = rng.standard_normal(x_shape)
            y = rng.standard_normal(x_shape)
            mixed = conv(Tensor(alpha * x + beta * y), Tensor(w)).numpy()
            separate = alpha * conv(Tensor(x), Tensor(w)).numpy()
            separate += beta * conv(Tensor(y), Tensor(w)).numpy()
            np.testing.assert_allclose(mixed, separate, atol=1e-10)


class TestPooling:
    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize(
        "kind,shape",
        [
            (PoolKind.MAX_SPATIAL, (1, 2, 9, 8, 3)),
            (PoolKind.MAX_TEMPORAL, (2, 2, 13, 11)),
            (PoolKind.GLOBAL_MAX_SPATIAL, (1, 3, 5, 5, 4)),
        ],
    )
    def test_max_pools_commute_with_positive_scaling(self, seed, kind, shape):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(shape)
        scale = rng.uniform(0.01, 100.0)
        scaled_first = pool(Tensor(scale * x), kind).numpy()
        scaled_after = scale * pool(Tensor(x), kind).numpy()
        np.testing.assert_array_equal(scaled_first, scaled_after)

    def test_max_spatial_halves_spatial_axes(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 28, 28, 3)))
        assert pool(x, PoolKind.MAX_SPATIAL).shape == (1, 2, 14, 14, 3)

    def test_max_temporal_on_audio_steps(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 13, 40)))
        assert pool(x, PoolKind.MAX_TEMPORAL).shape == (1, 2, 13, 20)
        odd = Tensor(rng.standard_normal((1, 2, 13, 5)))
        assert pool(odd, PoolKind.MAX_TEMPORAL).shape == (1, 2, 13, 3)

    def test_max_pool_values_with_padding(self):
        x = Tensor(np.array([1.0, 7.0, 3.0, -2.0, 5.0]).reshape(1, 1, 1, 5))
        out = pool(x, "max_temporal").numpy().reshape(-1)
        # windows [pad,1,7] [7,3,-2] [-2,5,pad]
        np.testing.assert_allclose(out, [7.0, 7.0, 5.0])

    def test_global_pools(self, rng):
        x = rng.standard_normal((2, 3, 4, 4, 5))
        np.testing.assert_allclose(
            pool(Tensor(x), "global_max_spatial").numpy(), x.max(axis=(2, 3))
        )
        np.testing.assert_allclose(
            pool(Tensor(x), "global_avg_spatial").numpy(), x.mean(axis=(2, 3))
        )
        joints = rng.standard_normal((2, 3, 11, 5))
        np.testing.assert_allclose(
            pool(Tensor(joints), PoolKind.GLOBAL_AVG_JOINTS).numpy(), joints.mean(axis=2)
        )

    def test_global_avg_joints_requires_joint_axis(self, rng):
        with pytest.raises(DimensionError):
            pool(Tensor(rng.standard_normal((1, 2, 3, 3, 4))), PoolKind.GLOBAL_AVG_JOINTS)

    def test_max_pool_gradient_goes_to_winner(self):
        x = Tensor(
            np.array([1.0, 7.0, 3.0, -2.0, 5.0]).reshape(1, 1, 1, 5),
            requires_grad=True,
            dtype=np.float64,
        )
        pool(x, "max_temporal").sum().backward()
        np.testing.assert_allclose(x.grad.reshape(-1), [0.0, 2.0, 0.0, 0.0, 1.0])


class TestBatchNorm:
    def test_training_matches_two_pass_statistics(self, rng):
        x = rng.standard_normal((3, 4, 5, 6)) * 3.0 + 2.0
        state = BatchNormState.fresh(4, dtype=np.float64)
        out = batch_norm(Tensor(x), state).numpy()

        mean = x.mean(axis=(0, 2, 3), keepdims=True)
        var = ((x - mean) ** 2).mean(axis=(0, 2, 3), keepdims=True)
        np.testing.assert_allclose(out, (x - mean) / np.sqrt(var + 1e-5), atol=1e-10)

        count = 3 * 5 * 6
        unbiased = var.reshape(4) * count / (count - 1)
        np.testing.assert_allclose(state.running_mean, 0.1 * mean.reshape(4))
        np.testing.assert_allclose(state.running_var, 0.9 + 0.1 * unbiased)

    def test_inference_uses_running_statistics(self, rng):
        x = rng.standard_normal((2, 3, 4))
        state = BatchNormState.fresh(3, dtype=np.float64)
        state.running_mean = np.array([1.0, 2.0, 3.0])
        state.running_var = np.array([4.0, 1.0, 0.25])
        state.training = False
        out = batch_norm(Tensor(x), state).numpy()
        expected = (x - state.running_mean[None, :, None]) / np.sqrt(
            state.running_var[None, :, None] + 1e-5
        )
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_inference_without_statistics_fails(self, rng):
        state = BatchNormState.fresh(2, dtype=np.float64)
        state.running_mean = None
        state.training = False
        with pytest.raises(StateError):
            batch_norm(Tensor(rng.standard_normal((1, 2, 3))), state)

    def test_channel_mismatch_rejected(self, rng):
        with pytest.raises(DimensionError):
            batch_norm(Tensor(rng.standard_normal((1, 3, 2))), BatchNormState.fresh(2))

    def test_nonpositive_running_variance_invalid(self):
        state = BatchNormState.fresh(2, dtype=np.float64)
        state.running_var = np.array([1.0, 0.0])
        with pytest.raises(StateError):
            state.validate()


class TestLinearAndEinsum:
    def test_linear(self, rng):
        x = rng.standard_normal((2, 5, 4))
        w = rng.standard_normal((3, 4))
        b = rng.standard_normal(3)
        out = linear(Tensor(x), Tensor(w), Tensor(b)).numpy()
        np.testing.assert_allclose(out, x @ w.T + b, atol=1e-12)

    def test_linear_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            linear(Tensor(np.ones((2, 4))), Tensor(np.ones((3, 5))))

    def test_einsum_gradients(self, rng):
        a = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True, dtype=np.float64)
        b = Tensor(rng.standard_normal((4, 5)), requires_grad=True, dtype=np.float64)
        einsum("ijk,kl->ijl", a, b).sum().backward()
        np.testing.assert_allclose(a.grad, np.ones((2, 3, 5)) @ b.numpy().T)
        np.testing.assert_allclose(
            b.grad, np.einsum("ijk,ijl->kl", a.numpy(), np.ones((2, 3, 5)))
        )

    def test_einsum_rejects_inner_summation(self):
        with pytest.raises(DimensionError):
            einsum("ij,k->k", Tensor(np.ones((2, 2))), Tensor(np.ones(3)))
