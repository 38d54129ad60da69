import numpy as np
import pytest

from app.encoders import (
    ModalityFeature,
    audio_encode,
    body_encode,
    body_path,
    face_encode,
    graph_conv,
)
from core.errors import AlignmentError, ConfigurationError, DimensionError
from core.tensor import Tensor
from graph.skeleton import build_partition, build_topology


def loop_graph_conv(x, weight, bias, B):
    """Quadruple-loop reference for the partitioned graph convolution."""
    n, c_in, joints, t = x.shape
    kernel = B.shape[0]
    c_out = weight.shape[0] // kernel
    mixed = np.einsum("oc,ncvt->novt", weight, x) + bias[None, :, None, None]
    out = np.zeros((n, c_out, joints, t))
    for b in range(n):
        for c in range(c_out):
            for j in range(joints):
                for r in range(kernel):
                    for i in range(joints):
                        out[b, c, j, :] += mixed[b, r * c_out + c, i, :] * B[r, i, j]
    return out


class TestGraphConv:
    @pytest.mark.parametrize("variant", ["whole", "upper"])
    @pytest.mark.parametrize("radius", [1, 2])
    def test_matches_loop_reference(self, variant, radius):
        partition = build_partition(build_topology(variant), radius)
        kernel, joints = partition.kernel_size, build_topology(variant).n_joints
        rng = np.random.default_rng(100 * radius + joints)
        for _ in range(100):
            x = rng.standard_normal((1, 3, joints, 3))
            weight = rng.standard_normal((kernel * 2, 3))
            bias = rng.standard_normal(kernel * 2)
            for B in (partition.stacked_B(), rng.standard_normal((kernel, joints, joints))):
                out = graph_conv(Tensor(x), Tensor(weight), Tensor(bias), Tensor(B)).numpy()
                np.testing.assert_allclose(out, loop_graph_conv(x, weight, bias, B), atol=1e-10)

    def test_output_frame_depends_only_on_same_input_frame(self, rng):
        B = build_partition(build_topology("whole"), 2).stacked_B()
        x = rng.standard_normal((2, 3, 17, 6))
        weight = Tensor(rng.standard_normal((5 * 4, 3)))
        bias = Tensor(rng.standard_normal(5 * 4))
        before = graph_conv(Tensor(x), weight, bias, Tensor(B)).numpy()
        moved = x.copy()
        moved[:, :, :, 2] += rng.standard_normal((2, 3, 17))
        after = graph_conv(Tensor(moved), weight, bias, Tensor(B)).numpy()
        others = [0, 1, 3, 4, 5]
        np.testing.assert_array_equal(after[..., others], before[..., others])
        assert not np.array_equal(after[..., 2], before[..., 2])

    def test_identity_centre_partition_selects_centre_block(self, rng):
        x = rng.standard_normal((1, 2, 6, 3))
        weight = rng.standard_normal((3 * 4, 2))
        bias = np.zeros(3 * 4)
        B = np.zeros((3, 6, 6))
        B[1] = np.eye(6)
        out = graph_conv(Tensor(x), Tensor(weight), Tensor(bias), Tensor(B)).numpy()
        expected = np.einsum("oc,ncvt->novt", weight[4:8], x)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_channel_count_must_split_into_partitions(self, rng):
        with pytest.raises(ConfigurationError):
            graph_conv(
                Tensor(np.ones((1, 2, 4, 1))),
                Tensor(np.ones((7, 2))),
                Tensor(np.zeros(7)),
                Tensor(np.ones((3, 4, 4))),
            )

    def test_partition_size_must_match_joints(self):
        with pytest.raises(DimensionError):
            graph_conv(
                Tensor(np.ones((1, 2, 4, 1))),
                Tensor(np.ones((6, 2))),
                Tensor(np.zeros(6)),
                Tensor(np.ones((3, 5, 5))),
            )


class TestEncoders:
    @pytest.mark.parametrize("frames", [1, 7, 40])
    def test_every_stream_yields_128_features_per_frame(self, tiny_store, rng, frames):
        faces = Tensor(rng.uniform(0, 1, (2, 1, 32, 32, frames)))
        mfcc = Tensor(rng.standard_normal((2, 1, 13, 4 * frames)))
        poses = Tensor(rng.uniform(0, 1, (2, 3, 11, frames)))
        for feature in (
            face_encode(faces, tiny_store),
            audio_encode(mfcc, tiny_store),
            body_encode(poses, tiny_store),
        ):
            assert feature.values.shape == (2, 128, frames)
            assert feature.frames == frames
            assert np.all(np.isfinite(feature.values.numpy()))

    def test_features_are_non_negative_after_final_relu(self, tiny_store, rng):
        faces = Tensor(rng.uniform(0, 1, (1, 1, 32, 32, 3)))
        assert face_encode(faces, tiny_store).values.numpy().min() >= 0.0

    def test_audio_length_must_be_four_per_frame(self, tiny_store, rng):
        with pytest.raises(AlignmentError):
            audio_encode(Tensor(rng.standard_normal((1, 1, 13, 10))), tiny_store)

    def test_wrong_mfcc_count_rejected(self, tiny_store, rng):
        with pytest.raises(DimensionError):
            audio_encode(Tensor(rng.standard_normal((1, 1, 12, 8))), tiny_store)

    def test_face_size_checked(self, tiny_store, rng):
        with pytest.raises(DimensionError):
            face_encode(Tensor(rng.uniform(0, 1, (1, 1, 16, 16, 2))), tiny_store)

    def test_joint_count_checked(self, tiny_store, rng):
        with pytest.raises(DimensionError):
            body_encode(Tensor(rng.uniform(0, 1, (1, 3, 17, 2))), tiny_store)

    def test_inference_encoding_is_per_clip(self, tiny_store, rng):
        # with running statistics a clip's features do not depend on its batch mates
        tiny_store.set_training(False)
        poses = rng.uniform(0, 1, (2, 3, 11, 4))
        together = body_encode(Tensor(poses), tiny_store).values.numpy()
        alone = body_encode(Tensor(poses[:1]), tiny_store).values.numpy()
        np.testing.assert_allclose(together[:1], alone, atol=1e-12)

    def test_modality_feature_validation(self):
        with pytest.raises(DimensionError):
            ModalityFeature(Tensor(np.zeros((1, 64, 3))), "face")
        with pytest.raises(ConfigurationError):
            ModalityFeature(Tensor(np.zeros((1, 128, 3))), "video")


class TestBodyStream:
    @pytest.fixture
    def inference_store(self, tiny_store):
        tiny_store.set_training(False)
        return tiny_store

    def test_frames_stay_independent_without_temporal_taps(self, inference_store, rng):
        for name, tensor in inference_store.params.items():
            if name.endswith(".temporal.weight"):
                centre = tensor.data.shape[-1] // 2
                kept = tensor.data[..., centre].copy()
                tensor.data[...] = 0.0
                tensor.data[..., centre] = kept
        poses = rng.uniform(0, 1, (1, 3, 11, 5))
        before = body_encode(Tensor(poses), inference_store).values.numpy()
        moved = poses.copy()
        moved[:, :, :, 3] = rng.uniform(0, 1, (1, 3, 11))
        after = body_encode(Tensor(moved), inference_store).values.numpy()
        others = [0, 1, 2, 4]
        np.testing.assert_array_equal(after[..., others], before[..., others])
        assert not np.array_equal(after[..., 3], before[..., 3])

    @pytest.mark.parametrize("owner,other", [(3, 5), (5, 3)])
    def test_paths_own_their_partition_matrices(self, inference_store, rng, owner, other):
        x = Tensor(rng.uniform(0, 1, (2, 3, 11, 4)))
        other_before = body_path(x, inference_store, "body.block1", other).numpy()
        owner_before = body_path(x, inference_store, "body.block1", owner).numpy()
        B = inference_store[f"body.block1.path{owner}.gcn.B"]
        B.data += rng.standard_normal(B.shape)
        np.testing.assert_array_equal(
            body_path(x, inference_store, "body.block1", other).numpy(), other_before
        )
        assert not np.array_equal(
            body_path(x, inference_store, "body.block1", owner).numpy(), owner_before
        )


class TestDeterminism:
    @pytest.mark.parametrize("seed", range(20))
    def test_same_store_and_input_give_identical_features(self, tiny_store, seed):
        tiny_store.set_training(False)
        rng = np.random.default_rng(seed)
        frames = int(rng.integers(1, 5))
        faces = rng.uniform(0, 1, (1, 1, 32, 32, frames))
        mfcc = rng.standard_normal((1, 1, 13, 4 * frames))
        poses = rng.uniform(0, 1, (1, 3, 11, frames))
        for encode, data in ((face_encode, faces), (audio_encode, mfcc), (body_encode, poses)):
            first = encode(Tensor(data), tiny_store).values.numpy()
            second = encode(Tensor(data.copy()), tiny_store).values.numpy()
            np.testing.assert_array_equal(first, second)
