import numpy as np
import pytest

from app.batching import ClipBatch
from app.model import (
    INFERENCE,
    TRAINING,
    ArchitectureSpec,
    ModelMode,
    WeightStore,
    initialize_weights,
)
from app.network import ActiveSpeakerModel
from core.errors import ConfigurationError, DimensionError
from core.tensor import Tensor
from graph.skeleton import BodyVariant, build_partition, build_topology


def layout_count(spec, scope=None):
    return sum(
        int(np.prod(p.shape))
        for p in spec.parameter_layout()
        if scope is None or p.scope == scope
    )


class TestArchitectureSpec:
    @pytest.mark.parametrize(
        "name,expected",
        [("lightasd", 1_021_378), ("fabulight-whole", 1_309_344), ("fabulight-upper", 1_305_276)],
    )
    def test_inference_parameter_counts(self, name, expected):
        assert layout_count(ArchitectureSpec.from_name(name), INFERENCE) == expected

    def test_face_size_does_not_change_parameter_count(self):
        small = ArchitectureSpec(ModelMode.LIGHTASD, face_size=32)
        assert layout_count(small, INFERENCE) == 1_021_378

    def test_training_heads_are_auxiliary(self):
        spec = ArchitectureSpec.from_name("fabulight-whole")
        training = [p.name for p in spec.parameter_layout() if p.scope == TRAINING]
        assert training
        assert all(name.startswith(("head.face.", "head.body.")) for name in training)

    def test_heads_per_mode(self):
        assert tuple(ArchitectureSpec(ModelMode.LIGHTASD).heads) == ("main", "face")
        assert tuple(ArchitectureSpec(ModelMode.FABULIGHT).heads) == ("main", "face", "body")

    @pytest.mark.parametrize("name", ["lightasd", "fabulight-whole", "fabulight-upper"])
    def test_name_round_trip(self, name):
        assert ArchitectureSpec.from_name(name).name == name

    def test_unknown_name(self):
        with pytest.raises(ConfigurationError):
            ArchitectureSpec.from_name("fabulight")

    def test_face_size_must_be_multiple_of_eight(self):
        with pytest.raises(ConfigurationError):
            ArchitectureSpec(face_size=20)

    def test_architecture_hash_distinguishes_configurations(self):
        hashes = {
            ArchitectureSpec.from_name(n).architecture_hash()
            for n in ("lightasd", "fabulight-whole", "fabulight-upper")
        }
        assert len(hashes) == 3
        again = ArchitectureSpec.from_name("lightasd").architecture_hash()
        assert ArchitectureSpec.from_name("lightasd").architecture_hash() == again

    def test_from_config(self, isolated_config):
        spec = ArchitectureSpec.from_config(isolated_config)
        assert spec.mode is ModelMode.FABULIGHT
        assert spec.body_variant is BodyVariant.WHOLE
        assert spec.face_size == 112


class TestWeightStore:
    def test_initialisation_is_seeded(self, tiny_spec):
        a = initialize_weights(tiny_spec, seed=3).snapshot()
        b = initialize_weights(tiny_spec, seed=3).snapshot()
        c = initialize_weights(tiny_spec, seed=4).snapshot()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not all(np.array_equal(a[k], c[k]) for k in a)

    def test_uniform_bounds_and_constants(self, tiny_store):
        w = tiny_store["face.block1.path3.spatial.weight"].numpy()
        assert np.abs(w).max() <= 1.0 / np.sqrt(9)
        np.testing.assert_array_equal(tiny_store["face.block1.merge_bn.gamma"].numpy(), 1.0)
        np.testing.assert_array_equal(tiny_store["head.main.fc.bias"].numpy(), 0.0)
        for name, buffer in tiny_store.buffers().items():
            expected = 0.0 if name.endswith("running_mean") else 1.0
            np.testing.assert_array_equal(buffer, expected)

    def test_partition_matrices_initialised_per_path(self, tiny_store):
        topology = build_topology("upper")
        for k, radius in ((3, 1), (5, 2)):
            expected = build_partition(topology, radius).stacked_B()
            first = tiny_store[f"body.block1.path{k}.gcn.B"]
            second = tiny_store[f"body.block2.path{k}.gcn.B"]
            np.testing.assert_allclose(first.numpy(), expected)
            assert not np.shares_memory(first.numpy(), second.numpy())

    def test_float64_store(self, tiny_store):
        assert tiny_store.dtype == np.float64

    def test_missing_parameter_rejected(self, tiny_store):
        params = dict(tiny_store.params)
        params.pop("head.main.fc.bias")
        with pytest.raises(DimensionError):
            WeightStore(tiny_store.spec, params, tiny_store.buffers())

    def test_wrong_shape_rejected(self, tiny_store):
        params = dict(tiny_store.params)
        params["head.main.fc.bias"] = Tensor(np.zeros(3))
        with pytest.raises(DimensionError):
            WeightStore(tiny_store.spec, params, tiny_store.buffers())

    def test_unknown_parameter_name(self, tiny_store):
        with pytest.raises(ConfigurationError):
            tiny_store["face.block9.merge.weight"]

    def test_training_flag(self, tiny_store):
        tiny_store.set_training(False)
        assert not any(state.training for state in tiny_store.bn.values())

    def test_scoped_counts(self, tiny_store):
        total = tiny_store.parameter_count()
        assert total == tiny_store.parameter_count(INFERENCE) + tiny_store.parameter_count(TRAINING)
        assert tiny_store.parameter_count(INFERENCE) == 1_305_276


class TestActiveSpeakerModel:
    @pytest.fixture
    def batch(self, clip_factory):
        return ClipBatch.from_clips([clip_factory(5, name="a"), clip_factory(5, name="b")])

    def test_loss_covers_every_head(self, tiny_store, batch):
        model = ActiveSpeakerModel(tiny_store)
        total, losses = model.loss(batch, tau=1.28)
        assert set(losses) == {"main", "face", "body"}
        expected = losses["main"].item() + 0.25 * (losses["face"].item() + losses["body"].item())
        assert total.item() == pytest.approx(expected)

    def test_lightasd_mode_over_fabulight_store(self, tiny_store, batch):
        model = ActiveSpeakerModel(tiny_store, mode="lightasd")
        assert model.heads == ("main", "face")
        names = [name for name, _ in model.parameters()]
        assert not any(name.startswith(("body.", "head.body.")) for name in names)
        _, losses = model.loss(batch, tau=1.0)
        assert set(losses) == {"main", "face"}

    def test_fabulight_mode_needs_body_stream(self):
        store = initialize_weights(ArchitectureSpec(ModelMode.LIGHTASD, face_size=32), seed=0)
        with pytest.raises(ConfigurationError):
            ActiveSpeakerModel(store, mode="fabulight")

    def test_probabilities_restore_training_flag(self, tiny_store, batch):
        model = ActiveSpeakerModel(tiny_store)
        probabilities = model.probabilities(batch)
        assert set(probabilities) == {"main"}
        assert probabilities["main"].shape == (2, 5)
        assert all(state.training for state in tiny_store.bn.values())
        tiny_store.set_training(False)
        model.probabilities(batch)
        assert not any(state.training for state in tiny_store.bn.values())

    def test_probabilities_do_not_record_gradients(self, tiny_store, batch):
        probabilities = ActiveSpeakerModel(tiny_store).probabilities(batch)
        assert not probabilities["main"].requires_grad
