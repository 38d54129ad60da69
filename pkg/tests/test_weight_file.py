import numpy as np
import pytest

from app.batching import ClipBatch
from app.model import ArchitectureSpec, ModelMode, initialize_weights
from app.network import ActiveSpeakerModel
from core.errors import StateError, WeightFileError
from services.weight_file import MAGIC, load_weights, save_weights


class TestWeightFile:
    @pytest.fixture
    def saved(self, tiny_store, tmp_path):
        for i, state in enumerate(tiny_store.bn.values()):
            state.running_mean = np.full(state.channels, 0.01 * i)
            state.running_var = np.full(state.channels, 1.0 + 0.02 * i)
        path = tmp_path / "weights.fblw"
        save_weights(tiny_store, path)
        return tiny_store, path

    def test_round_trip_is_exact(self, saved):
        store, path = saved
        loaded = load_weights(path)
        assert loaded.spec == store.spec
        assert loaded.dtype == np.float64
        assert list(loaded.params) == list(store.params)
        for name, tensor in store.params.items():
            np.testing.assert_array_equal(loaded[name].numpy(), tensor.numpy())
        for name, array in store.buffers().items():
            np.testing.assert_array_equal(loaded.buffers()[name], array)
        assert not path.with_suffix(".fblw.tmp").exists()

    def test_reloaded_model_scores_identically(self, saved, clip_factory):
        store, path = saved
        batch = ClipBatch.from_clips([clip_factory(3)])
        before = ActiveSpeakerModel(store).probabilities(batch)["main"].numpy()
        after = ActiveSpeakerModel(load_weights(path)).probabilities(batch)["main"].numpy()
        np.testing.assert_array_equal(before, after)

    def test_float32_store(self, tmp_path):
        store = initialize_weights(ArchitectureSpec(ModelMode.LIGHTASD, face_size=16), seed=1)
        save_weights(store, tmp_path / "w.fblw")
        assert load_weights(tmp_path / "w.fblw").dtype == np.float32

    def test_expected_architecture_enforced(self, saved):
        _, path = saved
        other = ArchitectureSpec(ModelMode.FABULIGHT, "whole", 32)
        with pytest.raises(WeightFileError, match="hash mismatch"):
            load_weights(path, expected=other)

    def test_bad_magic(self, saved):
        _, path = saved
        data = path.read_bytes()
        path.write_bytes(b"NOPE" + data[len(MAGIC) :])
        with pytest.raises(WeightFileError, match="magic"):
            load_weights(path)

    def test_unsupported_version(self, saved):
        _, path = saved
        data = bytearray(path.read_bytes())
        data[4:6] = (2).to_bytes(2, "little")
        path.write_bytes(bytes(data))
        with pytest.raises(WeightFileError, match="version 2"):
            load_weights(path)

    def test_tampered_hash(self, saved):
        _, path = saved
        data = bytearray(path.read_bytes())
        # magic, version, "fabulight", "upper", face size, hash length
        start = 4 + 2 + (2 + 9) + (2 + 5) + 4 + 2
        data[start] = ord("0") if data[start] != ord("0") else ord("1")
        path.write_bytes(bytes(data))
        with pytest.raises(WeightFileError, match="does not match its header"):
            load_weights(path)

    def test_truncated(self, saved):
        _, path = saved
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(WeightFileError, match="truncated"):
            load_weights(path)

    def test_trailing_bytes(self, saved):
        _, path = saved
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(WeightFileError, match="trailing"):
            load_weights(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(WeightFileError):
            load_weights(tmp_path / "none.fblw")

    def test_unset_running_statistics_not_saved(self, tiny_store, tmp_path):
        next(iter(tiny_store.bn.values())).running_var = None
        with pytest.raises(StateError):
            save_weights(tiny_store, tmp_path / "w.fblw")
