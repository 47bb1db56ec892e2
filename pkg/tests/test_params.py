"""Tests for the parameter store, optimiser and checkpoint files."""

import numpy as np
import pytest

from htgnn_ltv.core import tensor as T
from htgnn_ltv.core.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from htgnn_ltv.core.optim import Adam, clip_grad_norm
from htgnn_ltv.core.params import ParameterStore
from htgnn_ltv.core.tensor import Tape
from htgnn_ltv.utils.exceptions import CheckpointError, ContractError

DIGEST = "a" * 64


def _store() -> ParameterStore:
    store = ParameterStore(np.random.default_rng(0))
    store.create("layer.w", (3, 2))
    store.create("layer.b", (2,), init="zeros")
    store.batch_norm_state("layer.bn", 2).running_mean[:] = [0.5, -0.5]
    store.set_buffer("scale", [1.0, 2.0])
    return store


class TestParameterStore:
    def test_duplicate_name_rejected(self):
        store = _store()
        with pytest.raises(ContractError):
            store.create("layer.w", (1,))

    def test_unknown_parameter(self):
        with pytest.raises(ContractError):
            _store()["missing"]

    def test_uniform_init_is_bounded_by_fan_in(self):
        store = ParameterStore(np.random.default_rng(1))
        w = store.create("w", (16, 4))
        assert np.all(np.abs(w.data) <= 0.25)

    def test_same_seed_same_initialisation(self):
        np.testing.assert_array_equal(_store()["layer.w"].data, _store()["layer.w"].data)

    def test_state_dict_round_trip(self):
        source, target = _store(), ParameterStore(np.random.default_rng(9))
        target.create("layer.w", (3, 2))
        target.create("layer.b", (2,))
        target.batch_norm_state("layer.bn", 2)
        target.load_state_dict(source.state_dict())
        np.testing.assert_array_equal(target["layer.w"].data, source["layer.w"].data)
        np.testing.assert_array_equal(target.batch_norm_state("layer.bn", 2).running_mean, [0.5, -0.5])
        np.testing.assert_array_equal(target.buffer("scale"), [1.0, 2.0])

    def test_missing_entry_is_a_checkpoint_error(self):
        state = _store().state_dict()
        del state["layer.b"]
        with pytest.raises(CheckpointError):
            _store().load_state_dict(state)

    def test_shape_mismatch_is_a_checkpoint_error(self):
        state = _store().state_dict()
        state["layer.w"] = np.zeros((2, 3))
        with pytest.raises(CheckpointError):
            _store().load_state_dict(state)


class TestOptimiser:
    def test_adam_moves_against_the_gradient(self):
        store = ParameterStore()
        x = store.create("x", (2,), init="ones")
        optimizer = Adam(store.parameters(), lr=0.1)
        store.zero_grad()
        with Tape() as tape:
            loss = T.tensor_sum(T.mul(x, x))
        tape.backward(loss)
        optimizer.step()
        np.testing.assert_allclose(x.data, [0.9, 0.9], atol=1e-6)

    def test_step_without_gradient(self):
        store = ParameterStore()
        store.create("x", (2,))
        with pytest.raises(ContractError):
            Adam(store.parameters()).step()

    def test_clip_grad_norm(self):
        store = ParameterStore()
        x = store.create("x", (2,))
        x.grad = np.array([3.0, 4.0])
        assert clip_grad_norm(store.parameters(), 1.0) == pytest.approx(5.0)
        np.testing.assert_allclose(x.grad, [0.6, 0.8])

    def test_clip_disabled_at_zero(self):
        store = ParameterStore()
        x = store.create("x", (2,))
        x.grad = np.array([3.0, 4.0])
        clip_grad_norm(store.parameters(), 0.0)
        np.testing.assert_allclose(x.grad, [3.0, 4.0])


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, tmp_path):
        state = _store().state_dict()
        save_checkpoint(tmp_path / "model.ckpt", DIGEST, state)
        digest, loaded = read_checkpoint(tmp_path / "model.ckpt")
        assert digest == DIGEST
        assert list(loaded) == list(state)
        for name, values in state.items():
            assert loaded[name].tobytes() == values.tobytes()

    def test_digest_mismatch(self, tmp_path):
        save_checkpoint(tmp_path / "model.ckpt", DIGEST, _store().state_dict())
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "model.ckpt", "b" * 64)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            read_checkpoint(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, DIGEST, _store().state_dict())
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(CheckpointError):
            read_checkpoint(path)

    def test_short_digest_rejected(self, tmp_path):
        with pytest.raises(CheckpointError):
            save_checkpoint(tmp_path / "model.ckpt", "abc", {})
