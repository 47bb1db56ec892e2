"""Tests for sequence assembly, masked attention and the temporal encoder."""

import dataclasses

import numpy as np
import pytest

from htgnn_ltv.core.params import ParameterStore
from htgnn_ltv.core.tensor import MASK_VALUE, Tensor
from htgnn_ltv.data.records import SequenceObservation
from htgnn_ltv.model.featurizer import fit_schema
from htgnn_ltv.model.temporal import (
    CLS_TOKEN,
    PAD_TOKEN,
    TOKEN_OFFSET,
    TemporalConfig,
    assemble_batch,
    bucketize_sequence,
    create_temporal_params,
    encode_sequences,
    masked_attention,
    visibility_mask,
)
from htgnn_ltv.utils.exceptions import ConfigurationError, ContractError, DataError

from .test_records import make_record

MAX_LEN = 6


def _user(user_id: int, values, length: int):
    record = make_record()
    return dataclasses.replace(record, user_id=user_id, seq={"clicks": SequenceObservation(values=tuple(values), length=length)})


@pytest.fixture
def users():
    return [
        _user(0, [], 0),
        _user(1, [1.0, 2.0, 3.0], 3),
        _user(2, [0.0, 5.0, 1.0, 4.0, 2.0, 3.0, 1.0, 0.0], 8),
        _user(3, [2.0, 2.0], 2),
    ]


@pytest.fixture
def schema(users):
    return fit_schema(users, embed_dim=2)


@pytest.fixture
def encoder(schema):
    cfg = TemporalConfig(n_types=1, max_len=MAX_LEN, model_dim=8, heads=2, ffn_hidden=8, mask_dim=4, vocab_size=schema.sequence_vocab)
    store = ParameterStore(np.random.default_rng(5))
    create_temporal_params(store, cfg)
    return cfg, store


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class TestAssembleBatch:
    def test_eval_lengths_are_observed_lengths_capped(self, users, schema):
        batch = assemble_batch(users, schema, train_mode=False, rng=None, max_len=MAX_LEN)
        assert batch.available_lengths[:, 0].tolist() == [0, 3, 6, 2]
        assert batch.tokens.shape == (4, 1, MAX_LEN + 1)
        assert np.all(batch.tokens[:, :, 0] == CLS_TOKEN)

    def test_empty_sequence_shows_only_cls(self, users, schema):
        batch = assemble_batch(users, schema, train_mode=False, rng=None, max_len=MAX_LEN)
        assert np.all(batch.tokens[0, 0, 1:] == PAD_TOKEN)
        row = batch.additive_mask[0, 0, 0]
        assert row[0] == 0.0
        assert np.all(row[1:] == MASK_VALUE)

    def test_tokens_are_offset_buckets(self, users, schema):
        batch = assemble_batch(users, schema, train_mode=False, rng=None, max_len=MAX_LEN)
        expected = bucketize_sequence([1.0, 2.0, 3.0], schema.sequence["clicks"]) + TOKEN_OFFSET
        np.testing.assert_array_equal(batch.tokens[1, 0, 1:4], expected)
        assert np.all(batch.tokens[1, 0, 4:] == PAD_TOKEN)

    def test_train_lengths_are_truncated_within_range(self, users, schema):
        observed = assemble_batch(users, schema, train_mode=False, rng=None, max_len=MAX_LEN).available_lengths
        for seed in range(20):
            lengths = assemble_batch(users, schema, train_mode=True, rng=np.random.default_rng(seed), max_len=MAX_LEN).available_lengths
            assert lengths[0, 0] == 0
            assert np.all(lengths[1:] >= 1)
            assert np.all(lengths <= observed)

    def test_same_generator_same_masks(self, users, schema):
        first = assemble_batch(users, schema, train_mode=True, rng=np.random.default_rng(9), max_len=MAX_LEN)
        second = assemble_batch(users, schema, train_mode=True, rng=np.random.default_rng(9), max_len=MAX_LEN)
        np.testing.assert_array_equal(first.available_lengths, second.available_lengths)
        np.testing.assert_array_equal(first.tokens, second.tokens)

    def test_train_mode_needs_generator(self, users, schema):
        with pytest.raises(ContractError):
            assemble_batch(users, schema, train_mode=True, rng=None, max_len=MAX_LEN)

    def test_unknown_sequence_type(self, users, schema):
        stray = dataclasses.replace(users[1], seq={**users[1].seq, "scrolls": SequenceObservation((1.0,), 1)})
        with pytest.raises(DataError) as info:
            assemble_batch([stray], schema, train_mode=False, rng=None, max_len=MAX_LEN)
        assert info.value.field == "seq.scrolls"

    def test_missing_sequence_type(self, users, schema):
        bare = dataclasses.replace(users[1], seq={})
        with pytest.raises(DataError) as info:
            assemble_batch([bare], schema, train_mode=False, rng=None, max_len=MAX_LEN)
        assert info.value.field == "seq.clicks"


class TestVisibilityMask:
    def test_visible_prefix(self):
        mask = visibility_mask(np.array([2]), 4)
        np.testing.assert_array_equal(mask[0, 0], [0.0, 0.0, 0.0, MASK_VALUE, MASK_VALUE])
        assert mask.shape == (1, 5, 5)


class TestMaskedAttention:
    def test_single_visible_key_returns_its_value(self, rng):
        q, k, v = rng.normal(size=(1, 3, 4)), rng.normal(size=(1, 5, 4)), rng.normal(size=(1, 5, 4))
        mask = np.full((1, 3, 5), MASK_VALUE)
        mask[:, :, 2] = 0.0
        out = masked_attention(Tensor(q), Tensor(k), Tensor(v), mask).data
        np.testing.assert_allclose(out[0], np.repeat(v[:, 2], 3, axis=0), atol=1e-12)

    def test_uniform_attention_is_the_mean(self, rng):
        q, v = np.zeros((1, 2, 4)), rng.normal(size=(1, 5, 4))
        out = masked_attention(Tensor(q), Tensor(rng.normal(size=(1, 5, 4))), Tensor(v), np.zeros((1, 2, 5))).data
        np.testing.assert_allclose(out[0], np.repeat(v.mean(axis=1), 2, axis=0), atol=1e-12)

    def test_matches_direct_formula(self, rng):
        q, k, v = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 6, 4)), rng.normal(size=(2, 6, 4))
        mask = visibility_mask(np.array([3, 5]), 5)[:, :3, :]
        expected = _softmax((q @ np.swapaxes(k, -1, -2) + mask) / 2.0) @ v
        out = masked_attention(Tensor(q), Tensor(k), Tensor(v), mask).data
        np.testing.assert_allclose(out, expected, atol=1e-10)

    def test_fully_masked_row(self, rng):
        q = Tensor(rng.normal(size=(1, 2, 4)))
        mask = np.zeros((1, 2, 2))
        mask[0, 1, :] = MASK_VALUE
        with pytest.raises(ContractError):
            masked_attention(q, q, q, mask)

    def test_masked_keys_have_no_influence(self, rng):
        q, k, v = rng.normal(size=(1, 1, 4)), rng.normal(size=(1, 6, 4)), rng.normal(size=(1, 6, 4))
        mask = visibility_mask(np.array([2]), 5)[:, :1, :]
        k2, v2 = k.copy(), v.copy()
        k2[:, 3:] = rng.normal(size=(1, 3, 4)) * 50
        v2[:, 3:] = rng.normal(size=(1, 3, 4)) * 50
        first = masked_attention(Tensor(q), Tensor(k), Tensor(v), mask).data
        second = masked_attention(Tensor(q), Tensor(k2), Tensor(v2), mask).data
        np.testing.assert_array_equal(first, second)


class TestEncodeSequences:
    def test_shapes(self, users, schema, encoder):
        cfg, store = encoder
        batch = assemble_batch(users, schema, train_mode=False, rng=None, max_len=MAX_LEN)
        rep = encode_sequences(batch, store, cfg)
        assert rep.u_se.shape == (4, 8)
        assert rep.u_mask.shape == (4, 4)

    def test_tokens_beyond_length_do_not_matter(self, users, schema, encoder):
        cfg, store = encoder
        batch = assemble_batch(users, schema, train_mode=False, rng=None, max_len=MAX_LEN)
        scrambled = dataclasses.replace(batch, tokens=batch.tokens.copy())
        for i, length in enumerate(batch.available_lengths[:, 0]):
            scrambled.tokens[i, 0, length + 1 :] = TOKEN_OFFSET
        first = encode_sequences(batch, store, cfg)
        second = encode_sequences(scrambled, store, cfg)
        np.testing.assert_array_equal(first.u_se.data, second.u_se.data)

    def test_mask_representation_depends_only_on_lengths(self, users, schema, encoder):
        cfg, store = encoder
        a = _user(10, [0.0, 0.0, 0.0], 3)
        b = _user(11, [5.0, 4.0, 1.0], 3)
        rep = encode_sequences(assemble_batch([a, b], schema, train_mode=False, rng=None, max_len=MAX_LEN), store, cfg)
        np.testing.assert_array_equal(rep.u_mask.data[0], rep.u_mask.data[1])
        assert not np.array_equal(rep.u_se.data[0], rep.u_se.data[1])

    def test_identical_users_identical_output(self, users, schema, encoder):
        cfg, store = encoder
        twins = [users[2], dataclasses.replace(users[2], user_id=99)]
        rep = encode_sequences(assemble_batch(twins, schema, train_mode=False, rng=None, max_len=MAX_LEN), store, cfg)
        np.testing.assert_array_equal(rep.u_se.data[0], rep.u_se.data[1])

    def test_shape_mismatch(self, users, schema, encoder):
        cfg, store = encoder
        batch = assemble_batch(users, schema, train_mode=False, rng=None, max_len=MAX_LEN - 1)
        with pytest.raises(ConfigurationError):
            encode_sequences(batch, store, cfg)


class TestTemporalConfig:
    def test_heads_must_divide_model_dim(self):
        with pytest.raises(ConfigurationError):
            TemporalConfig(n_types=1, model_dim=10, heads=4)
