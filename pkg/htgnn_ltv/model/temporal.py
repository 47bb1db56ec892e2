"""Masked transformer encoding of typed behavior sequences.

Token ids: 0 is the per-type cls token, 1 is padding, bucket b maps to b + 2.
Key position j of a sequence is visible iff j == 0 (cls) or j <= s, where s is
the available length; masked keys carry an additive −1e9.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import tensor as T
from ..core.params import ParameterStore
from ..core.tensor import MASK_VALUE, Tensor
from ..data.records import UserRecord
from ..utils.exceptions import ConfigurationError, ContractError, DataError
from .featurizer import FeatureSchema, bucketize

CLS_TOKEN = 0
PAD_TOKEN = 1
TOKEN_OFFSET = 2
LENGTH_EMBED_DIM = 4


@dataclass
class SequenceBatch:
    tokens: np.ndarray
    additive_mask: np.ndarray
    available_lengths: np.ndarray
    type_count: int
    max_length: int


@dataclass
class TemporalRepresentation:
    u_se: Tensor
    u_mask: Tensor


@dataclass(frozen=True)
class TemporalConfig:
    n_types: int
    max_len: int = 32
    model_dim: int = 32
    heads: int = 4
    ffn_hidden: int = 64
    mask_dim: int = 16
    vocab_size: int = 258

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ConfigurationError(f"model_dim {self.model_dim} is not divisible by heads {self.heads}")
        if min(self.n_types, self.model_dim, self.heads, self.ffn_hidden, self.mask_dim) < 1 or self.max_len < 0:
            raise ConfigurationError("temporal dimensions must be positive")


def bucketize_sequence(values, edges: np.ndarray) -> np.ndarray:
    """Bucket ids of a behavior series (empty in, empty out)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return np.zeros(0, dtype=np.int64)
    return bucketize(values, edges)


def visibility_mask(lengths: np.ndarray, max_len: int) -> np.ndarray:
    """Additive key mask [..., L+1, L+1] for the given available lengths."""
    positions = np.arange(max_len + 1)
    visible = (positions == 0) | (positions <= lengths[..., None])
    row = np.where(visible, 0.0, MASK_VALUE)
    return np.broadcast_to(row[..., None, :], lengths.shape + (max_len + 1, max_len + 1)).copy()


def assemble_batch(records: Sequence[UserRecord], schema: FeatureSchema, train_mode: bool, rng: Optional[np.random.Generator], max_len: int) -> SequenceBatch:
    """Tokenise, cls-prefix and pad every user's sequences.

    Sequences keep their first L observed values. In train mode each
    available length s >= 1 is further cut to s' ~ Uniform{1..s}.

    Raises:
        DataError: If a record's sequence types differ from the schema's
    """
    types = schema.sequence_types
    b, n_types = len(records), len(types)
    tokens = np.full((b, n_types, max_len + 1), PAD_TOKEN, dtype=np.int64)
    tokens[:, :, 0] = CLS_TOKEN
    lengths = np.zeros((b, n_types), dtype=np.int64)
    known = set(types)
    if train_mode and rng is None:
        raise ContractError("train-mode assembly needs a random generator")

    for i, record in enumerate(records):
        unknown = set(record.seq) - known
        if unknown:
            name = sorted(unknown)[0]
            raise DataError(f"user {record.user_id}: unknown sequence type {name}", field=f"seq.{name}")
        for t, name in enumerate(types):
            if name not in record.seq:
                raise DataError(f"user {record.user_id}: missing sequence type {name}", field=f"seq.{name}")
            observed = record.seq[name]
            s = min(observed.length, max_len)
            if train_mode and s >= 1:
                s = int(rng.integers(1, s + 1))
            lengths[i, t] = s
            if s:
                tokens[i, t, 1 : s + 1] = bucketize_sequence(observed.values[:s], schema.sequence[name]) + TOKEN_OFFSET
    return SequenceBatch(tokens=tokens, additive_mask=visibility_mask(lengths, max_len), available_lengths=lengths, type_count=n_types, max_length=max_len)


def masked_attention(q: Tensor, k: Tensor, v: Tensor, mask) -> Tensor:
    """softmax((q·kᵀ + mask) / √d_h)·v over the last two axes.

    Raises:
        ContractError: If any query row has every key masked
    """
    mask = np.asarray(mask.data if isinstance(mask, Tensor) else mask, dtype=np.float64)
    if np.any(np.all(mask <= MASK_VALUE / 2, axis=-1)):
        raise ContractError("attention row with every key masked")
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = T.mul(T.add(T.matmul(q, T.swap_last(k)), mask), scale)
    return T.matmul(T.softmax_rows(scores), v)


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    positions = np.arange(length)[:, None]
    rates = 1.0 / np.power(10000.0, (2 * (np.arange(dim) // 2)) / dim)
    angles = positions * rates[None, :]
    return np.where(np.arange(dim) % 2 == 0, np.sin(angles), np.cos(angles))


def create_temporal_params(store: ParameterStore, cfg: TemporalConfig) -> None:
    d = cfg.model_dim
    store.create("seq.token_embedding", (cfg.vocab_size, d), fan_in=d)
    store.create("seq.type_embedding", (cfg.n_types, d), fan_in=d)
    for name in ("wq", "wk", "wv", "wo"):
        store.create(f"seq.attn.{name}", (d, d))
    store.create("seq.attn.bo", (d,), init="zeros")
    store.create("seq.ffn.w1", (d, cfg.ffn_hidden))
    store.create("seq.ffn.b1", (cfg.ffn_hidden,), init="zeros")
    store.create("seq.ffn.w2", (cfg.ffn_hidden, d))
    store.create("seq.ffn.b2", (d,), init="zeros")
    store.create("seq.mask.length_embedding", (cfg.max_len + 1, LENGTH_EMBED_DIM), fan_in=LENGTH_EMBED_DIM)
    store.create("seq.mask.proj", (cfg.n_types * LENGTH_EMBED_DIM, cfg.mask_dim))
    store.create("seq.mask.bias", (cfg.mask_dim,), init="zeros")


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, length, d = x.shape
    split = T.reshape(x, tuple(lead) + (length, heads, d // heads))
    n = len(lead)
    return T.transpose(split, tuple(range(n)) + (n + 1, n, n + 2))


def encode_sequences(batch: SequenceBatch, params: ParameterStore, cfg: TemporalConfig) -> TemporalRepresentation:
    """u_se from the cls outputs of a single attention + FFN block, and u_mask from the lengths.

    Only the cls row is consumed downstream, so attention is evaluated for the
    cls query alone.
    """
    b, n_types, width = batch.tokens.shape
    if n_types != cfg.n_types or width != cfg.max_len + 1:
        raise ConfigurationError(f"sequence batch shape {batch.tokens.shape} does not match encoder ({cfg.n_types} types, L={cfg.max_len})")
    d, heads = cfg.model_dim, cfg.heads

    x = T.embedding_lookup(params["seq.token_embedding"], batch.tokens)
    x = T.add(x, T.reshape(params["seq.type_embedding"], (1, n_types, 1, d)))
    x = T.add(x, sinusoidal_positions(width, d)[None, None, :, :])

    cls = x[:, :, 0:1, :]
    q = _split_heads(T.matmul(cls, params["seq.attn.wq"]), heads)
    k = _split_heads(T.matmul(x, params["seq.attn.wk"]), heads)
    v = _split_heads(T.matmul(x, params["seq.attn.wv"]), heads)
    mask = batch.additive_mask[:, :, None, 0:1, :]
    attended = masked_attention(q, k, v, mask)
    merged = T.reshape(T.transpose(attended, (0, 1, 3, 2, 4)), (b, n_types, d))
    z = T.add(T.reshape(cls, (b, n_types, d)), T.add(T.matmul(merged, params["seq.attn.wo"]), params["seq.attn.bo"]))

    hidden = T.relu(T.add(T.matmul(z, params["seq.ffn.w1"]), params["seq.ffn.b1"]))
    z = T.add(z, T.add(T.matmul(hidden, params["seq.ffn.w2"]), params["seq.ffn.b2"]))
    u_se = T.reshape(z, (b, n_types * d))

    lengths = T.embedding_lookup(params["seq.mask.length_embedding"], batch.available_lengths)
    flat = T.reshape(lengths, (b, n_types * LENGTH_EMBED_DIM))
    u_mask = T.add(T.matmul(flat, params["seq.mask.proj"]), params["seq.mask.bias"])
    return TemporalRepresentation(u_se=u_se, u_mask=u_mask)
