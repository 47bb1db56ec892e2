"""Discretisation and embedding of the static user features."""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import tensor as T
from ..core.params import ParameterStore
from ..core.tensor import Tensor
from ..data.records import UserRecord
from ..utils.exceptions import ContractError, DataError

logger = logging.getLogger(__name__)

MAX_BUCKETS = 256
UNK = 0


def scott_bin_width(values) -> float:
    """Scott's rule bin width 3.5·σ/n^(1/3), with σ the sample standard deviation.

    Returns:
        The width, or 0.0 for a constant vector (one bucket)

    Raises:
        ContractError: If fewer than two values are given
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size < 2:
        raise ContractError(f"scott_bin_width needs at least two values, got {values.size}")
    sigma = float(np.std(values, ddof=1))
    if sigma == 0.0:
        return 0.0
    return 3.5 * sigma / values.size ** (1.0 / 3.0)


def fit_bins(values, max_buckets: int = MAX_BUCKETS) -> np.ndarray:
    """Fit bucket edges over [min, max] in steps of the Scott width.

    A constant feature gets the single bucket [v − 0.5, v + 0.5]. When the
    Scott width would produce more than ``max_buckets`` buckets the width is
    widened so exactly ``max_buckets`` span the range.

    Returns:
        Strictly increasing edges; ``len(edges) - 1`` buckets
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    width = scott_bin_width(values)
    low, high = float(values.min()), float(values.max())
    if width == 0.0 or high == low:
        return np.array([low - 0.5, low + 0.5])
    count = int(np.ceil((high - low) / width))
    if count > max_buckets:
        return np.linspace(low, high, max_buckets + 1)
    return low + width * np.arange(count + 1)


def bucketize(values, edges: np.ndarray) -> np.ndarray:
    """Map values to bucket indices, clamping values outside the edges into the end buckets."""
    values = np.asarray(values, dtype=np.float64)
    n_buckets = len(edges) - 1
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, n_buckets - 1).astype(np.int64)


@dataclass
class FeatureSchema:
    """Fitted vocabularies and bin edges.

    ``categorical`` maps a feature name to the sorted codes seen in training;
    index 0 is reserved for unseen codes, so the cardinality is len(codes) + 1.
    ``sequence`` holds the bucket edges of each behavior type.
    """

    categorical: dict[str, np.ndarray]
    statistical: dict[str, np.ndarray]
    sequence: dict[str, np.ndarray] = field(default_factory=dict)
    embed_dim: int = 8

    def __post_init__(self):
        for name, edges in {**self.statistical, **self.sequence}.items():
            if len(edges) < 2 or np.any(np.diff(edges) <= 0):
                raise ContractError(f"bin edges of {name} must be strictly increasing with at least one bucket")

    def cardinality(self, name: str) -> int:
        return len(self.categorical[name]) + 1

    def n_buckets(self, name: str) -> int:
        return len(self.statistical[name]) - 1

    @property
    def total_dim(self) -> int:
        return self.embed_dim * (len(self.categorical) + len(self.statistical))

    @property
    def sequence_types(self) -> list[str]:
        return list(self.sequence)

    @property
    def sequence_vocab(self) -> int:
        """Token vocabulary: cls, pad, then the largest bucket count over types."""
        return 2 + max((len(edges) - 1 for edges in self.sequence.values()), default=1)

    def categorical_ids(self, records: Sequence[UserRecord]) -> np.ndarray:
        ids = np.zeros((len(records), len(self.categorical)), dtype=np.int64)
        for j, (name, codes) in enumerate(self.categorical.items()):
            raw = np.array([_require(r.cat, name, r.user_id, "cat") for r in records], dtype=np.float64)
            pos = np.searchsorted(codes, raw)
            hit = (pos < len(codes)) & (codes[np.minimum(pos, len(codes) - 1)] == raw) if len(codes) else np.zeros(len(raw), dtype=bool)
            ids[:, j] = np.where(hit, pos + 1, UNK)
        return ids

    def statistical_ids(self, records: Sequence[UserRecord]) -> np.ndarray:
        ids = np.zeros((len(records), len(self.statistical)), dtype=np.int64)
        for j, (name, edges) in enumerate(self.statistical.items()):
            raw = np.array([_require(r.stat, name, r.user_id, "stat") for r in records], dtype=np.float64)
            ids[:, j] = bucketize(raw, edges)
        return ids

    def to_buffers(self) -> dict[str, np.ndarray]:
        buffers = {"schema.embed_dim": np.array([self.embed_dim], dtype=np.float64)}
        buffers.update({f"schema.cat.{name}": codes.astype(np.float64) for name, codes in self.categorical.items()})
        buffers.update({f"schema.stat.{name}": edges for name, edges in self.statistical.items()})
        buffers.update({f"schema.seq.{name}": edges for name, edges in self.sequence.items()})
        return buffers

    @classmethod
    def from_buffers(cls, buffers: dict[str, np.ndarray]) -> "FeatureSchema":
        """Rebuild a schema from checkpoint buffers (keys without the ``buffer.`` prefix)."""

        def section(prefix: str) -> dict[str, np.ndarray]:
            return {key[len(prefix) :]: values for key, values in buffers.items() if key.startswith(prefix)}

        categorical = {name: codes.astype(np.int64) for name, codes in section("schema.cat.").items()}
        return cls(categorical, section("schema.stat."), section("schema.seq."), int(buffers["schema.embed_dim"][0]))


def _require(values: dict, name: str, user_id: int, kind: str):
    try:
        return values[name]
    except KeyError:
        raise DataError(f"user {user_id}: missing {kind} feature {name}", field=f"{kind}.{name}") from None


def fit_schema(records: Sequence[UserRecord], embed_dim: int = 8) -> FeatureSchema:
    """Fit vocabularies and bin edges on training records only."""
    if len(records) < 2:
        raise ContractError("fit_schema needs at least two records")
    first = records[0]
    categorical = {name: np.unique([_require(r.cat, name, r.user_id, "cat") for r in records]).astype(np.int64) for name in first.cat}
    statistical = {name: fit_bins([_require(r.stat, name, r.user_id, "stat") for r in records]) for name in first.stat}
    sequence = {}
    for name in first.seq:
        values = np.concatenate([np.asarray(r.seq[name].values, dtype=np.float64) for r in records if name in r.seq] + [np.zeros(0)])
        sequence[name] = fit_bins(values) if values.size >= 2 else np.array([-0.5, 0.5])
    schema = FeatureSchema(categorical, statistical, sequence, embed_dim)
    logger.info(
        "Fitted schema: %d categorical, %d statistical, %d sequence types, static dim %d",
        len(categorical),
        len(statistical),
        len(sequence),
        schema.total_dim,
    )
    return schema


@dataclass
class StaticRepresentation:
    u_c: Tensor
    u_s: Tensor
    u_sc: Tensor


def create_feature_tables(store: ParameterStore, schema: FeatureSchema) -> None:
    """Register one embedding table per feature (``feat.cat.<name>``, ``feat.stat.<name>``)."""
    for name in schema.categorical:
        store.create(f"feat.cat.{name}", (schema.cardinality(name), schema.embed_dim), fan_in=schema.embed_dim)
    for name in schema.statistical:
        store.create(f"feat.stat.{name}", (schema.n_buckets(name), schema.embed_dim), fan_in=schema.embed_dim)


def embed_static(cat_ids: np.ndarray, stat_ids: np.ndarray, schema: FeatureSchema, tables: ParameterStore) -> StaticRepresentation:
    """Gather and concatenate the per-feature embeddings of a batch of id rows."""
    cat_parts = [T.embedding_lookup(tables[f"feat.cat.{name}"], cat_ids[:, j]) for j, name in enumerate(schema.categorical)]
    stat_parts = [T.embedding_lookup(tables[f"feat.stat.{name}"], stat_ids[:, j]) for j, name in enumerate(schema.statistical)]
    b = cat_ids.shape[0]
    u_c = T.concat(cat_parts, axis=1) if cat_parts else Tensor(np.zeros((b, 0)))
    u_s = T.concat(stat_parts, axis=1) if stat_parts else Tensor(np.zeros((b, 0)))
    return StaticRepresentation(u_c=u_c, u_s=u_s, u_sc=T.concat([u_c, u_s], axis=1))


def encode_users(records: Sequence[UserRecord], schema: FeatureSchema, tables: ParameterStore) -> StaticRepresentation:
    """Static representation rows for a list of users.

    Raises:
        DataError: If a record lacks a schema feature
    """
    return embed_static(schema.categorical_ids(records), schema.statistical_ids(records), schema, tables)


def encode_user(record: UserRecord, schema: FeatureSchema, tables: ParameterStore) -> StaticRepresentation:
    """Static representation of a single user, as [1×D] tensors."""
    return encode_users([record], schema, tables)
