"""The composed multi-horizon network and its batch objective.

Everything data-dependent but non-differentiable in one forward pass (the
kNN hypergraph, the Huber δ of every task and the surrogate labels of censored
rows) is collected in a :class:`ForwardTrace`. Passing the trace back in
replays the pass with those pieces frozen, which finite-difference checks need.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..config import RunConfig
from ..core import tensor as T
from ..core.params import ParameterStore
from ..core.tensor import Tensor
from ..data.records import TASKS, UserRecord
from .experts import ExpertConfig, ForwardMode, create_expert_params, experts_forward
from .featurizer import FeatureSchema, create_feature_tables, embed_static
from .hypergraph import Hypergraph, build_knn_hyperedges, embedding_dissimilarity_M, hypergraph_convolve, js_supervision_loss, label_difference_N, surrogate_weight
from .objective import LossReport, TaskTerms, binary_ce, combine, dynamic_huber, mse
from .temporal import SequenceBatch, TemporalConfig, assemble_batch, create_temporal_params, encode_sequences

logger = logging.getLogger(__name__)


def fit_target_scales(records: Sequence[UserRecord]) -> np.ndarray:
    """Mean positive training label per task; regression targets are divided by it."""
    scales = np.ones(len(TASKS))
    for j, task in enumerate(TASKS):
        positives = [r.labels[task] for r in records if r.labels.get(task) is not None and r.labels[task] > 0]
        if positives:
            scales[j] = float(np.mean(positives))
    return scales


@dataclass
class EncodedBatch:
    user_ids: np.ndarray
    cat_ids: np.ndarray
    stat_ids: np.ndarray
    sequences: SequenceBatch
    targets: np.ndarray

    @property
    def size(self) -> int:
        return len(self.user_ids)


def encode_batch(
    records: Sequence[UserRecord],
    schema: FeatureSchema,
    target_scales: np.ndarray,
    max_len: int,
    train_mode: bool,
    rng: Optional[np.random.Generator] = None,
) -> EncodedBatch:
    """Ids, sequence tokens/masks and scaled targets (NaN where censored) for a batch."""
    targets = np.array([[np.nan if r.labels.get(task) is None else r.labels[task] for task in TASKS] for r in records], dtype=np.float64).reshape(len(records), len(TASKS))
    return EncodedBatch(
        user_ids=np.array([r.user_id for r in records], dtype=np.int64),
        cat_ids=schema.categorical_ids(records),
        stat_ids=schema.statistical_ids(records),
        sequences=assemble_batch(records, schema, train_mode, rng, max_len),
        targets=targets / target_scales[None, :],
    )


@dataclass
class ForwardTrace:
    hypergraph: Optional[Hypergraph] = None
    deltas: dict[str, float] = field(default_factory=dict)
    surrogates: dict[str, tuple[np.ndarray, float]] = field(default_factory=dict)


@dataclass
class ForwardOutput:
    regression: dict[str, Tensor]
    classification: dict[str, Tensor]
    u_H: Tensor
    u_mask: Tensor


@dataclass
class Predictions:
    """Per-task predictions in label units (regression clipped at 0) and active probabilities."""

    user_ids: np.ndarray
    regression: dict[str, np.ndarray]
    probability: dict[str, np.ndarray]


class HTGNN:
    """Hypergraph, temporal encoder, mixture-of-experts and towers over one parameter store."""

    def __init__(self, config: RunConfig, schema: FeatureSchema, target_scales: Optional[np.ndarray] = None, seed: Optional[int] = None):
        """Create every parameter in a fixed order from a seeded generator.

        Args:
            config: Run configuration (dimensions and ablation flags)
            schema: Fitted feature schema
            target_scales: Per-task regression target scales (ones when omitted)
            seed: Initialisation seed; ``config.seed`` when omitted
        """
        self.config = config
        self.schema = schema
        self.store = ParameterStore(np.random.default_rng(config.seed if seed is None else seed))
        self.use_hypergraph = not config.no_hypergraph

        self.temporal_config = TemporalConfig(
            n_types=len(schema.sequence_types),
            max_len=config.max_seq_len,
            model_dim=config.model_dim,
            heads=config.heads,
            ffn_hidden=config.ffn_hidden,
            mask_dim=config.mask_dim,
            vocab_size=schema.sequence_vocab,
        )
        self.expert_config = ExpertConfig(
            input_dim=schema.total_dim + self.temporal_config.n_types * config.model_dim,
            mask_dim=config.mask_dim,
            n_task_experts=config.n_task_experts,
            n_shared_experts=config.n_shared_experts,
            layers=config.moe_layers,
            expert_dim=config.expert_dim,
            tower_hidden=config.tower_hidden,
            dynamic_weighting=not config.no_dynamic_weighting,
            dynamic_tower=not config.no_dynamic_tower,
        )

        create_feature_tables(self.store, schema)
        if self.use_hypergraph:
            for layer in range(config.hg_layers):
                self.store.create(f"hg.layer{layer}.theta", (schema.total_dim, schema.total_dim))
                self.store.create(f"hg.layer{layer}.edge_scale", (1,), init="ones")
        create_temporal_params(self.store, self.temporal_config)
        create_expert_params(self.store, self.expert_config)

        for name, values in schema.to_buffers().items():
            self.store.set_buffer(name, values)
        self.store.set_buffer("target_scale", np.ones(len(TASKS)) if target_scales is None else target_scales)
        logger.debug("Created %d parameter tensors", len(self.store))

    @property
    def target_scales(self) -> np.ndarray:
        return self.store.buffer("target_scale")

    def parameters(self):
        return self.store.parameters()

    def state_dict(self) -> dict[str, np.ndarray]:
        return self.store.state_dict()

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.store.load_state_dict(state)

    @classmethod
    def from_state(cls, config: RunConfig, state: dict[str, np.ndarray]) -> "HTGNN":
        """Rebuild a model (schema included) from checkpoint contents."""
        buffers = {key[len("buffer.") :]: values for key, values in state.items() if key.startswith("buffer.")}
        model = cls(config, FeatureSchema.from_buffers(buffers), target_scales=buffers.get("target_scale"))
        model.load_state_dict(state)
        return model

    def encode(self, records: Sequence[UserRecord], train_mode: bool, rng: Optional[np.random.Generator] = None) -> EncodedBatch:
        return encode_batch(records, self.schema, self.target_scales, self.config.max_seq_len, train_mode, rng)

    def batch_hypergraph(self, u_sc: Tensor) -> Hypergraph:
        b = u_sc.shape[0]
        if b == 1:
            return Hypergraph.from_incidence(np.ones((1, 1)))
        return build_knn_hyperedges(u_sc.data, min(self.config.k_neighbors, b - 1))

    def forward(self, batch: EncodedBatch, mode: ForwardMode, trace: Optional[ForwardTrace] = None) -> tuple[ForwardOutput, ForwardTrace]:
        """Run the network on an encoded batch.

        Returns:
            Tuple of (outputs, trace holding the hypergraph that was used)
        """
        trace = trace if trace is not None else ForwardTrace()
        static = embed_static(batch.cat_ids, batch.stat_ids, self.schema, self.store)
        u_H = static.u_sc
        if self.use_hypergraph:
            if trace.hypergraph is None:
                trace.hypergraph = self.batch_hypergraph(static.u_sc)
            for layer in range(self.config.hg_layers):
                u_H = hypergraph_convolve(u_H, trace.hypergraph, self.store[f"hg.layer{layer}.theta"], self.store[f"hg.layer{layer}.edge_scale"])

        temporal = encode_sequences(batch.sequences, self.store, self.temporal_config)
        u0 = T.concat([u_H, temporal.u_se], axis=1)
        heads = experts_forward(u0, temporal.u_mask, self.store, self.expert_config, mode)
        return ForwardOutput(regression=heads.regression, classification=heads.classification, u_H=u_H, u_mask=temporal.u_mask), trace

    def losses(self, batch: EncodedBatch, mode: ForwardMode, trace: Optional[ForwardTrace] = None) -> tuple[Tensor, LossReport, ForwardTrace]:
        """Forward pass plus the configured objective.

        Censored rows of a task are excluded from its CE and Huber terms and
        receive the model's detached predictions as surrogate labels in its
        JS term.

        Returns:
            Tuple of (total loss, report, trace)
        """
        frozen = trace is not None
        output, trace = self.forward(batch, mode, trace)
        betas = self.config.effective_betas
        structural = self.use_hypergraph and self.config.loss_mode == "multi" and betas[0] > 0 and batch.size >= 2
        M = embedding_dissimilarity_M(output.u_H) if structural else None

        terms: dict[str, TaskTerms] = {}
        for j, task in enumerate(TASKS):
            y = batch.targets[:, j]
            labeled = ~np.isnan(y)
            idx = np.flatnonzero(labeled)
            t = TaskTerms(n_labeled=int(idx.size), n_censored=int(batch.size - idx.size))
            if idx.size:
                regression = output.regression[task]
                r_labeled = regression[idx]
                t.ce = binary_ce((y[idx] > 0).astype(np.float64), output.classification[task][idx])
                t.huber, t.delta = dynamic_huber(y[idx], r_labeled, trace.deltas.get(task) if frozen else None)
                t.mse = mse(y[idx], r_labeled)
                trace.deltas[task] = t.delta
                if M is not None:
                    if not frozen:
                        trace.surrogates[task] = _surrogate_labels(y, labeled, regression.data)
                    full, weight = trace.surrogates[task]
                    t.js = js_supervision_loss(M, label_difference_N(full), labeled, weight)
            terms[task] = t
        total, report = combine(terms, betas, batch.size, self.config.loss_mode)
        return total, report, trace

    def predict(self, records: Sequence[UserRecord], batch_size: Optional[int] = None) -> Predictions:
        """Eval-mode predictions with true sequence lengths and running batch-norm statistics."""
        batch_size = batch_size or self.config.batch_size
        regression: dict[str, list[np.ndarray]] = {task: [] for task in TASKS}
        probability: dict[str, list[np.ndarray]] = {task: [] for task in TASKS}
        scales = self.target_scales
        for start in range(0, len(records), batch_size):
            batch = self.encode(records[start : start + batch_size], train_mode=False)
            output, _ = self.forward(batch, ForwardMode(training=False))
            for j, task in enumerate(TASKS):
                regression[task].append(np.maximum(output.regression[task].data * scales[j], 0.0))
                probability[task].append(output.classification[task].data.copy())
        return Predictions(
            user_ids=np.array([r.user_id for r in records], dtype=np.int64),
            regression={task: np.concatenate(parts) if parts else np.zeros(0) for task, parts in regression.items()},
            probability={task: np.concatenate(parts) if parts else np.zeros(0) for task, parts in probability.items()},
        )


def _surrogate_labels(y: np.ndarray, labeled: np.ndarray, predicted: np.ndarray) -> tuple[np.ndarray, float]:
    """Observed labels where present, detached predictions elsewhere, and the surrogate weight."""
    full = np.where(labeled, y, predicted)
    if labeled.all():
        return full, 1.0
    truth, guess = y[labeled], predicted[~labeled]
    return full, surrogate_weight(float(guess.mean()), float(guess.std()), float(truth.mean()), float(truth.std()))
