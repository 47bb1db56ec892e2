"""Training loop: seeded shuffling, prefetched batches, checkpoint selection."""

import logging
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .config import RunConfig, config_digest
from .core.checkpoint import load_checkpoint, save_checkpoint
from .core.optim import Adam, clip_grad_norm
from .core.tensor import Tape
from .data.records import UserRecord
from .data.splits import DatasetSplits
from .model.experts import ForwardMode
from .model.featurizer import fit_schema
from .model.network import HTGNN, EncodedBatch, fit_target_scales
from .model.objective import LossReport
from .utils.exceptions import DivergenceError
from .utils.jsonl import JsonlWriter

logger = logging.getLogger(__name__)

PREFETCH_DEPTH = 2
BEST_CHECKPOINT = "best.ckpt"
FINAL_CHECKPOINT = "final.ckpt"
TRAIN_LOG = "train_log.jsonl"


def batch_slices(n: int, batch_size: int, order: np.ndarray) -> list[np.ndarray]:
    """Split ``order`` into batches; a final batch of one row joins the previous batch."""
    slices = [order[start : start + batch_size] for start in range(0, n, batch_size)]
    if len(slices) > 1 and len(slices[-1]) < 2:
        tail = slices.pop()
        slices[-1] = np.concatenate([slices[-1], tail])
    return slices


@dataclass
class TrainResult:
    steps: int = 0
    losses: list[float] = field(default_factory=list)
    best_validation: Optional[float] = None
    best_epoch: Optional[int] = None
    checkpoint: Optional[Path] = None
    best_checkpoint: Optional[Path] = None


class Trainer:
    """Runs epochs of Adam updates on one model."""

    def __init__(self, config: RunConfig, model: HTGNN, out_dir: Optional[Union[str, Path]] = None):
        """Initialize the trainer.

        Args:
            config: Run configuration
            model: Freshly initialised (or loaded) model
            out_dir: Directory for checkpoints and the training log; nothing is written when None
        """
        self.config = config
        self.model = model
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.optimizer = Adam(model.parameters(), lr=config.lr)
        self.digest = config_digest(config)
        self.step = 0

    def _encode(self, records: Sequence[UserRecord], epoch: int, index: int) -> EncodedBatch:
        rng = np.random.default_rng([self.config.seed, epoch, index])
        return self.model.encode(records, train_mode=True, rng=rng)

    def epoch_batches(self, records: Sequence[UserRecord], epoch: int) -> Iterator[EncodedBatch]:
        """Encoded training batches of one epoch, assembled ahead on a worker thread."""
        order = np.random.default_rng([self.config.seed, epoch]).permutation(len(records))
        slices = batch_slices(len(records), self.config.batch_size, order)
        with ThreadPoolExecutor(max_workers=1, thread_name_prefix="prefetch") as executor:
            pending: deque[Future] = deque()
            for index, rows in enumerate(slices):
                pending.append(executor.submit(self._encode, [records[i] for i in rows], epoch, index))
                if len(pending) >= PREFETCH_DEPTH:
                    yield pending.popleft().result()
            while pending:
                yield pending.popleft().result()

    def train_step(self, batch: EncodedBatch) -> LossReport:
        """One forward/backward/update on a batch.

        Raises:
            DivergenceError: If any loss component is non-finite
        """
        self.model.store.zero_grad()
        with Tape() as tape:
            total, report, _ = self.model.losses(batch, ForwardMode(training=True))
        term = report.nonfinite_term()
        if term is not None:
            raise DivergenceError(f"non-finite loss at step {self.step + 1} in {term}", term=term)
        tape.backward(total)
        if self.config.grad_clip > 0:
            clip_grad_norm(self.model.parameters(), self.config.grad_clip)
        self.optimizer.step()
        self.step += 1
        return report

    def validation_loss(self, records: Sequence[UserRecord]) -> Optional[float]:
        """Eval-mode total loss averaged over rows, or None for an empty set."""
        if not records:
            return None
        weighted, count = 0.0, 0
        for rows in batch_slices(len(records), self.config.batch_size, np.arange(len(records))):
            batch = self.model.encode([records[i] for i in rows], train_mode=False)
            _, report, _ = self.model.losses(batch, ForwardMode(training=False))
            weighted += report.total * batch.size
            count += batch.size
        return weighted / count

    def save(self, name: str) -> Optional[Path]:
        if self.out_dir is None:
            return None
        path = self.out_dir / name
        save_checkpoint(path, self.digest, self.model.state_dict())
        return path

    def fit(self, train: Sequence[UserRecord], validation: Sequence[UserRecord] = ()) -> TrainResult:
        """Train for ``config.epochs`` epochs.

        Writes ``final.ckpt`` at the end and ``best.ckpt`` whenever the
        validation loss improves (a copy of the final state when there is no
        validation set), plus one ``train_log.jsonl`` line per step.
        """
        result = TrainResult()
        writer = JsonlWriter(self.out_dir / TRAIN_LOG) if self.out_dir is not None else None
        try:
            for epoch in range(self.config.epochs):
                for batch in self.epoch_batches(train, epoch):
                    report = self.train_step(batch)
                    result.losses.append(report.total)
                    if writer is not None:
                        writer.write({"step": self.step, "epoch": epoch, **report.to_dict()})
                    if self.step % self.config.log_every == 0:
                        logger.info("step %d epoch %d loss %.6f", self.step, epoch, report.total)
                    logger.debug("step %d components %s", self.step, report.to_dict()["tasks"])

                val = self.validation_loss(validation)
                if val is not None:
                    logger.info("epoch %d validation loss %.6f", epoch, val)
                    if result.best_validation is None or val < result.best_validation:
                        result.best_validation, result.best_epoch = val, epoch
                        result.best_checkpoint = self.save(BEST_CHECKPOINT)
        finally:
            if writer is not None:
                writer.close()

        result.steps = self.step
        result.checkpoint = self.save(FINAL_CHECKPOINT)
        if result.best_checkpoint is None:
            result.best_checkpoint = self.save(BEST_CHECKPOINT)
        return result


def build_model(config: RunConfig, train: Sequence[UserRecord]) -> HTGNN:
    """Fit the feature schema and target scales on the training split and initialise a model."""
    schema = fit_schema(train, embed_dim=config.embed_dim)
    return HTGNN(config, schema, target_scales=fit_target_scales(train))


def train_model(config: RunConfig, splits: DatasetSplits, out_dir: Optional[Union[str, Path]] = None) -> tuple[HTGNN, TrainResult]:
    """Build a model on ``splits.train`` and fit it, selecting on ``splits.validation``."""
    model = build_model(config, splits.train)
    trainer = Trainer(config, model, out_dir=out_dir)
    result = trainer.fit(splits.train, splits.validation)
    logger.info("Finished %d steps; best validation loss %s", result.steps, result.best_validation)
    return model, result


def load_model(path: Union[str, Path], config: RunConfig) -> HTGNN:
    """Rebuild a model from a checkpoint written under ``config``.

    Raises:
        CheckpointError: If the checkpoint's digest does not match ``config``
    """
    state = load_checkpoint(path, config_digest(config))
    return HTGNN.from_state(config, state)
