"""Handlers for model training."""

from pathlib import Path

from ..config import load_config, write_resolved_config
from ..data.dataset_io import read_dataset
from ..data.splits import split_dataset
from ..trainer import TRAIN_LOG, train_model


def train(args: dict) -> dict:
    """Train a model on the training part of a dataset.

    Args:
        args: Arguments containing data, out, and optional config, seed and epochs

    Returns:
        Checkpoint paths, step count, first/last loss and best validation loss
    """
    config = load_config(args.get("config"), {"seed": args.get("seed"), "epochs": args.get("epochs")})
    out_dir = Path(args["out"])
    records = read_dataset(args["data"])
    splits = split_dataset(records, config.test_fraction, config.val_fraction, config.seed)
    write_resolved_config(config, out_dir)

    _, result = train_model(config, splits, out_dir)

    return {
        "checkpoint": str(result.checkpoint),
        "best_checkpoint": str(result.best_checkpoint),
        "train_log": str(out_dir / TRAIN_LOG),
        "train_users": len(splits.train),
        "validation_users": len(splits.validation),
        "test_users": len(splits.test),
        "steps": result.steps,
        "first_loss": result.losses[0] if result.losses else None,
        "final_loss": result.losses[-1] if result.losses else None,
        "best_validation": result.best_validation,
        "best_epoch": result.best_epoch,
    }
