"""Handlers for checkpoint evaluation."""

from pathlib import Path

from ..config import RESOLVED_CONFIG_NAME, load_config
from ..data.dataset_io import read_dataset
from ..data.splits import split_dataset
from ..evaluation.reports import eval_table, write_eval_report
from ..evaluation.stratified import stratified_eval
from ..trainer import load_model
from ..utils.exceptions import ConfigurationError

EVAL_REPORT = "eval_report.jsonl"
EVAL_SPLITS = ("test", "all")


def evaluate(args: dict) -> dict:
    """Evaluate a checkpoint under the lifetime-stratified protocol.

    The configuration defaults to the ``resolved_config.txt`` written next to
    the checkpoint; the dataset is split exactly as it was for training so
    that ``split="test"`` scores only held-out users.

    Args:
        args: Arguments containing checkpoint, data, and optional config, split, out and full

    Returns:
        Per-task metrics, skipped strata, report path and a printable table
    """
    checkpoint = Path(args["checkpoint"])
    split = args.get("split", "test")
    if split not in EVAL_SPLITS:
        raise ConfigurationError(f"split must be one of {', '.join(EVAL_SPLITS)}, got {split}")

    config = load_config(args.get("config") or checkpoint.parent / RESOLVED_CONFIG_NAME)
    model = load_model(checkpoint, config)
    records = read_dataset(args["data"])
    if split == "test":
        records = split_dataset(records, config.test_fraction, config.val_fraction, config.seed).test

    result = stratified_eval(records, model.predict(records))
    report = Path(args.get("out") or checkpoint.parent / EVAL_REPORT)
    write_eval_report(result, report)

    return {
        "checkpoint": str(checkpoint),
        "split": split,
        "users": len(records),
        "report": str(report),
        "skipped_strata": result.skipped_strata,
        "tasks": result.rows(),
        "table": eval_table(result, full=bool(args.get("full", False))),
    }
