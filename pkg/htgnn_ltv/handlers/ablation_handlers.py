"""Handlers for seed-replicated ablation and loss-mode sweeps."""

import logging
from pathlib import Path
from typing import Optional, Sequence

from ..config import RunConfig, load_config, write_resolved_config
from ..data.dataset_io import read_dataset
from ..data.records import UserRecord
from ..data.splits import split_dataset
from ..evaluation.reports import summarize_sweep, sweep_metrics, sweep_table
from ..evaluation.stratified import stratified_eval
from ..trainer import train_model
from ..utils.jsonl import JsonlWriter

logger = logging.getLogger(__name__)

ABLATION_VARIANTS: dict[str, dict] = {
    "HT-GNN": {"no_hypergraph": False, "no_dynamic_weighting": False, "no_dynamic_tower": False},
    "w/o HG": {"no_hypergraph": True, "no_dynamic_weighting": False, "no_dynamic_tower": False},
    "w/o DW": {"no_hypergraph": False, "no_dynamic_weighting": True, "no_dynamic_tower": False},
    "w/o DT": {"no_hypergraph": False, "no_dynamic_weighting": False, "no_dynamic_tower": True},
}

LOSS_VARIANTS: dict[str, dict] = {
    "multi": {"loss_mode": "multi"},
    "huber": {"loss_mode": "huber"},
    "mse": {"loss_mode": "mse"},
}

SWEEP_LOG = "sweep.jsonl"


def run_sweep(base: RunConfig, records: Sequence[UserRecord], variants: dict[str, dict], seeds: int, log_path: Optional[Path] = None) -> dict[str, list[dict]]:
    """Train and evaluate every variant under seeds ``base.seed .. base.seed + seeds - 1``.

    The train/test split is drawn once from ``base.seed`` and shared by every run.

    Args:
        base: Configuration the variant overrides are applied to
        records: Full dataset
        variants: Label → config overrides; the first label is the baseline
        seeds: Number of seed replicates
        log_path: Optional JSONL file receiving one line per run

    Returns:
        Label → per-seed LT30/LTV30 metric dicts
    """
    splits = split_dataset(records, base.test_fraction, base.val_fraction, base.seed)
    runs: dict[str, list[dict]] = {label: [] for label in variants}
    writer = JsonlWriter(log_path) if log_path is not None else None
    try:
        for offset in range(seeds):
            for label, overrides in variants.items():
                config = base.replace(seed=base.seed + offset, **overrides)
                logger.info("Training %s with seed %d", label, config.seed)
                model, _ = train_model(config, splits)
                metrics = sweep_metrics(stratified_eval(splits.test, model.predict(splits.test)))
                runs[label].append(metrics)
                if writer is not None:
                    writer.write({"variant": label, "seed": config.seed, **metrics})
    finally:
        if writer is not None:
            writer.close()
    return runs


def ablate(args: dict) -> dict:
    """Compare the full model against its single-switch variants.

    Args:
        args: Arguments containing data, and optional config, seeds, loss_modes and out

    Returns:
        Summary rows with mean, std and win counts per metric plus a printable table
    """
    config = load_config(args.get("config"), {"seed": args.get("seed"), "epochs": args.get("epochs")})
    records = read_dataset(args["data"])
    variants = LOSS_VARIANTS if args.get("loss_modes") else ABLATION_VARIANTS
    out_dir = Path(args["out"]) if args.get("out") else None
    if out_dir is not None:
        write_resolved_config(config, out_dir)

    runs = run_sweep(config, records, variants, args.get("seeds", 5), out_dir / SWEEP_LOG if out_dir is not None else None)
    rows = summarize_sweep(runs, baseline=next(iter(variants)))

    return {"sweep": "loss_modes" if args.get("loss_modes") else "ablation", "seeds": args.get("seeds", 5), "rows": rows, "table": sweep_table(rows)}
