"""Handlers for synthetic dataset generation."""

import logging
from pathlib import Path

from ..config import config_digest, load_config, write_resolved_config
from ..data.dataset_io import write_dataset
from ..data.synth import DEFAULT_SEGMENTS, GeneratorConfig, sample_population, tail_summary

logger = logging.getLogger(__name__)


def generate(args: dict) -> dict:
    """Generate a synthetic population and write it as a dataset file.

    Args:
        args: Arguments containing n, segments, seed, out and an optional config path

    Returns:
        Output path, user count and the long-tail summary of ``ltv30``
    """
    config = load_config(args.get("config"), {"seed": args.get("seed")})
    out = Path(args["out"])
    generator = GeneratorConfig(
        n_categorical=config.n_categorical,
        n_statistical=config.n_statistical,
        seq_types=config.seq_types,
        max_seq_len=config.max_seq_len,
    )

    records = sample_population(args["n"], args.get("segments", DEFAULT_SEGMENTS), config.seed, generator)
    write_dataset(records, out, seed=config.seed, config_digest=config_digest(config))
    write_resolved_config(config, out.parent)
    logger.info("Wrote %d users to %s", len(records), out)

    tail = tail_summary(records)
    return {
        "out": str(out),
        "users": len(records),
        "seed": config.seed,
        "segments": args.get("segments", DEFAULT_SEGMENTS),
        "labeled_users": tail["users"],
        "zero_fraction": tail["zero_fraction"],
        "top5_share": tail["top5_share"],
    }
