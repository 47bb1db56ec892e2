"""Report files and tables for evaluations and seed-replicated sweeps."""

from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..utils.jsonl import JsonlWriter, format_table
from .stratified import METRICS, EvalResult

SWEEP_METRICS = ("lt30.nrmse", "lt30.nmae", "ltv30.nrmse", "ltv30.nmae")


def write_eval_report(result: EvalResult, path: Union[str, Path]) -> None:
    """One JSON line per (stratum, task) cell; protocol cells are flagged ``primary``."""
    primary = {(m.stratum, m.task) for m in result.tasks.values()}
    with JsonlWriter(path) as writer:
        for metrics in result.full:
            writer.write({**metrics.to_dict(), "primary": (metrics.stratum, metrics.task) in primary})


def eval_table(result: EvalResult, full: bool = False) -> str:
    rows = [m.to_dict() for m in (result.full if full else result.tasks.values())]
    return format_table(rows, ["stratum", "task", "count", *METRICS])


def sweep_metrics(result: EvalResult) -> dict[str, Optional[float]]:
    """The LT30/LTV30 error metrics compared across sweep variants."""
    values: dict[str, Optional[float]] = {}
    for key in SWEEP_METRICS:
        task, metric = key.split(".")
        cell = result.tasks.get(task)
        values[key] = None if cell is None else getattr(cell, metric)
    return values


def summarize_sweep(runs: dict[str, list[dict[str, Optional[float]]]], baseline: str) -> list[dict]:
    """Mean, standard deviation and win counts per variant and metric.

    Args:
        runs: Variant label → per-seed metric dicts (same seed order for every variant)
        baseline: Label of the reference variant

    Returns:
        One row per variant; ``<metric>.wins`` counts the seeds in which the
        baseline's value is strictly lower than the variant's
    """
    rows = []
    reference = runs[baseline]
    for label, seeds in runs.items():
        row: dict = {"variant": label, "seeds": len(seeds)}
        for key in SWEEP_METRICS:
            values = np.array([np.nan if s.get(key) is None else s[key] for s in seeds], dtype=np.float64)
            finite = values[np.isfinite(values)]
            row[f"{key}.mean"] = float(finite.mean()) if finite.size else None
            row[f"{key}.std"] = float(finite.std()) if finite.size else None
            if label != baseline:
                wins = 0
                for base, other in zip(reference, seeds):
                    if base.get(key) is not None and other.get(key) is not None and base[key] < other[key]:
                        wins += 1
                row[f"{key}.wins"] = wins
        rows.append(row)
    return rows


def sweep_table(rows: Sequence[dict]) -> str:
    table_rows = []
    for row in rows:
        rendered = {"variant": row["variant"], "seeds": row["seeds"]}
        for key in SWEEP_METRICS:
            mean, std = row.get(f"{key}.mean"), row.get(f"{key}.std")
            cell = "n/a" if mean is None else f"{mean:.4f}±{std:.4f}"
            if f"{key}.wins" in row:
                cell += f" ({row[f'{key}.wins']}/{row['seeds']})"
            rendered[key] = cell
        table_rows.append(rendered)
    return format_table(table_rows, ["variant", "seeds", *SWEEP_METRICS])
