"""Lifetime-stratified evaluation.

Users observed 30–180 days are scored on the 30-day tasks, 181–365 days on the
180-day tasks and beyond 365 days on the 365-day tasks.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..data.records import TASKS, UserRecord, task_horizon
from ..data.splits import lifetime_band
from ..model.network import Predictions
from ..utils.exceptions import ContractError, MetricUndefinedError
from .metrics import auc, nmae, normalized_gini, nrmse

logger = logging.getLogger(__name__)

STRATUM_HORIZON = {"30-180": 30, "181-365": 180, ">365": 365}
HORIZON_STRATUM = {horizon: stratum for stratum, horizon in STRATUM_HORIZON.items()}
METRICS = ("nrmse", "nmae", "ngini", "auc")


@dataclass
class TaskMetrics:
    task: str
    stratum: str
    count: int
    nrmse: Optional[float] = None
    nmae: Optional[float] = None
    ngini: Optional[float] = None
    auc: Optional[float] = None
    skipped: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalResult:
    """Metrics per task under the stratification protocol; ``full`` holds every (stratum, task) cell."""

    tasks: dict[str, TaskMetrics] = field(default_factory=dict)
    skipped_strata: list[str] = field(default_factory=list)
    full: list[TaskMetrics] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [m.to_dict() for m in self.tasks.values()]


def _safe(metric: Callable[..., float], name: str, notes: list[str], *args) -> Optional[float]:
    try:
        return metric(*args)
    except MetricUndefinedError as e:
        notes.append(f"{name}: {e}")
        return None


def score_task(task: str, stratum: str, y: np.ndarray, regression: np.ndarray, probability: np.ndarray) -> TaskMetrics:
    """All four metrics of one task on one stratum; undefined metrics become None with a note."""
    result = TaskMetrics(task=task, stratum=stratum, count=int(y.size))
    if y.size == 0:
        result.skipped = True
        result.notes.append("empty stratum")
        return result
    result.nrmse = _safe(nrmse, "nrmse", result.notes, y, regression)
    result.nmae = _safe(nmae, "nmae", result.notes, y, regression)
    result.ngini = _safe(normalized_gini, "ngini", result.notes, y, regression)
    result.auc = _safe(auc, "auc", result.notes, (y > 0).astype(np.float64), probability)
    return result


def _check_aligned(records: Sequence[UserRecord], predictions: Predictions) -> None:
    if len(records) != len(predictions.user_ids):
        raise ContractError(f"{len(records)} records but {len(predictions.user_ids)} predictions")
    missing = [task for task in TASKS if task not in predictions.regression or task not in predictions.probability]
    if missing:
        raise ContractError(f"predictions lack tasks: {', '.join(missing)}")


def stratified_eval(records: Sequence[UserRecord], predictions: Predictions) -> EvalResult:
    """Score each task on the stratum whose lifetime band matches its horizon.

    Also fills ``full`` with every task on every stratum that observes it.

    Args:
        records: Test users
        predictions: Predictions aligned with ``records``

    Returns:
        Result; empty strata are listed in ``skipped_strata``
    """
    _check_aligned(records, predictions)
    bands = np.array([lifetime_band(r.obs_days) for r in records])
    result = EvalResult()
    for stratum, stratum_horizon in STRATUM_HORIZON.items():
        members = np.flatnonzero(bands == stratum)
        if members.size == 0:
            result.skipped_strata.append(stratum)
            logger.warning("Stratum %s is empty; its tasks are skipped", stratum)
        for task in TASKS:
            if task_horizon(task) > stratum_horizon:
                continue
            y = np.array([records[i].labels[task] for i in members], dtype=np.float64)
            metrics = score_task(task, stratum, y, predictions.regression[task][members], predictions.probability[task][members])
            result.full.append(metrics)
            if task_horizon(task) == stratum_horizon:
                result.tasks[task] = metrics
    return result
