"""User records and the six lifetime / lifetime-value tasks."""

from dataclasses import dataclass, field
from typing import Optional

from ..utils.exceptions import DataError

HORIZONS = (30, 180, 365)
TASKS = ("lt30", "ltv30", "lt180", "ltv180", "lt365", "ltv365")


def task_horizon(task: str) -> int:
    """Return the horizon in days encoded in a task name (``ltv180`` → 180)."""
    return int(task.lstrip("ltv"))


def task_kind(task: str) -> str:
    """Return ``lt`` or ``ltv``."""
    return "ltv" if task.startswith("ltv") else "lt"


@dataclass(frozen=True)
class SequenceObservation:
    """One behavior series and the number of days actually observed."""

    values: tuple[float, ...]
    length: int


@dataclass
class UserRecord:
    """Raw features, behavior sequences and possibly-censored labels of one user."""

    user_id: int
    cat: dict[str, int]
    stat: dict[str, float]
    seq: dict[str, SequenceObservation]
    labels: dict[str, Optional[float]] = field(default_factory=dict)
    obs_days: int = 0

    def label(self, task: str) -> Optional[float]:
        return self.labels.get(task)

    def is_observed(self, task: str) -> bool:
        return self.labels.get(task) is not None

    def validate(self) -> None:
        """Check the record's invariants.

        Raises:
            DataError: Naming the first offending field
        """
        if self.obs_days < 0:
            raise DataError(f"user {self.user_id}: obs_days must be non-negative, got {self.obs_days}", field="obs_days")
        for task in TASKS:
            if task not in self.labels:
                raise DataError(f"user {self.user_id}: missing label entry {task}", field=f"labels.{task}")
            value = self.labels[task]
            horizon = task_horizon(task)
            if (value is not None) != (self.obs_days >= horizon):
                state = "present" if value is not None else "absent"
                raise DataError(f"user {self.user_id}: label {task} is {state} with obs_days={self.obs_days}", field=f"labels.{task}")
            if value is None:
                continue
            if value < 0:
                raise DataError(f"user {self.user_id}: label {task} is negative ({value})", field=f"labels.{task}")
            if task_kind(task) == "lt" and value > horizon:
                raise DataError(f"user {self.user_id}: label {task}={value} exceeds its horizon", field=f"labels.{task}")

        for kind in ("lt", "ltv"):
            previous: Optional[float] = None
            for horizon in HORIZONS:
                value = self.labels[f"{kind}{horizon}"]
                if value is None:
                    continue
                if previous is not None and value < previous:
                    raise DataError(f"user {self.user_id}: {kind}{horizon} decreases across horizons", field=f"labels.{kind}{horizon}")
                previous = value

        for name, observation in self.seq.items():
            if observation.length < 0 or observation.length != len(observation.values):
                raise DataError(f"user {self.user_id}: sequence {name} length {observation.length} does not match {len(observation.values)} values", field=f"seq.{name}")
