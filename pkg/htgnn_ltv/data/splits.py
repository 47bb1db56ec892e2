"""Lifetime-stratified train / validation / test splits."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..utils.exceptions import ConfigurationError
from .records import UserRecord

BANDS = ("<30", "30-180", "181-365", ">365")


def lifetime_band(obs_days: int) -> str:
    """Band of an observed lifetime in days."""
    if obs_days < 30:
        return "<30"
    if obs_days <= 180:
        return "30-180"
    if obs_days <= 365:
        return "181-365"
    return ">365"


def stratified_split(records: Sequence[UserRecord], fraction: float, seed: int) -> tuple[list[UserRecord], list[UserRecord]]:
    """Hold out ``fraction`` of every lifetime band.

    Returns:
        Tuple of (kept, held out), each in original record order
    """
    if not 0.0 <= fraction < 1.0:
        raise ConfigurationError(f"split fraction must lie in [0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    held: set[int] = set()
    for band in BANDS:
        members = [i for i, r in enumerate(records) if lifetime_band(r.obs_days) == band]
        if not members:
            continue
        count = int(round(fraction * len(members)))
        held.update(int(i) for i in rng.permutation(members)[:count])
    kept = [r for i, r in enumerate(records) if i not in held]
    out = [r for i, r in enumerate(records) if i in held]
    return kept, out


@dataclass
class DatasetSplits:
    train: list[UserRecord]
    validation: list[UserRecord]
    test: list[UserRecord]


def split_dataset(records: Sequence[UserRecord], test_fraction: float, val_fraction: float, seed: int) -> DatasetSplits:
    """9:1 train/test split followed by a validation carve-out of the training part, both stratified."""
    train, test = stratified_split(records, test_fraction, seed)
    train, validation = stratified_split(train, val_fraction, seed + 1)
    return DatasetSplits(train=train, validation=validation, test=test)
