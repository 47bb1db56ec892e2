"""User records, the synthetic population generator, dataset files and splits."""

from .dataset_io import read_dataset, write_dataset
from .records import HORIZONS, TASKS, SequenceObservation, UserRecord
from .synth import GeneratorConfig, sample_population, simulate_sequences

__all__ = [
    "HORIZONS",
    "TASKS",
    "GeneratorConfig",
    "SequenceObservation",
    "UserRecord",
    "read_dataset",
    "sample_population",
    "simulate_sequences",
    "write_dataset",
]
