"""Line-delimited JSON dataset files.

The first line is a header object ``{"version", "seed", "config_digest"}``;
every following line is one user.
"""

import json
import logging
from pathlib import Path
from typing import Any, Optional, Sequence, Union

from ..utils.exceptions import DataError, DatasetParseError
from .records import TASKS, SequenceObservation, UserRecord

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def record_to_dict(record: UserRecord) -> dict[str, Any]:
    return {
        "user_id": record.user_id,
        "cat": dict(record.cat),
        "stat": dict(record.stat),
        "seq": {name: {"values": list(obs.values), "len": obs.length} for name, obs in record.seq.items()},
        "labels": {task: record.labels.get(task) for task in TASKS},
        "obs_days": record.obs_days,
    }


def record_from_dict(raw: dict[str, Any]) -> UserRecord:
    """Build a record from its decoded JSON object.

    Raises:
        KeyError, TypeError, ValueError: On structurally malformed input
    """
    return UserRecord(
        user_id=int(raw["user_id"]),
        cat={str(k): int(v) for k, v in raw["cat"].items()},
        stat={str(k): float(v) for k, v in raw["stat"].items()},
        seq={str(k): SequenceObservation(values=tuple(float(x) for x in v["values"]), length=int(v["len"])) for k, v in raw["seq"].items()},
        labels={task: (None if raw["labels"].get(task) is None else float(raw["labels"][task])) for task in raw["labels"]},
        obs_days=int(raw["obs_days"]),
    )


def write_dataset(records: Sequence[UserRecord], path: Union[str, Path], seed: Optional[int] = None, config_digest: Optional[str] = None) -> None:
    """Validate and write records, header first.

    Raises:
        DataError: If a record violates its invariants
    """
    for record in records:
        record.validate()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"version": FORMAT_VERSION, "seed": seed, "config_digest": config_digest}
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            f.write(json.dumps(record_to_dict(record), sort_keys=True) + "\n")
    logger.info("Wrote %d records to %s", len(records), path)


def read_header(path: Union[str, Path]) -> dict[str, Any]:
    """Return the header object of a dataset file."""
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    try:
        header = json.loads(first)
    except json.JSONDecodeError as e:
        raise DatasetParseError(f"invalid header: {e.msg}", 1) from e
    if not isinstance(header, dict) or "version" not in header:
        raise DatasetParseError("header object with a version field expected", 1)
    if header["version"] != FORMAT_VERSION:
        raise DatasetParseError(f"unsupported dataset version {header['version']}", 1)
    return header


def read_dataset(path: Union[str, Path]) -> list[UserRecord]:
    """Read and validate every record of a dataset file.

    Raises:
        DatasetParseError: On a malformed line, with its 1-based line number
        DataError: On an invariant violation, naming the field
    """
    read_header(path)
    records: list[UserRecord] = []
    with open(path, encoding="utf-8") as f:
        next(f)
        for line_number, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                record = record_from_dict(raw)
            except json.JSONDecodeError as e:
                raise DatasetParseError(f"invalid JSON: {e.msg}", line_number) from e
            except (KeyError, TypeError, ValueError, AttributeError) as e:
                raise DatasetParseError(f"malformed record: {type(e).__name__}: {e}", line_number) from e
            try:
                record.validate()
            except DataError as e:
                raise DataError(f"line {line_number}: {e}", field=e.field) from e
            records.append(record)
    logger.info("Read %d records from %s", len(records), path)
    return records
